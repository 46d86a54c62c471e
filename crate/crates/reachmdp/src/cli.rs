//! The batch front door: analyze, reduce, solve, verify, and generate.
//!
//! Artifacts go to `--out` ("-" means stdout); progress and diagnostics go
//! to stderr, so piping the artifact stays clean. Exit codes: 0 success,
//! 1 usage or verification failure, 2 parse error, 3 validation error,
//! 4 capacity exceeded, 5 closure violation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::model::{parse_mdp, serialize_mdp, FactoredMDP};
use crate::oracle;
use crate::preprocess::DEFAULT_COMPOUND_CAP;
use crate::reach::{self, ReachOptions};
use crate::reduce;
use crate::solve;

#[derive(Debug, Parser)]
#[command(
    name = "reachmdp",
    version,
    about = "Reachability analysis, reduction, and exact solving for factored MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Constraint arity bound(s); comma-separated values are only
    /// meaningful for `verify`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Vec<usize>,

    /// Override the model's discount factor.
    #[arg(long, global = true)]
    pub beta: Option<f64>,

    /// Convergence tolerance for value iteration.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,

    /// Seed for generated models.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Artifact destination; "-" writes to stdout.
    #[arg(long, global = true, default_value = "-")]
    pub out: String,

    /// Worker threads (default: all hardware threads). Results never
    /// depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Emit reports in the machine-readable s-expression form.
    #[arg(long, global = true)]
    pub sexpr: bool,

    /// Cap on the joint domain of fused correlated effects.
    #[arg(long, global = true, default_value_t = DEFAULT_COMPOUND_CAP)]
    pub max_compound: usize,

    /// Work budget per level for the constraint search.
    #[arg(long, global = true, default_value_t = reach::DEFAULT_CANDIDATE_BUDGET)]
    pub max_candidates: u64,

    /// Cap on explicitly enumerated states.
    #[arg(long, global = true, default_value_t = solve::DEFAULT_ENUM_CAP)]
    pub max_states: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the reachability analysis and write the reachable-set file.
    Analyze { input: PathBuf },

    /// Prune a model against an analysis result; writes the reduced and
    /// effective models plus a report with both sizes.
    Reduce {
        input: PathBuf,
        /// Reachable-set file; omitted, the analysis runs first with --k.
        #[arg(long)]
        reach: Option<PathBuf>,
        /// Destination for the reduced model (default: INPUT.reduced.fmdp).
        #[arg(long)]
        reduced_out: Option<PathBuf>,
        /// Destination for the effective model (default: INPUT.effective.fmdp).
        #[arg(long)]
        effective_out: Option<PathBuf>,
    },

    /// Enumerate states (all, or only those consistent with an analysis)
    /// and run value iteration.
    Solve {
        input: PathBuf,
        /// Restrict the solve to states consistent with this analysis.
        #[arg(long)]
        reach: Option<PathBuf>,
    },

    /// Compare the analysis against exact search: soundness, consistency
    /// nesting, completeness gaps, and value preservation.
    Verify {
        input: PathBuf,
        /// Judge this analysis file instead of computing fresh analyses
        /// for the --k list.
        #[arg(long)]
        reach: Option<PathBuf>,
    },

    /// Write a built-in model.
    Gen {
        #[command(subcommand)]
        model: GenCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// One switch that toggles n anti-correlated lights.
    Lights {
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Reward 1 while light 0 is on (otherwise the reward is 0
        /// everywhere).
        #[arg(long)]
        goal: bool,
    },
    /// Four parts and exactly enough paint for three of them.
    Paint,
    /// Seeded resource-constrained production chain.
    Factory {
        #[arg(long, default_value_t = 31)]
        vars: usize,
        #[arg(long, default_value_t = 30)]
        actions: usize,
        /// Start with every resource exhausted.
        #[arg(long)]
        starved: bool,
    },
}

/// Entry point for the binary: parse, dispatch, map errors to exit codes.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Analyze { input } => cmd_analyze(cli, input),
        Command::Reduce {
            input,
            reach,
            reduced_out,
            effective_out,
        } => cmd_reduce(cli, input, reach.as_deref(), reduced_out.as_deref(), effective_out.as_deref()),
        Command::Solve { input, reach } => cmd_solve(cli, input, reach.as_deref()),
        Command::Verify { input, reach } => cmd_verify(cli, input, reach.as_deref()),
        Command::Gen { model } => cmd_gen(cli, model),
    }
}

fn single_k(cli: &Cli) -> Result<usize> {
    match cli.k.len() {
        0 => Ok(2),
        1 => Ok(cli.k[0]),
        _ => Err(Error::Usage(
            "this command takes a single --k value".to_string(),
        )),
    }
}

fn reach_options(cli: &Cli) -> ReachOptions {
    ReachOptions {
        max_compound: cli.max_compound,
        max_candidates: cli.max_candidates,
    }
}

fn load_model(path: &Path) -> Result<FactoredMDP> {
    let text = fs::read_to_string(path)?;
    parse_mdp(&text)
}

fn apply_beta(cli: &Cli, mdp: &mut FactoredMDP) -> Result<()> {
    if let Some(beta) = cli.beta {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Usage(format!(
                "--beta must lie in [0, 1), got {beta}"
            )));
        }
        mdp.discount = beta;
    }
    Ok(())
}

fn emit(out: &str, content: &str) -> Result<()> {
    if out == "-" {
        print!("{content}");
    } else {
        fs::write(out, content)?;
    }
    Ok(())
}

fn require_init(mdp: &FactoredMDP) -> Result<crate::model::InitialCondition> {
    mdp.init
        .clone()
        .ok_or_else(|| Error::Usage("the model declares no initial condition".to_string()))
}

fn cmd_analyze(cli: &Cli, input: &Path) -> Result<i32> {
    let mdp = load_model(input)?;
    let init = require_init(&mdp)?;
    let k = single_k(cli)?;
    let (rs, stats) = reach::reachable_k_with_stats(&mdp, &init, k, &reach_options(cli))?;
    for (level, s) in stats.iter().enumerate() {
        eprintln!(
            "level {level}: {} values, {} constraints ({} ms)",
            s.values, s.excl, s.millis
        );
    }
    eprintln!("fixpoint after {} levels", rs.iterations);
    match reach::count_consistent(&rs, &mdp) {
        Ok(n) => eprintln!("consistent states: {n}"),
        Err(Error::Capacity(msg)) => {
            eprintln!("consistent-state count skipped: {msg}");
        }
        Err(other) => return Err(other),
    }
    emit(&cli.out, &reach::serialize_reachable(&mdp, &rs))?;
    Ok(0)
}

fn sibling_artifact(input: &Path, suffix: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    input.with_file_name(format!("{stem}.{suffix}.fmdp"))
}

fn load_or_run_analysis(
    cli: &Cli,
    mdp: &FactoredMDP,
    reach_path: Option<&Path>,
) -> Result<crate::reach::ReachableSet> {
    match reach_path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            reach::parse_reachable(&text, mdp)
        }
        None => {
            let init = require_init(mdp)?;
            reach::reachable_k(mdp, &init, single_k(cli)?, &reach_options(cli))
        }
    }
}

fn cmd_reduce(
    cli: &Cli,
    input: &Path,
    reach_path: Option<&Path>,
    reduced_out: Option<&Path>,
    effective_out: Option<&Path>,
) -> Result<i32> {
    let mdp = load_model(input)?;
    let rs = load_or_run_analysis(cli, &mdp, reach_path)?;
    let reduced = reduce::reduce_mdp(&mdp, &rs)?;
    let (effective, report) = reduce::effective_mdp(&mdp, &rs)?;

    let reduced_path = reduced_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling_artifact(input, "reduced"));
    let effective_path = effective_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling_artifact(input, "effective"));
    fs::write(&reduced_path, serialize_mdp(&reduced))?;
    fs::write(&effective_path, serialize_mdp(&effective))?;
    eprintln!("reduced model: {}", reduced_path.display());
    eprintln!("effective model: {}", effective_path.display());

    let text = if cli.sexpr {
        reduce::serialize_report(&mdp, &report)
    } else {
        reduce::render_report(&mdp, &report)
    };
    emit(&cli.out, &text)?;
    Ok(0)
}

fn cmd_solve(cli: &Cli, input: &Path, reach_path: Option<&Path>) -> Result<i32> {
    let mut mdp = load_model(input)?;
    apply_beta(cli, &mut mdp)?;
    let rs = match reach_path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Some(reach::parse_reachable(&text, &mdp)?)
        }
        None => None,
    };
    let states = solve::enumerate_states(&mdp, rs.as_ref(), cli.max_states)?;
    let (vf, pi) = solve::value_iteration(&mdp, &states, cli.tol)?;
    if mdp.init.is_some() {
        for s in oracle::initial_states(&mdp)? {
            match vf.get(&s) {
                Some(v) => eprintln!("V({}) = {v}", mdp.format_state(&s)),
                None => eprintln!(
                    "initial state {} is outside the solved set",
                    mdp.format_state(&s)
                ),
            }
        }
    }
    emit(&cli.out, &solve::serialize_solution(&mdp, &states, &vf, &pi, cli.tol))?;
    Ok(0)
}

fn cmd_verify(cli: &Cli, input: &Path, reach_path: Option<&Path>) -> Result<i32> {
    let mut mdp = load_model(input)?;
    apply_beta(cli, &mut mdp)?;
    let instance = input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    let report = match reach_path {
        Some(p) => {
            if !cli.k.is_empty() {
                return Err(Error::Usage(
                    "--reach judges one analysis file; it cannot be combined with --k".to_string(),
                ));
            }
            let text = fs::read_to_string(p)?;
            let rs = reach::parse_reachable(&text, &mdp)?;
            oracle::verify_analysis(&mdp, &instance, &rs, cli.tol, cli.max_states)?
        }
        None => {
            let ks: Vec<usize> = if cli.k.is_empty() {
                vec![1, 2]
            } else {
                cli.k.clone()
            };
            oracle::run_verification(
                &mdp,
                &instance,
                &ks,
                cli.tol,
                &reach_options(cli),
                cli.max_states,
            )?
        }
    };
    let text = if cli.sexpr {
        oracle::serialize_verification(&mdp, &report)
    } else {
        oracle::render_verification(&mdp, &report)
    };
    emit(&cli.out, &text)?;
    if report.passed() {
        Ok(0)
    } else {
        eprintln!("verification failed");
        Ok(1)
    }
}

fn cmd_gen(cli: &Cli, model: &GenCommand) -> Result<i32> {
    let mdp = match model {
        GenCommand::Lights { n, goal } => {
            if *n < 1 {
                return Err(Error::Usage("--n must be at least 1".to_string()));
            }
            if *goal {
                crate::gen::lights_with_goal(*n)
            } else {
                crate::gen::lights(*n)
            }
        }
        GenCommand::Paint => crate::gen::paint4(),
        GenCommand::Factory {
            vars,
            actions,
            starved,
        } => {
            if *vars < 5 || *actions < 3 {
                return Err(Error::Usage(
                    "factory needs --vars >= 5 and --actions >= 3".to_string(),
                ));
            }
            crate::gen::factory(*vars, *actions, cli.seed, !*starved)
        }
    };
    debug_assert!(crate::model::validate_mdp(&mdp).is_empty());
    emit(&cli.out, &serialize_mdp(&mdp))?;
    Ok(0)
}
