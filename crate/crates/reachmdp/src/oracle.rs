//! Ground truth by explicit search: exact reachable sets via breadth-first
//! expansion of the full transition relation, and verification checks that
//! compare the structured analysis against that truth on small models.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::model::{transition_distribution, FactoredMDP, InitialCondition, State};
use crate::reach::{count_consistent, reachable_k, state_consistent, ReachOptions, ReachableSet};
use crate::solve::{enumerate_states, value_iteration};

/// Default ceiling on explicit state enumeration.
pub const DEFAULT_STATE_CAP: usize = 1 << 22;

/// All states permitted by the model's initial condition: the single state,
/// or every assignment drawn from the multi-state values that avoids the
/// declared exclusion sets.
pub fn initial_states(mdp: &FactoredMDP) -> Result<Vec<State>> {
    let init = mdp.init.as_ref().ok_or_else(|| {
        Error::Usage("the model declares no initial condition".to_string())
    })?;
    match init {
        InitialCondition::Single(s) => Ok(vec![s.clone()]),
        InitialCondition::Multi { values, excl } => {
            let mut allowed: Vec<Vec<usize>> = vec![Vec::new(); mdp.variables.len()];
            for lit in values {
                allowed[lit.var].push(lit.val);
            }
            let mut out = Vec::new();
            let mut partial: State = Vec::with_capacity(mdp.variables.len());
            expand_init(mdp, &allowed, excl, &mut partial, &mut out);
            Ok(out)
        }
    }
}

fn expand_init(
    mdp: &FactoredMDP,
    allowed: &[Vec<usize>],
    excl: &BTreeSet<Vec<crate::model::Literal>>,
    partial: &mut State,
    out: &mut Vec<State>,
) {
    let var = partial.len();
    if var == mdp.variables.len() {
        out.push(partial.clone());
        return;
    }
    'next_val: for &val in &allowed[var] {
        partial.push(val);
        for set in excl {
            if set.iter().all(|l| l.var < partial.len() && partial[l.var] == l.val) {
                partial.pop();
                continue 'next_val;
            }
        }
        expand_init(mdp, allowed, excl, partial, out);
        partial.pop();
    }
}

/// Exact reachable set: least fixpoint of "initial states are reachable, and
/// so is every positive-probability successor of a reachable state". Errors
/// if the model's full state count exceeds `cap`.
pub fn bfs_reachable(mdp: &FactoredMDP, cap: usize) -> Result<BTreeSet<State>> {
    if mdp.state_count() > BigUint::from(cap) {
        return Err(Error::Capacity(format!(
            "state space of {} states exceeds the enumeration cap of {cap}",
            mdp.state_count()
        )));
    }
    let mut seen: BTreeSet<State> = BTreeSet::new();
    let mut frontier: VecDeque<State> = VecDeque::new();
    for s in initial_states(mdp)? {
        if seen.insert(s.clone()) {
            frontier.push_back(s);
        }
    }
    while let Some(s) = frontier.pop_front() {
        for a in 0..mdp.actions.len() {
            for (t, p) in transition_distribution(mdp, &s, a)? {
                debug_assert!(p > 0.0);
                if seen.insert(t.clone()) {
                    frontier.push_back(t);
                }
            }
        }
    }
    Ok(seen)
}

/// States the exact search reaches but the analysis rules out. Any entry is
/// an implementation bug or a corrupted analysis file.
pub fn check_soundness(mdp: &FactoredMDP, rs: &ReachableSet, cap: usize) -> Result<Vec<State>> {
    let oracle = bfs_reachable(mdp, cap)?;
    Ok(oracle
        .into_iter()
        .filter(|s| !state_consistent(rs, s))
        .collect())
}

/// How many analysis-consistent states the exact search never reaches,
/// with up to ten examples.
pub fn check_completeness(
    mdp: &FactoredMDP,
    rs: &ReachableSet,
    cap: usize,
) -> Result<(u64, Vec<State>)> {
    let oracle = bfs_reachable(mdp, cap)?;
    let consistent = enumerate_states(mdp, Some(rs), cap)?;
    let mut gap = 0;
    let mut samples = Vec::new();
    for s in consistent {
        if !oracle.contains(&s) {
            gap += 1;
            if samples.len() < 10 {
                samples.push(s);
            }
        }
    }
    Ok((gap, samples))
}

/// Solves the model twice, over all states and over only the
/// analysis-consistent ones, and returns the largest value difference on an
/// exactly-reachable state. Requires a sound analysis; a closure violation
/// during the restricted solve surfaces as its own error and means the
/// consistent set was not closed under transitions.
pub fn check_value_preservation(
    mdp: &FactoredMDP,
    rs: &ReachableSet,
    tol: f64,
    cap: usize,
) -> Result<f64> {
    let violations = check_soundness(mdp, rs, cap)?;
    if let Some(s) = violations.first() {
        return Err(Error::Usage(format!(
            "the analysis wrongly excludes reachable state {}; value preservation is undefined",
            mdp.format_state(s)
        )));
    }
    let oracle = bfs_reachable(mdp, cap)?;
    let full = enumerate_states(mdp, None, cap)?;
    let restricted = enumerate_states(mdp, Some(rs), cap)?;
    let (v_full, _) = value_iteration(mdp, &full, tol)?;
    let (v_restricted, _) = value_iteration(mdp, &restricted, tol)?;
    let mut worst: f64 = 0.0;
    for s in &oracle {
        worst = worst.max((v_full[s] - v_restricted[s]).abs());
    }
    Ok(worst)
}

/// Outcome of the full verification battery for one model.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub instance: String,
    pub oracle_size: usize,
    /// The analysis bounds checked, ascending.
    pub ks: Vec<usize>,
    pub consistent_size: BTreeMap<usize, BigUint>,
    pub soundness_violations: BTreeMap<usize, Vec<State>>,
    pub completeness_gap: BTreeMap<usize, u64>,
    pub completeness_samples: BTreeMap<usize, Vec<State>>,
    pub value_discrepancy: BTreeMap<usize, f64>,
    /// Set when the restricted solve escaped the consistent set, which only
    /// an inconsistent analysis file can cause.
    pub closure_failure: Option<String>,
    pub soundness_pass: bool,
    pub monotonicity_pass: bool,
    pub value_pass: bool,
}

impl VerificationReport {
    /// All mandatory flags hold; completeness gaps are informational.
    pub fn passed(&self) -> bool {
        self.soundness_pass && self.monotonicity_pass && self.value_pass
    }
}

/// Runs every check for each requested k: soundness and completeness
/// against the exact search, nesting of the consistent sets as k grows, and
/// value preservation of the restricted solve.
pub fn run_verification(
    mdp: &FactoredMDP,
    instance: &str,
    ks: &[usize],
    tol: f64,
    opts: &ReachOptions,
    cap: usize,
) -> Result<VerificationReport> {
    let init = mdp
        .init
        .clone()
        .ok_or_else(|| Error::Usage("the model declares no initial condition".to_string()))?;
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::Usage("no analysis bounds requested".to_string()));
    }

    let oracle = bfs_reachable(mdp, cap)?;
    let full = enumerate_states(mdp, None, cap)?;
    let (v_full, _) = value_iteration(mdp, &full, tol)?;
    let beta = mdp.discount;
    let value_bound = 2.0 * tol * beta / (1.0 - beta) + 1e-12;

    let mut report = VerificationReport {
        instance: instance.to_string(),
        oracle_size: oracle.len(),
        ks: ks.clone(),
        consistent_size: BTreeMap::new(),
        soundness_violations: BTreeMap::new(),
        completeness_gap: BTreeMap::new(),
        completeness_samples: BTreeMap::new(),
        value_discrepancy: BTreeMap::new(),
        closure_failure: None,
        soundness_pass: true,
        monotonicity_pass: true,
        value_pass: true,
    };

    let mut prev_consistent: Option<BTreeSet<State>> = None;
    for &k in &ks {
        let rs = reachable_k(mdp, &init, k, opts)?;
        check_one_analysis(
            mdp,
            &rs,
            k,
            &oracle,
            &v_full,
            value_bound,
            tol,
            cap,
            &mut report,
            &mut prev_consistent,
        )?;
    }
    Ok(report)
}

/// Judge a pre-computed analysis (typically one loaded from a file) against
/// the exact search. The nesting check is vacuous with a single analysis,
/// so `passed()` reduces to soundness and value preservation.
pub fn verify_analysis(
    mdp: &FactoredMDP,
    instance: &str,
    rs: &ReachableSet,
    tol: f64,
    cap: usize,
) -> Result<VerificationReport> {
    let oracle = bfs_reachable(mdp, cap)?;
    let full = enumerate_states(mdp, None, cap)?;
    let (v_full, _) = value_iteration(mdp, &full, tol)?;
    let beta = mdp.discount;
    let value_bound = 2.0 * tol * beta / (1.0 - beta) + 1e-12;

    let mut report = VerificationReport {
        instance: instance.to_string(),
        oracle_size: oracle.len(),
        ks: vec![rs.k],
        consistent_size: BTreeMap::new(),
        soundness_violations: BTreeMap::new(),
        completeness_gap: BTreeMap::new(),
        completeness_samples: BTreeMap::new(),
        value_discrepancy: BTreeMap::new(),
        closure_failure: None,
        soundness_pass: true,
        monotonicity_pass: true,
        value_pass: true,
    };
    let mut prev_consistent: Option<BTreeSet<State>> = None;
    check_one_analysis(
        mdp,
        rs,
        rs.k,
        &oracle,
        &v_full,
        value_bound,
        tol,
        cap,
        &mut report,
        &mut prev_consistent,
    )?;
    Ok(report)
}

/// The shared per-analysis body: consistent count, soundness, completeness
/// gap, nesting against the previously checked set, and the restricted
/// solve with its closure classification.
#[allow(clippy::too_many_arguments)]
fn check_one_analysis(
    mdp: &FactoredMDP,
    rs: &ReachableSet,
    k: usize,
    oracle: &BTreeSet<State>,
    v_full: &crate::solve::ValueFunction,
    value_bound: f64,
    tol: f64,
    cap: usize,
    report: &mut VerificationReport,
    prev_consistent: &mut Option<BTreeSet<State>>,
) -> Result<()> {
    report
        .consistent_size
        .insert(k, count_consistent(rs, mdp)?);

    let violations: Vec<State> = oracle
        .iter()
        .filter(|s| !state_consistent(rs, s))
        .cloned()
        .collect();
    let sound = violations.is_empty();
    if !sound {
        report.soundness_pass = false;
    }
    report.soundness_violations.insert(k, violations);

    let consistent: BTreeSet<State> =
        enumerate_states(mdp, Some(rs), cap)?.into_iter().collect();
    let mut gap = 0;
    let mut samples = Vec::new();
    for s in &consistent {
        if !oracle.contains(s) {
            gap += 1;
            if samples.len() < 10 {
                samples.push(s.clone());
            }
        }
    }
    report.completeness_gap.insert(k, gap);
    report.completeness_samples.insert(k, samples);

    // Larger k means more constraints, so the consistent set must only
    // shrink.
    if let Some(prev) = &prev_consistent {
        if !consistent.is_subset(prev) {
            report.monotonicity_pass = false;
        }
    }

    if sound {
        let states: Vec<State> = consistent.iter().cloned().collect();
        match value_iteration(mdp, &states, tol) {
            Ok((v_restricted, _)) => {
                let mut worst: f64 = 0.0;
                for s in oracle {
                    worst = worst.max((v_full[s] - v_restricted[s]).abs());
                }
                report.value_discrepancy.insert(k, worst);
                if worst > value_bound {
                    report.value_pass = false;
                }
            }
            Err(Error::Closure {
                state,
                action,
                successor,
            }) => {
                report.soundness_pass = false;
                report.closure_failure = Some(format!(
                    "k={k}: action {action} leads from consistent state {state} to excluded state {successor}"
                ));
            }
            Err(other) => return Err(other),
        }
    }
    *prev_consistent = Some(consistent);
    Ok(())
}

/// Renders the verification report in the machine-readable form.
pub fn serialize_verification(mdp: &FactoredMDP, r: &VerificationReport) -> String {
    let flag = |b: bool| if b { "pass" } else { "fail" };
    let mut out = format!(
        "(verification (instance {}) (oracle-size {})\n",
        r.instance, r.oracle_size
    );
    for &k in &r.ks {
        out.push_str(&format!("  (k {k} (consistent {})", r.consistent_size[&k]));
        out.push_str(&format!(" (gap {})", r.completeness_gap[&k]));
        out.push_str(" (violations");
        for s in &r.soundness_violations[&k] {
            out.push_str(&format!(" ({})", mdp.format_state(s)));
        }
        out.push(')');
        if let Some(d) = r.value_discrepancy.get(&k) {
            out.push_str(&format!(" (value-discrepancy {})", crate::sexpr::fmt_real(*d)));
        }
        out.push_str(")\n");
    }
    if let Some(msg) = &r.closure_failure {
        out.push_str(&format!("  (closure-failure \"{msg}\")\n"));
    }
    out.push_str(&format!(
        "  (soundness {}) (monotonicity {}) (value-preservation {}) (overall {}))\n",
        flag(r.soundness_pass),
        flag(r.monotonicity_pass),
        flag(r.value_pass),
        flag(r.passed())
    ));
    out
}

/// Renders the verification report as human-readable text.
pub fn render_verification(mdp: &FactoredMDP, r: &VerificationReport) -> String {
    let flag = |b: bool| if b { "pass" } else { "fail" };
    let mut out = format!("instance: {}\noracle size: {}\n", r.instance, r.oracle_size);
    for &k in &r.ks {
        out.push_str(&format!(
            "k={k}: consistent {}, gap {}, violations {}",
            r.consistent_size[&k],
            r.completeness_gap[&k],
            r.soundness_violations[&k].len()
        ));
        if let Some(d) = r.value_discrepancy.get(&k) {
            out.push_str(&format!(", value discrepancy {d:.3e}"));
        }
        out.push('\n');
        for s in r.soundness_violations[&k].iter().take(10) {
            out.push_str(&format!("  wrongly excluded: {}\n", mdp.format_state(s)));
        }
    }
    if let Some(msg) = &r.closure_failure {
        out.push_str(&format!("closure failure: {msg}\n"));
    }
    out.push_str(&format!(
        "soundness: {}\nmonotonicity: {}\nvalue preservation: {}\noverall: {}\n",
        flag(r.soundness_pass),
        flag(r.monotonicity_pass),
        flag(r.value_pass),
        flag(r.passed())
    ));
    out
}
