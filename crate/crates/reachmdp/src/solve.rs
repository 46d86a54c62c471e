//! Exact solving by explicit enumeration and value iteration.
//!
//! This is deliberately unsophisticated: enumerate the states (optionally
//! only those consistent with an analysis result), then iterate the optimal
//! Bellman backup until the max-norm change falls under the tolerance. Its
//! purpose is ground truth at desk scale, in particular checking that a
//! model reduced to its reachable fragment yields the same values as the
//! full model.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{eval_reward, transition_distribution, FactoredMDP, State};
use crate::reach::ReachableSet;
use crate::sexpr::fmt_real;

/// Default ceiling on the number of enumerated states.
pub const DEFAULT_ENUM_CAP: usize = 1 << 22;

/// Hard stop for value-iteration sweeps; convergence is guaranteed for
/// discounts below one, so hitting this means a bug.
const MAX_SWEEPS: usize = 1_000_000;

pub type ValueFunction = BTreeMap<State, f64>;
pub type Policy = BTreeMap<State, String>;

/// All states in canonical (lexicographic) order, restricted to those
/// consistent with `rs` when given. Errors above the cap.
pub fn enumerate_states(
    mdp: &FactoredMDP,
    rs: Option<&ReachableSet>,
    cap: usize,
) -> Result<Vec<State>> {
    let n = mdp.variables.len();
    let mut allowed: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (var, spec) in mdp.variables.iter().enumerate() {
        let vals: Vec<usize> = match rs {
            None => (0..spec.domain.len()).collect(),
            Some(rs) => (0..spec.domain.len())
                .filter(|&val| rs.values.contains(&crate::model::Literal { var, val }))
                .collect(),
        };
        allowed.push(vals);
    }
    // Constraints fire as soon as their highest variable is assigned.
    let mut by_last: Vec<Vec<&Vec<crate::model::Literal>>> = vec![Vec::new(); n.max(1)];
    if let Some(rs) = rs {
        for c in &rs.excl {
            if let Some(last) = c.iter().map(|l| l.var).max() {
                by_last[last].push(c);
            }
        }
    }
    let mut out = Vec::new();
    let mut current: State = vec![0; n];
    let mut steps: u64 = 0;
    let step_cap = (cap as u64).saturating_mul(8).max(1 << 24);
    enumerate_rec(&allowed, &by_last, 0, &mut current, &mut out, cap, &mut steps, step_cap)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rec(
    allowed: &[Vec<usize>],
    by_last: &[Vec<&Vec<crate::model::Literal>>],
    depth: usize,
    current: &mut State,
    out: &mut Vec<State>,
    cap: usize,
    steps: &mut u64,
    step_cap: u64,
) -> Result<()> {
    if depth == allowed.len() {
        if out.len() >= cap {
            return Err(Error::Capacity(format!(
                "state enumeration exceeds the cap of {cap} states"
            )));
        }
        out.push(current.clone());
        return Ok(());
    }
    'vals: for &val in &allowed[depth] {
        *steps += 1;
        if *steps > step_cap {
            return Err(Error::Capacity(format!(
                "state enumeration took more than {step_cap} steps"
            )));
        }
        current[depth] = val;
        for c in &by_last[depth] {
            if c.iter().all(|l| current[l.var] == l.val) {
                continue 'vals;
            }
        }
        enumerate_rec(allowed, by_last, depth + 1, current, out, cap, steps, step_cap)?;
    }
    Ok(())
}

/// Per-state backup data: reward and, per action, the successor list as
/// (state index, probability) with a fixed summation order.
struct Backups {
    rewards: Vec<f64>,
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

fn prepare(mdp: &FactoredMDP, states: &[State]) -> Result<Backups> {
    if mdp.actions.is_empty() {
        return Err(Error::Usage(
            "the model has no actions, so there is nothing to optimize".to_string(),
        ));
    }
    let index: BTreeMap<&State, usize> = states.iter().zip(0..).collect();
    let rewards: Vec<f64> = states.iter().map(|s| eval_reward(mdp, s)).collect();
    let transitions: Vec<Vec<Vec<(usize, f64)>>> = states
        .iter()
        .map(|s| {
            let mut per_action = Vec::with_capacity(mdp.actions.len());
            for a in 0..mdp.actions.len() {
                let dist = transition_distribution(mdp, s, a)?;
                let mut row = Vec::with_capacity(dist.len());
                for (t, p) in dist {
                    match index.get(&t) {
                        Some(&ti) => row.push((ti, p)),
                        None => {
                            return Err(Error::Closure {
                                state: mdp.format_state(s),
                                action: mdp.actions[a].name.clone(),
                                successor: mdp.format_state(&t),
                            })
                        }
                    }
                }
                per_action.push(row);
            }
            Ok(per_action)
        })
        .collect::<Result<_>>()?;
    Ok(Backups {
        rewards,
        transitions,
    })
}

/// Optimal value iteration from V0 = R, stopping when the max-norm sweep
/// change drops to `tol`; the greedy policy breaks ties toward the earliest
/// action in declaration order.
pub fn value_iteration(
    mdp: &FactoredMDP,
    states: &[State],
    tol: f64,
) -> Result<(ValueFunction, Policy)> {
    let b = prepare(mdp, states)?;
    let beta = mdp.discount;
    let mut v = b.rewards.clone();
    let mut prev_delta = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..states.len())
            .into_par_iter()
            .map(|si| {
                let best = b.transitions[si]
                    .iter()
                    .map(|row| row.iter().map(|&(ti, p)| p * v[ti]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                b.rewards[si] + beta * best
            })
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if prev_delta.is_finite() {
            assert!(
                delta <= beta * prev_delta + 1e-12,
                "value iteration stopped contracting ({delta} after {prev_delta}); this is a bug"
            );
        }
        prev_delta = delta;
        if delta <= tol {
            let policy: Policy = states
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_a = 0;
                    for (a, row) in b.transitions[si].iter().enumerate() {
                        let q: f64 = row.iter().map(|&(ti, p)| p * v[ti]).sum();
                        if q > best {
                            best = q;
                            best_a = a;
                        }
                    }
                    (s.clone(), mdp.actions[best_a].name.clone())
                })
                .collect();
            let vf: ValueFunction = states.iter().cloned().zip(v).collect();
            return Ok((vf, policy));
        }
    }
    Err(Error::Capacity(format!(
        "value iteration did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Value of a fixed policy, by iterating its restricted backup to `tol`.
pub fn policy_value(
    mdp: &FactoredMDP,
    states: &[State],
    pi: &Policy,
    tol: f64,
) -> Result<ValueFunction> {
    let b = prepare(mdp, states)?;
    let beta = mdp.discount;
    let chosen: Vec<usize> = states
        .iter()
        .map(|s| {
            let name = pi.get(s).ok_or_else(|| {
                Error::Usage(format!("policy has no action for state {}", mdp.format_state(s)))
            })?;
            mdp.action_id(name)
                .ok_or_else(|| Error::Usage(format!("policy names unknown action {name}")))
        })
        .collect::<Result<_>>()?;
    let mut v = b.rewards.clone();
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..states.len())
            .into_par_iter()
            .map(|si| {
                let row = &b.transitions[si][chosen[si]];
                b.rewards[si] + beta * row.iter().map(|&(ti, p)| p * v[ti]).sum::<f64>()
            })
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if delta <= tol {
            return Ok(states.iter().cloned().zip(v).collect());
        }
    }
    Err(Error::Capacity(format!(
        "policy evaluation did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Renders a solution dump: one `(state ...)` form per state in canonical
/// order, carrying the value and the chosen action.
pub fn serialize_solution(
    mdp: &FactoredMDP,
    states: &[State],
    vf: &ValueFunction,
    pi: &Policy,
    tol: f64,
) -> String {
    // Tolerances read better in scientific notation (1e-9, not a wall of
    // zeros); values and discounts keep the plain form.
    let tol_text = if tol != 0.0 && tol.abs() < 1e-3 {
        format!("{tol:e}")
    } else {
        fmt_real(tol)
    };
    let mut out = format!(
        "(solution (beta {}) (tol {tol_text})",
        fmt_real(mdp.discount)
    );
    for s in states {
        out.push_str("\n  (state ");
        out.push_str(&mdp.format_state(s));
        out.push_str(&format!(" (value {})", fmt_real(vf[s])));
        out.push_str(&format!(" (action {})", pi[s]));
        out.push(')');
    }
    out.push_str(")\n");
    out
}
