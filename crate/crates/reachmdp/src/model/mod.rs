//! Factored MDP model: variables with finite domains, actions whose
//! effects are decision-tree CPTs over a two-slice Bayes net, a reward
//! tree, a discount factor and an initial condition.
//!
//! Variables and their domain values are referenced by index everywhere;
//! names only appear at the text boundary. Canonical order is declaration
//! order for variables and actions and domain order for values, and every
//! operation in the crate iterates in that order so output is
//! deterministic.

mod parse;
mod serialize;
mod validate;

pub use parse::{parse_mdp, parse_mdp_unvalidated};
pub use serialize::serialize_mdp;
pub use validate::validate_mdp;

use std::collections::BTreeMap;

use num_bigint::BigUint;

use crate::error::{Error, Result};

pub type VarId = usize;
pub type Val = usize;

/// One variable/value pair, e.g. `L0 = on`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub var: VarId,
    pub val: Val,
}

impl Literal {
    pub fn new(var: VarId, val: Val) -> Self {
        Literal { var, val }
    }
}

/// A state is a total assignment, one domain index per variable in
/// declaration order. States compare lexicographically, which is the
/// canonical enumeration order.
pub type State = Vec<Val>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    /// Value names in domain order; at least two.
    pub domain: Vec<String>,
}

/// A split test: a variable read either from the current state (pre) or
/// from the successor slice (post). Post tests are only meaningful inside
/// an action's CPTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Test {
    pub var: VarId,
    pub post: bool,
}

/// Decision tree with one child per domain value of the test variable,
/// in domain order. `L` is a `Distribution` for CPTs and `f64` for the
/// reward tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Tree<L> {
    Leaf(L),
    Split { test: Test, children: Vec<Tree<L>> },
}

impl<L> Tree<L> {
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            Tree::Leaf(l) => out.push(l),
            Tree::Split { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }
}

/// Probability mass over one variable's domain. Entries are sorted by
/// value index and unique; authors may list explicit zero entries, which
/// are kept (a value is possible iff its stored probability is > 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub entries: Vec<(Val, f64)>,
}

impl Distribution {
    pub fn point(val: Val) -> Self {
        Distribution {
            entries: vec![(val, 1.0)],
        }
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Values with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = Val> + '_ {
        self.entries.iter().filter(|(_, p)| *p > 0.0).map(|(v, _)| *v)
    }
}

pub type CptTree = Tree<Distribution>;
pub type RewardTree = Tree<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    /// CPTs keyed by affected variable; variables absent from the map
    /// persist unchanged.
    pub effects: BTreeMap<VarId, CptTree>,
}

/// Set of possible start states: either a single state or, in the
/// factored form, per-variable possible values plus exclusion sets that
/// jointly impossible combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Single(State),
    Multi {
        values: std::collections::BTreeSet<Literal>,
        excl: std::collections::BTreeSet<Vec<Literal>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMDP {
    pub variables: Vec<Variable>,
    pub actions: Vec<ActionSpec>,
    pub reward: RewardTree,
    pub discount: f64,
    pub init: Option<InitialCondition>,
}

/// Tolerance for checking that a leaf distribution sums to one.
pub const DIST_SUM_TOL: f64 = 1e-9;

impl FactoredMDP {
    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn val_id(&self, var: VarId, name: &str) -> Option<Val> {
        self.variables[var].domain.iter().position(|v| v == name)
    }

    pub fn action_id(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn literal(&self, var_name: &str, val_name: &str) -> Option<Literal> {
        let var = self.var_id(var_name)?;
        let val = self.val_id(var, val_name)?;
        Some(Literal { var, val })
    }

    pub fn literal_name(&self, lit: Literal) -> (String, String) {
        (
            self.variables[lit.var].name.clone(),
            self.variables[lit.var].domain[lit.val].clone(),
        )
    }

    pub fn format_literal(&self, lit: Literal) -> String {
        format!(
            "({} {})",
            self.variables[lit.var].name, self.variables[lit.var].domain[lit.val]
        )
    }

    pub fn format_state(&self, s: &State) -> String {
        let parts: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(var, &val)| format!("({} {})", self.variables[var].name, self.variables[var].domain[val]))
            .collect();
        parts.join(" ")
    }

    /// Number of total assignments, as an exact big integer.
    pub fn state_count(&self) -> BigUint {
        let mut n = BigUint::from(1u32);
        for v in &self.variables {
            n *= BigUint::from(v.domain.len());
        }
        n
    }

    /// The state's literal set contains the given literal.
    pub fn state_has(&self, s: &State, lit: Literal) -> bool {
        s[lit.var] == lit.val
    }
}

/// Topological order of an action's affected variables such that every
/// post-action test refers to a variable earlier in the order. Errors if
/// the post-action dependency graph has a cycle.
pub fn post_dependency_order(action: &ActionSpec) -> Result<Vec<VarId>> {
    let affected: Vec<VarId> = action.effects.keys().copied().collect();
    let mut deps: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
    for (&var, tree) in &action.effects {
        let mut tested = Vec::new();
        collect_post_tests(tree, &mut tested);
        deps.insert(var, tested);
    }
    // Kahn's algorithm over the affected set; ties resolve in declaration
    // order so the result is canonical.
    let mut order = Vec::with_capacity(affected.len());
    let mut placed: std::collections::BTreeSet<VarId> = std::collections::BTreeSet::new();
    while order.len() < affected.len() {
        let mut advanced = false;
        for &v in &affected {
            if placed.contains(&v) {
                continue;
            }
            let ready = deps[&v]
                .iter()
                .all(|d| placed.contains(d) || !action.effects.contains_key(d));
            if ready {
                order.push(v);
                placed.insert(v);
                advanced = true;
            }
        }
        if !advanced {
            return Err(Error::single_issue(
                crate::model::validate::INTRA_SLICE_CYCLE,
                format!("action {}", action.name),
                "post-action test dependencies form a cycle",
            ));
        }
    }
    Ok(order)
}

pub(crate) fn collect_post_tests<L>(tree: &Tree<L>, out: &mut Vec<VarId>) {
    if let Tree::Split { test, children } = tree {
        if test.post && !out.contains(&test.var) {
            out.push(test.var);
        }
        for c in children {
            collect_post_tests(c, out);
        }
    }
}

pub(crate) fn eval_cpt<'a>(
    tree: &'a CptTree,
    s: &State,
    post: &BTreeMap<VarId, Val>,
) -> &'a Distribution {
    match tree {
        Tree::Leaf(d) => d,
        Tree::Split { test, children } => {
            let val = if test.post {
                *post
                    .get(&test.var)
                    .expect("post-action test var evaluated before its dependency")
            } else {
                s[test.var]
            };
            eval_cpt(&children[val], s, post)
        }
    }
}

/// Explicit successor distribution of `s` under action `a`: evaluates
/// every affected variable's CPT in post-dependency order and takes the
/// product; unaffected variables persist. Entries are sorted by state and
/// sum to one within `DIST_SUM_TOL`.
pub fn transition_distribution(mdp: &FactoredMDP, s: &State, a: usize) -> Result<Vec<(State, f64)>> {
    let action = &mdp.actions[a];
    let order = post_dependency_order(action)?;
    // Partial successor assignments over the affected variables, built in
    // dependency order. Branches never merge: each step forks a partial on
    // distinct values of one variable.
    let mut partials: Vec<(BTreeMap<VarId, Val>, f64)> = vec![(BTreeMap::new(), 1.0)];
    for &var in &order {
        let tree = &action.effects[&var];
        let mut next = Vec::with_capacity(partials.len());
        for (post, p) in &partials {
            let dist = eval_cpt(tree, s, post);
            for (val, q) in &dist.entries {
                if *q > 0.0 {
                    let mut ext = post.clone();
                    ext.insert(var, *val);
                    next.push((ext, p * q));
                }
            }
        }
        partials = next;
    }
    let mut out: BTreeMap<State, f64> = BTreeMap::new();
    for (post, p) in partials {
        let mut t = s.clone();
        for (var, val) in post {
            t[var] = val;
        }
        *out.entry(t).or_insert(0.0) += p;
    }
    let rows: Vec<(State, f64)> = out.into_iter().collect();
    let total: f64 = rows.iter().map(|(_, p)| p).sum();
    debug_assert!(
        (total - 1.0).abs() <= DIST_SUM_TOL * 16.0,
        "successor mass {total} for action {}",
        action.name
    );
    Ok(rows)
}

/// Reward of state `s`: walks the reward tree, which only tests
/// current-slice variables.
pub fn eval_reward(mdp: &FactoredMDP, s: &State) -> f64 {
    let mut tree = &mdp.reward;
    loop {
        match tree {
            Tree::Leaf(r) => return *r,
            Tree::Split { test, children } => tree = &children[s[test.var]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    #[test]
    fn state_count_is_exact_product() {
        let lights = gen::lights(10);
        assert_eq!(lights.state_count(), BigUint::from(1024u32));
        let paint = gen::paint4();
        assert_eq!(paint.state_count(), BigUint::from(32u32));
    }

    #[test]
    fn toggle_flips_both_lights_deterministically() {
        let mdp = gen::lights(2);
        let off = 0;
        let on = 1;
        let rows = transition_distribution(&mdp, &vec![off, on], 0).unwrap();
        assert_eq!(rows, vec![(vec![on, off], 1.0)]);
    }

    #[test]
    fn unaffected_variables_persist() {
        // One action that only flips L0; L1 must carry over.
        let text = "(mdp (discount 0.9)\n  (variables (L0 (vals off on)) (L1 (vals off on)))\n  (action flip0\n    (effect L0 (split L0 (case off (dist (on 1.0))) (case on (dist (off 1.0))))))\n  (reward (val 0.0))\n  (init (L0 off) (L1 on)))";
        let mdp = parse_mdp(text).unwrap();
        let rows = transition_distribution(&mdp, &vec![0, 1], 0).unwrap();
        assert_eq!(rows, vec![(vec![1, 1], 1.0)]);
    }

    #[test]
    fn action_with_no_effects_is_identity() {
        let text = "(mdp (discount 0.9)\n  (variables (V (vals a b)))\n  (action wait)\n  (reward (val 0.0))\n  (init (V a)))";
        let mdp = parse_mdp(text).unwrap();
        assert_eq!(mdp.state_count(), BigUint::from(2u32));
        let rows = transition_distribution(&mdp, &vec![1], 0).unwrap();
        assert_eq!(rows, vec![(vec![1], 1.0)]);
    }

    #[test]
    fn post_action_tests_condition_on_sampled_successor_values() {
        // B copies A's sampled successor value: joint support is the
        // diagonal, never a cross term.
        let text = "(mdp (discount 0.9)\n  (variables (A (vals a0 a1)) (B (vals b0 b1)))\n  (action act\n    (effect A (dist (a0 0.5) (a1 0.5)))\n    (effect B (split (post A) (case a0 (dist (b0 1.0))) (case a1 (dist (b1 1.0))))))\n  (reward (val 0.0))\n  (init (A a0) (B b0)))";
        let mdp = parse_mdp(text).unwrap();
        let rows = transition_distribution(&mdp, &vec![0, 0], 0).unwrap();
        assert_eq!(rows, vec![(vec![0, 0], 0.5), (vec![1, 1], 0.5)]);
    }

    #[test]
    fn reward_tree_conjunction() {
        let mdp = gen::paint4();
        // all painted, quantity exhausted -> 1
        let all_painted = vec![1, 1, 1, 1, 0];
        assert_eq!(eval_reward(&mdp, &all_painted), 1.0);
        let one_missing = vec![1, 1, 1, 0, 0];
        assert_eq!(eval_reward(&mdp, &one_missing), 0.0);
    }

    #[test]
    fn transition_rows_sum_to_one_with_noise() {
        let text = "(mdp (discount 0.9)\n  (variables (A (vals f t)) (B (vals f t)))\n  (action act\n    (effect A (dist (f 0.25) (t 0.75)))\n    (effect B (split B (case f (dist (f 0.4) (t 0.6))) (case t (dist (t 1.0))))))\n  (reward (val 0.0))\n  (init (A f) (B f)))";
        let mdp = parse_mdp(text).unwrap();
        let rows = transition_distribution(&mdp, &vec![0, 0], 0).unwrap();
        let total: f64 = rows.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rows.len(), 4);
    }
}
