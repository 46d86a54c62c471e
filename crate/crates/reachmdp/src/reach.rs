//! The reachability engine.
//!
//! Starting from the literals of the initial condition, the engine
//! alternates two constructions until nothing changes:
//!
//! * an action level: one condition/action/effect node per applicable effect
//!   table row and outcome, plus one persistence node per reachable literal,
//!   with mutual-exclusion marks between nodes that no single step can
//!   realize together;
//! * a value level: every literal some node can produce, plus exclusion
//!   constraints of bounded arity `k`: a literal set is excluded when every
//!   way of picking producers for it trips an exclusion mark.
//!
//! The fixpoint over-approximates the truly reachable states: every
//! reachable state stays consistent with the result, while many spurious
//! states are ruled out by the constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FactoredMDP, InitialCondition, Literal, State, Val, VarId};
use crate::preprocess::{compound_transform, TransformedMdp};
use crate::sexpr::{parse_one, Sexpr};

/// Default ceiling on constraint-search work per value level, counting
/// candidate sets and producer-search steps.
pub const DEFAULT_CANDIDATE_BUDGET: u64 = 50_000_000;

/// Engine knobs; the defaults match the CLI defaults.
#[derive(Debug, Clone)]
pub struct ReachOptions {
    /// Joint-domain cap for fused correlated effects.
    pub max_compound: usize,
    /// Work budget per value level for the constraint search.
    pub max_candidates: u64,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            max_compound: crate::preprocess::DEFAULT_COMPOUND_CAP,
            max_candidates: DEFAULT_CANDIDATE_BUDGET,
        }
    }
}

/// Result of the analysis: the reachable literals and the exclusion
/// constraints (sorted literal sets of size 2..=k over distinct variables)
/// found at the fixpoint, along with the level count it took to get there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachableSet {
    pub k: usize,
    pub iterations: usize,
    pub values: BTreeSet<Literal>,
    pub excl: BTreeSet<Vec<Literal>>,
}

impl ReachableSet {
    fn same_level(&self, other: &ReachableSet) -> bool {
        self.values == other.values && self.excl == other.excl
    }
}

/// Per-level statistics reported by the CLI.
#[derive(Debug, Clone)]
pub struct LevelStats {
    pub values: usize,
    pub excl: usize,
    pub millis: u128,
}

/// The action an engine node stands for: a model action, or the synthetic
/// persistence action that keeps one literal as it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeAction {
    Act(usize),
    NoOp(Literal),
}

/// One action-level node: under `condition`, taking the action can realize
/// every literal of `effect` at once (a single literal for ordinary effects,
/// several for fused correlated effects).
#[derive(Debug, Clone)]
pub struct CaeNode {
    pub action: NodeAction,
    /// Index of the effect unit within the action; 0 for persistence nodes.
    pub unit: usize,
    pub condition: Vec<Literal>,
    pub effect: Vec<Literal>,
}

/// An action level: nodes, pairwise exclusion marks, and the implication
/// sets used to propagate induced correlations.
pub struct ActionLevel {
    pub nodes: Vec<CaeNode>,
    /// For a real-action node `n` and another unit `u` of its action, the
    /// same-action nodes on `u` whose conditions are jointly consistent with
    /// `n`'s: executing the action from a state satisfying `n` must also
    /// realize one of them.
    pub implication_sets: BTreeMap<(usize, usize), Vec<usize>>,
    pairs: PairMatrix,
}

impl ActionLevel {
    /// True if the pair of nodes was marked mutually exclusive.
    pub fn exclusive(&self, a: usize, b: usize) -> bool {
        self.pairs.get(a, b)
    }
}

struct PairMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl PairMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        PairMatrix {
            words,
            bits: vec![0; n * words],
        }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
        self.bits[j * self.words + i / 64] |= 1 << (i % 64);
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }
}

/// Fast lookups against one value level.
struct LevelIndex<'a> {
    values: &'a BTreeSet<Literal>,
    by_lit: BTreeMap<Literal, Vec<&'a Vec<Literal>>>,
}

impl<'a> LevelIndex<'a> {
    fn new(rs: &'a ReachableSet) -> Self {
        let mut by_lit: BTreeMap<Literal, Vec<&'a Vec<Literal>>> = BTreeMap::new();
        for c in &rs.excl {
            for &l in c {
                by_lit.entry(l).or_default().push(c);
            }
        }
        LevelIndex {
            values: &rs.values,
            by_lit,
        }
    }

    /// The union of the given sorted literal sets is free of same-variable
    /// contradictions, stays within the level's values, and contains no
    /// exclusion constraint.
    fn union_consistent(&self, parts: &[&[Literal]]) -> bool {
        let mut union: BTreeMap<VarId, Val> = BTreeMap::new();
        for part in parts {
            for l in *part {
                if !self.values.contains(l) {
                    return false;
                }
                match union.get(&l.var) {
                    Some(&v) if v != l.val => return false,
                    Some(_) => {}
                    None => {
                        union.insert(l.var, l.val);
                    }
                }
            }
        }
        for part in parts {
            for l in *part {
                if let Some(cs) = self.by_lit.get(l) {
                    for c in cs {
                        if c.iter().all(|x| union.get(&x.var) == Some(&x.val)) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// The condition can hold in some state drawn from the level: all literals
/// are reachable values, no variable is assigned twice, and no subset is an
/// exclusion constraint.
pub fn condition_consistent(c: &BTreeSet<Literal>, level: &ReachableSet) -> bool {
    let idx = LevelIndex::new(level);
    let lits: Vec<Literal> = c.iter().copied().collect();
    idx.union_consistent(&[&lits])
}

/// The state uses only reachable values and contains no exclusion
/// constraint.
pub fn state_consistent(rs: &ReachableSet, s: &State) -> bool {
    for (var, &val) in s.iter().enumerate() {
        if !rs.values.contains(&Literal { var, val }) {
            return false;
        }
    }
    for c in &rs.excl {
        if c.iter().all(|l| s[l.var] == l.val) {
            return false;
        }
    }
    true
}

/// Level 0: the literals (and, for multi-state initial conditions, the
/// exclusion sets) of the initial condition. Exclusion sets naming an
/// impossible literal are vacuous and dropped.
pub fn initial_level(mdp: &FactoredMDP, init: &InitialCondition, k: usize) -> Result<ReachableSet> {
    if k < 1 || k > mdp.variables.len() {
        return Err(Error::Usage(format!(
            "k must be between 1 and the number of variables ({}), got {k}",
            mdp.variables.len()
        )));
    }
    let (values, excl) = match init {
        InitialCondition::Single(s) => (
            s.iter()
                .enumerate()
                .map(|(var, &val)| Literal { var, val })
                .collect::<BTreeSet<_>>(),
            BTreeSet::new(),
        ),
        InitialCondition::Multi { values, excl } => {
            let values: BTreeSet<Literal> = values.clone();
            let excl = excl
                .iter()
                .filter(|set| set.len() <= k && set.iter().all(|l| values.contains(l)))
                .cloned()
                .collect();
            (values, excl)
        }
    };
    Ok(ReachableSet {
        k,
        iterations: 1,
        values,
        excl,
    })
}

/// Builds the action level over the given value level.
///
/// Node construction keeps every effect-table row whose condition is
/// consistent at the level, plus one persistence node per reachable literal.
/// Exclusion marks come from three sources, the last run to a fixpoint:
///
/// * clobbering: across distinct actions, one node's effect contradicts the
///   other's condition (persistence nodes count as one action per literal);
/// * condition conflicts: the pair's condition union is inconsistent at the
///   level (larger condition-based exclusions need no marks here: the
///   producer search below re-derives them from the union test directly);
/// * propagation: if `n` is exclusive of every member of some implication
///   set of `m`, then `n` and `m` are exclusive.
pub fn build_action_level(level: &ReachableSet, tm: &TransformedMdp, k: usize) -> ActionLevel {
    let idx = LevelIndex::new(level);
    let mut nodes: Vec<CaeNode> = Vec::new();
    for ta in &tm.actions {
        for (ui, unit) in ta.units.iter().enumerate() {
            for entry in &unit.entries {
                let cond: Vec<Literal> = entry.condition.iter().copied().collect();
                if !idx.union_consistent(&[&cond]) {
                    continue;
                }
                for outcome in &entry.effects {
                    nodes.push(CaeNode {
                        action: NodeAction::Act(ta.action),
                        unit: ui,
                        condition: cond.clone(),
                        effect: outcome.iter().copied().collect(),
                    });
                }
            }
        }
    }
    for &lit in level.values.iter() {
        nodes.push(CaeNode {
            action: NodeAction::NoOp(lit),
            unit: 0,
            condition: vec![lit],
            effect: vec![lit],
        });
    }

    let n = nodes.len();
    let mut pairs = PairMatrix::new(n);
    let mut implication_sets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    if k >= 2 {
        // Same-action nodes grouped by unit, for implication sets.
        let mut by_action_unit: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let mut unit_counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if let NodeAction::Act(a) = node.action {
                by_action_unit.entry((a, node.unit)).or_default().push(i);
                let c = unit_counts.entry(a).or_default();
                *c = (*c).max(node.unit + 1);
            }
        }

        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&nodes[i], &nodes[j]);
                let clobber = a.action != b.action
                    && (conflicts(&a.effect, &b.condition) || conflicts(&b.effect, &a.condition));
                if clobber || !idx.union_consistent(&[&a.condition, &b.condition]) {
                    pairs.set(i, j);
                }
            }
        }

        for (i, node) in nodes.iter().enumerate() {
            let NodeAction::Act(a) = node.action else {
                continue;
            };
            for unit in 0..unit_counts[&a] {
                if unit == node.unit {
                    continue;
                }
                let members: Vec<usize> = by_action_unit
                    .get(&(a, unit))
                    .map(|ids| {
                        ids.iter()
                            .copied()
                            .filter(|&x| {
                                idx.union_consistent(&[&node.condition, &nodes[x].condition])
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                implication_sets.insert((i, unit), members);
            }
        }

        // Propagation to a fixpoint. An empty implication set means the
        // node's action cannot actually fire from any state satisfying its
        // condition, so marking it against everything is sound.
        let words = pairs.words;
        let masks: Vec<((usize, usize), Vec<u64>)> = implication_sets
            .iter()
            .map(|(&(m, unit), members)| {
                let mut mask = vec![0u64; words];
                for &x in members {
                    mask[x / 64] |= 1 << (x % 64);
                }
                ((m, unit), mask)
            })
            .collect();
        loop {
            let mut changed = false;
            for ((m, _unit), mask) in &masks {
                for nn in 0..n {
                    if nn == *m || pairs.get(nn, *m) {
                        continue;
                    }
                    let row = pairs.row(nn);
                    if mask.iter().enumerate().all(|(w, &bits)| row[w] & bits == bits) {
                        pairs.set(nn, *m);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    ActionLevel {
        nodes,
        implication_sets,
        pairs,
    }
}

/// Some effect literal assigns a different value to a variable the condition
/// constrains.
fn conflicts(effect: &[Literal], condition: &[Literal]) -> bool {
    // Both sides are sorted by variable with distinct variables.
    let (mut i, mut j) = (0, 0);
    while i < effect.len() && j < condition.len() {
        match effect[i].var.cmp(&condition[j].var) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if effect[i].val != condition[j].val {
                    return true;
                }
                i += 1;
                j += 1;
            }
        }
    }
    false
}

/// Builds the next value level: every literal the nodes can produce, plus
/// the exclusion constraints of size 2..=k.
///
/// A candidate literal set is excluded when every way of choosing producer
/// nodes for its literals (one node may cover several) hits an exclusion: a
/// marked pair, or a condition union that is inconsistent at the previous
/// level. Candidates are enumerated by increasing size; a candidate
/// containing an already-found constraint is skipped, which keeps the result
/// free of supersets. Within one size class candidates are checked in
/// parallel and merged in order, so the outcome does not depend on the
/// degree of parallelism.
pub fn build_prop_level(
    al: &ActionLevel,
    prev: &ReachableSet,
    k: usize,
    max_candidates: u64,
) -> Result<ReachableSet> {
    let idx = LevelIndex::new(prev);
    let mut producers: BTreeMap<Literal, Vec<usize>> = BTreeMap::new();
    for (i, node) in al.nodes.iter().enumerate() {
        for &lit in &node.effect {
            producers.entry(lit).or_default().push(i);
        }
    }
    let values: BTreeSet<Literal> = producers.keys().copied().collect();
    debug_assert!(values.is_superset(&prev.values));

    let mut excl: BTreeSet<Vec<Literal>> = BTreeSet::new();
    if k >= 2 {
        let literals: Vec<Literal> = values.iter().copied().collect();
        let mut budget = max_candidates;
        for size in 2..=k.min(literals.len()) {
            let mut candidates: Vec<Vec<Literal>> = Vec::new();
            let mut current = Vec::with_capacity(size);
            enumerate_candidates(&literals, 0, size, &mut current, &excl, &mut candidates);
            let spent_enumerating = candidates.len() as u64;

            let search = Search {
                al,
                producers: &producers,
                idx: &idx,
                per_candidate_cap: max_candidates,
            };
            let results: Vec<Result<(bool, u64)>> = candidates
                .par_iter()
                .map(|cand| search.candidate_excluded(cand))
                .collect();

            let mut spent = spent_enumerating;
            for (cand, res) in candidates.iter().zip(results) {
                let (dead, cost) = res?;
                spent = spent.saturating_add(cost);
                if dead {
                    excl.insert(cand.clone());
                }
            }
            if spent > budget {
                return Err(Error::Capacity(format!(
                    "constraint search exceeded the budget of {max_candidates} checks at size {size}"
                )));
            }
            budget -= spent;
        }
    }

    Ok(ReachableSet {
        k: prev.k,
        iterations: prev.iterations,
        values,
        excl,
    })
}

/// All sorted literal subsets of the given size over distinct variables,
/// skipping any that contain an already-found constraint.
fn enumerate_candidates(
    literals: &[Literal],
    from: usize,
    size: usize,
    current: &mut Vec<Literal>,
    found: &BTreeSet<Vec<Literal>>,
    out: &mut Vec<Vec<Literal>>,
) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    for i in from..literals.len() {
        let lit = literals[i];
        if let Some(last) = current.last() {
            if last.var == lit.var {
                continue;
            }
        }
        current.push(lit);
        let contains_found = found
            .iter()
            .take_while(|c| c.len() < size)
            .any(|c| is_subset(c, current));
        if !contains_found {
            enumerate_candidates(literals, i + 1, size, current, found, out);
        }
        current.pop();
    }
}

fn is_subset(small: &[Literal], big: &[Literal]) -> bool {
    let mut j = 0;
    for l in small {
        while j < big.len() && big[j] < *l {
            j += 1;
        }
        if j == big.len() || big[j] != *l {
            return false;
        }
        j += 1;
    }
    true
}

struct Search<'a> {
    al: &'a ActionLevel,
    producers: &'a BTreeMap<Literal, Vec<usize>>,
    idx: &'a LevelIndex<'a>,
    per_candidate_cap: u64,
}

struct SearchState {
    chosen: Vec<usize>,
    union: BTreeMap<VarId, Val>,
    cost: u64,
}

impl<'a> Search<'a> {
    /// True when every producer assignment for the candidate trips an
    /// exclusion; the search looks for one live assignment and prunes
    /// partial choices as soon as they die, which is sound because both
    /// exclusion tests are monotone in the chosen set.
    fn candidate_excluded(&self, cand: &[Literal]) -> Result<(bool, u64)> {
        let mut st = SearchState {
            chosen: Vec::with_capacity(cand.len()),
            union: BTreeMap::new(),
            cost: 0,
        };
        let live = self.find_live(cand, 0, &mut st)?;
        Ok((!live, st.cost))
    }

    fn find_live(&self, cand: &[Literal], pos: usize, st: &mut SearchState) -> Result<bool> {
        if pos == cand.len() {
            return Ok(true);
        }
        let lit = cand[pos];
        if st
            .chosen
            .iter()
            .any(|&c| self.al.nodes[c].effect.binary_search(&lit).is_ok())
        {
            return self.find_live(cand, pos + 1, st);
        }
        for &x in self.producers.get(&lit).map_or(&[][..], |v| v) {
            st.cost += 1;
            if st.cost > self.per_candidate_cap {
                return Err(Error::Capacity(format!(
                    "producer search for one candidate exceeded {} steps",
                    self.per_candidate_cap
                )));
            }
            if st.chosen.iter().any(|&c| self.al.pairs.get(x, c)) {
                continue;
            }
            let mut added: Vec<Literal> = Vec::new();
            let mut contradiction = false;
            for &l in &self.al.nodes[x].condition {
                match st.union.get(&l.var) {
                    Some(&v) if v != l.val => {
                        contradiction = true;
                        break;
                    }
                    Some(_) => {}
                    None => added.push(l),
                }
            }
            if contradiction {
                continue;
            }
            for &l in &added {
                st.union.insert(l.var, l.val);
            }
            // A new constraint hit must involve a literal added just now.
            let hit = added.iter().any(|l| {
                self.idx.by_lit.get(l).is_some_and(|cs| {
                    cs.iter()
                        .any(|c| c.iter().all(|y| st.union.get(&y.var) == Some(&y.val)))
                })
            });
            if !hit {
                st.chosen.push(x);
                if self.find_live(cand, pos + 1, st)? {
                    return Ok(true);
                }
                st.chosen.pop();
            }
            for l in &added {
                st.union.remove(&l.var);
            }
        }
        Ok(false)
    }
}

/// Runs the level loop to its fixpoint and returns the result over original
/// variables, along with per-level statistics.
pub fn reachable_k_with_stats(
    mdp: &FactoredMDP,
    init: &InitialCondition,
    k: usize,
    opts: &ReachOptions,
) -> Result<(ReachableSet, Vec<LevelStats>)> {
    let tm = compound_transform(mdp, opts.max_compound)?;
    let mut level = initial_level(mdp, init, k)?;
    let mut stats = vec![LevelStats {
        values: level.values.len(),
        excl: level.excl.len(),
        millis: 0,
    }];
    let total_literals: usize = mdp.variables.iter().map(|v| v.domain.len()).sum();
    let bound = 1 + total_literals + level.excl.len();
    loop {
        let t0 = Instant::now();
        let al = build_action_level(&level, &tm, k);
        let mut next = build_prop_level(&al, &level, k, opts.max_candidates)?;
        next.iterations = level.iterations + 1;
        stats.push(LevelStats {
            values: next.values.len(),
            excl: next.excl.len(),
            millis: t0.elapsed().as_millis(),
        });
        let done = next.same_level(&level);
        level = next;
        if done {
            break;
        }
        assert!(
            level.iterations <= bound,
            "level loop failed to reach a fixpoint within its growth bound; this is a bug"
        );
    }
    Ok((level, stats))
}

/// Runs the level loop to its fixpoint.
pub fn reachable_k(
    mdp: &FactoredMDP,
    init: &InitialCondition,
    k: usize,
    opts: &ReachOptions,
) -> Result<ReachableSet> {
    reachable_k_with_stats(mdp, init, k, opts).map(|(rs, _)| rs)
}

/// Exact number of states consistent with the result.
///
/// Variables are grouped into connected components of the constraint graph;
/// unconstrained variables contribute a product of reachable-value counts,
/// and each component is counted by explicit enumeration (capped at 2^24
/// assignments per component).
pub fn count_consistent(rs: &ReachableSet, mdp: &FactoredMDP) -> Result<BigUint> {
    let n = mdp.variables.len();
    let mut reachable: Vec<Vec<Val>> = vec![Vec::new(); n];
    for l in &rs.values {
        reachable[l.var].push(l.val);
    }
    if reachable.iter().any(|vals| vals.is_empty()) {
        return Ok(BigUint::from(0u32));
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for c in &rs.excl {
        for w in c.windows(2) {
            let (a, b) = (find(&mut parent, w[0].var), find(&mut parent, w[1].var));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<VarId>> = BTreeMap::new();
    let mut constrained: BTreeSet<VarId> = BTreeSet::new();
    for c in &rs.excl {
        for l in c {
            constrained.insert(l.var);
        }
    }
    for &var in &constrained {
        let root = find(&mut parent, var);
        components.entry(root).or_default().push(var);
    }

    let mut total = BigUint::from(1u32);
    for (var, vals) in reachable.iter().enumerate() {
        if !constrained.contains(&var) {
            total *= BigUint::from(vals.len());
        }
    }

    for vars in components.values() {
        let mut size: u128 = 1;
        for &v in vars {
            size = size.saturating_mul(reachable[v].len() as u128);
            if size > 1 << 24 {
                return Err(Error::Capacity(format!(
                    "counting consistent states needs more than 2^24 assignments for the component containing {}",
                    mdp.variables[v].name
                )));
            }
        }
        // Constraints are checked as soon as their last component variable
        // is assigned.
        let pos: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut by_last: Vec<Vec<&Vec<Literal>>> = vec![Vec::new(); vars.len()];
        for c in &rs.excl {
            if c.iter().all(|l| pos.contains_key(&l.var)) {
                let last = c.iter().map(|l| pos[&l.var]).max().unwrap();
                by_last[last].push(c);
            }
        }
        let mut assignment: Vec<Val> = vec![0; vars.len()];
        let count = count_rec(vars, &reachable, &by_last, &pos, 0, &mut assignment);
        total *= BigUint::from(count);
    }
    Ok(total)
}

fn count_rec(
    vars: &[VarId],
    reachable: &[Vec<Val>],
    by_last: &[Vec<&Vec<Literal>>],
    pos: &BTreeMap<VarId, usize>,
    depth: usize,
    assignment: &mut Vec<Val>,
) -> u64 {
    if depth == vars.len() {
        return 1;
    }
    let mut total = 0;
    'vals: for &val in &reachable[vars[depth]] {
        assignment[depth] = val;
        for c in &by_last[depth] {
            if c.iter().all(|l| assignment[pos[&l.var]] == l.val) {
                continue 'vals;
            }
        }
        total += count_rec(vars, reachable, by_last, pos, depth + 1, assignment);
    }
    total
}

/// Renders the result in the reachable-set file format.
pub fn serialize_reachable(mdp: &FactoredMDP, rs: &ReachableSet) -> String {
    let mut out = format!("(reachable (k {}) (iterations {})\n", rs.k, rs.iterations);
    out.push_str("  (values");
    for &l in &rs.values {
        out.push(' ');
        out.push_str(&mdp.format_literal(l));
    }
    out.push_str(")\n  (excl");
    for c in &rs.excl {
        out.push_str(" (");
        let mut first = true;
        for &l in c {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&mdp.format_literal(l));
        }
        out.push(')');
    }
    out.push_str("))\n");
    out
}

/// Parses a reachable-set file against the model it was produced for.
pub fn parse_reachable(text: &str, mdp: &FactoredMDP) -> Result<ReachableSet> {
    let form = parse_one(text)?;
    let items = expect_head(&form, "reachable")?;
    let mut k: Option<usize> = None;
    let mut iterations: Option<usize> = None;
    let mut values: BTreeSet<Literal> = BTreeSet::new();
    let mut excl: BTreeSet<Vec<Literal>> = BTreeSet::new();
    let mut issues = Vec::new();
    for item in items {
        let list = item.as_list().ok_or_else(|| {
            crate::sexpr::err_at(item.pos(), "expected a clause list".to_string())
        })?;
        let head = list
            .first()
            .and_then(|h| h.as_atom())
            .ok_or_else(|| crate::sexpr::err_at(item.pos(), "expected a clause name".to_string()))?;
        match head {
            "k" => k = Some(parse_usize(list, item)?),
            "iterations" => iterations = Some(parse_usize(list, item)?),
            "values" => {
                for lit_form in &list[1..] {
                    values.insert(parse_literal(lit_form, mdp, &mut issues)?);
                }
            }
            "excl" => {
                for set_form in &list[1..] {
                    let lits = set_form.as_list().ok_or_else(|| {
                        crate::sexpr::err_at(set_form.pos(), "expected a literal set".to_string())
                    })?;
                    let mut set = Vec::new();
                    for lit_form in lits {
                        set.push(parse_literal(lit_form, mdp, &mut issues)?);
                    }
                    set.sort();
                    let vars: BTreeSet<VarId> = set.iter().map(|l| l.var).collect();
                    if set.len() < 2 || vars.len() != set.len() {
                        issues.push(crate::error::ValidationIssue {
                            code: "RS_BAD_CONSTRAINT",
                            location: "excl".to_string(),
                            message: "exclusion sets need 2 or more literals over distinct variables"
                                .to_string(),
                        });
                    }
                    excl.insert(set);
                }
            }
            other => {
                return Err(crate::sexpr::err_at(
                    item.pos(),
                    format!("unknown clause {other} in reachable set"),
                ))
            }
        }
    }
    for c in &excl {
        if !c.iter().all(|l| values.contains(l)) {
            issues.push(crate::error::ValidationIssue {
                code: "RS_CONSTRAINT_VALUE",
                location: "excl".to_string(),
                message: "exclusion constraint uses a literal missing from values".to_string(),
            });
        }
    }
    if !issues.is_empty() {
        return Err(Error::validation(issues));
    }
    let k = k.ok_or_else(|| crate::sexpr::err_at(form.pos(), "missing (k ...)".to_string()))?;
    Ok(ReachableSet {
        k,
        iterations: iterations.unwrap_or(0),
        values,
        excl,
    })
}

fn expect_head<'a>(form: &'a Sexpr, head: &str) -> Result<&'a [Sexpr]> {
    let items = form
        .as_list()
        .ok_or_else(|| crate::sexpr::err_at(form.pos(), format!("expected ({head} ...)")))?;
    match items.first().and_then(|h| h.as_atom()) {
        Some(h) if h == head => Ok(&items[1..]),
        _ => Err(crate::sexpr::err_at(form.pos(), format!("expected ({head} ...)"))),
    }
}

fn parse_usize(list: &[Sexpr], item: &Sexpr) -> Result<usize> {
    let text = list
        .get(1)
        .and_then(|a| a.as_atom())
        .ok_or_else(|| crate::sexpr::err_at(item.pos(), "expected a number".to_string()))?;
    text.parse::<usize>()
        .map_err(|_| crate::sexpr::err_at(item.pos(), format!("invalid number {text}")))
}

fn parse_literal(
    form: &Sexpr,
    mdp: &FactoredMDP,
    issues: &mut Vec<crate::error::ValidationIssue>,
) -> Result<Literal> {
    let items = form
        .as_list()
        .ok_or_else(|| crate::sexpr::err_at(form.pos(), "expected (VAR value)".to_string()))?;
    let (var_name, val_name) = match (
        items.first().and_then(|a| a.as_atom()),
        items.get(1).and_then(|a| a.as_atom()),
    ) {
        (Some(v), Some(w)) if items.len() == 2 => (v, w),
        _ => return Err(crate::sexpr::err_at(form.pos(), "expected (VAR value)".to_string())),
    };
    match mdp.literal(var_name, val_name) {
        Some(l) => Ok(l),
        None => {
            issues.push(crate::error::ValidationIssue {
                code: "RS_UNKNOWN_LITERAL",
                location: "reachable set".to_string(),
                message: format!("({var_name} {val_name}) is not a literal of the model"),
            });
            Ok(Literal { var: 0, val: 0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{lights, paint4};
    use crate::model::parse_mdp;
    use crate::oracle::{bfs_reachable, DEFAULT_STATE_CAP};
    use crate::preprocess::DEFAULT_COMPOUND_CAP;

    fn run(mdp: &FactoredMDP, k: usize) -> ReachableSet {
        let init = mdp.init.clone().unwrap();
        reachable_k(mdp, &init, k, &ReachOptions::default()).unwrap()
    }

    fn lit(mdp: &FactoredMDP, var: &str, val: &str) -> Literal {
        mdp.literal(var, val).unwrap()
    }

    #[test]
    fn two_lights_converge_in_three_levels_with_parity_constraints() {
        let m = lights(2);
        let rs = run(&m, 2);
        assert_eq!(rs.iterations, 3);
        assert_eq!(rs.values.len(), 4);
        let expected: BTreeSet<Vec<Literal>> = BTreeSet::from([
            vec![lit(&m, "L0", "off"), lit(&m, "L1", "off")],
            vec![lit(&m, "L0", "on"), lit(&m, "L1", "on")],
        ]);
        assert_eq!(rs.excl, expected);
    }

    #[test]
    fn ten_lights_stay_anti_correlated() {
        let m = lights(10);
        let rs = run(&m, 2);
        assert_eq!(rs.values.len(), 20);
        assert_eq!(rs.excl.len(), 90);
        assert_eq!(count_consistent(&rs, &m).unwrap(), BigUint::from(2u32));

        let mut init = vec![1; 10];
        init[0] = 0;
        let mut flipped = vec![0; 10];
        flipped[0] = 1;
        let mut mixed = vec![0; 10];
        mixed[0] = 0;
        mixed[3] = 1;
        assert!(state_consistent(&rs, &init));
        assert!(state_consistent(&rs, &flipped));
        assert!(!state_consistent(&rs, &mixed));
    }

    #[test]
    fn paint_counts_shrink_as_k_grows() {
        let m = paint4();
        let counts: Vec<u64> = (1..=4)
            .map(|k| {
                let rs = run(&m, k);
                count_consistent(&rs, &m)
                    .unwrap()
                    .to_u64_digits()
                    .first()
                    .copied()
                    .unwrap_or(0)
            })
            .collect();
        assert_eq!(counts, vec![32, 17, 6, 5]);
    }

    #[test]
    fn paint_pairwise_analysis_finds_exactly_the_supply_constraints() {
        let m = paint4();
        let rs = run(&m, 2);
        assert_eq!(rs.values.len(), 10);
        let q3 = lit(&m, "qty", "q3");
        let expected: BTreeSet<Vec<Literal>> = (1..=4)
            .map(|i| vec![lit(&m, &format!("PntP{i}"), "t"), q3])
            .collect();
        assert_eq!(rs.excl, expected);
    }

    #[test]
    fn paint_k1_records_values_only() {
        let m = paint4();
        let rs = run(&m, 1);
        assert_eq!(rs.values.len(), 10);
        assert!(rs.excl.is_empty());
    }

    #[test]
    fn painting_all_four_parts_needs_a_4_ary_constraint() {
        let m = paint4();
        let all_painted: Vec<Literal> = (1..=4)
            .map(|i| lit(&m, &format!("PntP{i}"), "t"))
            .collect();
        let all_painted_state = vec![1, 1, 1, 1, 0];

        let rs2 = run(&m, 2);
        assert!(!rs2.excl.contains(&all_painted));
        assert!(state_consistent(&rs2, &all_painted_state));

        let rs4 = run(&m, 4);
        assert!(rs4.excl.contains(&all_painted));
        assert!(!state_consistent(&rs4, &all_painted_state));
    }

    #[test]
    fn analysis_never_excludes_a_truly_reachable_state() {
        for m in [paint4(), lights(6)] {
            let oracle = bfs_reachable(&m, DEFAULT_STATE_CAP).unwrap();
            for k in 1..=m.variables.len() {
                let rs = run(&m, k);
                for s in &oracle {
                    assert!(state_consistent(&rs, s), "k={k}, state {s:?}");
                }
            }
        }
    }

    #[test]
    fn first_action_level_of_two_lights_propagates_the_induced_correlation() {
        let m = lights(2);
        let init = m.init.clone().unwrap();
        let level = initial_level(&m, &init, 2).unwrap();
        let tm = compound_transform(&m, DEFAULT_COMPOUND_CAP).unwrap();
        let al = build_action_level(&level, &tm, 2);

        let flip_l0 = al
            .nodes
            .iter()
            .position(|n| {
                matches!(n.action, NodeAction::Act(0)) && n.effect == vec![lit(&m, "L0", "on")]
            })
            .unwrap();
        let flip_l1 = al
            .nodes
            .iter()
            .position(|n| {
                matches!(n.action, NodeAction::Act(0)) && n.effect == vec![lit(&m, "L1", "off")]
            })
            .unwrap();
        let keep_l1 = al
            .nodes
            .iter()
            .position(|n| matches!(n.action, NodeAction::NoOp(l) if l == lit(&m, "L1", "on")))
            .unwrap();

        let unit_of_l1 = al.nodes[flip_l1].unit;
        assert_eq!(
            al.implication_sets.get(&(flip_l0, unit_of_l1)),
            Some(&vec![flip_l1])
        );
        // Keeping L1 on clobbers the only way the toggle can settle L1, so
        // propagation marks it against the toggle's L0 effect.
        assert!(al.exclusive(keep_l1, flip_l0));
        assert!(!al.exclusive(flip_l0, flip_l1));
    }

    #[test]
    fn same_action_nodes_are_not_clobber_exclusive() {
        let text = "(mdp (discount 0.9)\n  (variables (P (vals f t)) (Q (vals f t)))\n  (action a\n    (effect P (split P (case f (dist (f 1.0))) (case t (dist (f 1.0)))))\n    (effect Q (split P (case f (split Q (case f (dist (f 1.0))) (case t (dist (t 1.0))))) (case t (dist (t 1.0))))))\n  (reward (val 0.0))\n  (init (P t) (Q f)))";
        let m = parse_mdp(text).unwrap();
        let init = m.init.clone().unwrap();
        let level = initial_level(&m, &init, 2).unwrap();
        let tm = compound_transform(&m, DEFAULT_COMPOUND_CAP).unwrap();
        let al = build_action_level(&level, &tm, 2);
        let negate_p = al
            .nodes
            .iter()
            .position(|n| {
                matches!(n.action, NodeAction::Act(0))
                    && n.condition == vec![lit(&m, "P", "t")]
                    && n.effect == vec![lit(&m, "P", "f")]
            })
            .unwrap();
        let set_q = al
            .nodes
            .iter()
            .position(|n| {
                matches!(n.action, NodeAction::Act(0))
                    && n.condition == vec![lit(&m, "P", "t")]
                    && n.effect == vec![lit(&m, "Q", "t")]
            })
            .unwrap();
        assert!(!al.exclusive(negate_p, set_q));
    }

    #[test]
    fn distinct_paint_actions_clash_at_the_first_level() {
        let m = paint4();
        let init = m.init.clone().unwrap();
        let level = initial_level(&m, &init, 4).unwrap();
        let tm = compound_transform(&m, DEFAULT_COMPOUND_CAP).unwrap();
        let al = build_action_level(&level, &tm, 4);
        for i in 0..al.nodes.len() {
            for j in i + 1..al.nodes.len() {
                let (a, b) = (&al.nodes[i], &al.nodes[j]);
                if let (NodeAction::Act(x), NodeAction::Act(y)) = (a.action, b.action) {
                    if x != y {
                        assert!(al.exclusive(i, j), "nodes {i} and {j} should clash");
                    }
                }
            }
        }
    }

    #[test]
    fn multi_state_seeds_keep_satisfiable_exclusions_only() {
        let text = "(mdp (discount 0.9)\n  (variables (A (vals a0 a1)) (B (vals b0 b1)))\n  (action wait)\n  (reward (val 0.0))\n  (init (values (A a0) (A a1) (B b0)) (excl ((A a1) (B b0)))))";
        let m = parse_mdp(text).unwrap();
        let init = m.init.clone().unwrap();
        let rs = run(&m, 2);
        let level = initial_level(&m, &init, 2).unwrap();
        assert_eq!(level.excl.len(), 1);
        assert_eq!(rs.values.len(), 3);
        assert_eq!(rs.excl.len(), 1);
        assert_eq!(count_consistent(&rs, &m).unwrap(), BigUint::from(1u32));

        // An exclusion naming an impossible literal is vacuous.
        let text2 = text.replace("(excl ((A a1) (B b0)))", "(excl ((A a1) (B b1)))");
        let m2 = parse_mdp(&text2).unwrap();
        let init2 = m2.init.clone().unwrap();
        let level2 = initial_level(&m2, &init2, 2).unwrap();
        assert!(level2.excl.is_empty());
    }

    #[test]
    fn reachable_file_round_trips_and_matches_the_documented_shape() {
        let m = lights(2);
        let rs = run(&m, 2);
        let text = serialize_reachable(&m, &rs);
        assert_eq!(
            text,
            "(reachable (k 2) (iterations 3)\n  (values (L0 off) (L0 on) (L1 off) (L1 on))\n  (excl ((L0 off) (L1 off)) ((L0 on) (L1 on))))\n"
        );
        let back = parse_reachable(&text, &m).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn reachable_file_with_unknown_literal_is_a_validation_error() {
        let m = lights(2);
        let text = "(reachable (k 2) (iterations 1)\n  (values (L0 off) (L9 on))\n  (excl))\n";
        let err = parse_reachable(text, &m).unwrap_err();
        match err {
            Error::Validation { issues } => {
                assert_eq!(issues[0].code, "RS_UNKNOWN_LITERAL");
            }
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn k_outside_the_variable_range_is_rejected() {
        let m = lights(2);
        let init = m.init.clone().unwrap();
        for k in [0, 3] {
            let err = reachable_k(&m, &init, k, &ReachOptions::default()).unwrap_err();
            assert!(matches!(err, Error::Usage(_)), "{err}");
        }
    }

    #[test]
    fn tiny_search_budget_is_a_capacity_error() {
        let m = lights(10);
        let init = m.init.clone().unwrap();
        let opts = ReachOptions {
            max_candidates: 10,
            ..ReachOptions::default()
        };
        let err = reachable_k(&m, &init, 2, &opts).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)), "{err}");
    }

    #[test]
    fn results_do_not_depend_on_the_thread_count() {
        let m = paint4();
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run(&m, 4))
        };
        assert_eq!(run_with(1), run_with(4));
    }

    #[test]
    fn unconstrained_count_is_the_full_product() {
        let m = paint4();
        let rs = run(&m, 1);
        assert_eq!(count_consistent(&rs, &m).unwrap(), m.state_count());
    }
}
