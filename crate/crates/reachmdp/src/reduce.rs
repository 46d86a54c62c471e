//! Model reduction driven by a reachability result.
//!
//! Three transformations compound here: tree pruning drops edges labeled
//! with unreachable values or ruled out by exclusion constraints along the
//! path; variables left with a single possible value disappear entirely;
//! and a relevance pass deletes variables with no causal influence on the
//! reward. The outcome is a smaller model that behaves identically on every
//! state consistent with the analysis, plus a report comparing the
//! reachable and effective state-space sizes.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::model::{
    ActionSpec, CptTree, Distribution, FactoredMDP, InitialCondition, Literal, RewardTree, Test,
    Tree, Val, VarId, Variable,
};
use crate::reach::{count_consistent, ReachableSet};

/// What the reduction did and how large the results are.
#[derive(Debug, Clone)]
pub struct ReductionReport {
    /// Domain values (of the original model) that no reachable state uses.
    pub removed_values: Vec<Literal>,
    /// Variables fixed to a single value, with that value.
    pub removable_variables: Vec<(VarId, Val)>,
    /// Tree edges dropped across all CPTs and the reward tree.
    pub pruned_branch_count: usize,
    /// Variable names surviving the relevance pass.
    pub relevant_variables: BTreeSet<String>,
    /// Consistent-state count of the analysis on the original model.
    pub reachable_size: BigUint,
    /// Consistent-state count projected onto the effective variables.
    pub effective_size: BigUint,
}

struct PruneCtx<'a> {
    /// Per-variable values that keep their tree edges.
    kept: &'a [BTreeSet<Val>],
    by_lit: BTreeMap<Literal, Vec<&'a Vec<Literal>>>,
}

impl<'a> PruneCtx<'a> {
    fn new(kept: &'a [BTreeSet<Val>], rs: &'a ReachableSet) -> Self {
        let mut by_lit: BTreeMap<Literal, Vec<&'a Vec<Literal>>> = BTreeMap::new();
        for c in &rs.excl {
            for &l in c {
                by_lit.entry(l).or_default().push(c);
            }
        }
        PruneCtx { kept, by_lit }
    }

    /// Extending the path of current-state test outcomes with `lit`
    /// completes an exclusion constraint.
    fn excluded(&self, path: &[Literal], lit: Literal) -> bool {
        self.by_lit.get(&lit).is_some_and(|cs| {
            cs.iter()
                .any(|c| c.iter().all(|l| *l == lit || path.contains(l)))
        })
    }
}

/// Prunes a decision tree against an analysis result, assuming the
/// current-state literals of `path` already hold.
///
/// An edge disappears when its value is not reachable, or (for
/// current-state tests) when taking it would complete an exclusion
/// constraint. A node left with a single edge is replaced by that child; a
/// node left with none signals an inconsistent path and is removed one
/// level up. Where a node keeps two or more edges, dropped edges are
/// re-routed to the node's first surviving child, so lookups from
/// inconsistent states still land somewhere without changing behavior on
/// consistent ones. When pruning leaves all children of a node structurally
/// identical, the node collapses to a single child.
pub fn prune_tree<L: Clone + PartialEq>(
    t: &Tree<L>,
    rs: &ReachableSet,
    path: &BTreeSet<Literal>,
) -> Option<Tree<L>> {
    let kept = kept_from_values(rs, max_var(t, path) + 1);
    let ctx = PruneCtx::new(&kept, rs);
    let mut path: Vec<Literal> = path.iter().copied().collect();
    let mut count = 0;
    prune_rec(t, &ctx, &mut path, &mut count).map(|(tree, _)| tree)
}

fn max_var<L>(t: &Tree<L>, path: &BTreeSet<Literal>) -> VarId {
    let mut m = path.iter().map(|l| l.var).max().unwrap_or(0);
    fn walk<L>(t: &Tree<L>, m: &mut VarId) {
        if let Tree::Split { test, children } = t {
            *m = (*m).max(test.var);
            for c in children {
                walk(c, m);
            }
        }
    }
    walk(t, &mut m);
    m
}

fn kept_from_values(rs: &ReachableSet, n: usize) -> Vec<BTreeSet<Val>> {
    let mut kept = vec![BTreeSet::new(); n];
    for l in &rs.values {
        if l.var < n {
            kept[l.var].insert(l.val);
        }
    }
    kept
}

/// Returns the pruned tree (None when every path through it is
/// inconsistent) and whether anything changed relative to the input.
fn prune_rec<L: Clone + PartialEq>(
    t: &Tree<L>,
    ctx: &PruneCtx,
    path: &mut Vec<Literal>,
    count: &mut usize,
) -> Option<(Tree<L>, bool)> {
    let Tree::Split { test, children } = t else {
        return Some((t.clone(), false));
    };
    let mut pruned_here = false;
    let mut survivors: Vec<(Val, Tree<L>)> = Vec::new();
    let mut changed = false;
    for (val, child) in children.iter().enumerate() {
        let lit = Literal { var: test.var, val };
        if !ctx.kept[test.var].contains(&val) || (!test.post && ctx.excluded(path, lit)) {
            *count += 1;
            pruned_here = true;
            continue;
        }
        if !test.post {
            path.push(lit);
        }
        let sub = prune_rec(child, ctx, path, count);
        if !test.post {
            path.pop();
        }
        match sub {
            Some((tree, ch)) => {
                changed |= ch;
                survivors.push((val, tree));
            }
            None => {
                *count += 1;
                pruned_here = true;
            }
        }
    }
    changed |= pruned_here;
    match survivors.len() {
        0 => None,
        1 => Some((survivors.pop().unwrap().1, true)),
        _ => {
            let filler = survivors[0].1.clone();
            let mut full: Vec<Tree<L>> = Vec::with_capacity(children.len());
            let mut next = survivors.iter().peekable();
            for val in 0..children.len() {
                match next.peek() {
                    Some((v, tree)) if *v == val => {
                        full.push(tree.clone());
                        next.next();
                    }
                    _ => full.push(filler.clone()),
                }
            }
            if changed && full.iter().all(|c| *c == full[0]) {
                return Some((full.pop().unwrap(), true));
            }
            Some((
                Tree::Split {
                    test: *test,
                    children: full,
                },
                changed,
            ))
        }
    }
}

/// Variables the analysis pins to one value, paired with that value.
pub fn removable_variables(rs: &ReachableSet, mdp: &FactoredMDP) -> Vec<(VarId, Val)> {
    let kept = kept_from_values(rs, mdp.variables.len());
    kept.iter()
        .enumerate()
        .filter(|(_, vals)| vals.len() == 1)
        .map(|(var, vals)| (var, *vals.iter().next().unwrap()))
        .collect()
}

/// Variables with any causal influence on the reward: those the reward tree
/// tests, closed under "the effect tree for a relevant variable tests it"
/// (in either slice).
pub fn relevant_variables(mdp: &FactoredMDP) -> BTreeSet<VarId> {
    let mut relevant: BTreeSet<VarId> = BTreeSet::new();
    collect_tested(&mdp.reward, &mut relevant);
    let mut frontier: Vec<VarId> = relevant.iter().copied().collect();
    while let Some(v) = frontier.pop() {
        for a in &mdp.actions {
            if let Some(cpt) = a.effects.get(&v) {
                let mut tested = BTreeSet::new();
                collect_tested(cpt, &mut tested);
                for w in tested {
                    if relevant.insert(w) {
                        frontier.push(w);
                    }
                }
            }
        }
    }
    relevant
}

fn collect_tested<L>(t: &Tree<L>, out: &mut BTreeSet<VarId>) {
    if let Tree::Split { test, children } = t {
        out.insert(test.var);
        for c in children {
            collect_tested(c, out);
        }
    }
}

struct Reduction {
    mdp: FactoredMDP,
    /// Old variable id -> new id, for variables that survive.
    var_map: BTreeMap<VarId, VarId>,
    removed_values: Vec<Literal>,
    removable: Vec<(VarId, Val)>,
    pruned_branches: usize,
}

/// Shrinks the model to the reachable fragment: trees pruned, domains
/// restricted to the values that still occur, single-valued variables
/// deleted, and actions reduced to pure persistence dropped.
pub fn reduce_mdp(mdp: &FactoredMDP, rs: &ReachableSet) -> Result<FactoredMDP> {
    reduce_with_details(mdp, rs).map(|r| r.mdp)
}

fn reduce_with_details(mdp: &FactoredMDP, rs: &ReachableSet) -> Result<Reduction> {
    let n = mdp.variables.len();
    let mut kept = kept_from_values(rs, n);
    for (var, vals) in kept.iter().enumerate() {
        if vals.is_empty() {
            return Err(Error::single_issue(
                "RS_EMPTY_VARIABLE",
                format!("variable {}", mdp.variables[var].name),
                "the reachable set leaves this variable with no values".to_string(),
            ));
        }
    }

    // Prune, then widen the kept sets with any value a surviving leaf still
    // assigns positive probability (possible only for hand-edited analysis
    // files), and repeat until stable so the output always serializes.
    let (reward, actions, pruned_branches) = loop {
        let ctx = PruneCtx::new(&kept, rs);
        let mut count = 0;
        let reward: RewardTree = prune_rec(&mdp.reward, &ctx, &mut Vec::new(), &mut count)
            .map(|(t, _)| t)
            .unwrap_or(Tree::Leaf(0.0));
        let mut actions: Vec<(usize, BTreeMap<VarId, CptTree>)> = Vec::new();
        for (ai, a) in mdp.actions.iter().enumerate() {
            let mut effects = BTreeMap::new();
            for (&var, cpt) in &a.effects {
                if let Some((t, _)) = prune_rec(cpt, &ctx, &mut Vec::new(), &mut count) {
                    effects.insert(var, t);
                }
            }
            actions.push((ai, effects));
        }
        let mut referenced: Vec<(VarId, Val)> = Vec::new();
        for (_, effects) in &actions {
            for (&var, cpt) in effects {
                for dist in cpt.leaves() {
                    for val in dist.support() {
                        if !kept[var].contains(&val) {
                            referenced.push((var, val));
                        }
                    }
                }
            }
        }
        if referenced.is_empty() {
            break (reward, actions, count);
        }
        for (var, val) in referenced {
            kept[var].insert(val);
        }
    };

    let removable: Vec<(VarId, Val)> = kept
        .iter()
        .enumerate()
        .filter(|(_, vals)| vals.len() == 1)
        .map(|(var, vals)| (var, *vals.iter().next().unwrap()))
        .collect();
    let deleted: BTreeSet<VarId> = removable.iter().map(|&(v, _)| v).collect();

    let mut removed_values = Vec::new();
    for (var, v) in mdp.variables.iter().enumerate() {
        for val in 0..v.domain.len() {
            if !kept[var].contains(&val) {
                removed_values.push(Literal { var, val });
            }
        }
    }

    // Effect trees that just restate persistence add nothing: unmentioned
    // variables persist by definition.
    let mut final_actions: Vec<ActionSpec> = Vec::new();
    for (ai, effects) in actions {
        let mut retained: BTreeMap<VarId, CptTree> = BTreeMap::new();
        for (var, cpt) in effects {
            if deleted.contains(&var) || is_identity_persist(&cpt, var, &kept[var]) {
                continue;
            }
            retained.insert(var, cpt);
        }
        if !retained.is_empty() {
            final_actions.push(ActionSpec {
                name: mdp.actions[ai].name.clone(),
                effects: retained,
            });
        }
    }

    let (reduced, var_map) = remap(mdp, &kept, &deleted, reward, final_actions)?;
    Ok(Reduction {
        mdp: reduced,
        var_map,
        removed_values,
        removable,
        pruned_branches,
    })
}

/// The tree is a current-state split on `var` whose every kept branch puts
/// all probability mass on that branch's own value.
fn is_identity_persist(t: &CptTree, var: VarId, kept: &BTreeSet<Val>) -> bool {
    let Tree::Split { test, children } = t else {
        return false;
    };
    if test.var != var || test.post {
        return false;
    }
    kept.iter().all(|&val| match &children[val] {
        Tree::Leaf(d) => d.entries.iter().all(|&(v, p)| p == 0.0 || v == val) && d.sum() > 0.0,
        Tree::Split { .. } => false,
    })
}

/// Rebuilds the model over the surviving variables and values, renumbering
/// every id. `kept` drives domain shrinking; `deleted` variables vanish.
fn remap(
    mdp: &FactoredMDP,
    kept: &[BTreeSet<Val>],
    deleted: &BTreeSet<VarId>,
    reward: RewardTree,
    actions: Vec<ActionSpec>,
) -> Result<(FactoredMDP, BTreeMap<VarId, VarId>)> {
    let mut var_map: BTreeMap<VarId, VarId> = BTreeMap::new();
    let mut val_maps: Vec<BTreeMap<Val, Val>> = vec![BTreeMap::new(); mdp.variables.len()];
    let mut variables: Vec<Variable> = Vec::new();
    for (var, spec) in mdp.variables.iter().enumerate() {
        if deleted.contains(&var) {
            continue;
        }
        var_map.insert(var, variables.len());
        let mut domain = Vec::new();
        for (val, name) in spec.domain.iter().enumerate() {
            if kept[var].contains(&val) {
                val_maps[var].insert(val, domain.len());
                domain.push(name.clone());
            }
        }
        variables.push(Variable {
            name: spec.name.clone(),
            domain,
        });
    }

    let reward = remap_tree(&reward, &var_map, &val_maps, &|&r| r)?;
    let mut out_actions = Vec::new();
    for a in actions {
        let mut effects = BTreeMap::new();
        for (var, cpt) in &a.effects {
            let cpt = remap_tree(cpt, &var_map, &val_maps, &|d: &Distribution| Distribution {
                entries: d
                    .entries
                    .iter()
                    .filter(|(v, p)| *p > 0.0 || val_maps[*var].contains_key(v))
                    .map(|&(v, p)| (val_maps[*var][&v], p))
                    .collect(),
            })?;
            effects.insert(var_map[var], cpt);
        }
        out_actions.push(ActionSpec {
            name: a.name,
            effects,
        });
    }

    let init = match &mdp.init {
        None => None,
        Some(InitialCondition::Single(s)) => Some(InitialCondition::Single(
            s.iter()
                .enumerate()
                .filter(|(var, _)| var_map.contains_key(var))
                .map(|(var, &val)| val_maps[var][&val])
                .collect(),
        )),
        Some(InitialCondition::Multi { values, excl }) => {
            let values: BTreeSet<Literal> = values
                .iter()
                .filter(|l| var_map.contains_key(&l.var) && val_maps[l.var].contains_key(&l.val))
                .map(|l| Literal {
                    var: var_map[&l.var],
                    val: val_maps[l.var][&l.val],
                })
                .collect();
            let excl = excl
                .iter()
                .filter(|set| {
                    set.iter().all(|l| {
                        var_map.contains_key(&l.var) && val_maps[l.var].contains_key(&l.val)
                    })
                })
                .map(|set| {
                    let mut s: Vec<Literal> = set
                        .iter()
                        .map(|l| Literal {
                            var: var_map[&l.var],
                            val: val_maps[l.var][&l.val],
                        })
                        .collect();
                    s.sort();
                    s
                })
                .collect();
            Some(InitialCondition::Multi { values, excl })
        }
    };

    Ok((
        FactoredMDP {
            variables,
            actions: out_actions,
            reward,
            discount: mdp.discount,
            init,
        },
        var_map,
    ))
}

fn remap_tree<L, M>(
    t: &Tree<L>,
    var_map: &BTreeMap<VarId, VarId>,
    val_maps: &[BTreeMap<Val, Val>],
    leaf: &impl Fn(&L) -> M,
) -> Result<Tree<M>> {
    match t {
        Tree::Leaf(l) => Ok(Tree::Leaf(leaf(l))),
        Tree::Split { test, children } => {
            let var = *var_map.get(&test.var).ok_or_else(|| {
                Error::single_issue(
                    "REDUCE_DANGLING_TEST",
                    "reduction".to_string(),
                    "a surviving tree tests a deleted variable".to_string(),
                )
            })?;
            let mut out = Vec::new();
            for (val, child) in children.iter().enumerate() {
                if val_maps[test.var].contains_key(&val) {
                    out.push(remap_tree(child, var_map, val_maps, leaf)?);
                }
            }
            Ok(Tree::Split {
                test: Test {
                    var,
                    post: test.post,
                },
                children: out,
            })
        }
    }
}

/// Full pipeline: reduce, find the reward-relevant variables of the reduced
/// model, delete the rest, and size both results.
pub fn effective_mdp(mdp: &FactoredMDP, rs: &ReachableSet) -> Result<(FactoredMDP, ReductionReport)> {
    let reduction = reduce_with_details(mdp, rs)?;
    let reduced = &reduction.mdp;
    let relevant_new = relevant_variables(reduced);
    let irrelevant_new: BTreeSet<VarId> = (0..reduced.variables.len())
        .filter(|v| !relevant_new.contains(v))
        .collect();

    let full_kept: Vec<BTreeSet<Val>> = reduced
        .variables
        .iter()
        .map(|v| (0..v.domain.len()).collect())
        .collect();
    let mut actions: Vec<ActionSpec> = Vec::new();
    for a in &reduced.actions {
        let effects: BTreeMap<VarId, CptTree> = a
            .effects
            .iter()
            .filter(|(var, _)| relevant_new.contains(var))
            .map(|(&var, cpt)| (var, cpt.clone()))
            .collect();
        if !effects.is_empty() {
            actions.push(ActionSpec {
                name: a.name.clone(),
                effects,
            });
        }
    }
    let (effective, var_map2) = remap(
        reduced,
        &full_kept,
        &irrelevant_new,
        reduced.reward.clone(),
        actions,
    )?;

    let reachable_size = count_consistent(rs, mdp)?;
    let effective_size = effective_count(mdp, rs, &reduction, &var_map2, &effective)?;

    let relevant_names: BTreeSet<String> = effective
        .variables
        .iter()
        .map(|v| v.name.clone())
        .collect();
    let report = ReductionReport {
        removed_values: reduction.removed_values,
        removable_variables: reduction.removable,
        pruned_branch_count: reduction.pruned_branches,
        relevant_variables: relevant_names,
        reachable_size,
        effective_size,
    };
    Ok((effective, report))
}

/// Counts the consistent states of the analysis projected onto the
/// effective variables. Literals of variables fixed to their single value
/// are dropped from constraints (the projection is exact there); constraints
/// naming any other deleted variable are dropped whole, an over-count that
/// keeps the result sound as an upper bound.
fn effective_count(
    mdp: &FactoredMDP,
    rs: &ReachableSet,
    reduction: &Reduction,
    var_map2: &BTreeMap<VarId, VarId>,
    effective: &FactoredMDP,
) -> Result<BigUint> {
    if effective.variables.is_empty() {
        return Ok(BigUint::from(0u32));
    }
    let fixed: BTreeMap<VarId, Val> = reduction.removable.iter().copied().collect();
    // Original variable id -> effective id, composing both remaps.
    let compose: BTreeMap<VarId, VarId> = reduction
        .var_map
        .iter()
        .filter_map(|(&old, &mid)| var_map2.get(&mid).map(|&new| (old, new)))
        .collect();
    let eff_val = |l: &Literal| -> Option<Val> {
        let new_var = compose.get(&l.var)?;
        effective.val_id(*new_var, &mdp.variables[l.var].domain[l.val])
    };

    let mut values: BTreeSet<Literal> = BTreeSet::new();
    for l in &rs.values {
        if let Some(new_var) = compose.get(&l.var) {
            if let Some(val) = eff_val(l) {
                values.insert(Literal {
                    var: *new_var,
                    val,
                });
            }
        }
    }
    let mut excl: BTreeSet<Vec<Literal>> = BTreeSet::new();
    for c in &rs.excl {
        let mut projected = Vec::new();
        let mut dropped = false;
        for l in c {
            if fixed.get(&l.var) == Some(&l.val) {
                continue;
            }
            match (compose.get(&l.var), eff_val(l)) {
                (Some(&new_var), Some(val)) => projected.push(Literal { var: new_var, val }),
                _ => {
                    dropped = true;
                    break;
                }
            }
        }
        if dropped {
            continue;
        }
        if projected.is_empty() {
            // The constraint held on fixed values alone: nothing is
            // consistent with it gone.
            return Ok(BigUint::from(0u32));
        }
        projected.sort();
        excl.insert(projected);
    }
    let projection = ReachableSet {
        k: rs.k,
        iterations: rs.iterations,
        values,
        excl,
    };
    count_consistent(&projection, effective)
}

/// Renders the report in the machine-readable s-expression form.
pub fn serialize_report(mdp: &FactoredMDP, r: &ReductionReport) -> String {
    let mut out = String::from("(report\n");
    out.push_str(&format!("  (reachable-size {})\n", r.reachable_size));
    out.push_str(&format!("  (effective-size {})\n", r.effective_size));
    out.push_str(&format!("  (pruned-branches {})\n", r.pruned_branch_count));
    out.push_str("  (removable");
    for &(var, val) in &r.removable_variables {
        out.push(' ');
        out.push_str(&mdp.format_literal(Literal { var, val }));
    }
    out.push_str(")\n  (removed-values");
    for &l in &r.removed_values {
        out.push(' ');
        out.push_str(&mdp.format_literal(l));
    }
    out.push_str(")\n  (relevant");
    for name in &r.relevant_variables {
        out.push(' ');
        out.push_str(name);
    }
    out.push_str("))\n");
    out
}

/// Renders the report as human-readable text.
pub fn render_report(mdp: &FactoredMDP, r: &ReductionReport) -> String {
    let removable: Vec<String> = r
        .removable_variables
        .iter()
        .map(|&(var, val)| {
            format!(
                "{}={}",
                mdp.variables[var].name, mdp.variables[var].domain[val]
            )
        })
        .collect();
    let removed: Vec<String> = r
        .removed_values
        .iter()
        .map(|&l| {
            format!(
                "{}={}",
                mdp.variables[l.var].name, mdp.variables[l.var].domain[l.val]
            )
        })
        .collect();
    let relevant: Vec<String> = r.relevant_variables.iter().cloned().collect();
    format!(
        "reachable size: {}\neffective size: {}\npruned branches: {}\nremovable variables: {}\nremoved values: {}\nrelevant variables: {}\n",
        r.reachable_size,
        r.effective_size,
        r.pruned_branch_count,
        if removable.is_empty() { "none".to_string() } else { removable.join(" ") },
        if removed.is_empty() { "none".to_string() } else { removed.join(" ") },
        if relevant.is_empty() { "none".to_string() } else { relevant.join(" ") },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{factory, lights, paint4};
    use crate::model::{parse_mdp, serialize_mdp, transition_distribution, eval_reward};
    use crate::reach::{reachable_k, ReachOptions};

    fn analyze(mdp: &FactoredMDP, k: usize) -> ReachableSet {
        let init = mdp.init.clone().unwrap();
        reachable_k(mdp, &init, k, &ReachOptions::default()).unwrap()
    }

    fn full_rs(mdp: &FactoredMDP) -> ReachableSet {
        let values = (0..mdp.variables.len())
            .flat_map(|var| {
                (0..mdp.variables[var].domain.len()).map(move |val| Literal { var, val })
            })
            .collect();
        ReachableSet {
            k: 1,
            iterations: 1,
            values,
            excl: BTreeSet::new(),
        }
    }

    #[test]
    fn vacuous_analysis_reproduces_the_model_byte_for_byte() {
        for m in [paint4(), lights(4), factory(12, 6, 7, true)] {
            let rs = full_rs(&m);
            let reduced = reduce_mdp(&m, &rs).unwrap();
            assert_eq!(serialize_mdp(&reduced), serialize_mdp(&m));
        }
    }

    #[test]
    fn fixed_variable_disappears_from_splits() {
        let text = "(mdp (discount 0.9)\n  (variables (Dry (vals f t)) (Ok (vals f t)))\n  (action dip\n    (effect Ok (split Dry (case f (dist (f 1.0))) (case t (split Ok (case f (dist (f 0.2) (t 0.8))) (case t (dist (t 1.0))))))))\n  (reward (split Ok (case f (val 0.0)) (case t (val 1.0))))\n  (init (Dry t) (Ok f)))";
        let m = parse_mdp(text).unwrap();
        let rs = analyze(&m, 2);
        // Dry never changes, so the analysis pins it and reduction deletes it.
        assert_eq!(removable_variables(&rs, &m), vec![(0, 1)]);
        let reduced = reduce_mdp(&m, &rs).unwrap();
        assert_eq!(reduced.variables.len(), 1);
        assert_eq!(reduced.variables[0].name, "Ok");
        let cpt = &reduced.actions[0].effects[&0];
        match cpt {
            Tree::Split { test, .. } => assert_eq!((test.var, test.post), (0, false)),
            Tree::Leaf(_) => panic!("expected the Ok split to survive"),
        }
    }

    #[test]
    fn exclusion_collapses_a_conjunctive_reward_branch() {
        // Reward needs both goals; a binary exclusion between them prunes
        // the inner test, collapsing the tree to "never rewarded".
        let text = "(mdp (discount 0.9)\n  (variables (G1 (vals f t)) (G2 (vals f t)))\n  (action noopish (effect G1 (split G1 (case f (dist (f 1.0))) (case t (dist (t 1.0))))))\n  (reward (split G1 (case f (val 0.0)) (case t (split G2 (case f (val 0.0)) (case t (val 1.0))))))\n  (init (G1 f) (G2 f)))";
        let m = parse_mdp(text).unwrap();
        let mut rs = full_rs(&m);
        rs.excl.insert(vec![
            m.literal("G1", "t").unwrap(),
            m.literal("G2", "t").unwrap(),
        ]);
        let pruned = prune_tree(&m.reward, &rs, &BTreeSet::new()).unwrap();
        assert_eq!(
            pruned,
            Tree::Leaf(0.0),
            "both branches now yield zero and the splits collapse"
        );
    }

    #[test]
    fn untouched_trees_are_returned_unchanged() {
        let m = paint4();
        let rs = full_rs(&m);
        for a in &m.actions {
            for cpt in a.effects.values() {
                assert_eq!(prune_tree(cpt, &rs, &BTreeSet::new()).unwrap(), *cpt);
            }
        }
    }

    #[test]
    fn relevance_follows_the_causal_chain_to_the_reward() {
        // reward <- V, V's effect tests W, W's effect tests X; D is noise.
        let text = "(mdp (discount 0.9)\n  (variables (V (vals f t)) (W (vals f t)) (X (vals f t)) (D (vals f t)))\n  (action go\n    (effect V (split W (case f (dist (f 1.0))) (case t (dist (t 1.0)))))\n    (effect W (split X (case f (dist (f 1.0))) (case t (dist (t 1.0)))))\n    (effect D (split D (case f (dist (t 1.0))) (case t (dist (f 1.0))))))\n  (reward (split V (case f (val 0.0)) (case t (val 1.0))))\n  (init (V f) (W f) (X f) (D f)))";
        let m = parse_mdp(text).unwrap();
        let relevant = relevant_variables(&m);
        let names: Vec<&str> = relevant
            .iter()
            .map(|&v| m.variables[v].name.as_str())
            .collect();
        assert_eq!(names, vec!["V", "W", "X"]);
    }

    #[test]
    fn reduced_model_preserves_reward_and_transitions_on_consistent_states() {
        let m = paint4();
        let rs = analyze(&m, 4);
        let reduced = reduce_mdp(&m, &rs).unwrap();
        let states = crate::solve::enumerate_states(&m, Some(&rs), 1 << 20).unwrap();
        for s in &states {
            let s_red: Vec<Val> = project_state(&m, &reduced, s);
            assert!((eval_reward(&m, s) - eval_reward(&reduced, &s_red)).abs() < 1e-12);
            for (ai, a) in m.actions.iter().enumerate() {
                let Some(ri) = reduced.actions.iter().position(|r| r.name == a.name) else {
                    // A dropped action must act as the identity here.
                    let dist = transition_distribution(&m, s, ai).unwrap();
                    assert_eq!(dist, vec![(s.clone(), 1.0)]);
                    continue;
                };
                let full = transition_distribution(&m, s, ai).unwrap();
                let red = transition_distribution(&reduced, &s_red, ri).unwrap();
                let mut projected: BTreeMap<Vec<Val>, f64> = BTreeMap::new();
                for (t, p) in full {
                    *projected.entry(project_state(&m, &reduced, &t)).or_insert(0.0) += p;
                }
                assert_eq!(projected.len(), red.len());
                for (t, p) in red {
                    let q = projected.get(&t).copied().unwrap_or(f64::NAN);
                    assert!((p - q).abs() < 1e-9, "action {}: {p} vs {q}", a.name);
                }
            }
        }
    }

    fn project_state(orig: &FactoredMDP, reduced: &FactoredMDP, s: &[Val]) -> Vec<Val> {
        reduced
            .variables
            .iter()
            .map(|rv| {
                let ov = orig.var_id(&rv.name).unwrap();
                let name = &orig.variables[ov].domain[s[ov]];
                reduced.val_id(reduced.var_id(&rv.name).unwrap(), name).unwrap()
            })
            .collect()
    }

    #[test]
    fn starved_factory_has_no_decision_problem_left() {
        let m = factory(12, 6, 3, false);
        let rs = analyze(&m, 2);
        let (effective, report) = effective_mdp(&m, &rs).unwrap();
        assert_eq!(effective.variables.len(), 0);
        assert_eq!(report.effective_size, BigUint::from(0u32));
        assert!(report.reachable_size > BigUint::from(1u32));
    }

    #[test]
    fn stocked_factory_keeps_its_decision_problem() {
        let m = factory(12, 6, 3, true);
        let rs = analyze(&m, 2);
        let (effective, report) = effective_mdp(&m, &rs).unwrap();
        assert!(!effective.variables.is_empty());
        assert!(report.effective_size > BigUint::from(0u32));
        assert!(report.effective_size <= report.reachable_size);
        // Decorative toggles never feed the reward chain.
        assert!(!report.relevant_variables.contains("dec0"));
        assert!(!report.relevant_variables.contains("dec1"));
    }

    #[test]
    fn paint_reduction_keeps_exactly_the_five_states() {
        let m = paint4();
        let rs = analyze(&m, 4);
        let (_, report) = effective_mdp(&m, &rs).unwrap();
        assert_eq!(report.reachable_size, BigUint::from(5u32));
        let reduced = reduce_mdp(&m, &rs).unwrap();
        let states = crate::solve::enumerate_states(&reduced, None, 1 << 20).unwrap();
        assert!(states.len() >= 5);
    }

    #[test]
    fn relevance_is_a_fixpoint_on_the_effective_model() {
        for m in [paint4(), factory(12, 6, 3, true)] {
            let rs = analyze(&m, 2);
            let (effective, _) = effective_mdp(&m, &rs).unwrap();
            let relevant = relevant_variables(&effective);
            assert_eq!(relevant.len(), effective.variables.len());
        }
    }

    #[test]
    fn report_round_trips_through_both_renderings() {
        let m = paint4();
        let rs = analyze(&m, 2);
        let (_, report) = effective_mdp(&m, &rs).unwrap();
        let sexpr = serialize_report(&m, &report);
        assert!(sexpr.contains("(reachable-size 17)"));
        assert!(sexpr.contains("(effective-size 17)"));
        crate::sexpr::parse_one(&sexpr).unwrap();
        let human = render_report(&m, &report);
        assert!(human.contains("reachable size: 17"));
        assert!(human.contains("effective size: 17"));
    }

    #[test]
    fn unreachable_goal_erases_the_decision_problem() {
        // At full precision the analysis proves all four parts can never be
        // painted together, so the reward branch granting 1.0 is pruned, the
        // reward collapses to zero, and nothing stays relevant.
        let m = paint4();
        let rs = analyze(&m, 4);
        let (effective, report) = effective_mdp(&m, &rs).unwrap();
        assert_eq!(report.reachable_size, BigUint::from(5u32));
        assert_eq!(report.effective_size, BigUint::from(0u32));
        assert_eq!(effective.variables.len(), 0);
        assert!(report.relevant_variables.is_empty());
    }
}
