//! Action normalization for the reachability engine.
//!
//! Two rewrites happen here. First, every CPT is flattened into an effect
//! table: a list of (condition, effect set) entries where the condition is a
//! pre-action literal conjunction and the effect set is the leaf support.
//! Sibling branches whose tables agree are merged by dropping the test
//! literal, since a distinction that never changes what values are possible
//! is noise to a reachability analysis. Second, effects that an action
//! correlates through post-action tests are fused into one unit over the
//! joint outcome tuples, so that downstream code can treat the units of an
//! action as independent.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    eval_cpt, post_dependency_order, ActionSpec, CptTree, FactoredMDP, Literal, State, Tree,
    Val, VarId,
};

/// Default ceiling on the joint domain of one fused effect unit.
pub const DEFAULT_COMPOUND_CAP: usize = 256;

/// One row of an effect table: under `condition`, the affected variable can
/// move to exactly the values in `effects`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionEffect {
    pub condition: BTreeSet<Literal>,
    pub effects: BTreeSet<Val>,
}

/// Effect table of `action`'s CPT for `var`, with reachability-equivalent
/// conditions collapsed.
///
/// The collapse deletes a tested variable when all of its branches carry
/// identical sub-tables, except when the action itself affects the tested
/// variable. In that case the branches are kept apart even if their effect
/// sets coincide: agreement there is a coincidence of outcomes, and merging
/// would erase the fact that the outcome was conditioned on the variable's
/// prior value (consuming the last unit of a resource looks just like
/// lacking it, but only one of the two can happen from a stocked state).
pub fn effect_table(action: &ActionSpec, var: VarId) -> Vec<ConditionEffect> {
    let tree = action
        .effects
        .get(&var)
        .expect("effect_table requires a variable the action affects");
    let affected: BTreeSet<VarId> = action.effects.keys().copied().collect();
    table_rec(tree, &affected)
        .into_iter()
        .map(|(condition, effects)| ConditionEffect { condition, effects })
        .collect()
}

fn table_rec(tree: &CptTree, affected: &BTreeSet<VarId>) -> Vec<(BTreeSet<Literal>, BTreeSet<Val>)> {
    match tree {
        Tree::Leaf(d) => vec![(BTreeSet::new(), d.support().collect())],
        Tree::Split { test, children } => {
            assert!(
                !test.post,
                "effect tables are built after correlated effects are fused away"
            );
            let tables: Vec<_> = children.iter().map(|c| table_rec(c, affected)).collect();
            if !affected.contains(&test.var) && tables.windows(2).all(|w| w[0] == w[1]) {
                return tables.into_iter().next().unwrap();
            }
            let mut out = Vec::new();
            for (val, table) in tables.into_iter().enumerate() {
                for (mut condition, effects) in table {
                    condition.insert(Literal { var: test.var, val });
                    out.push((condition, effects));
                }
            }
            out
        }
    }
}

/// Partition of the action's affected variables into groups correlated by
/// post-action tests: connected components of the undirected graph with an
/// edge from each affected variable to every variable its CPT tests
/// post-action. Uncorrelated variables form singleton groups.
pub fn correlation_groups(action: &ActionSpec) -> Vec<Vec<VarId>> {
    let affected: Vec<VarId> = action.effects.keys().copied().collect();
    let index: BTreeMap<VarId, usize> = affected.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..affected.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for (&var, tree) in &action.effects {
        let mut tested = Vec::new();
        crate::model::collect_post_tests(tree, &mut tested);
        for w in tested {
            let (a, b) = (find(&mut parent, index[&var]), find(&mut parent, index[&w]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<VarId>> = BTreeMap::new();
    for (i, &var) in affected.iter().enumerate() {
        groups.entry(find(&mut parent, i)).or_default().push(var);
    }
    let mut out: Vec<Vec<VarId>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

/// A fused variable standing for the joint outcome of correlated effects.
#[derive(Debug, Clone)]
pub struct CompoundInfo {
    pub name: String,
    pub members: Vec<VarId>,
    /// Full Cartesian product of the member domains, in lexicographic order;
    /// joint value `i` denotes the member assignment `tuples[i]`.
    pub tuples: Vec<Vec<Val>>,
}

/// One independent effect unit of an action: a single variable, or a fused
/// group. Each entry maps a pre-action condition to the achievable outcomes,
/// every outcome expressed as the set of original literals it realizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectUnit {
    pub members: Vec<VarId>,
    pub entries: Vec<UnitEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitEntry {
    pub condition: BTreeSet<Literal>,
    pub effects: Vec<BTreeSet<Literal>>,
}

#[derive(Debug, Clone)]
pub struct TransformedAction {
    /// Index into the source model's action list.
    pub action: usize,
    pub units: Vec<EffectUnit>,
}

/// The engine's view of a model: per action, independent effect units over
/// original literals, with correlations fused away.
#[derive(Debug, Clone)]
pub struct TransformedMdp {
    pub actions: Vec<TransformedAction>,
    pub compounds: Vec<CompoundInfo>,
}

/// Rewrites every action into independent effect units. Correlated groups
/// become joint units whose outcome tuples are the support of the joint
/// successor distribution, computed per consistent pre-action parent
/// assignment; everything else passes through [`effect_table`].
pub fn compound_transform(mdp: &FactoredMDP, max_compound: usize) -> Result<TransformedMdp> {
    let mut actions = Vec::with_capacity(mdp.actions.len());
    let mut compounds = Vec::new();
    for (ai, action) in mdp.actions.iter().enumerate() {
        let mut units = Vec::new();
        for group in correlation_groups(action) {
            if group.len() == 1 {
                let var = group[0];
                let entries = effect_table(action, var)
                    .into_iter()
                    .map(|ce| UnitEntry {
                        condition: ce.condition,
                        effects: ce
                            .effects
                            .into_iter()
                            .map(|val| BTreeSet::from([Literal { var, val }]))
                            .collect(),
                    })
                    .collect();
                units.push(EffectUnit {
                    members: group,
                    entries,
                });
            } else {
                let (unit, info) = fuse_group(mdp, ai, &group, max_compound)?;
                units.push(unit);
                compounds.push(info);
            }
        }
        actions.push(TransformedAction { action: ai, units });
    }
    Ok(TransformedMdp { actions, compounds })
}

fn fuse_group(
    mdp: &FactoredMDP,
    ai: usize,
    group: &[VarId],
    max_compound: usize,
) -> Result<(EffectUnit, CompoundInfo)> {
    let action = &mdp.actions[ai];
    let mut domain_size: usize = 1;
    for &m in group {
        domain_size = domain_size.saturating_mul(mdp.variables[m].domain.len());
    }
    let name = {
        let mut n = format!("__cmp_{}", action.name);
        for &m in group {
            n.push('_');
            n.push_str(&mdp.variables[m].name);
        }
        n
    };
    if domain_size > max_compound {
        return Err(Error::Capacity(format!(
            "fused effect unit {name} would have {domain_size} joint values, exceeding the cap of {max_compound}"
        )));
    }

    // Pre-action parents: every variable tested before the action anywhere
    // in the group's CPTs.
    let mut parents: BTreeSet<VarId> = BTreeSet::new();
    for &m in group {
        collect_pre_tests(&action.effects[&m], &mut parents);
    }
    let parents: Vec<VarId> = parents.into_iter().collect();

    let topo: Vec<VarId> = post_dependency_order(action)?
        .into_iter()
        .filter(|v| group.contains(v))
        .collect();

    let affected: BTreeSet<VarId> = action.effects.keys().copied().collect();
    let mut sigma: BTreeMap<VarId, Val> = BTreeMap::new();
    let rows = fuse_rec(mdp, action, group, &topo, &affected, &parents, &mut sigma);
    let entries = rows
        .into_iter()
        .map(|(condition, effects)| UnitEntry { condition, effects })
        .collect();

    let mut tuples = vec![Vec::new()];
    for &m in group {
        let mut next = Vec::new();
        for t in &tuples {
            for val in 0..mdp.variables[m].domain.len() {
                let mut t = t.clone();
                t.push(val);
                next.push(t);
            }
        }
        tuples = next;
    }

    Ok((
        EffectUnit {
            members: group.to_vec(),
            entries,
        },
        CompoundInfo {
            name,
            members: group.to_vec(),
            tuples,
        },
    ))
}

fn collect_pre_tests(tree: &CptTree, out: &mut BTreeSet<VarId>) {
    if let Tree::Split { test, children } = tree {
        if !test.post {
            out.insert(test.var);
        }
        for c in children {
            collect_pre_tests(c, out);
        }
    }
}

/// Chained splits over the parents in canonical order, with the same sibling
/// collapse (and affected-variable exception) as [`effect_table`]; at each
/// full parent assignment the row payload is the support of the group's
/// joint successor distribution.
fn fuse_rec(
    mdp: &FactoredMDP,
    action: &ActionSpec,
    group: &[VarId],
    topo: &[VarId],
    affected: &BTreeSet<VarId>,
    parents: &[VarId],
    sigma: &mut BTreeMap<VarId, Val>,
) -> Vec<(BTreeSet<Literal>, Vec<BTreeSet<Literal>>)> {
    let Some((&p, rest)) = parents.split_first() else {
        return vec![(BTreeSet::new(), joint_support(mdp, action, group, topo, sigma))];
    };
    let mut tables = Vec::with_capacity(mdp.variables[p].domain.len());
    for val in 0..mdp.variables[p].domain.len() {
        sigma.insert(p, val);
        tables.push(fuse_rec(mdp, action, group, topo, affected, rest, sigma));
    }
    sigma.remove(&p);
    if !affected.contains(&p) && tables.windows(2).all(|w| w[0] == w[1]) {
        return tables.into_iter().next().unwrap();
    }
    let mut out = Vec::new();
    for (val, table) in tables.into_iter().enumerate() {
        for (mut condition, effects) in table {
            condition.insert(Literal { var: p, val });
            out.push((condition, effects));
        }
    }
    out
}

fn joint_support(
    mdp: &FactoredMDP,
    action: &ActionSpec,
    group: &[VarId],
    topo: &[VarId],
    sigma: &BTreeMap<VarId, Val>,
) -> Vec<BTreeSet<Literal>> {
    // The CPTs only ever test parent variables pre-action, all of which are
    // assigned in sigma, so padding the rest of the state with zeros is safe.
    let mut state: State = vec![0; mdp.variables.len()];
    for (&v, &val) in sigma {
        state[v] = val;
    }
    let mut partials: Vec<BTreeMap<VarId, Val>> = vec![BTreeMap::new()];
    for &m in topo {
        let mut next = Vec::new();
        for partial in &partials {
            let d = eval_cpt(&action.effects[&m], &state, partial);
            for val in d.support() {
                let mut p = partial.clone();
                p.insert(m, val);
                next.push(p);
            }
        }
        partials = next;
    }
    let mut out: Vec<BTreeSet<Literal>> = partials
        .into_iter()
        .map(|pm| pm.into_iter().map(|(var, val)| Literal { var, val }).collect())
        .collect();
    out.sort();
    out.dedup();
    debug_assert!(out.iter().all(|t| t.len() == group.len()));
    out
}

/// All states an action can move `s` to with positive probability, read off
/// the transformed view: one matching entry per unit, then the product of
/// the units' outcome choices, with unaffected variables persisting.
pub fn support_successors(ta: &TransformedAction, s: &State) -> Vec<State> {
    let chosen: Vec<&UnitEntry> = ta
        .units
        .iter()
        .map(|u| {
            u.entries
                .iter()
                .find(|e| e.condition.iter().all(|l| s[l.var] == l.val))
                .expect("unit conditions partition the state space")
        })
        .collect();
    let mut out: Vec<State> = vec![s.clone()];
    for entry in chosen {
        let mut next = Vec::with_capacity(out.len() * entry.effects.len());
        for t in &out {
            for outcome in &entry.effects {
                let mut t = t.clone();
                for l in outcome {
                    t[l.var] = l.val;
                }
                next.push(t);
            }
        }
        out = next;
    }
    out.sort();
    out.dedup();
    out
}
