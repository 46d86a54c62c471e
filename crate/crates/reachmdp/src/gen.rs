//! Built-in model generators: two small hand-crafted domains that exercise
//! the interesting corners of the analysis, a seeded resource-constrained
//! "factory" family for scale tests, and a fully random family for sweeps.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ActionSpec, CptTree, Distribution, FactoredMDP, InitialCondition, RewardTree, Test, Tree,
    VarId, Variable,
};

fn boolean(name: impl Into<String>) -> Variable {
    Variable {
        name: name.into(),
        domain: vec!["f".to_string(), "t".to_string()],
    }
}

fn point(val: usize) -> CptTree {
    Tree::Leaf(Distribution::point(val))
}

/// Deterministic CPT that keeps a boolean variable at its current value.
fn persist_bool(var: VarId) -> CptTree {
    Tree::Split {
        test: Test { var, post: false },
        children: vec![point(0), point(1)],
    }
}

/// Deterministic CPT that flips a boolean variable.
fn flip_bool(var: VarId) -> CptTree {
    Tree::Split {
        test: Test { var, post: false },
        children: vec![point(1), point(0)],
    }
}

/// A chain of lights wired to one switch: the single `toggle` action flips
/// every light at once. The initial state has light 0 off and the others on,
/// so the lights stay perfectly anti-correlated forever and only two of the
/// `2^n` states are ever reached.
pub fn lights(n: usize) -> FactoredMDP {
    assert!(n >= 1, "lights(n) needs at least one light");
    let variables: Vec<Variable> = (0..n)
        .map(|i| Variable {
            name: format!("L{i}"),
            domain: vec!["off".to_string(), "on".to_string()],
        })
        .collect();
    let effects: BTreeMap<VarId, CptTree> = (0..n).map(|v| (v, flip_bool(v))).collect();
    let mut init = vec![1; n];
    init[0] = 0;
    FactoredMDP {
        variables,
        actions: vec![ActionSpec {
            name: "toggle".to_string(),
            effects,
        }],
        reward: Tree::Leaf(0.0),
        discount: 0.9,
        init: Some(InitialCondition::Single(init)),
    }
}

/// [`lights`] with a non-constant reward (1 when light 0 is on) so that the
/// two reachable states have distinct values under discounting.
pub fn lights_with_goal(n: usize) -> FactoredMDP {
    let mut m = lights(n);
    m.reward = Tree::Split {
        test: Test { var: 0, post: false },
        children: vec![Tree::Leaf(0.0), Tree::Leaf(1.0)],
    };
    m
}

/// Four parts, one three-litre paint supply, and one action per 3-subset of
/// parts. Each action paints its three parts and exhausts the supply, so no
/// run can ever paint all four parts; pairwise constraints alone cannot
/// express that, which makes this the canonical stress test for higher-arity
/// exclusion constraints.
pub fn paint4() -> FactoredMDP {
    let mut variables: Vec<Variable> = (1..=4).map(|i| boolean(format!("PntP{i}"))).collect();
    variables.push(Variable {
        name: "qty".to_string(),
        domain: vec!["q0".to_string(), "q3".to_string()],
    });
    let qty: VarId = 4;

    let paint_action = |parts: [VarId; 3]| {
        let mut effects: BTreeMap<VarId, CptTree> = BTreeMap::new();
        for p in parts {
            effects.insert(
                p,
                Tree::Split {
                    test: Test { var: qty, post: false },
                    children: vec![persist_bool(p), point(1)],
                },
            );
        }
        // The split is semantically redundant (both branches land on q0) but
        // records that the outcome was conditioned on the supply, which the
        // analysis needs in order to see that painting consumes the paint.
        effects.insert(
            qty,
            Tree::Split {
                test: Test { var: qty, post: false },
                children: vec![point(0), point(0)],
            },
        );
        let name = format!(
            "paint{}{}{}",
            parts[0] + 1,
            parts[1] + 1,
            parts[2] + 1
        );
        ActionSpec { name, effects }
    };

    let actions = vec![
        paint_action([0, 1, 2]),
        paint_action([0, 1, 3]),
        paint_action([0, 2, 3]),
        paint_action([1, 2, 3]),
    ];

    let mut reward = RewardTree::Leaf(1.0);
    for p in (0..4).rev() {
        reward = Tree::Split {
            test: Test { var: p, post: false },
            children: vec![Tree::Leaf(0.0), reward],
        };
    }

    FactoredMDP {
        variables,
        actions,
        reward,
        discount: 0.9,
        init: Some(InitialCondition::Single(vec![0, 0, 0, 0, 1])),
    }
}

/// Seeded resource-constrained production domain.
///
/// Layout, for `vars` total variables and `actions` total actions:
///
/// * two decorative booleans (`dec0`, `dec1`) toggled by their own actions
///   and never consulted by anything else;
/// * a pool of consumable resources (`res*`, roughly one per six variables)
///   that no action can replenish;
/// * the remaining `work*` booleans form a production chain. Each work
///   action targets one work variable and succeeds with some probability
///   when its resource is stocked and the preceding chain variable is done,
///   consuming the resource with some probability.
///
/// Reward pays 1 when the last few chain variables are all done. With
/// `stocked = false` every resource starts empty, so the whole chain is
/// frozen and only the decorative variables ever change.
pub fn factory(vars: usize, actions: usize, seed: u64, stocked: bool) -> FactoredMDP {
    assert!(vars >= 5, "factory needs at least 5 variables");
    assert!(actions >= 3, "factory needs at least 3 actions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_res = ((vars - 2) / 6).max(1).min(actions - 2);
    let n_work = vars - 2 - n_res;
    assert!(n_work >= 1, "factory needs at least one work variable");

    // Variable ids: work chain first, then resources, then the decorations.
    let mut variables: Vec<Variable> = Vec::with_capacity(vars);
    for i in 0..n_work {
        variables.push(boolean(format!("work{i}")));
    }
    let res_base = n_work;
    for i in 0..n_res {
        variables.push(Variable {
            name: format!("res{i}"),
            domain: vec!["none".to_string(), "some".to_string()],
        });
    }
    let dec_base = res_base + n_res;
    variables.push(boolean("dec0"));
    variables.push(boolean("dec1"));

    let mut specs = Vec::with_capacity(actions);
    let n_work_actions = actions - 2;
    for j in 0..n_work_actions {
        let target = j % n_work;
        let res = res_base + j % n_res;
        let succeed = 0.7 + 0.3 * rng.gen::<f64>();
        let consume = 0.5 + 0.5 * rng.gen::<f64>();

        // The step succeeds only while the resource is stocked; deeper chain
        // variables additionally wait for their predecessor.
        let done = Tree::Leaf(Distribution {
            entries: vec![(0, 1.0 - succeed), (1, succeed)],
        });
        let attempt = if target == 0 {
            done
        } else {
            Tree::Split {
                test: Test { var: target - 1, post: false },
                children: vec![persist_bool(target), done],
            }
        };
        let work_cpt = Tree::Split {
            test: Test { var: res, post: false },
            children: vec![persist_bool(target), attempt],
        };
        let res_cpt = Tree::Split {
            test: Test { var: res, post: false },
            children: vec![
                point(0),
                Tree::Leaf(Distribution {
                    entries: vec![(0, consume), (1, 1.0 - consume)],
                }),
            ],
        };
        let mut effects = BTreeMap::new();
        effects.insert(target, work_cpt);
        effects.insert(res, res_cpt);
        specs.push(ActionSpec {
            name: format!("make{j}"),
            effects,
        });
    }
    for d in 0..2 {
        let var = dec_base + d;
        let mut effects = BTreeMap::new();
        effects.insert(var, flip_bool(var));
        specs.push(ActionSpec {
            name: format!("adjust{d}"),
            effects,
        });
    }

    // Only the chain variables some action targets can ever change, so the
    // objective must sit on those or the whole reward is dead on arrival.
    let workable = n_work.min(n_work_actions);
    let n_goals = workable.min(3);
    let mut reward = RewardTree::Leaf(1.0);
    for g in (workable - n_goals..workable).rev() {
        reward = Tree::Split {
            test: Test { var: g, post: false },
            children: vec![Tree::Leaf(0.0), reward],
        };
    }

    let mut init = vec![0; vars];
    if stocked {
        for i in 0..n_res {
            init[res_base + i] = 1;
        }
    }

    FactoredMDP {
        variables,
        actions: specs,
        reward,
        discount: 0.9,
        init: Some(InitialCondition::Single(init)),
    }
}

/// Knobs for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct RandomConfig {
    /// Number of boolean state variables.
    pub vars: usize,
    /// Number of actions.
    pub actions: usize,
    /// Maximum CPT depth (tests on one root-to-leaf path).
    pub max_depth: usize,
    /// Permit post-action tests between co-affected variables, which is what
    /// lets an action install correlations among its effects.
    pub allow_post_tests: bool,
}

/// Seeded random boolean model for property sweeps. Every draw with the same
/// config and seed yields the same model.
pub fn random_instance(cfg: &RandomConfig, seed: u64) -> FactoredMDP {
    assert!(cfg.vars >= 1 && cfg.actions >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.vars;

    let variables: Vec<Variable> = (0..n).map(|i| boolean(format!("V{i}"))).collect();

    let mut actions = Vec::with_capacity(cfg.actions);
    for j in 0..cfg.actions {
        let n_eff = rng.gen_range(1..=3.min(n));
        let mut affected: Vec<VarId> = (0..n).collect();
        for i in 0..n_eff {
            let pick = rng.gen_range(i..n);
            affected.swap(i, pick);
        }
        let affected = &mut affected[..n_eff];
        affected.sort_unstable();

        let mut effects = BTreeMap::new();
        for (pos, &var) in affected.iter().enumerate() {
            // Post-action tests may only look at co-affected variables that
            // come earlier in the slice order, which rules out cycles.
            let post_pool: Vec<VarId> = if cfg.allow_post_tests {
                affected[..pos].to_vec()
            } else {
                Vec::new()
            };
            let tree = random_cpt(&mut rng, n, &post_pool, cfg.max_depth, &mut Vec::new());
            effects.insert(var, tree);
        }
        actions.push(ActionSpec {
            name: format!("a{j}"),
            effects,
        });
    }

    let reward_var = rng.gen_range(0..n);
    let reward = Tree::Split {
        test: Test { var: reward_var, post: false },
        children: vec![Tree::Leaf(0.0), Tree::Leaf(1.0)],
    };

    let init: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();

    FactoredMDP {
        variables,
        actions,
        reward,
        discount: 0.9,
        init: Some(InitialCondition::Single(init)),
    }
}

fn random_leaf(rng: &mut ChaCha8Rng) -> CptTree {
    if rng.gen_bool(0.6) {
        point(rng.gen_range(0..2))
    } else {
        let p = 0.1 + 0.8 * rng.gen::<f64>();
        Tree::Leaf(Distribution {
            entries: vec![(0, 1.0 - p), (1, p)],
        })
    }
}

fn random_cpt(
    rng: &mut ChaCha8Rng,
    n: usize,
    post_pool: &[VarId],
    depth_left: usize,
    path: &mut Vec<Test>,
) -> CptTree {
    if depth_left == 0 || rng.gen_bool(0.4) {
        return random_leaf(rng);
    }
    // Draw a test not already used on this path; fall back to a leaf when
    // nothing fresh is available.
    for _ in 0..6 {
        let test = if !post_pool.is_empty() && rng.gen_bool(0.3) {
            Test {
                var: post_pool[rng.gen_range(0..post_pool.len())],
                post: true,
            }
        } else {
            Test {
                var: rng.gen_range(0..n),
                post: false,
            }
        };
        if path.contains(&test) {
            continue;
        }
        path.push(test);
        let lo = random_cpt(rng, n, post_pool, depth_left - 1, path);
        let hi = random_cpt(rng, n, post_pool, depth_left - 1, path);
        let test = path.pop().unwrap();
        return Tree::Split {
            test,
            children: vec![lo, hi],
        };
    }
    random_leaf(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_mdp;

    #[test]
    fn lights_shape() {
        let m = lights(10);
        assert_eq!(m.variables.len(), 10);
        assert_eq!(m.actions.len(), 1);
        assert!(validate_mdp(&m).is_empty());
        assert_eq!(m.state_count().to_string(), "1024");
    }

    #[test]
    fn paint4_shape() {
        let m = paint4();
        assert_eq!(m.variables.len(), 5);
        assert_eq!(m.actions.len(), 4);
        assert!(validate_mdp(&m).is_empty());
        assert_eq!(m.state_count().to_string(), "32");
    }

    #[test]
    fn factory_is_valid_and_seed_deterministic() {
        let a = factory(31, 30, 7, true);
        let b = factory(31, 30, 7, true);
        assert!(validate_mdp(&a).is_empty());
        assert_eq!(crate::model::serialize_mdp(&a), crate::model::serialize_mdp(&b));
        assert_eq!(a.variables.len(), 31);
        assert_eq!(a.actions.len(), 30);
    }

    #[test]
    fn random_instances_are_valid() {
        for seed in 0..40 {
            for allow_post_tests in [false, true] {
                let cfg = RandomConfig {
                    vars: 6,
                    actions: 4,
                    max_depth: 3,
                    allow_post_tests,
                };
                let m = random_instance(&cfg, seed);
                let issues = validate_mdp(&m);
                assert!(issues.is_empty(), "seed {seed}: {issues:?}");
            }
        }
    }

    #[test]
    fn random_instances_differ_across_seeds() {
        let cfg = RandomConfig {
            vars: 6,
            actions: 4,
            max_depth: 3,
            allow_post_tests: true,
        };
        let a = crate::model::serialize_mdp(&random_instance(&cfg, 1));
        let b = crate::model::serialize_mdp(&random_instance(&cfg, 2));
        assert_ne!(a, b);
    }
}
