//! Structural validation. Every violated invariant yields one issue with
//! a stable machine-readable code and the location of the offending
//! declaration; an empty issue list means the model is well formed.

use std::collections::BTreeSet;

use crate::error::ValidationIssue;

use super::{
    post_dependency_order, CptTree, Distribution, FactoredMDP, InitialCondition, RewardTree, Tree,
    DIST_SUM_TOL,
};

pub const SMALL_DOMAIN: &str = "SMALL_DOMAIN";
pub const DISCOUNT_RANGE: &str = "DISCOUNT_RANGE";
pub const PATH_REPEAT: &str = "PATH_REPEAT";
pub const DIST_SUM: &str = "DIST_SUM";
pub const DIST_EMPTY: &str = "DIST_EMPTY";
pub const PROB_RANGE: &str = "PROB_RANGE";
pub const POST_NOT_AFFECTED: &str = "POST_NOT_AFFECTED";
pub const POST_IN_REWARD: &str = "POST_IN_REWARD";
pub const INTRA_SLICE_CYCLE: &str = "INTRA_SLICE_CYCLE";
pub const BAD_TREE_SHAPE: &str = "BAD_TREE_SHAPE";
pub const INIT_ARITY: &str = "INIT_ARITY";
pub const INIT_RANGE: &str = "INIT_RANGE";
pub const INIT_MISSING_VAR: &str = "INIT_MISSING_VAR";
pub const INIT_EXCL_SIZE: &str = "INIT_EXCL_SIZE";
pub const INIT_EXCL_DUP_VAR: &str = "INIT_EXCL_DUP_VAR";

pub fn validate_mdp(mdp: &FactoredMDP) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let issue = |issues: &mut Vec<ValidationIssue>, code, location: String, message: String| {
        issues.push(ValidationIssue {
            code,
            location,
            message,
        });
    };

    for v in &mdp.variables {
        if v.domain.len() < 2 {
            issue(
                &mut issues,
                SMALL_DOMAIN,
                format!("variable {}", v.name),
                format!("domain has {} value(s); at least two are required", v.domain.len()),
            );
        }
    }

    if !(0.0..1.0).contains(&mdp.discount) {
        issue(
            &mut issues,
            DISCOUNT_RANGE,
            "discount".to_string(),
            format!("discount {} is outside [0, 1)", mdp.discount),
        );
    }

    for a in &mdp.actions {
        let affected: BTreeSet<usize> = a.effects.keys().copied().collect();
        for (&var, tree) in &a.effects {
            let loc = format!("action {} / effect {}", a.name, mdp.variables[var].name);
            check_cpt(mdp, tree, var, &affected, &loc, &mut Vec::new(), &mut issues);
        }
        if post_dependency_order(a).is_err() {
            issue(
                &mut issues,
                INTRA_SLICE_CYCLE,
                format!("action {}", a.name),
                "post-action test dependencies form a cycle".to_string(),
            );
        }
    }

    check_reward(mdp, &mdp.reward, &mut Vec::new(), &mut issues);

    match &mdp.init {
        None => {}
        Some(InitialCondition::Single(state)) => {
            if state.len() != mdp.variables.len() {
                issue(
                    &mut issues,
                    INIT_ARITY,
                    "init".to_string(),
                    format!(
                        "init assigns {} variables, model declares {}",
                        state.len(),
                        mdp.variables.len()
                    ),
                );
            } else {
                for (var, &val) in state.iter().enumerate() {
                    if val >= mdp.variables[var].domain.len() {
                        issue(
                            &mut issues,
                            INIT_RANGE,
                            "init".to_string(),
                            format!("value index {val} out of range for {}", mdp.variables[var].name),
                        );
                    }
                }
            }
        }
        Some(InitialCondition::Multi { values, excl }) => {
            for lit in values {
                if lit.var >= mdp.variables.len() || lit.val >= mdp.variables[lit.var].domain.len() {
                    issue(
                        &mut issues,
                        INIT_RANGE,
                        "init".to_string(),
                        format!("literal ({}, {}) out of range", lit.var, lit.val),
                    );
                }
            }
            for var in 0..mdp.variables.len() {
                if !values.iter().any(|l| l.var == var) {
                    issue(
                        &mut issues,
                        INIT_MISSING_VAR,
                        "init".to_string(),
                        format!("variable {} has no possible initial value", mdp.variables[var].name),
                    );
                }
            }
            for set in excl {
                if set.len() < 2 {
                    issue(
                        &mut issues,
                        INIT_EXCL_SIZE,
                        "init".to_string(),
                        "exclusion sets need at least two literals".to_string(),
                    );
                }
                let vars: BTreeSet<usize> = set.iter().map(|l| l.var).collect();
                if vars.len() != set.len() {
                    issue(
                        &mut issues,
                        INIT_EXCL_DUP_VAR,
                        "init".to_string(),
                        "exclusion set mentions a variable twice".to_string(),
                    );
                }
            }
        }
    }

    issues
}

fn check_dist(
    mdp: &FactoredMDP,
    dist: &Distribution,
    effect_var: usize,
    loc: &str,
    issues: &mut Vec<ValidationIssue>,
) {
    let n = mdp.variables[effect_var].domain.len();
    for (val, p) in &dist.entries {
        if *val >= n {
            issues.push(ValidationIssue {
                code: BAD_TREE_SHAPE,
                location: loc.to_string(),
                message: format!("distribution value index {val} out of range"),
            });
        }
        if !(0.0..=1.0).contains(p) {
            issues.push(ValidationIssue {
                code: PROB_RANGE,
                location: loc.to_string(),
                message: format!("probability {p} is outside [0, 1]"),
            });
        }
    }
    let sum = dist.sum();
    if (sum - 1.0).abs() > DIST_SUM_TOL {
        issues.push(ValidationIssue {
            code: DIST_SUM,
            location: loc.to_string(),
            message: format!("distribution sums to {}", crate::sexpr::fmt_real(sum)),
        });
    }
    if dist.support().next().is_none() {
        issues.push(ValidationIssue {
            code: DIST_EMPTY,
            location: loc.to_string(),
            message: "distribution has empty support".to_string(),
        });
    }
}

fn check_cpt(
    mdp: &FactoredMDP,
    tree: &CptTree,
    effect_var: usize,
    affected: &BTreeSet<usize>,
    loc: &str,
    path: &mut Vec<(usize, bool)>,
    issues: &mut Vec<ValidationIssue>,
) {
    match tree {
        Tree::Leaf(dist) => check_dist(mdp, dist, effect_var, loc, issues),
        Tree::Split { test, children } => {
            if test.var >= mdp.variables.len() {
                issues.push(ValidationIssue {
                    code: BAD_TREE_SHAPE,
                    location: loc.to_string(),
                    message: format!("test variable index {} out of range", test.var),
                });
                return;
            }
            if children.len() != mdp.variables[test.var].domain.len() {
                issues.push(ValidationIssue {
                    code: BAD_TREE_SHAPE,
                    location: loc.to_string(),
                    message: format!(
                        "split on {} has {} children, domain has {}",
                        mdp.variables[test.var].name,
                        children.len(),
                        mdp.variables[test.var].domain.len()
                    ),
                });
            }
            if test.post && !affected.contains(&test.var) {
                issues.push(ValidationIssue {
                    code: POST_NOT_AFFECTED,
                    location: loc.to_string(),
                    message: format!(
                        "post-action test on {} which the action does not affect",
                        mdp.variables[test.var].name
                    ),
                });
            }
            if path.contains(&(test.var, test.post)) {
                issues.push(ValidationIssue {
                    code: PATH_REPEAT,
                    location: loc.to_string(),
                    message: format!(
                        "variable {} tested twice on one path",
                        mdp.variables[test.var].name
                    ),
                });
            }
            path.push((test.var, test.post));
            for c in children {
                check_cpt(mdp, c, effect_var, affected, loc, path, issues);
            }
            path.pop();
        }
    }
}

fn check_reward(
    mdp: &FactoredMDP,
    tree: &RewardTree,
    path: &mut Vec<usize>,
    issues: &mut Vec<ValidationIssue>,
) {
    match tree {
        Tree::Leaf(r) => {
            if !r.is_finite() {
                issues.push(ValidationIssue {
                    code: BAD_TREE_SHAPE,
                    location: "reward".to_string(),
                    message: format!("non-finite reward {r}"),
                });
            }
        }
        Tree::Split { test, children } => {
            if test.var >= mdp.variables.len() {
                issues.push(ValidationIssue {
                    code: BAD_TREE_SHAPE,
                    location: "reward".to_string(),
                    message: format!("test variable index {} out of range", test.var),
                });
                return;
            }
            if test.post {
                issues.push(ValidationIssue {
                    code: POST_IN_REWARD,
                    location: "reward".to_string(),
                    message: format!(
                        "reward tree tests successor-slice {}",
                        mdp.variables[test.var].name
                    ),
                });
            }
            if children.len() != mdp.variables[test.var].domain.len() {
                issues.push(ValidationIssue {
                    code: BAD_TREE_SHAPE,
                    location: "reward".to_string(),
                    message: format!(
                        "split on {} has {} children, domain has {}",
                        mdp.variables[test.var].name,
                        children.len(),
                        mdp.variables[test.var].domain.len()
                    ),
                });
            }
            if path.contains(&test.var) {
                issues.push(ValidationIssue {
                    code: PATH_REPEAT,
                    location: "reward".to_string(),
                    message: format!(
                        "variable {} tested twice on one path",
                        mdp.variables[test.var].name
                    ),
                });
            }
            path.push(test.var);
            for c in children {
                check_reward(mdp, c, path, issues);
            }
            path.pop();
        }
    }
}
