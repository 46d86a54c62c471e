//! Canonical writer: declaration order for variables and actions, domain
//! order inside splits and distributions. Structurally equal models
//! serialize to byte-identical text, and parsing the output reproduces
//! the model exactly.

use std::fmt::Write;

use crate::sexpr::fmt_real;

use super::{CptTree, FactoredMDP, InitialCondition, RewardTree, Test, Tree, VarId};

pub fn serialize_mdp(mdp: &FactoredMDP) -> String {
    let mut out = String::new();
    out.push_str("(mdp\n");
    let _ = writeln!(out, "  (discount {})", fmt_real(mdp.discount));

    out.push_str("  (variables");
    for v in &mdp.variables {
        let _ = write!(out, " ({} (vals {}))", v.name, v.domain.join(" "));
    }
    out.push_str(")\n");

    for a in &mdp.actions {
        let _ = write!(out, "  (action {}", a.name);
        for (&var, tree) in &a.effects {
            let _ = write!(
                out,
                "\n    (effect {} {})",
                mdp.variables[var].name,
                cpt_text(mdp, tree, var)
            );
        }
        out.push_str(")\n");
    }

    let _ = writeln!(out, "  (reward {})", reward_text(mdp, &mdp.reward));

    match &mdp.init {
        None => {}
        Some(InitialCondition::Single(state)) => {
            out.push_str("  (init");
            for (var, &val) in state.iter().enumerate() {
                let _ = write!(
                    out,
                    " ({} {})",
                    mdp.variables[var].name, mdp.variables[var].domain[val]
                );
            }
            out.push_str(")\n");
        }
        Some(InitialCondition::Multi { values, excl }) => {
            out.push_str("  (init (values");
            for lit in values {
                let _ = write!(out, " {}", mdp.format_literal(*lit));
            }
            out.push(')');
            if !excl.is_empty() {
                out.push_str(" (excl");
                for set in excl {
                    out.push_str(" (");
                    let parts: Vec<String> = set.iter().map(|l| mdp.format_literal(*l)).collect();
                    out.push_str(&parts.join(" "));
                    out.push(')');
                }
                out.push(')');
            }
            out.push_str(")\n");
        }
    }

    out.pop();
    out.push_str(")\n");
    out
}

fn test_text(mdp: &FactoredMDP, test: Test) -> String {
    if test.post {
        format!("(post {})", mdp.variables[test.var].name)
    } else {
        mdp.variables[test.var].name.clone()
    }
}

fn cpt_text(mdp: &FactoredMDP, tree: &CptTree, effect_var: VarId) -> String {
    match tree {
        Tree::Leaf(dist) => {
            let entries: Vec<String> = dist
                .entries
                .iter()
                .map(|(val, p)| format!("({} {})", mdp.variables[effect_var].domain[*val], fmt_real(*p)))
                .collect();
            format!("(dist {})", entries.join(" "))
        }
        Tree::Split { test, children } => {
            let mut s = format!("(split {}", test_text(mdp, *test));
            for (val, child) in children.iter().enumerate() {
                let _ = write!(
                    s,
                    " (case {} {})",
                    mdp.variables[test.var].domain[val],
                    cpt_text(mdp, child, effect_var)
                );
            }
            s.push(')');
            s
        }
    }
}

fn reward_text(mdp: &FactoredMDP, tree: &RewardTree) -> String {
    match tree {
        Tree::Leaf(r) => format!("(val {})", fmt_real(*r)),
        Tree::Split { test, children } => {
            let mut s = format!("(split {}", test_text(mdp, *test));
            for (val, child) in children.iter().enumerate() {
                let _ = write!(
                    s,
                    " (case {} {})",
                    mdp.variables[test.var].domain[val],
                    reward_text(mdp, child)
                );
            }
            s.push(')');
            s
        }
    }
}
