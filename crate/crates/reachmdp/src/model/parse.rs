//! Text format reader for factored MDPs.
//!
//! ```text
//! (mdp
//!   (discount 0.9)
//!   (variables (L0 (vals off on)) (L1 (vals off on)))
//!   (action toggle
//!     (effect L0 (split L0 (case off (dist (on 1.0)))
//!                          (case on  (dist (off 1.0))))))
//!   (reward (val 0.0))
//!   (init (L0 off) (L1 on)))
//! ```
//!
//! Split tests name a current-slice variable or `(post NAME)` for a
//! successor-slice read. The multi-state initial condition is
//! `(init (values (V v)+) (excl ((V v) (W w) ...)*))`. Reader errors are
//! positioned syntax errors, references to undeclared names, and
//! duplicate declarations; structural invariants are checked separately
//! by validation.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::sexpr::{self, err_at, Sexpr};

use super::{
    validate_mdp, ActionSpec, CptTree, Distribution, FactoredMDP, InitialCondition, Literal,
    RewardTree, Test, Tree, Variable,
};

/// Parses and validates a complete model document.
pub fn parse_mdp(text: &str) -> Result<FactoredMDP> {
    let mdp = parse_mdp_unvalidated(text)?;
    let issues = validate_mdp(&mdp);
    if issues.is_empty() {
        Ok(mdp)
    } else {
        Err(Error::validation(issues))
    }
}

/// Parses without running validation; useful for inspecting documents
/// that are expected to violate model invariants.
pub fn parse_mdp_unvalidated(text: &str) -> Result<FactoredMDP> {
    let form = sexpr::parse_one(text)?;
    if form.head() != Some("mdp") {
        return Err(err_at(form.pos(), "expected (mdp ...)"));
    }
    let items = form.as_list().unwrap();

    let mut discount: Option<f64> = None;
    let mut variables: Option<Vec<Variable>> = None;
    let mut actions: Vec<ActionSpec> = Vec::new();
    let mut reward: Option<RewardTree> = None;
    let mut init_form: Option<&Sexpr> = None;

    // The variable table must be read before trees resolve names, so do a
    // first pass for declarations and a second for everything else.
    for item in &items[1..] {
        if item.head() == Some("variables") {
            if variables.is_some() {
                return Err(err_at(item.pos(), "duplicate (variables ...) clause"));
            }
            variables = Some(parse_variables(item)?);
        }
    }
    let variables = variables.ok_or_else(|| err_at(form.pos(), "missing (variables ...) clause"))?;
    let names = NameTable::new(&variables);

    for item in &items[1..] {
        match item.head() {
            Some("variables") => {}
            Some("discount") => {
                if discount.is_some() {
                    return Err(err_at(item.pos(), "duplicate (discount ...) clause"));
                }
                discount = Some(parse_real_clause(item)?);
            }
            Some("action") => actions.push(parse_action(item, &names)?),
            Some("reward") => {
                if reward.is_some() {
                    return Err(err_at(item.pos(), "duplicate (reward ...) clause"));
                }
                reward = Some(parse_reward(item, &names)?);
            }
            Some("init") => {
                if init_form.is_some() {
                    return Err(err_at(item.pos(), "duplicate (init ...) clause"));
                }
                init_form = Some(item);
            }
            _ => return Err(err_at(item.pos(), "expected (discount|variables|action|reward|init ...)")),
        }
    }

    let mut seen_actions = BTreeSet::new();
    for a in &actions {
        if !seen_actions.insert(a.name.clone()) {
            return Err(err_at(form.pos(), format!("duplicate action {}", a.name)));
        }
    }

    let discount = discount.ok_or_else(|| err_at(form.pos(), "missing (discount ...) clause"))?;
    let reward = reward.ok_or_else(|| err_at(form.pos(), "missing (reward ...) clause"))?;
    let init = match init_form {
        Some(f) => Some(parse_init(f, &names)?),
        None => None,
    };

    Ok(FactoredMDP {
        variables,
        actions,
        reward,
        discount,
        init,
    })
}

struct NameTable {
    vars: BTreeMap<String, usize>,
    vals: Vec<BTreeMap<String, usize>>,
}

impl NameTable {
    fn new(variables: &[Variable]) -> Self {
        let mut vars = BTreeMap::new();
        let mut vals = Vec::new();
        for (i, v) in variables.iter().enumerate() {
            vars.insert(v.name.clone(), i);
            let mut m = BTreeMap::new();
            for (j, d) in v.domain.iter().enumerate() {
                m.insert(d.clone(), j);
            }
            vals.push(m);
        }
        NameTable { vars, vals }
    }

    fn var(&self, atom: &Sexpr) -> Result<usize> {
        let name = expect_name(atom)?;
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| err_at(atom.pos(), format!("undeclared variable {name}")))
    }

    fn val(&self, var: usize, atom: &Sexpr) -> Result<usize> {
        let name = expect_name(atom)?;
        self.vals[var]
            .get(name)
            .copied()
            .ok_or_else(|| err_at(atom.pos(), format!("undeclared value {name}")))
    }

    fn domain_len(&self, var: usize) -> usize {
        self.vals[var].len()
    }
}

fn expect_name(form: &Sexpr) -> Result<&str> {
    let text = form
        .as_atom()
        .ok_or_else(|| err_at(form.pos(), "expected a name"))?;
    let ok_start = text
        .chars()
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    if !ok_start || !text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(err_at(form.pos(), format!("invalid name {text}")));
    }
    if text.starts_with("__") {
        return Err(err_at(
            form.pos(),
            format!("name {text} is reserved (leading __)"),
        ));
    }
    Ok(text)
}

fn parse_real(form: &Sexpr) -> Result<f64> {
    let text = form
        .as_atom()
        .ok_or_else(|| err_at(form.pos(), "expected a number"))?;
    let x: f64 = text
        .parse()
        .map_err(|_| err_at(form.pos(), format!("invalid number {text}")))?;
    if !x.is_finite() {
        return Err(err_at(form.pos(), format!("non-finite number {text}")));
    }
    Ok(x)
}

fn parse_real_clause(form: &Sexpr) -> Result<f64> {
    let items = form.as_list().unwrap();
    if items.len() != 2 {
        return Err(err_at(form.pos(), "expected (discount REAL)"));
    }
    parse_real(&items[1])
}

fn parse_variables(form: &Sexpr) -> Result<Vec<Variable>> {
    let items = form.as_list().unwrap();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for decl in &items[1..] {
        let parts = decl
            .as_list()
            .ok_or_else(|| err_at(decl.pos(), "expected (NAME (vals ...))"))?;
        if parts.len() != 2 {
            return Err(err_at(decl.pos(), "expected (NAME (vals ...))"));
        }
        let name = expect_name(&parts[0])?.to_string();
        if !seen.insert(name.clone()) {
            return Err(err_at(parts[0].pos(), format!("duplicate variable {name}")));
        }
        if parts[1].head() != Some("vals") {
            return Err(err_at(parts[1].pos(), "expected (vals VALUE ...)"));
        }
        let vals = parts[1].as_list().unwrap();
        let mut domain = Vec::new();
        let mut seen_vals = BTreeSet::new();
        for v in &vals[1..] {
            let val = expect_name(v)?.to_string();
            if !seen_vals.insert(val.clone()) {
                return Err(err_at(v.pos(), format!("duplicate value {val} in {name}")));
            }
            domain.push(val);
        }
        out.push(Variable { name, domain });
    }
    Ok(out)
}

fn parse_action(form: &Sexpr, names: &NameTable) -> Result<ActionSpec> {
    let items = form.as_list().unwrap();
    if items.len() < 2 {
        return Err(err_at(form.pos(), "expected (action NAME (effect ...)*)"));
    }
    let name = expect_name(&items[1])?.to_string();
    let mut effects = BTreeMap::new();
    for eff in &items[2..] {
        if eff.head() != Some("effect") {
            return Err(err_at(eff.pos(), "expected (effect VAR TREE)"));
        }
        let parts = eff.as_list().unwrap();
        if parts.len() != 3 {
            return Err(err_at(eff.pos(), "expected (effect VAR TREE)"));
        }
        let var = names.var(&parts[1])?;
        if effects.contains_key(&var) {
            return Err(err_at(
                parts[1].pos(),
                format!("duplicate effect on {}", expect_name(&parts[1])?),
            ));
        }
        let tree = parse_cpt(&parts[2], names, var)?;
        effects.insert(var, tree);
    }
    Ok(ActionSpec { name, effects })
}

fn parse_test(form: &Sexpr, names: &NameTable) -> Result<Test> {
    if let Some(items) = form.as_list() {
        if form.head() == Some("post") && items.len() == 2 {
            let var = names.var(&items[1])?;
            return Ok(Test { var, post: true });
        }
        return Err(err_at(form.pos(), "expected NAME or (post NAME)"));
    }
    let var = names.var(form)?;
    Ok(Test { var, post: false })
}

/// Parses `(split TEST (case VALUE SUB)+)`, requiring exactly one case
/// per domain value of the test variable, or a leaf via `leaf`.
fn parse_split<L>(
    form: &Sexpr,
    names: &NameTable,
    leaf: &mut dyn FnMut(&Sexpr) -> Result<Option<Tree<L>>>,
) -> Result<Tree<L>> {
    if let Some(l) = leaf(form)? {
        return Ok(l);
    }
    if form.head() != Some("split") {
        return Err(err_at(form.pos(), "expected (split ...) or a leaf"));
    }
    let items = form.as_list().unwrap();
    if items.len() < 3 {
        return Err(err_at(form.pos(), "expected (split TEST (case VALUE TREE)+)"));
    }
    let test = parse_test(&items[1], names)?;
    let n = names.domain_len(test.var);
    let mut children: Vec<Option<Tree<L>>> = (0..n).map(|_| None).collect();
    for case in &items[2..] {
        if case.head() != Some("case") {
            return Err(err_at(case.pos(), "expected (case VALUE TREE)"));
        }
        let parts = case.as_list().unwrap();
        if parts.len() != 3 {
            return Err(err_at(case.pos(), "expected (case VALUE TREE)"));
        }
        let val = names.val(test.var, &parts[1])?;
        if children[val].is_some() {
            return Err(err_at(parts[1].pos(), "duplicate case value"));
        }
        children[val] = Some(parse_split(&parts[2], names, leaf)?);
    }
    let mut out = Vec::with_capacity(n);
    for (i, c) in children.into_iter().enumerate() {
        match c {
            Some(t) => out.push(t),
            None => {
                return Err(err_at(
                    form.pos(),
                    format!("split is missing a case for domain value index {i}"),
                ))
            }
        }
    }
    Ok(Tree::Split { test, children: out })
}

fn parse_cpt(form: &Sexpr, names: &NameTable, effect_var: usize) -> Result<CptTree> {
    parse_split(form, names, &mut |f| {
        if f.head() != Some("dist") {
            return Ok(None);
        }
        let items = f.as_list().unwrap();
        if items.len() < 2 {
            return Err(err_at(f.pos(), "expected (dist (VALUE PROB)+)"));
        }
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for entry in &items[1..] {
            let parts = entry
                .as_list()
                .ok_or_else(|| err_at(entry.pos(), "expected (VALUE PROB)"))?;
            if parts.len() != 2 {
                return Err(err_at(entry.pos(), "expected (VALUE PROB)"));
            }
            let val = names.val(effect_var, &parts[0])?;
            let p = parse_real(&parts[1])?;
            if entries.iter().any(|(v, _)| *v == val) {
                return Err(err_at(parts[0].pos(), "duplicate value in dist"));
            }
            entries.push((val, p));
        }
        entries.sort_by_key(|(v, _)| *v);
        Ok(Some(Tree::Leaf(Distribution { entries })))
    })
}

fn parse_reward(form: &Sexpr, names: &NameTable) -> Result<RewardTree> {
    let items = form.as_list().unwrap();
    if items.len() != 2 {
        return Err(err_at(form.pos(), "expected (reward TREE)"));
    }
    parse_split(&items[1], names, &mut |f| {
        if f.head() != Some("val") {
            return Ok(None);
        }
        let items = f.as_list().unwrap();
        if items.len() != 2 {
            return Err(err_at(f.pos(), "expected (val REAL)"));
        }
        Ok(Some(Tree::Leaf(parse_real(&items[1])?)))
    })
}

fn parse_literal(form: &Sexpr, names: &NameTable) -> Result<Literal> {
    let parts = form
        .as_list()
        .ok_or_else(|| err_at(form.pos(), "expected (VAR VALUE)"))?;
    if parts.len() != 2 {
        return Err(err_at(form.pos(), "expected (VAR VALUE)"));
    }
    let var = names.var(&parts[0])?;
    let val = names.val(var, &parts[1])?;
    Ok(Literal { var, val })
}

fn parse_init(form: &Sexpr, names: &NameTable) -> Result<InitialCondition> {
    let items = form.as_list().unwrap();
    let multi = items.get(1).map(|i| i.head() == Some("values")).unwrap_or(false);
    if multi {
        let mut values = BTreeSet::new();
        let mut excl = BTreeSet::new();
        for clause in &items[1..] {
            match clause.head() {
                Some("values") => {
                    for lit in &clause.as_list().unwrap()[1..] {
                        values.insert(parse_literal(lit, names)?);
                    }
                }
                Some("excl") => {
                    for set in &clause.as_list().unwrap()[1..] {
                        let lits = set
                            .as_list()
                            .ok_or_else(|| err_at(set.pos(), "expected ((VAR VALUE) ...)"))?;
                        let mut parsed: Vec<Literal> = Vec::new();
                        for l in lits {
                            parsed.push(parse_literal(l, names)?);
                        }
                        parsed.sort();
                        parsed.dedup();
                        excl.insert(parsed);
                    }
                }
                _ => return Err(err_at(clause.pos(), "expected (values ...) or (excl ...)")),
            }
        }
        return Ok(InitialCondition::Multi { values, excl });
    }
    // Single-state form: a literal per variable.
    let mut assigned: Vec<Option<usize>> = vec![None; names.vars.len()];
    for lit in &items[1..] {
        let l = parse_literal(lit, names)?;
        if assigned[l.var].is_some() {
            return Err(err_at(lit.pos(), "variable assigned twice in init"));
        }
        assigned[l.var] = Some(l.val);
    }
    let mut state = Vec::with_capacity(assigned.len());
    for (var, val) in assigned.iter().enumerate() {
        match val {
            Some(v) => state.push(*v),
            None => {
                return Err(err_at(
                    form.pos(),
                    format!("init does not assign variable index {var}"),
                ))
            }
        }
    }
    Ok(InitialCondition::Single(state))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "(mdp (discount 0.9)\n  (variables (V (vals a b)))\n  (action wait)\n  (reward (val 0.0))\n  (init (V a)))";

    #[test]
    fn minimal_document_parses() {
        let mdp = parse_mdp(MINIMAL).unwrap();
        assert_eq!(mdp.variables.len(), 1);
        assert_eq!(mdp.actions.len(), 1);
        assert_eq!(mdp.state_count(), num_bigint::BigUint::from(2u32));
        assert_eq!(mdp.init, Some(InitialCondition::Single(vec![0])));
    }

    #[test]
    fn undeclared_variable_is_a_parse_error() {
        let text = MINIMAL.replace("(init (V a))", "(init (W a))");
        let err = parse_mdp(&text).unwrap_err();
        match err {
            Error::Parse { message, .. } => assert!(message.contains("undeclared variable W")),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn undeclared_value_is_a_parse_error() {
        let text = MINIMAL.replace("(init (V a))", "(init (V zz))");
        assert!(matches!(parse_mdp(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn duplicate_variable_is_a_parse_error() {
        let text = MINIMAL.replace(
            "(variables (V (vals a b)))",
            "(variables (V (vals a b)) (V (vals a b)))",
        );
        let err = parse_mdp(&text).unwrap_err();
        match err {
            Error::Parse { message, .. } => assert!(message.contains("duplicate variable")),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn leaf_that_does_not_sum_to_one_is_a_validation_error() {
        let text = "(mdp (discount 0.9)\n  (variables (V (vals a b)))\n  (action go (effect V (dist (a 0.5) (b 0.4))))\n  (reward (val 0.0))\n  (init (V a)))";
        let err = parse_mdp(text).unwrap_err();
        match err {
            Error::Validation { issues } => {
                assert_eq!(issues[0].code, "DIST_SUM");
                assert!(issues[0].message.contains("sums to 0.9"), "{}", issues[0].message);
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn reserved_names_are_rejected() {
        let text = MINIMAL.replace("(V (vals a b))", "(__V (vals a b))");
        assert!(matches!(parse_mdp(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_must_cover_every_domain_value() {
        let text = "(mdp (discount 0.9)\n  (variables (V (vals a b)))\n  (action go (effect V (split V (case a (dist (b 1.0))))))\n  (reward (val 0.0))\n  (init (V a)))";
        let err = parse_mdp(text).unwrap_err();
        match err {
            Error::Parse { message, .. } => assert!(message.contains("missing a case")),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn multi_state_init_parses() {
        let text = "(mdp (discount 0.9)\n  (variables (V (vals a b)) (W (vals c d)))\n  (action wait)\n  (reward (val 0.0))\n  (init (values (V a) (V b) (W c)) (excl ((V b) (W c)))))";
        let mdp = parse_mdp(text).unwrap();
        match mdp.init.unwrap() {
            InitialCondition::Multi { values, excl } => {
                assert_eq!(values.len(), 3);
                assert_eq!(excl.len(), 1);
            }
            other => panic!("unexpected init {other:?}"),
        }
    }
}
