//! Reachability analysis, reduction and solving for factored MDPs.
//!
//! Models are expressed over discrete state variables. Each action carries a
//! two-slice network: for every variable it affects, a decision-tree CPT maps
//! the relevant pre-action (and, where needed, post-action) values to a
//! distribution over the variable's next value. Variables without an effect
//! entry persist. Reward is a decision tree over pre-action values.
//!
//! On top of that representation the crate provides:
//!
//! * [`reach`]: an anytime reachability analysis that alternates action and
//!   value levels to a fixpoint, deriving exclusion constraints of bounded
//!   arity `k` over the reachable values;
//! * [`reduce`]: model reduction against a reachability result (tree pruning,
//!   removable-variable elimination, relevance analysis);
//! * [`solve`]: explicit-state value iteration over the consistent states;
//! * [`oracle`]: brute-force breadth-first enumeration used to check the
//!   structured analysis on small models.
//!
//! The `reachmdp` binary exposes the same functionality as a batch CLI.

pub mod cli;
pub mod error;
pub mod gen;
pub mod model;
pub mod oracle;
pub mod preprocess;
pub mod reach;
pub mod reduce;
pub mod sexpr;
pub mod solve;

pub use error::{Error, Result, ValidationIssue};
pub use model::{
    parse_mdp, serialize_mdp, validate_mdp, ActionSpec, CptTree, Distribution, FactoredMDP,
    InitialCondition, Literal, RewardTree, State, Test, Tree, Val, VarId, Variable,
};
