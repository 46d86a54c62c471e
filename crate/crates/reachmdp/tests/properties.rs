//! Randomized invariants over generated models. Each property draws the
//! generator's shape parameters, so failures shrink toward the smallest
//! model that still breaks the claim.

use proptest::prelude::*;

use reachmdp::gen::{random_instance, RandomConfig};
use reachmdp::model::{parse_mdp, serialize_mdp, FactoredMDP};
use reachmdp::oracle::{bfs_reachable, DEFAULT_STATE_CAP};
use reachmdp::reach::{
    count_consistent, parse_reachable, reachable_k, serialize_reachable, state_consistent,
    ReachOptions, ReachableSet,
};
use reachmdp::solve::enumerate_states;

fn instances() -> impl Strategy<Value = FactoredMDP> {
    (2usize..=7, 1usize..=4, 1usize..=3, any::<bool>(), any::<u64>()).prop_map(
        |(vars, actions, max_depth, allow_post_tests, seed)| {
            random_instance(
                &RandomConfig {
                    vars,
                    actions,
                    max_depth,
                    allow_post_tests,
                },
                seed,
            )
        },
    )
}

fn analyze(mdp: &FactoredMDP, k: usize) -> ReachableSet {
    reachable_k(
        mdp,
        mdp.init.as_ref().unwrap(),
        k,
        &ReachOptions::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_is_a_fixpoint(mdp in instances()) {
        let first = serialize_mdp(&mdp);
        let reparsed = parse_mdp(&first).unwrap();
        prop_assert_eq!(&reparsed, &mdp);
        prop_assert_eq!(serialize_mdp(&reparsed), first);
    }

    #[test]
    fn every_reachable_state_stays_consistent(mdp in instances()) {
        let rs = analyze(&mdp, 2.min(mdp.variables.len()));
        for s in bfs_reachable(&mdp, DEFAULT_STATE_CAP).unwrap() {
            prop_assert!(
                state_consistent(&rs, &s),
                "reachable state {} excluded",
                mdp.format_state(&s)
            );
        }
    }

    #[test]
    fn consistent_counts_shrink_as_the_bound_grows(mdp in instances()) {
        let mut previous = None;
        for k in 1..=mdp.variables.len().min(4) {
            let count = count_consistent(&analyze(&mdp, k), &mdp).unwrap();
            if let Some(prev) = previous {
                prop_assert!(count <= prev, "count grew from {prev} to {count} at k={k}");
            }
            previous = Some(count);
        }
    }

    #[test]
    fn closed_form_count_matches_explicit_enumeration(mdp in instances()) {
        for k in [1, 2.min(mdp.variables.len())] {
            let rs = analyze(&mdp, k);
            let counted = count_consistent(&rs, &mdp).unwrap();
            let listed = enumerate_states(&mdp, Some(&rs), DEFAULT_STATE_CAP).unwrap();
            prop_assert_eq!(counted, listed.len().into());
        }
    }

    #[test]
    fn enumeration_is_sorted_and_free_of_duplicates(mdp in instances()) {
        let states = enumerate_states(&mdp, None, DEFAULT_STATE_CAP).unwrap();
        prop_assert!(states.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn analysis_files_round_trip(mdp in instances()) {
        let rs = analyze(&mdp, 2.min(mdp.variables.len()));
        let text = serialize_reachable(&mdp, &rs);
        let back = parse_reachable(&text, &mdp).unwrap();
        prop_assert_eq!(back, rs);
    }
}
