//! World invariants over random action sequences and random states.

mod common;

use common::world_checks::*;
use orgsim_core::world::ScenarioCatalog;
use proptest::prelude::*;

fn worlds() -> Vec<orgsim_core::world::World> {
    let c = ScenarioCatalog::builtin();
    c.names().iter().map(|n| c.world(n).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_sequences_keep_invariants(which in 0usize..16, seed in any::<u64>(), len in 1usize..80) {
        let ws = worlds();
        let w = &ws[which % ws.len()];
        if let Err(e) = random_walk(w, seed, len) {
            prop_assert!(false, "{}: {}", w.scenario().name, e);
        }
    }
}

#[test]
fn legal_list_matches_brute_force_on_random_states() {
    let ws = worlds();
    let mut checked = 0;
    for i in 0..100u64 {
        let w = &ws[i as usize % ws.len()];
        let (state, agents) = random_state(w, i, (i as usize * 7) % 120);
        for a in agents {
            checked += closure_all(w, w.scenario(), &state, a).unwrap_or_else(|e| panic!("state {i}: {e}"));
        }
    }
    assert!(checked > 1000);
}
