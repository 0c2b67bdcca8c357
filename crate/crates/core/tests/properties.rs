use cubeconf::game::TargetConfiguration;
use cubeconf::lattice::{is_configuration_grounded, CellPos, Dim, EnvBounds};
use cubeconf::learning::{run, LearningParams, Mode};
use cubeconf::oracle::{
    detailed_balance_residual, enumerate_states, exact_transition_matrix, gibbs_distribution,
    stationary_distribution, sup_distance, unreachable_pairs, DEFAULT_STATE_CAP,
};
use cubeconf::scenario::{generate_scenario, Scenario, ScenarioKind};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop::sample::select(ScenarioKind::ALL.to_vec())
}

/// Small 2D boxes, wide enough in both directions for labeled agents to pass
/// each other when there are two of them.
fn planar_instance() -> impl Strategy<Value = (EnvBounds, usize, Vec<CellPos>, f64)> {
    (1usize..=2, 1u32..=4, 1u32..=4)
        .prop_filter("two agents need room to pass", |&(n, w, h)| n == 1 || (w >= 2 && h >= 2))
        .prop_flat_map(|(n, w, h)| {
            let b = EnvBounds::grid_2d(w, h).unwrap();
            let cells = b.agent_cells();
            (Just(b), Just(n), subsequence(cells, n), 0.05f64..2.0)
        })
}

/// Small 3D boxes; targets are bottom-layer cells so they are grounded.
fn spatial_instance() -> impl Strategy<Value = (EnvBounds, usize, Vec<CellPos>, f64)> {
    (1usize..=2, 1u32..=3, 1u32..=3, 1u32..=2)
        .prop_filter("two agents need room to pass", |&(n, w, d, _)| n == 1 || (w >= 2 && d >= 2))
        .prop_flat_map(|(n, w, d, l)| {
            let b = EnvBounds::grid_3d(w, d, l).unwrap();
            let bottom: Vec<CellPos> = b.agent_cells().into_iter().filter(|c| c.z() == 1).collect();
            (Just(b), Just(n), subsequence(bottom, n), 0.05f64..2.0)
        })
}

fn oracle_holds(bounds: &EnvBounds, n: usize, target: Vec<CellPos>, tau: f64) -> Result<(), TestCaseError> {
    let target = TargetConfiguration::new(bounds.dim(), target).unwrap();
    let space = enumerate_states(n, bounds, DEFAULT_STATE_CAP).unwrap();
    let m = exact_transition_matrix(&space, &target, bounds, tau).unwrap();
    for i in 0..m.size() {
        let s: f64 = m.row(i).iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert!(m.row(i).iter().all(|p| *p >= 0.0));
    }
    if space.len() > 1 {
        prop_assert!(unreachable_pairs(&m).is_empty(), "reducible: {:?}", unreachable_pairs(&m));
    }
    let gibbs = gibbs_distribution(&space, &target, tau).unwrap();
    let pi = stationary_distribution(&m).unwrap();
    prop_assert!(sup_distance(&pi, &gibbs) <= 1e-8);
    prop_assert!(detailed_balance_residual(&m, &gibbs) <= 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planar_chain_is_gibbs((bounds, n, target, tau) in planar_instance()) {
        oracle_holds(&bounds, n, target, tau)?;
    }

    #[test]
    fn spatial_chain_is_gibbs((bounds, n, target, tau) in spatial_instance()) {
        oracle_holds(&bounds, n, target, tau)?;
    }

    #[test]
    fn trace_invariants(kind in kind(), n in 1usize..8, seed in 0u64..500, tau in 0.01f64..1.0, budget in 0u64..3000) {
        let s = generate_scenario(kind, n, seed).unwrap();
        let params = LearningParams { tau, seed, max_steps: budget, mode: Mode::Global };
        let t = run(&s, &params).unwrap();
        prop_assert!(t.records.len() as u64 <= budget);
        for r in &t.records {
            prop_assert!(r.potential_after > 0.0 && r.potential_after <= n as f64);
        }
        let reached = t.outcome.final_potential == n as f64;
        prop_assert_eq!(t.converged_at().is_some(), reached);
        if s.dim() == Dim::Three {
            prop_assert!(is_configuration_grounded(&t.outcome.final_state, s.bounds()).unwrap());
        }
    }

    #[test]
    fn runs_are_deterministic_and_modes_agree(kind in kind(), n in 1usize..8, seed in 0u64..500) {
        let s = generate_scenario(kind, n, seed).unwrap();
        let global = LearningParams { tau: 0.05, seed, max_steps: 2000, mode: Mode::Global };
        let local = LearningParams { mode: Mode::Local, ..global };
        let a = run(&s, &global).unwrap();
        let b = run(&s, &global).unwrap();
        prop_assert_eq!(&a, &b);
        let c = run(&s, &local).unwrap();
        prop_assert_eq!(&a.records, &c.records);
    }

    #[test]
    fn scenario_files_round_trip(kind in kind(), n in 1usize..20, seed in 0u64..10_000) {
        let s = generate_scenario(kind, n, seed).unwrap();
        let text = s.to_json_string();
        let back = Scenario::from_json_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn generated_targets_are_offset(kind in kind(), n in 1usize..20, seed in 0u64..10_000) {
        let s = generate_scenario(kind, n, seed).unwrap();
        let min_initial = s.initial().positions().iter().map(|c| c.x()).min().unwrap();
        let min_target = s.target().cells().iter().map(|c| c.x()).min().unwrap();
        prop_assert_eq!(min_target - min_initial, 10);
        prop_assert!(s.bounds().bottom_layer_capacity() >= n);
    }
}
