use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use cubeconf::harness::{oracle_target, parse_bounds};
use cubeconf::oracle::{enumerate_states, exact_transition_matrix, stationary_distribution, DEFAULT_STATE_CAP};
use cubeconf::{generate_scenario, plan, restricted_action_set, Engine, LearningParams, Mode, ScenarioKind};

fn action_sets(c: &mut Criterion) {
    let s = generate_scenario(ScenarioKind::ThreeToThree, 20, 1).unwrap();
    c.bench_function("restricted_action_set/3d_n20_all_agents", |b| {
        b.iter(|| {
            for agent in 0..s.agents() {
                black_box(restricted_action_set(agent, s.initial(), s.bounds()).unwrap());
            }
        })
    });
}

fn engine_steps(c: &mut Criterion) {
    for kind in [ScenarioKind::TwoToTwo, ScenarioKind::ThreeToThree] {
        let s = generate_scenario(kind, 20, 2).unwrap();
        let params = LearningParams { tau: 0.1, seed: 2, max_steps: u64::MAX, mode: Mode::Global };
        c.bench_function(&format!("engine/{}_n20_1000_ticks", kind.label()), |b| {
            b.iter_batched(
                || Engine::new(&s, params).unwrap(),
                |mut e| {
                    for _ in 0..1000 {
                        black_box(e.tick().unwrap());
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
}

fn planning(c: &mut Criterion) {
    for kind in [ScenarioKind::TwoToTwo, ScenarioKind::ThreeToThree] {
        let s = generate_scenario(kind, 15, 3).unwrap();
        c.bench_function(&format!("plan/{}_n15", kind.label()), |b| {
            b.iter(|| black_box(plan(s.initial(), s.target(), s.bounds()).unwrap()))
        });
    }
}

fn oracle(c: &mut Criterion) {
    let bounds = parse_bounds("3x3").unwrap();
    let target = oracle_target(2, &bounds).unwrap();
    let space = enumerate_states(2, &bounds, DEFAULT_STATE_CAP).unwrap();
    c.bench_function("oracle/matrix_2@3x3", |b| {
        b.iter(|| black_box(exact_transition_matrix(&space, &target, &bounds, 0.5).unwrap()))
    });
    let m = exact_transition_matrix(&space, &target, &bounds, 0.5).unwrap();
    c.bench_function("oracle/stationary_2@3x3", |b| b.iter(|| black_box(stationary_distribution(&m).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = action_sets, engine_steps, planning, oracle
}
criterion_main!(benches);
