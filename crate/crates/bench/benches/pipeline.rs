//! Hot-path timings: imagination rollouts at the three step counts (the
//! latency table the shortcut design exists for), the reward oracle, and
//! full candidate scoring through the reward model.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use dreamlane_core::env::{generate_scene, rollout_dynamics, simulate_rewards, Difficulty, Scene};
use dreamlane_core::geom::{Pose, Trajectory};
use dreamlane_core::nn::ParamStore;
use dreamlane_core::rewardmodel::{score_trajectory, RewardModel, RmConfig};
use dreamlane_core::rng::SeededRng;
use dreamlane_core::worldmodel::{WmConfig, WorldModelNet};

struct Rig {
    store: ParamStore,
    wm: WorldModelNet,
    rm: RewardModel,
    scene: Scene,
    history: Vec<Vec<f64>>,
    traj: Trajectory,
}

fn rig() -> Rig {
    let mut rng = SeededRng::new(11, 0);
    let mut store = ParamStore::new();
    let wm = WorldModelNet::new(&mut store, &mut rng, WmConfig::default()).unwrap();
    let rm = RewardModel::new(&mut store, &mut rng, RmConfig::default()).unwrap();
    let scene = generate_scene(&mut rng, Difficulty::Mixed);
    let speed = 0.6 * scene.speed_limit;
    let history = wm.observation_history(&store, &scene, speed);
    let controls = [(speed, 0.05); 8];
    let traj = rollout_dynamics(&Pose::ORIGIN, &controls).unwrap();
    Rig {
        store,
        wm,
        rm,
        scene,
        history,
        traj,
    }
}

fn bench_imagine_rollout(c: &mut Criterion) {
    let r = rig();
    let mut group = c.benchmark_group("imagine_rollout");
    for steps in [1usize, 4, 16] {
        group.bench_function(format!("steps_{steps}"), |b| {
            b.iter_batched(
                || SeededRng::new(99, steps as u64),
                |mut rng| {
                    r.wm.imagine_rollout(&r.store, &r.history, &r.traj, steps, &mut rng)
                        .unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let r = rig();
    c.bench_function("oracle/simulate_rewards", |b| {
        b.iter(|| simulate_rewards(black_box(&r.scene), black_box(&r.traj)))
    });
}

fn bench_scoring(c: &mut Criterion) {
    let r = rig();
    c.bench_function("scoring/score_trajectory_1step", |b| {
        b.iter_batched(
            || SeededRng::new(7, 3),
            |mut rng| {
                score_trajectory(&r.wm, &r.rm, &r.store, &r.history, &r.traj, 1, &mut rng)
                    .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_imagine_rollout, bench_oracle, bench_scoring);
criterion_main!(benches);
