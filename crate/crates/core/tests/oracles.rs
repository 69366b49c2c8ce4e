//! Oracles and samplers against closed-form Gaussian flow maps.

use solver_forge::fields::{oracle_endpoint, oracle_trajectory, vp_gaussian_fixture};
use solver_forge::rng::{normal_batch, Domain, SeedStream};
use solver_forge::search::run_search;
use solver_forge::search::SearchConfig;
use solver_forge::solvers::sample_schedule;
use solver_forge::{NoiseSchedule, Scheduler, VelocityField};

const MEAN: [f64; 2] = [1.0, -0.5];
const SCALE: f64 = 0.5;

/// Exact rectified-flow map for N(μ, s²I) data:
/// `x(t) = t·μ + √(t²s² + (1 − t)²)·x(0)`.
fn rf_exact(x0: &[f64], t: f64) -> Vec<f64> {
    let k = (t * t * SCALE * SCALE + (1.0 - t) * (1.0 - t)).sqrt();
    x0.iter().zip(MEAN).map(|(x, m)| t * m + k * x).collect()
}

/// Exact VP probability-flow map between two VP times for Gaussian data.
fn vp_exact(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    let noise = NoiseSchedule::dit();
    let (a0, s0) = noise.alpha_sigma(from).unwrap();
    let (a1, s1) = noise.alpha_sigma(to).unwrap();
    let k0 = (a0 * a0 * SCALE * SCALE + s0 * s0).sqrt();
    let k1 = (a1 * a1 * SCALE * SCALE + s1 * s1).sqrt();
    x.iter()
        .zip(MEAN)
        .map(|(v, m)| a1 * m + k1 * (v - a0 * m) / k0)
        .collect()
}

fn gaussian() -> VelocityField {
    VelocityField::Gaussian {
        mean: MEAN.to_vec(),
        scale: SCALE,
    }
}

fn starts(n: usize) -> Vec<Vec<f64>> {
    normal_batch(&mut SeedStream::new(17).stream(Domain::Fixture, 0), n, 2)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[test]
fn rf_oracle_matches_closed_form_flow() {
    for x0 in starts(8) {
        let end = oracle_endpoint(&gaussian(), &Scheduler::RectifiedFlow, &x0, 100_000).unwrap();
        // first-order oracle: error is about 2·h at h = 1e-5
        assert!(max_diff(&end, &rf_exact(&x0, 1.0)) < 1e-4);
        let tr = oracle_trajectory(&gaussian(), &Scheduler::RectifiedFlow, &x0, 1_000).unwrap();
        assert_eq!(tr.states.len(), 1_001);
        for (t, x) in tr.times.iter().zip(&tr.states).step_by(100) {
            assert!(max_diff(x, &rf_exact(&x0, *t)) < 5e-3);
        }
    }
}

#[test]
fn vp_oracle_matches_closed_form_flow() {
    let scheduler = Scheduler::dit();
    let t_min = match scheduler {
        Scheduler::Vp { map, .. } => map.t_min(),
        _ => unreachable!(),
    };
    for x0 in starts(8) {
        let end = oracle_endpoint(&vp_gaussian_fixture(), &scheduler, &x0, 100_000).unwrap();
        assert!(max_diff(&end, &vp_exact(&x0, 1.0, t_min)) < 1e-4);
    }
}

#[test]
fn oracle_halving_converges_monotonically() {
    let x0 = &starts(1)[0];
    let exact = rf_exact(x0, 1.0);
    let errs: Vec<f64> = [50, 100, 200, 400, 800]
        .iter()
        .map(|&n| max_diff(&oracle_endpoint(&gaussian(), &Scheduler::RectifiedFlow, x0, n).unwrap(), &exact))
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn searched_schedule_approaches_exact_gaussian_flow() {
    let cfg = SearchConfig {
        nfe: 5,
        batch: 128,
        iterations: 100,
        ..SearchConfig::default()
    };
    let searched = run_search(&gaussian(), &Scheduler::RectifiedFlow, 2, &cfg).unwrap();
    let x0s = normal_batch(&mut SeedStream::new(3).stream(Domain::Evaluation, 0), 64, 2);
    let err = |sched: &solver_forge::SolverSchedule| {
        x0s.iter()
            .map(|x| {
                let end = sample_schedule(&gaussian(), &Scheduler::RectifiedFlow, x, sched).unwrap();
                max_diff(end.endpoint(), &rf_exact(x, 1.0))
            })
            .fold(0.0, f64::max)
    };
    let euler = solver_forge::SolverSchedule::euler(5, solver_forge::SchedulerKind::RectifiedFlow, Default::default())
        .unwrap();
    assert!(err(&searched.schedule) < err(&euler));
}
