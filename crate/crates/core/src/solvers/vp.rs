//! Exponential-integrator samplers for clean-data predictors under a VP
//! schedule. Grids live on the sampling axis and are mapped to VP time by the
//! scheduler's [`VpTimeMap`](crate::schedules::VpTimeMap).

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::fields::{ensure_finite, Trajectory, VelocityField};
use crate::schedules::{NoiseSchedule, Scheduler, SchedulerKind, VpTimeMap};

use super::rf::check_grid;
use super::schedule::SolverSchedule;

fn vp_parts(scheduler: &Scheduler) -> Result<(&NoiseSchedule, &VpTimeMap)> {
    match scheduler {
        Scheduler::Vp { noise, map } => Ok((noise, map)),
        Scheduler::RectifiedFlow => Err(Error::KindMismatch {
            expected: SchedulerKind::VpLinear,
            found: SchedulerKind::RectifiedFlow,
        }),
    }
}

fn sigma_omega_grid<S: Scalar>(noise: &NoiseSchedule, map: &VpTimeMap, grid: &[S]) -> Result<Vec<(S, S)>> {
    grid.iter()
        .map(|&s| {
            let (sigma, omega) = map.sigma_omega(noise, s);
            if !(sigma.value() > 0.0) || !omega.value().is_finite() {
                return Err(Error::Singularity(format!(
                    "sigma vanishes at sampling time {}; keep the last step short of the data end",
                    s.value()
                )));
            }
            Ok((sigma, omega))
        })
        .collect()
}

/// Unrolled searched VP update on generic scalars:
/// `x_{i+1} = (σ_{i+1}/σ_i)·x_i + σ_{i+1}·(ω_{i+1} − ω_i)·Σ_{j≤i} M[i][j]·x̄_j`.
pub(crate) fn rollout_vp<S: Scalar>(
    field: &VelocityField,
    noise: &NoiseSchedule,
    map: &VpTimeMap,
    x0: Vec<S>,
    times: &[S],
    matrix: &[Vec<S>],
) -> Result<(Vec<Vec<S>>, Vec<Vec<S>>)> {
    let n = matrix.len();
    let dim = x0.len();
    let so = sigma_omega_grid(noise, map, times)?;
    let mut states = Vec::with_capacity(n + 1);
    let mut evals: Vec<Vec<S>> = Vec::with_capacity(n);
    states.push(x0);
    for i in 0..n {
        let x = &states[i];
        evals.push(field.eval(x, map.vp_time(times[i]))?);
        let (sigma, omega) = so[i];
        let (sigma_next, omega_next) = so[i + 1];
        let ratio = sigma_next / sigma;
        let gain = sigma_next * (omega_next - omega);
        let row = &matrix[i];
        let next: Vec<S> = (0..dim)
            .map(|d| {
                let mut xbar = evals[0][d] * row[0];
                for j in 1..=i {
                    xbar = xbar + evals[j][d] * row[j];
                }
                ratio * x[d] + gain * xbar
            })
            .collect();
        if next.iter().any(|v| !v.value().is_finite()) {
            return Err(Error::Diverged { step: i, t: times[i].value() });
        }
        states.push(next);
    }
    Ok((states, evals))
}

/// Searched multistep sampler for VP clean-data predictors.
pub fn multistep_vp_sample(
    field: &VelocityField,
    x0: &[f64],
    schedule: &SolverSchedule,
    scheduler: &Scheduler,
) -> Result<Trajectory> {
    if schedule.kind() != SchedulerKind::VpLinear {
        return Err(Error::KindMismatch {
            expected: SchedulerKind::VpLinear,
            found: schedule.kind(),
        });
    }
    let (noise, map) = vp_parts(scheduler)?;
    field.check_compatible(scheduler, x0.len())?;
    let (states, evals) = rollout_vp(field, noise, map, x0.to_vec(), schedule.times(), schedule.matrix())?;
    Ok(Trajectory {
        times: schedule.times().to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}

/// First-order exponential integrator (DDIM-style) on an arbitrary grid.
pub fn exponential_euler_sample(
    field: &VelocityField,
    x0: &[f64],
    grid: &[f64],
    scheduler: &Scheduler,
) -> Result<Trajectory> {
    dpm_impl(field, x0, grid, scheduler, false)
}

/// DPM-Solver++(2M): second-order multistep in half-log-SNR. The first step is
/// first-order, and so is the last when the grid has fewer than 15 steps (the
/// final log-SNR jump is large and extrapolating into it is unstable).
pub fn dpm_solver_pp_2m_sample(
    field: &VelocityField,
    x0: &[f64],
    grid: &[f64],
    scheduler: &Scheduler,
) -> Result<Trajectory> {
    dpm_impl(field, x0, grid, scheduler, true)
}

fn dpm_impl(
    field: &VelocityField,
    x0: &[f64],
    grid: &[f64],
    scheduler: &Scheduler,
    second_order: bool,
) -> Result<Trajectory> {
    check_grid(grid)?;
    let (noise, map) = vp_parts(scheduler)?;
    field.check_compatible(scheduler, x0.len())?;
    let so = sigma_omega_grid(noise, map, grid)?;
    let lambdas: Vec<f64> = so.iter().map(|(_, w)| w.ln()).collect();
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let steps = grid.len() - 1;
    let mut evals: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for i in 0..steps {
        let lower_final = i + 1 == steps && steps < 15;
        let xbar = field.eval(&x, map.vp_time(grid[i]))?;
        let (sigma, omega) = so[i];
        let (sigma_next, omega_next) = so[i + 1];
        let ratio = sigma_next / sigma;
        // σ_{i+1}(ω_{i+1} − ω_i) = −α_{i+1}(e^{−h} − 1)
        let gain = sigma_next * (omega_next - omega);
        let d: Vec<f64> = match evals.last() {
            Some(prev) if second_order && !lower_final => {
                let h = lambdas[i + 1] - lambdas[i];
                let h_prev = lambdas[i] - lambdas[i - 1];
                let half_inv_r = 0.5 * h / h_prev;
                xbar.iter()
                    .zip(prev)
                    .map(|(a, b)| (1.0 + half_inv_r) * a - half_inv_r * b)
                    .collect()
            }
            _ => xbar.clone(),
        };
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi = ratio * *xi + gain * di;
        }
        ensure_finite(&x, i, grid[i])?;
        states.push(x.clone());
        evals.push(xbar);
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::vp_gaussian_fixture;
    use crate::solvers::{uniform_grid, OrderCap};

    fn marginal(noise: &NoiseSchedule, map: &VpTimeMap, mu: &[f64], eps: &[f64], s: f64) -> Vec<f64> {
        let (a, sg) = noise.alpha_sigma(map.vp_time(s)).unwrap();
        mu.iter().zip(eps).map(|(m, e)| a * m + sg * e).collect()
    }

    #[test]
    fn constant_prediction_transports_marginals() {
        let sched = Scheduler::dit();
        let Scheduler::Vp { noise, map } = sched else { unreachable!() };
        let mu = [0.8, -1.3];
        let eps = [0.4, 1.1];
        let field = VelocityField::Constant(mu.to_vec());
        let s = SolverSchedule::build(
            vec![0.2, -0.4, 0.9, 0.1, 0.3],
            vec![vec![], vec![-1.2], vec![0.7, -1.5], vec![0.0, 0.3, -0.9], vec![0.1, 0.0, -0.2, -0.6]],
            SchedulerKind::VpLinear,
            OrderCap::none(),
        )
        .unwrap();
        let x0 = marginal(&noise, &map, &mu, &eps, 0.0);
        let tr = multistep_vp_sample(&field, &x0, &s, &sched).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let want = marginal(&noise, &map, &mu, &eps, *t);
            for (a, b) in x.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "t={t}: {a} vs {b}");
            }
        }
        for solver in [exponential_euler_sample, dpm_solver_pp_2m_sample] {
            let grid = uniform_grid(7);
            let tr = solver(&field, &x0, &grid, &sched).unwrap();
            let want = marginal(&noise, &map, &mu, &eps, 1.0);
            for (a, b) in tr.endpoint().iter().zip(&want) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_matrix_is_exponential_euler() {
        let sched = Scheduler::dit();
        let field = vp_gaussian_fixture();
        let s = SolverSchedule::euler(6, SchedulerKind::VpLinear, OrderCap::none()).unwrap();
        let a = multistep_vp_sample(&field, &[0.3, 0.9], &s, &sched).unwrap();
        let b = exponential_euler_sample(&field, &[0.3, 0.9], s.times(), &sched).unwrap();
        for (p, q) in a.states.iter().zip(&b.states) {
            for (u, v) in p.iter().zip(q) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn single_interval_dpm_is_first_order() {
        let sched = Scheduler::dit();
        let field = vp_gaussian_fixture();
        let a = dpm_solver_pp_2m_sample(&field, &[0.3, 0.9], &[0.0, 1.0], &sched).unwrap();
        let b = exponential_euler_sample(&field, &[0.3, 0.9], &[0.0, 1.0], &sched).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn dpm_beats_ddim_at_equal_steps() {
        let sched = Scheduler::dit();
        let field = vp_gaussian_fixture();
        let x0 = [0.3, 0.9];
        let truth = crate::fields::oracle_endpoint(&field, &sched, &x0, 100_000).unwrap();
        let grid = uniform_grid(10);
        let err = |tr: Trajectory| {
            tr.endpoint().iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let e1 = err(exponential_euler_sample(&field, &x0, &grid, &sched).unwrap());
        let e2 = err(dpm_solver_pp_2m_sample(&field, &x0, &grid, &sched).unwrap());
        assert!(e2 < e1, "{e2} vs {e1}");
    }

    #[test]
    fn singular_endpoint_rejected() {
        let noise = NoiseSchedule::dit();
        let sched = Scheduler::Vp {
            noise,
            map: VpTimeMap::new(1e-300).unwrap(),
        };
        let err = exponential_euler_sample(&vp_gaussian_fixture(), &[0.0, 0.0], &[0.0, 1.0], &sched).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)), "{err:?}");
    }

    #[test]
    fn rf_scheduler_rejected() {
        let err = dpm_solver_pp_2m_sample(&VelocityField::Constant(vec![0.0]), &[0.0], &[0.0, 1.0], &Scheduler::RectifiedFlow)
            .unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }
}
