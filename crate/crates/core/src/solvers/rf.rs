//! Samplers for velocity fields on the rectified-flow axis.

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::fields::{ensure_finite, Trajectory, VelocityField};
use crate::schedules::{Scheduler, SchedulerKind};

use super::schedule::SolverSchedule;

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid", "need at least two times"));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid", "times must be finite and strictly increasing"));
    }
    Ok(())
}

fn check_rf(field: &VelocityField, dim: usize) -> Result<()> {
    field.check_compatible(&Scheduler::RectifiedFlow, dim)
}

/// `n + 1` evenly spaced times on `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Forward Euler: `x_{i+1} = x_i + (t_{i+1} − t_i)·v(x_i, t_i)`.
pub fn euler_sample(field: &VelocityField, x0: &[f64], grid: &[f64]) -> Result<Trajectory> {
    check_grid(grid)?;
    check_rf(field, x0.len())?;
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut evals = Vec::with_capacity(grid.len() - 1);
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        let v = field.eval(&x, grid[i])?;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += h * vi;
        }
        ensure_finite(&x, i, grid[i])?;
        states.push(x.clone());
        evals.push(v);
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}

/// Heun's predictor-corrector (explicit trapezoid); two evaluations per step.
pub fn heun_sample(field: &VelocityField, x0: &[f64], grid: &[f64]) -> Result<Trajectory> {
    check_grid(grid)?;
    check_rf(field, x0.len())?;
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut evals = Vec::with_capacity(2 * (grid.len() - 1));
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        let k1 = field.eval(&x, grid[i])?;
        let pred: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + h * b).collect();
        let k2 = field.eval(&pred, grid[i + 1])?;
        for ((xi, a), b) in x.iter_mut().zip(&k1).zip(&k2) {
            *xi += 0.5 * h * (a + b);
        }
        ensure_finite(&x, i, grid[i])?;
        states.push(x.clone());
        evals.push(k1);
        evals.push(k2);
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}

// Gauss-Legendre on [0, 1], exact for polynomials up to degree 5.
const GL3_NODES: [f64; 3] = [
    0.112_701_665_379_258_31,
    0.5,
    0.887_298_334_620_741_7,
];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Adams–Bashforth weights for step `i` using the nodes `grid[i+1-k..=i]`:
/// `w_j = (1/h)·∫_{t_i}^{t_{i+1}} L_j(t) dt` over the Lagrange basis of those
/// nodes. Requested orders beyond the available history are reduced to
/// `i + 1`. Returned weights are ordered oldest first.
pub fn adams_weights(grid: &[f64], i: usize, order: usize) -> Vec<f64> {
    assert!(order >= 1 && i + 1 < grid.len());
    let k = order.min(i + 1);
    let h = grid[i + 1] - grid[i];
    // scaled nodes: u = (t - t_i) / h, so the step covers u ∈ [0, 1]
    let nodes: Vec<f64> = (i + 1 - k..=i).map(|m| (grid[m] - grid[i]) / h).collect();
    (0..k)
        .map(|j| {
            GL3_NODES
                .iter()
                .zip(GL3_WEIGHTS)
                .map(|(&u, w)| {
                    let basis: f64 = (0..k)
                        .filter(|&m| m != j)
                        .map(|m| (u - nodes[m]) / (nodes[j] - nodes[m]))
                        .product();
                    w * basis
                })
                .sum()
        })
        .collect()
}

/// Adams–Bashforth of order `order` on an arbitrary increasing grid, one
/// evaluation per step. The first `order − 1` steps run at the highest order
/// the available history supports.
pub fn adams_bashforth_sample(
    field: &VelocityField,
    x0: &[f64],
    grid: &[f64],
    order: usize,
) -> Result<Trajectory> {
    check_grid(grid)?;
    check_rf(field, x0.len())?;
    if order == 0 {
        return Err(Error::invalid("order", "must be at least 1"));
    }
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut evals: Vec<Vec<f64>> = Vec::with_capacity(grid.len() - 1);
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        evals.push(field.eval(&x, grid[i])?);
        let w = adams_weights(grid, i, order);
        let first = i + 1 - w.len();
        for (d, xi) in x.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (wj, v) in w.iter().zip(&evals[first..]) {
                acc += wj * v[d];
            }
            *xi += h * acc;
        }
        ensure_finite(&x, i, grid[i])?;
        states.push(x.clone());
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}

/// Unrolled multistep update on generic scalars. Returns all states and the
/// cached evaluations.
pub(crate) fn rollout_rf<S: Scalar>(
    field: &VelocityField,
    x0: Vec<S>,
    times: &[S],
    matrix: &[Vec<S>],
) -> Result<(Vec<Vec<S>>, Vec<Vec<S>>)> {
    let n = matrix.len();
    let dim = x0.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut evals: Vec<Vec<S>> = Vec::with_capacity(n);
    states.push(x0);
    for i in 0..n {
        let x = &states[i];
        let t = times[i];
        evals.push(field.eval(x, t)?);
        let h = times[i + 1] - t;
        let row = &matrix[i];
        let next: Vec<S> = (0..dim)
            .map(|d| {
                let mut vbar = evals[0][d] * row[0];
                for j in 1..=i {
                    vbar = vbar + evals[j][d] * row[j];
                }
                x[d] + vbar * h
            })
            .collect();
        if next.iter().any(|v| !v.value().is_finite()) {
            return Err(Error::Diverged { step: i, t: t.value() });
        }
        states.push(next);
    }
    Ok((states, evals))
}

/// Searched multistep sampler for rectified flow:
/// `x_{i+1} = x_i + (t_{i+1} − t_i)·Σ_{j≤i} M[i][j]·v_j`.
pub fn multistep_rf_sample(
    field: &VelocityField,
    x0: &[f64],
    schedule: &SolverSchedule,
) -> Result<Trajectory> {
    if schedule.kind() != SchedulerKind::RectifiedFlow {
        return Err(Error::KindMismatch {
            expected: SchedulerKind::RectifiedFlow,
            found: schedule.kind(),
        });
    }
    check_rf(field, x0.len())?;
    let (states, evals) = rollout_rf(field, x0.to_vec(), schedule.times(), schedule.matrix())?;
    Ok(Trajectory {
        times: schedule.times().to_vec(),
        states,
        nfe: evals.len(),
        evals,
    })
}
