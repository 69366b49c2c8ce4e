//! Analytic model outputs with closed forms.
//!
//! Rectified-flow fields return the velocity `E[x₀ − ε | x_t]` for
//! `x_t = t·x₀ + (1 − t)·ε`; VP fields return the clean-data prediction
//! `x̄ = E[x₀ | x_t]` for `x_t = α_t·x₀ + σ_t·ε`. All evaluation is generic
//! over [`Scalar`], so the same code runs on `f64` and on a differentiation
//! tape, which supplies the Jacobians used by the schedule search.

use rand::Rng;

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::rng::{self, Domain, SeedStream};
use crate::schedules::{NoiseSchedule, Scheduler, SchedulerKind};

/// Weighted isotropic Gaussian mixture for the data distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || scales.len() != k {
            return Err(Error::invalid("mixture", "component counts differ or are zero"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixture", "weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture", format!("weights sum to {total}")));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("mixture", "means must share a nonzero dimension"));
        }
        if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("mixture", "scales must be positive"));
        }
        Ok(Self { weights, means, scales })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Draw one data sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.means[k]
            .iter()
            .map(|m| m + self.scales[k] * rng::normal(rng))
            .collect()
    }
}

/// Bounded smooth perturbation `(η/d)·tanh(h_c(x, t))` per coordinate `c`,
/// where `h_c` is a fixed sum of seeded sinusoids. Its L1 norm never exceeds η.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    eta: f64,
    dim: usize,
    // per coordinate: (amplitude, wave vector, time frequency, phase)
    terms: Vec<Vec<(f64, Vec<f64>, f64, f64)>>,
}

const PERTURBATION_TERMS: usize = 4;

impl Perturbation {
    pub fn seeded(eta: f64, dim: usize, seed: u64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) || dim == 0 {
            return Err(Error::invalid("perturbation", format!("eta {eta}, dim {dim}")));
        }
        let mut rng = SeedStream::new(seed).stream(Domain::Perturbation, 0);
        let terms = (0..dim)
            .map(|_| {
                (0..PERTURBATION_TERMS)
                    .map(|_| {
                        let amp = 0.5 + rng.random::<f64>() * 1.5;
                        let k = (0..dim).map(|_| rng::normal(&mut rng) * 1.5).collect();
                        let w = rng::normal(&mut rng) * 4.0;
                        let phase = rng.random::<f64>() * std::f64::consts::TAU;
                        (amp, k, w, phase)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { eta, dim, terms })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eval<S: Scalar>(&self, x: &[S], t: S) -> Vec<S> {
        let scale = self.eta / self.dim as f64;
        self.terms
            .iter()
            .map(|coord| {
                let mut h = t.lift(0.0);
                for (amp, k, w, phase) in coord {
                    let mut arg = t * *w + *phase;
                    for (xj, kj) in x.iter().zip(k) {
                        arg = arg + *xj * *kj;
                    }
                    h = h + arg.sin() * *amp;
                }
                h.tanh() * scale
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    /// `v(x, t) = c`.
    Constant(Vec<f64>),
    /// `v(x, t) = A·x`, `A` given row-major.
    Linear(Vec<Vec<f64>>),
    /// Rectified-flow velocity for data `N(μ, s²I)`.
    Gaussian { mean: Vec<f64>, scale: f64 },
    /// Rectified-flow velocity for mixture data.
    GaussianMixture(GaussianMixture),
    /// VP clean-data prediction for data `N(μ, s²I)`.
    VpGaussian {
        mean: Vec<f64>,
        scale: f64,
        noise: NoiseSchedule,
    },
    /// `v(x, t) = sin(2π·f·t)·x`.
    Oscillating { frequency: f64 },
    /// `v(x, t) = tᵖ` in every coordinate of `x`.
    TimePower { power: u32 },
    /// A base field plus a bounded [`Perturbation`].
    Perturbed {
        base: Box<VelocityField>,
        perturbation: Perturbation,
    },
}

impl VelocityField {
    pub fn perturbed(base: VelocityField, eta: f64, seed: u64) -> Result<Self> {
        let dim = base
            .dim()
            .ok_or_else(|| Error::invalid("perturbation", "base field has no fixed dimension"))?;
        Ok(VelocityField::Perturbed {
            base: Box::new(base),
            perturbation: Perturbation::seeded(eta, dim, seed)?,
        })
    }

    /// State dimension, if the field fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            VelocityField::Constant(c) => Some(c.len()),
            VelocityField::Linear(a) => Some(a.len()),
            VelocityField::Gaussian { mean, .. } | VelocityField::VpGaussian { mean, .. } => {
                Some(mean.len())
            }
            VelocityField::GaussianMixture(m) => Some(m.dim()),
            VelocityField::Oscillating { .. } | VelocityField::TimePower { .. } => None,
            VelocityField::Perturbed { base, .. } => base.dim(),
        }
    }

    /// The scheduler this field's output is parametrized for; `None` for
    /// fields that make sense under either.
    pub fn scheduler_hint(&self) -> Option<SchedulerKind> {
        match self {
            VelocityField::Gaussian { .. } | VelocityField::GaussianMixture(_) => {
                Some(SchedulerKind::RectifiedFlow)
            }
            VelocityField::VpGaussian { .. } => Some(SchedulerKind::VpLinear),
            VelocityField::Perturbed { base, .. } => base.scheduler_hint(),
            _ => None,
        }
    }

    pub fn check_compatible(&self, scheduler: &Scheduler, dim: usize) -> Result<()> {
        if let Some(kind) = self.scheduler_hint() {
            if kind != scheduler.kind() {
                return Err(Error::KindMismatch {
                    expected: scheduler.kind(),
                    found: kind,
                });
            }
        }
        if let VelocityField::VpGaussian { noise, .. } = self {
            if let Scheduler::Vp { noise: used, .. } = scheduler {
                if used != noise {
                    return Err(Error::invalid(
                        "field",
                        "x̄ field was built for a different β range",
                    ));
                }
            }
        }
        match self.dim() {
            Some(d) if d != dim => Err(Error::invalid(
                "state",
                format!("field dimension {d}, state dimension {dim}"),
            )),
            _ => Ok(()),
        }
    }

    /// Model output at state `x` and model time `t`.
    pub fn eval<S: Scalar>(&self, x: &[S], t: S) -> Result<Vec<S>> {
        match self {
            VelocityField::Constant(c) => Ok(c.iter().map(|&v| t.lift(v)).collect()),
            VelocityField::Linear(a) => Ok(a
                .iter()
                .map(|row| {
                    let mut acc = x[0] * row[0];
                    for (xj, aj) in x.iter().zip(row).skip(1) {
                        acc = acc + *xj * *aj;
                    }
                    acc
                })
                .collect()),
            VelocityField::Gaussian { mean, scale } => rf_gaussian(mean, *scale, x, t),
            VelocityField::GaussianMixture(m) => Ok(rf_mixture(m, x, t)),
            VelocityField::VpGaussian { mean, scale, noise } => {
                let tv = t.value();
                if !(0.0..=1.0).contains(&tv) {
                    return Err(Error::Domain { t: tv });
                }
                Ok(vp_gaussian(mean, *scale, noise, x, t))
            }
            VelocityField::Oscillating { frequency } => {
                let g = (t * (std::f64::consts::TAU * frequency)).sin();
                Ok(x.iter().map(|&xi| xi * g).collect())
            }
            VelocityField::TimePower { power } => {
                let mut p = t.lift(1.0);
                for _ in 0..*power {
                    p = p * t;
                }
                Ok(vec![p; x.len()])
            }
            VelocityField::Perturbed { base, perturbation } => {
                let v = base.eval(x, t)?;
                let d = perturbation.eval(x, t);
                Ok(v.into_iter().zip(d).map(|(a, b)| a + b).collect())
            }
        }
    }

    pub fn eval_f64(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.eval(x, t)
    }
}

/// `E[x₀ − ε | x_t = x]` for `x₀ ~ N(μ, s²I)`:
/// `μ + (t·s² − (1 − t))·(x − t·μ) / (t²s² + (1 − t)²)`.
pub fn rf_gaussian_velocity(mean: &[f64], scale: f64, x: &[f64], t: f64) -> Result<Vec<f64>> {
    rf_gaussian(mean, scale, x, t)
}

fn rf_gaussian<S: Scalar>(mean: &[f64], scale: f64, x: &[S], t: S) -> Result<Vec<S>> {
    let s2 = scale * scale;
    let one_minus = t.rsub(1.0);
    let var = t * t * s2 + one_minus * one_minus;
    if var.value() == 0.0 {
        return Err(Error::Singularity(format!(
            "gaussian velocity with zero data scale at t = {}",
            t.value()
        )));
    }
    let coeff = (t * s2 - one_minus) / var;
    Ok(x
        .iter()
        .zip(mean)
        .map(|(&xi, &mi)| (xi - t * mi) * coeff + mi)
        .collect())
}

/// Posterior-weighted combination of per-component velocities.
pub fn rf_gmm_velocity(mixture: &GaussianMixture, x: &[f64], t: f64) -> Vec<f64> {
    rf_mixture(mixture, x, t)
}

fn rf_mixture<S: Scalar>(m: &GaussianMixture, x: &[S], t: S) -> Vec<S> {
    let dim = m.dim() as f64;
    let one_minus = t.rsub(1.0);
    let mut logw = Vec::with_capacity(m.weights.len());
    let mut comps = Vec::with_capacity(m.weights.len());
    for ((w, mu), s) in m.weights.iter().zip(&m.means).zip(&m.scales) {
        let s2 = s * s;
        let var = t * t * s2 + one_minus * one_minus;
        let coeff = (t * s2 - one_minus) / var;
        let diff: Vec<S> = x.iter().zip(mu).map(|(&xi, &mi)| xi - t * mi).collect();
        let mut sq = diff[0] * diff[0];
        for d in &diff[1..] {
            sq = sq + *d * *d;
        }
        logw.push(var.ln() * (-0.5 * dim) - sq / (var * 2.0) + w.ln());
        comps.push(
            diff.iter()
                .zip(mu)
                .map(|(&d, &mi)| d * coeff + mi)
                .collect::<Vec<S>>(),
        );
    }
    // log-sum-exp; the shift is a constant, softmax is shift invariant
    let top = logw
        .iter()
        .map(|l| l.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<S> = logw.iter().map(|&l| (l - top).exp()).collect();
    let mut total = unnorm[0];
    for u in &unnorm[1..] {
        total = total + *u;
    }
    let mut out: Vec<S> = comps[0].iter().map(|&c| c * (unnorm[0] / total)).collect();
    for (comp, u) in comps.iter().zip(&unnorm).skip(1) {
        let p = *u / total;
        for (o, &c) in out.iter_mut().zip(comp) {
            *o = *o + c * p;
        }
    }
    out
}

/// `E[x₀ | x_t = x]` under the VP schedule: `μ + α·s²·(x − α·μ) / (α²s² + σ²)`.
pub fn vp_gaussian_xbar(
    mean: &[f64],
    scale: f64,
    noise: &NoiseSchedule,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain { t });
    }
    Ok(vp_gaussian(mean, scale, noise, x, t))
}

fn vp_gaussian<S: Scalar>(mean: &[f64], scale: f64, noise: &NoiseSchedule, x: &[S], t: S) -> Vec<S> {
    let s2 = scale * scale;
    let (alpha, sigma) = noise.alpha_sigma_unchecked(t);
    let gain = alpha * s2 / (alpha * alpha * s2 + sigma * sigma);
    x.iter()
        .zip(mean)
        .map(|(&xi, &mi)| (xi - alpha * mi) * gain + mi)
        .collect()
}

/// Ordered `(time, state)` pairs produced by a sampler, with the model
/// outputs it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Model outputs cached per step, in evaluation order.
    pub evals: Vec<Vec<f64>>,
    /// Number of model evaluations spent.
    pub nfe: usize,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn check(&self) -> Result<()> {
        if self.times.len() != self.states.len() || self.times.is_empty() {
            return Err(Error::invalid("trajectory", "times and states differ in length"));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("trajectory", "times not strictly increasing"));
        }
        Ok(())
    }

    /// State at time `t` by linear interpolation between recorded states.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        interpolate_states(&self.times, &self.states, t)
    }
}

/// Piecewise-linear interpolation of `states` at `t`, generic so that a taped
/// `t` carries its derivative through the segment slope.
pub(crate) fn interpolate_states<S: Scalar>(times: &[f64], states: &[Vec<f64>], t: S) -> Vec<S> {
    let tv = t.value();
    let last = times.len() - 1;
    let seg = if tv <= times[0] {
        0
    } else if tv >= times[last] {
        last.saturating_sub(1)
    } else {
        times.partition_point(|&x| x <= tv).saturating_sub(1).min(last - 1)
    };
    if last == 0 {
        return states[0].iter().map(|&v| t.lift(v)).collect();
    }
    let (t0, t1) = (times[seg], times[seg + 1]);
    let w = (t - t0) / (t1 - t0);
    states[seg]
        .iter()
        .zip(&states[seg + 1])
        .map(|(&a, &b)| w * (b - a) + a)
        .collect()
}

pub(crate) fn ensure_finite(state: &[f64], step: usize, t: f64) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { step, t })
    }
}

/// Brute-force ground truth: `steps` uniform Euler steps (rectified flow) or
/// exponential-Euler steps (VP) from `x0` over the whole sampling axis.
/// Rectified-flow states are accumulated with compensated summation so the
/// many small increments do not drift.
pub fn oracle_endpoint(
    field: &VelocityField,
    scheduler: &Scheduler,
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    Ok(oracle_run(field, scheduler, x0, steps, false)?.states.pop().expect("nonempty"))
}

/// [`oracle_endpoint`] keeping every state.
pub fn oracle_trajectory(
    field: &VelocityField,
    scheduler: &Scheduler,
    x0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    oracle_run(field, scheduler, x0, steps, true)
}

fn oracle_run(
    field: &VelocityField,
    scheduler: &Scheduler,
    x0: &[f64],
    steps: usize,
    record: bool,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("oracle", "steps must be positive"));
    }
    field.check_compatible(scheduler, x0.len())?;
    let n = steps as f64;
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut times = vec![0.0];
    match scheduler {
        Scheduler::RectifiedFlow => {
            let mut comp = vec![0.0; x.len()];
            for i in 0..steps {
                let t = i as f64 / n;
                let h = (i + 1) as f64 / n - t;
                let v = field.eval(&x, t)?;
                for ((xi, ci), vi) in x.iter_mut().zip(comp.iter_mut()).zip(&v) {
                    let y = h * vi - *ci;
                    let sum = *xi + y;
                    *ci = (sum - *xi) - y;
                    *xi = sum;
                }
                ensure_finite(&x, i, t)?;
                if record {
                    states.push(x.clone());
                    times.push((i + 1) as f64 / n);
                }
            }
        }
        Scheduler::Vp { noise, map } => {
            let (mut sigma, mut omega) = map.sigma_omega(noise, 0.0);
            for i in 0..steps {
                let s = i as f64 / n;
                let (sigma_next, omega_next) = map.sigma_omega(noise, (i + 1) as f64 / n);
                let xbar = field.eval(&x, map.vp_time(s))?;
                let ratio = sigma_next / sigma;
                let gain = sigma_next * (omega_next - omega);
                for (xi, xb) in x.iter_mut().zip(&xbar) {
                    *xi = ratio * *xi + gain * xb;
                }
                ensure_finite(&x, i, s)?;
                sigma = sigma_next;
                omega = omega_next;
                if record {
                    states.push(x.clone());
                    times.push((i + 1) as f64 / n);
                }
            }
        }
    }
    if !record {
        states = vec![x];
        times = vec![1.0];
    }
    Ok(Trajectory {
        times,
        states,
        evals: Vec::new(),
        nfe: steps,
    })
}

/// Three-component 2-D mixture used as the rectified-flow search fixture.
pub fn gmm2d_fixture() -> VelocityField {
    VelocityField::GaussianMixture(
        GaussianMixture::new(
            vec![0.3, 0.3, 0.4],
            vec![vec![-2.0, 0.5], vec![1.5, 1.8], vec![1.0, -2.0]],
            vec![0.3, 0.4, 0.5],
        )
        .expect("fixture is valid"),
    )
}

/// Gaussian clean-data predictor under the DiT β range.
pub fn vp_gaussian_fixture() -> VelocityField {
    VelocityField::VpGaussian {
        mean: vec![1.0, -0.5],
        scale: 0.5,
        noise: NoiseSchedule::dit(),
    }
}

/// A named test problem: field, the scheduler it is meant for, and the state
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: &'static str,
    pub field: VelocityField,
    pub kind: SchedulerKind,
    pub dim: usize,
}

pub const PROBLEM_NAMES: [&str; 5] = ["gmm2d", "gaussian", "vp-gaussian", "constant", "oscillating"];

/// Look up a built-in problem. `constant` and `oscillating` run under either
/// scheduler; the kind reported is their default.
pub fn named_problem(name: &str) -> Result<Problem> {
    let (name, field, kind, dim) = match name {
        "gmm2d" => ("gmm2d", gmm2d_fixture(), SchedulerKind::RectifiedFlow, 2),
        "gaussian" => (
            "gaussian",
            VelocityField::Gaussian {
                mean: vec![1.0, -0.5],
                scale: 0.5,
            },
            SchedulerKind::RectifiedFlow,
            2,
        ),
        "vp-gaussian" => ("vp-gaussian", vp_gaussian_fixture(), SchedulerKind::VpLinear, 2),
        "constant" => (
            "constant",
            VelocityField::Constant(vec![0.5, -1.5]),
            SchedulerKind::RectifiedFlow,
            2,
        ),
        "oscillating" => (
            "oscillating",
            VelocityField::Oscillating { frequency: 1.0 },
            SchedulerKind::RectifiedFlow,
            1,
        ),
        _ => {
            return Err(Error::invalid(
                "problem",
                format!("unknown problem {name:?}; known: {}", PROBLEM_NAMES.join(", ")),
            ))
        }
    };
    Ok(Problem { name, field, kind, dim })
}
