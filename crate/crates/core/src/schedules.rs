//! Noise-scheduler math for rectified flow and continuous variance-preserving
//! diffusion with a linear β(t), plus fitted timestep-respacing polynomials.
//!
//! Two time axes are in play:
//!
//! * **Sampling axis** `s ∈ [0, 1]`, `s = 0` is pure noise and `s = 1` is data.
//!   Rectified flow lives on it directly (`x_s = s·x₀ + (1 − s)·ε`). Solver
//!   schedules always describe steps on this axis.
//! * **VP time** `t ∈ [0, 1]`, `t = 0` is clean data (`α = 1, σ = 0`) and
//!   `t = 1` is the noisy end. [`VpTimeMap`] converts between the two and keeps
//!   sampling away from the `σ = 0` singularity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum SchedulerKind {
    #[serde(rename = "rf")]
    RectifiedFlow,
    #[serde(rename = "vp")]
    VpLinear,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::RectifiedFlow => "rf",
            SchedulerKind::VpLinear => "vp",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(SchedulerKind::RectifiedFlow),
            "vp" => Ok(SchedulerKind::VpLinear),
            other => Err(Error::invalid("scheduler", format!("unknown kind {other:?}"))),
        }
    }
}

/// β range of the DiT-style linear schedule.
pub const DIT_BETA_MIN: f64 = 0.1;
pub const DIT_BETA_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    kind: SchedulerKind,
    beta_min: f64,
    beta_max: f64,
}

impl NoiseSchedule {
    pub fn rectified_flow() -> Self {
        Self {
            kind: SchedulerKind::RectifiedFlow,
            beta_min: 0.0,
            beta_max: 0.0,
        }
    }

    pub fn vp_linear(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min.is_finite() && beta_max.is_finite()) || beta_min <= 0.0 || beta_max <= beta_min {
            return Err(Error::invalid(
                "noise schedule",
                format!("need 0 < beta_min < beta_max, got {beta_min}, {beta_max}"),
            ));
        }
        Ok(Self {
            kind: SchedulerKind::VpLinear,
            beta_min,
            beta_max,
        })
    }

    pub fn dit() -> Self {
        Self::vp_linear(DIT_BETA_MIN, DIT_BETA_MAX).expect("valid constants")
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    fn require_vp(&self) -> Result<()> {
        if self.kind != SchedulerKind::VpLinear {
            return Err(Error::KindMismatch {
                expected: SchedulerKind::VpLinear,
                found: self.kind,
            });
        }
        Ok(())
    }

    /// ∫₀ᵗ β(u) du for linear β, in closed form.
    pub fn integrated_beta<S: Scalar>(&self, t: S) -> S {
        t * self.beta_min + t * t * (0.5 * (self.beta_max - self.beta_min))
    }

    /// `(α(t), σ(t))` without domain checks; usable on a tape.
    pub fn alpha_sigma_unchecked<S: Scalar>(&self, t: S) -> (S, S) {
        let b = self.integrated_beta(t);
        let alpha = (b * -0.5).exp();
        let sigma = (-(-b).exp_m1()).sqrt();
        (alpha, sigma)
    }

    /// `(α(t), σ(t))` on the VP time axis.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.require_vp()?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain { t });
        }
        Ok(self.alpha_sigma_unchecked(t))
    }

    /// ω(t) = α(t)/σ(t).
    pub fn omega(&self, t: f64) -> Result<f64> {
        let (alpha, sigma) = self.alpha_sigma(t)?;
        if sigma == 0.0 {
            return Err(Error::Singularity(format!("omega at t = {t}: sigma is zero")));
        }
        Ok(alpha / sigma)
    }

    /// Half log-SNR λ(t) = ln(α/σ).
    pub fn lambda(&self, t: f64) -> Result<f64> {
        Ok(self.omega(t)?.ln())
    }

    /// Linear β(t).
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }
}

/// Default distance of the last VP sampling time from the clean endpoint.
pub const DEFAULT_T_MIN: f64 = 1e-4;

/// Monotone map from the sampling axis onto VP time:
/// `t(s) = 1 − s·(1 − t_min)`, so `s = 0 ↦ t = 1` (noise) and
/// `s = 1 ↦ t = t_min` (just short of the data endpoint, where σ > 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpTimeMap {
    t_min: f64,
}

impl Default for VpTimeMap {
    fn default() -> Self {
        Self { t_min: DEFAULT_T_MIN }
    }
}

impl VpTimeMap {
    pub fn new(t_min: f64) -> Result<Self> {
        if !(t_min > 0.0 && t_min < 1.0) {
            return Err(Error::invalid("t_min", format!("{t_min} not in (0, 1)")));
        }
        Ok(Self { t_min })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn vp_time<S: Scalar>(&self, s: S) -> S {
        (s * (1.0 - self.t_min)).rsub(1.0)
    }

    /// σ and ω at sampling-axis position `s`.
    pub fn sigma_omega<S: Scalar>(&self, sched: &NoiseSchedule, s: S) -> (S, S) {
        let (alpha, sigma) = sched.alpha_sigma_unchecked(self.vp_time(s));
        (sigma, alpha / sigma)
    }
}

/// The ODE family a sampler integrates, with what it needs to map
/// sampling-axis positions to model inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheduler {
    RectifiedFlow,
    Vp { noise: NoiseSchedule, map: VpTimeMap },
}

impl Scheduler {
    pub fn vp(noise: NoiseSchedule) -> Result<Self> {
        noise.require_vp()?;
        Ok(Scheduler::Vp {
            noise,
            map: VpTimeMap::default(),
        })
    }

    pub fn dit() -> Self {
        Scheduler::Vp {
            noise: NoiseSchedule::dit(),
            map: VpTimeMap::default(),
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::RectifiedFlow => SchedulerKind::RectifiedFlow,
            Scheduler::Vp { .. } => SchedulerKind::VpLinear,
        }
    }

    /// Time argument handed to the model at sampling position `s`.
    pub fn model_time<S: Scalar>(&self, s: S) -> S {
        match self {
            Scheduler::RectifiedFlow => s,
            Scheduler::Vp { map, .. } => map.vp_time(s),
        }
    }
}

/// Degree-4 polynomial through the origin, `c4 t⁴ + c3 t³ + c2 t² + c1 t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RespacePolynomial {
    /// `[c4, c3, c2, c1]`
    pub coefficients: [f64; 4],
}

impl RespacePolynomial {
    /// Fitted to searched rectified-flow timesteps.
    pub const REFLOW: RespacePolynomial = RespacePolynomial {
        coefficients: [-1.96, 3.51, -0.97, 0.43],
    };
    /// Fitted to searched DDPM/VP timesteps.
    pub const DDPM: RespacePolynomial = RespacePolynomial {
        coefficients: [-2.73, 6.30, -4.744, 2.17],
    };

    pub fn eval(&self, t: f64) -> f64 {
        let [c4, c3, c2, c1] = self.coefficients;
        (((c4 * t + c3) * t + c2) * t + c1) * t
    }

    /// `nfe + 1` respaced times at uniform arguments `i / nfe`, clamped to
    /// `[0, 1]` and made nondecreasing with a running maximum.
    pub fn grid(&self, nfe: usize) -> Vec<f64> {
        assert!(nfe >= 1, "nfe must be at least 1");
        let mut out = Vec::with_capacity(nfe + 1);
        let mut hi = 0.0f64;
        for i in 0..=nfe {
            let v = self.eval(i as f64 / nfe as f64).clamp(0.0, 1.0);
            hi = hi.max(v);
            out.push(hi);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RespaceFamily {
    Reflow,
    Ddpm,
}

impl RespaceFamily {
    pub fn polynomial(self) -> RespacePolynomial {
        match self {
            RespaceFamily::Reflow => RespacePolynomial::REFLOW,
            RespaceFamily::Ddpm => RespacePolynomial::DDPM,
        }
    }
}

impl FromStr for RespaceFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflow" => Ok(RespaceFamily::Reflow),
            "ddpm" => Ok(RespaceFamily::Ddpm),
            other => Err(Error::invalid("respace family", format!("unknown {other:?}"))),
        }
    }
}
