//! Searchable solver parameters: unbounded step logits `raw_r` and the
//! strictly-lower coefficients `raw_c`, from which the step sizes and the
//! lower-triangular combination matrix are derived.

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::schedules::SchedulerKind;

/// Per-row limit on how many previous evaluations a row of the coefficient
/// matrix may combine with the current one. Row `i` with cap `k` keeps
/// columns `j` with `i − j ≤ k`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OrderCap {
    rows: Vec<Option<usize>>,
}

impl OrderCap {
    pub fn none() -> Self {
        Self::default()
    }

    /// The same cap on every row of an `nfe`-step schedule.
    pub fn uniform(nfe: usize, cap: usize) -> Self {
        Self { rows: vec![Some(cap); nfe] }
    }

    /// Cap only the last `tail` rows, leaving earlier rows free.
    pub fn tail(nfe: usize, tail: usize, cap: usize) -> Self {
        let tail = tail.min(nfe);
        let mut rows = vec![None; nfe];
        for r in rows.iter_mut().skip(nfe - tail) {
            *r = Some(cap);
        }
        Self { rows }
    }

    pub fn per_row(rows: Vec<Option<usize>>) -> Self {
        Self { rows }
    }

    pub fn is_none(&self) -> bool {
        self.rows.iter().all(Option::is_none)
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn row_cap(&self, i: usize) -> Option<usize> {
        self.rows.get(i).copied().flatten()
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        debug_assert!(j < i);
        self.row_cap(i).is_none_or(|k| i - j <= k)
    }
}

/// Derived quantities of a schedule, generic so the search can differentiate
/// through them.
#[derive(Debug, Clone)]
pub struct Derived<S> {
    /// Step sizes, positive, summing to one.
    pub deltas: Vec<S>,
    /// `N + 1` times with `t₀ = 0`, `t_N = 1`.
    pub times: Vec<S>,
    /// Row `i` holds `M[i][0..=i]`.
    pub matrix: Vec<Vec<S>>,
}

pub(crate) fn softmax<S: Scalar>(raw: &[S]) -> Vec<S> {
    let top = raw.iter().map(|r| r.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<S> = raw.iter().map(|&r| (r - top).exp()).collect();
    let mut total = e[0];
    for v in &e[1..] {
        total = total + *v;
    }
    e.into_iter().map(|v| v / total).collect()
}

/// Diagonal closest to `fl(1 − partial)` for which `partial + diag` rounds to
/// exactly one. Some partials admit none (the exact sum would need a bit finer
/// than the diagonal's ulp); then the candidate with the smallest error wins.
fn exact_diagonal(partial: f64) -> f64 {
    let base = 1.0 - partial;
    let err = |d: f64| (partial + d - 1.0).abs();
    let mut best = base;
    let (mut up, mut down) = (base, base);
    for _ in 0..8 {
        if err(best) == 0.0 {
            break;
        }
        up = up.next_up();
        down = down.next_down();
        for cand in [up, down] {
            if err(cand) < err(best) {
                best = cand;
            }
        }
    }
    best
}

pub(crate) fn cumulative_times<S: Scalar>(deltas: &[S]) -> Vec<S> {
    let n = deltas.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut t = deltas[0].lift(0.0);
    times.push(t);
    for d in &deltas[..n - 1] {
        t = t + *d;
        times.push(t);
    }
    times.push(deltas[0].lift(1.0));
    times
}

/// Coefficient matrix from strictly-lower entries, masked by `cap`, with the
/// diagonal chosen so each row sums to exactly one in floating point.
pub(crate) fn coefficient_matrix<S: Scalar>(raw_c: &[Vec<S>], cap: &OrderCap, zero: S) -> Vec<Vec<S>> {
    raw_c
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut out: Vec<S> = row
                .iter()
                .enumerate()
                .map(|(j, &c)| if cap.allows(i, j) { c } else { zero.lift(0.0) })
                .collect();
            let partial = out.iter().fold(zero.lift(0.0), |acc, &c| acc + c);
            let base = partial.rsub(1.0);
            let target = exact_diagonal(partial.value());
            let diag = if target == base.value() {
                base
            } else {
                base + (target - base.value())
            };
            out.push(diag);
            out
        })
        .collect()
}

pub(crate) fn derive_from_raw<S: Scalar>(raw_r: &[S], raw_c: &[Vec<S>], cap: &OrderCap) -> Derived<S> {
    let deltas = softmax(raw_r);
    let times = cumulative_times(&deltas);
    let matrix = coefficient_matrix(raw_c, cap, raw_r[0]);
    Derived { deltas, times, matrix }
}

/// Time steps and coefficient matrix defining one multistep sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSchedule {
    kind: SchedulerKind,
    raw_r: Vec<f64>,
    raw_c: Vec<Vec<f64>>,
    cap: OrderCap,
    deltas: Vec<f64>,
    times: Vec<f64>,
    matrix: Vec<Vec<f64>>,
}

fn validate_shapes(n: usize, raw_c: &[Vec<f64>], cap: &OrderCap) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("schedule", "nfe must be at least 1"));
    }
    if raw_c.len() != n {
        return Err(Error::invalid(
            "coeffs",
            format!("expected {n} rows, found {}", raw_c.len()),
        ));
    }
    for (i, row) in raw_c.iter().enumerate() {
        if row.len() != i {
            return Err(Error::invalid(
                format!("coeffs row {i}"),
                format!("expected {i} entries, found {}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("coeffs[{i}][{j}]"), "not finite"));
        }
    }
    if !cap.rows().is_empty() && cap.rows().len() != n {
        return Err(Error::invalid("max_order", "one entry per row required"));
    }
    if cap.rows().contains(&Some(0)) {
        return Err(Error::invalid("max_order", "caps must be at least 1"));
    }
    Ok(())
}

impl SolverSchedule {
    /// Schedule from searchable parameters: `deltas = softmax(raw_r)`,
    /// strictly-lower `M` from `raw_c` (masked by `cap`).
    pub fn build(
        raw_r: Vec<f64>,
        raw_c: Vec<Vec<f64>>,
        kind: SchedulerKind,
        cap: OrderCap,
    ) -> Result<Self> {
        validate_shapes(raw_r.len(), &raw_c, &cap)?;
        if let Some(i) = raw_r.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("raw_r[{i}]"), "not finite"));
        }
        let raw_c = mask(raw_c, &cap);
        let d = derive_from_raw(&raw_r, &raw_c, &cap);
        let s = Self {
            kind,
            raw_r,
            raw_c,
            cap,
            deltas: d.deltas,
            times: d.times,
            matrix: d.matrix,
        };
        s.check_times()?;
        Ok(s)
    }

    /// Schedule from explicit step sizes, which are kept verbatim; `raw_r`
    /// becomes `ln(deltas)`.
    pub fn from_deltas(
        deltas: Vec<f64>,
        coeffs: Vec<Vec<f64>>,
        kind: SchedulerKind,
        cap: OrderCap,
    ) -> Result<Self> {
        validate_shapes(deltas.len(), &coeffs, &cap)?;
        if let Some(i) = deltas.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("deltas[{i}]"), "must be positive and finite"));
        }
        let sum: f64 = deltas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("deltas", format!("sum to {sum}, expected 1")));
        }
        let coeffs = mask(coeffs, &cap);
        let times = cumulative_times(&deltas);
        let matrix = coefficient_matrix(&coeffs, &cap, 0.0);
        let s = Self {
            kind,
            raw_r: deltas.iter().map(|d| d.ln()).collect(),
            raw_c: coeffs,
            cap,
            deltas,
            times,
            matrix,
        };
        s.check_times()?;
        Ok(s)
    }

    /// Search initialization: `raw_r = 1`, `raw_c = 0`, i.e. uniform Euler.
    pub fn euler(nfe: usize, kind: SchedulerKind, cap: OrderCap) -> Result<Self> {
        Self::build(vec![1.0; nfe], (0..nfe).map(|i| vec![0.0; i]).collect(), kind, cap)
    }

    fn check_times(&self) -> Result<()> {
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("schedule", "times not strictly increasing"));
        }
        Ok(())
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn nfe(&self) -> usize {
        self.deltas.len()
    }

    pub fn raw_r(&self) -> &[f64] {
        &self.raw_r
    }

    /// Strictly-lower coefficients, row `i` has `i` entries.
    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.raw_c
    }

    pub fn cap(&self) -> &OrderCap {
        &self.cap
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Row `i` holds `M[i][0..=i]`.
    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// `max_i |Σ_j M[i][j] − 1|`, summed left to right.
    pub fn max_row_sum_error(&self) -> f64 {
        self.matrix
            .iter()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_i Σ_j |M[i][j]|·Δt_i`, the velocity-error amplification of this
    /// schedule.
    pub fn error_amplification(&self) -> f64 {
        self.matrix
            .iter()
            .zip(&self.deltas)
            .map(|(row, d)| row.iter().map(|m| m.abs()).sum::<f64>() * d)
            .sum()
    }

    /// True when every strictly-lower coefficient is zero.
    pub fn is_euler(&self) -> bool {
        self.raw_c.iter().flatten().all(|&c| c == 0.0)
    }
}

fn mask(mut raw_c: Vec<Vec<f64>>, cap: &OrderCap) -> Vec<Vec<f64>> {
    for (i, row) in raw_c.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            if !cap.allows(i, j) {
                *c = 0.0;
            }
        }
    }
    raw_c
}
