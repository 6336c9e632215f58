//! Post-processing of energy traces: decay-exponent fits, local logarithmic
//! decay rates, envelope containment and grid-convergence studies.

use serde::{Deserialize, Serialize};

use crate::envelope::{lower_envelope, upper_envelope, EnvelopeConstants};
use crate::error::{Error, Result};
use crate::integrate::{simulate_on, SimOptions};
use crate::model::{make_initial, validate_params, EnergyTrace, InitialKind, ModelParams, Scheme};
use crate::operators::{biharmonic_min_eigenvalue, stiffness_eigendecomposition, DiscreteOperators};

pub const MIN_TAIL_SAMPLES: usize = 50;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `log E = exponent·log t + intercept`
    Power,
    /// `log E = exponent·t + intercept`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub model: DecayModel,
}

/// Ordinary least squares `y = slope·x + intercept`; `r² = 1` for constant `y`.
fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n * my.abs().max(1.0).powi(2) {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Samples in the last `tail_fraction` of the trace's positive time range,
/// measured in log-time.
fn tail(trace: &EnergyTrace, tail_fraction: f64) -> Result<Vec<(f64, f64)>> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParam {
            field: "tail_fraction",
            reason: format!("must lie in (0, 1], got {tail_fraction}"),
        });
    }
    let positive: Vec<(f64, f64)> =
        trace.samples.iter().filter(|s| s.t > 0.0).map(|s| (s.t, s.energy.e_total)).collect();
    let (Some(first), Some(last)) = (positive.first(), positive.last()) else {
        return Err(Error::TooFewSamples { got: 0, needed: MIN_TAIL_SAMPLES });
    };
    let (l0, l1) = (first.0.ln(), last.0.ln());
    let t_lo = (l1 - tail_fraction * (l1 - l0)).exp() * (1.0 - 1e-12);
    let window: Vec<(f64, f64)> = positive.into_iter().filter(|&(t, _)| t >= t_lo).collect();
    if window.len() < MIN_TAIL_SAMPLES {
        return Err(Error::TooFewSamples { got: window.len(), needed: MIN_TAIL_SAMPLES });
    }
    if let Some(&(t, value)) = window.iter().find(|&&(_, e)| !(e > 0.0)) {
        return Err(Error::NonPositiveEnergy { t, value });
    }
    Ok(window)
}

/// Least-squares slope of `log E` against `log t` over the tail.
pub fn fit_power_exponent(trace: &EnergyTrace, tail_fraction: f64) -> Result<FitResult> {
    let w = tail(trace, tail_fraction)?;
    let x: Vec<f64> = w.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = w.iter().map(|p| p.1.ln()).collect();
    let (exponent, intercept, r_squared) = linear_regression(&x, &y);
    Ok(FitResult {
        exponent,
        intercept,
        r_squared,
        window: (w[0].0, w[w.len() - 1].0),
        model: DecayModel::Power,
    })
}

/// Least-squares slope of `log E` against `t` over the same tail window.
pub fn fit_exponential_rate(trace: &EnergyTrace, tail_fraction: f64) -> Result<FitResult> {
    let w = tail(trace, tail_fraction)?;
    let x: Vec<f64> = w.iter().map(|p| p.0).collect();
    let y: Vec<f64> = w.iter().map(|p| p.1.ln()).collect();
    let (exponent, intercept, r_squared) = linear_regression(&x, &y);
    Ok(FitResult {
        exponent,
        intercept,
        r_squared,
        window: (w[0].0, w[w.len() - 1].0),
        model: DecayModel::Exponential,
    })
}

/// Centered differences of `-d(log E)/dt` at the interior samples.
pub fn local_decay_rate(trace: &EnergyTrace) -> Result<Vec<(f64, f64)>> {
    if trace.len() < 3 {
        return Err(Error::TooFewSamples { got: trace.len(), needed: 3 });
    }
    if let Some(s) = trace.samples.iter().find(|s| !(s.energy.e_total > 0.0)) {
        return Err(Error::NonPositiveEnergy { t: s.t, value: s.energy.e_total });
    }
    Ok(trace
        .samples
        .windows(3)
        .map(|w| {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let rate = -(c.energy.e_total.ln() - a.energy.e_total.ln()) / (c.t - a.t);
            (b.t, rate)
        })
        .collect())
}

/// Linear interpolation in a rate sequence, clamped to its ends.
pub fn rate_at(rates: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = rates.first()?;
    let last = rates.last()?;
    if t <= first.0 {
        return Some(first.1);
    }
    if t >= last.0 {
        return Some(last.1);
    }
    let idx = rates.partition_point(|r| r.0 < t);
    let (a, b) = (rates[idx - 1], rates[idx]);
    let w = (t - a.0) / (b.0 - a.0);
    Some(a.1 * (1.0 - w) + b.1 * w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonExponentialThresholds {
    /// Required `rate(T)/rate(T/10)` upper bound.
    pub rate_ratio: f64,
    pub min_r_squared: f64,
    pub tail_fraction: f64,
}

impl Default for NonExponentialThresholds {
    fn default() -> Self {
        Self { rate_ratio: 0.5, min_r_squared: 0.995, tail_fraction: DEFAULT_TAIL_FRACTION }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonExponentialVerdict {
    pub rate_end: f64,
    pub rate_tenth: f64,
    pub power_fit: FitResult,
    pub rate_ok: bool,
    pub fit_ok: bool,
    pub non_exponential: bool,
}

/// A vanishing local decay rate plus a good power-law fit on the tail.
pub fn non_exponential_verdict(trace: &EnergyTrace, th: &NonExponentialThresholds) -> Result<NonExponentialVerdict> {
    let rates = local_decay_rate(trace)?;
    let t_end = trace.last().map(|s| s.t).unwrap_or(0.0);
    let rate_end = rate_at(&rates, t_end).unwrap_or(f64::NAN);
    let rate_tenth = rate_at(&rates, t_end / 10.0).unwrap_or(f64::NAN);
    let power_fit = fit_power_exponent(trace, th.tail_fraction)?;
    let rate_ok = rate_end <= th.rate_ratio * rate_tenth;
    let fit_ok = power_fit.r_squared >= th.min_r_squared;
    Ok(NonExponentialVerdict {
        rate_end,
        rate_tenth,
        power_fit,
        rate_ok,
        fit_ok,
        non_exponential: rate_ok && fit_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentViolation {
    pub t: f64,
    pub energy: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    /// Smallest `E/lower − 1` over the samples.
    pub min_margin_lo: f64,
    /// Smallest `upper/E − 1` over the samples.
    pub min_margin_hi: f64,
    pub tol_lo: f64,
    pub tol_hi: f64,
    pub violations: Vec<ContainmentViolation>,
    pub pass: bool,
}

pub const DEFAULT_CONTAINMENT_TOL: f64 = 0.01;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

pub fn containment_report(trace: &EnergyTrace, ec: &EnvelopeConstants, tol_lo: f64, tol_hi: f64) -> Result<ContainmentReport> {
    let p = &trace.params_snapshot;
    if !close(p.alpha, ec.alpha) {
        return Err(Error::ParamMismatch("alpha"));
    }
    if !close(p.q, ec.q) {
        return Err(Error::ParamMismatch("q"));
    }
    if !close(p.kappa, ec.kappa) {
        return Err(Error::ParamMismatch("kappa"));
    }
    if !close(trace.e0, ec.e0) {
        return Err(Error::ParamMismatch("e0"));
    }
    let mut min_lo = f64::INFINITY;
    let mut min_hi = f64::INFINITY;
    let mut violations = Vec::new();
    for s in &trace.samples {
        let e = s.energy.e_total;
        let lower = lower_envelope(s.t, ec);
        let upper = upper_envelope(s.t, ec);
        let m_lo = e / lower - 1.0;
        let m_hi = upper / e - 1.0;
        min_lo = min_lo.min(m_lo);
        min_hi = min_hi.min(m_hi);
        if !(m_lo >= -tol_lo && m_hi >= -tol_hi) {
            violations.push(ContainmentViolation { t: s.t, energy: e, lower, upper });
        }
    }
    Ok(ContainmentReport {
        min_margin_lo: min_lo,
        min_margin_hi: min_hi,
        tol_lo,
        tol_hi,
        pass: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub grids: Vec<usize>,
    pub h: Vec<f64>,
    pub values: Vec<f64>,
    /// Observed order from each consecutive triple of grids (no reference value).
    pub triple_orders: Vec<f64>,
    /// Observed order between consecutive grids against `reference`, when given.
    pub pair_orders: Option<Vec<f64>>,
    pub reference: Option<f64>,
}

impl ConvergenceReport {
    pub fn min_order(&self) -> f64 {
        let pairs = self.pair_orders.iter().flatten();
        self.triple_orders.iter().chain(pairs).copied().fold(f64::INFINITY, f64::min)
    }
}

/// Order `p` with `(h₁^p − h₂^p)/(h₂^p − h₃^p) = (v₁ − v₂)/(v₂ − v₃)`.
fn triple_order(h: [f64; 3], v: [f64; 3]) -> f64 {
    let r = (v[0] - v[1]) / (v[1] - v[2]);
    if !(r > 0.0 && r.is_finite()) {
        return f64::NAN;
    }
    let phi = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p));
    let (mut lo, mut hi) = (1e-6, 30.0);
    if r <= phi(lo) || r >= phi(hi) {
        return f64::NAN;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_grids(grids: &[usize]) -> Result<()> {
    if grids.len() < 3 {
        return Err(Error::InsufficientGrids(format!("got {} grids", grids.len())));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InsufficientGrids(format!("grids must be strictly increasing: {grids:?}")));
    }
    Ok(())
}

/// Observed orders for values computed on grids with spacings `h`.
pub fn observed_orders(grids: &[usize], h: &[f64], values: &[f64], reference: Option<f64>) -> Result<ConvergenceReport> {
    check_grids(grids)?;
    let triple_orders = (0..values.len() - 2)
        .map(|i| triple_order([h[i], h[i + 1], h[i + 2]], [values[i], values[i + 1], values[i + 2]]))
        .collect();
    let pair_orders = reference.map(|r| {
        (0..values.len() - 1)
            .map(|i| ((values[i] - r).abs() / (values[i + 1] - r).abs()).ln() / (h[i] / h[i + 1]).ln())
            .collect()
    });
    Ok(ConvergenceReport {
        grids: grids.to_vec(),
        h: h.to_vec(),
        values: values.to_vec(),
        triple_orders,
        pair_orders,
        reference,
    })
}

/// Grid convergence of `E(t_end)` for the given parameters and initial data.
pub fn convergence_study(p: &ModelParams, init_kind: &InitialKind, grids: &[usize]) -> Result<ConvergenceReport> {
    check_grids(grids)?;
    let mut h = Vec::with_capacity(grids.len());
    let mut values = Vec::with_capacity(grids.len());
    for &n in grids {
        let pn = validate_params(ModelParams { n, ..p.clone() })?;
        let mut ops = DiscreteOperators::new(pn.length, n)?;
        if pn.scheme == Scheme::ModalSplit {
            ops.stiffness_eigs = Some(stiffness_eigendecomposition(&ops, pn.kappa)?);
        }
        let init = make_initial(init_kind, &ops)?;
        let trace = simulate_on(&ops, &pn, &init, &SimOptions::from_params(&pn))?;
        h.push(ops.h());
        values.push(trace.last().map(|s| s.energy.e_total).unwrap_or(f64::NAN));
    }
    observed_orders(grids, &h, &values, None)
}

/// Grid convergence of the smallest bilaplacian eigenvalue, optionally
/// against a reference value.
pub fn eigenvalue_convergence(length: f64, grids: &[usize], reference: Option<f64>) -> Result<ConvergenceReport> {
    check_grids(grids)?;
    let mut h = Vec::new();
    let mut values = Vec::new();
    for &n in grids {
        let ops = DiscreteOperators::new(length, n)?;
        h.push(ops.h());
        values.push(biharmonic_min_eigenvalue(&ops)?);
    }
    observed_orders(grids, &h, &values, reference)
}
