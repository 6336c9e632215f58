//! Explicit polynomial envelopes for the frictional energy
//!
//! ```text
//! [c·α·q·t + E₀^{-q}]^{-1/q} ≤ E(t) ≤ [q/J(E₀)·(t−1)⁺ + E₀^{-q}]^{-1/q}
//! ```
//!
//! with `c = 2^{q+1}` (or `2^{2q+1}` for the looser ordering statement), the
//! constant pipeline `K(s)`, `J(s)`, and the discrete difference-inequality
//! machinery behind the upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergyTrace, ModelParams};
use crate::operators::DiscreteOperators;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LowerCoeffVariant {
    /// `2^{q+1}`
    #[default]
    Theorem,
    /// `2^{2q+1}`
    Remark,
}

impl LowerCoeffVariant {
    pub fn coefficient(self, q: f64) -> f64 {
        match self {
            LowerCoeffVariant::Theorem => 2f64.powf(q + 1.0),
            LowerCoeffVariant::Remark => 2f64.powf(2.0 * q + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub e0: f64,
    pub alpha: f64,
    pub q: f64,
    pub kappa: f64,
    pub d: f64,
    pub c_prime: f64,
    pub k_of_e0: f64,
    pub j_of_e0: f64,
    pub lower_coeff_variant: LowerCoeffVariant,
}

/// `K(s) = (64d²+1)/α^{1/(q+1)} + 2^{q+1}·d²·α^{(2q+1)/(q+1)}·s^{2q}`
pub fn k_function(s: f64, alpha: f64, q: f64, d: f64) -> f64 {
    let d2 = d * d;
    (64.0 * d2 + 1.0) / alpha.powf(1.0 / (q + 1.0))
        + 2f64.powf(q + 1.0) * d2 * alpha.powf((2.0 * q + 1.0) / (q + 1.0)) * s.powf(2.0 * q)
}

/// `J(s) = (4/3)^{q+1}·[(2s)^{q/(q+1)} + 2K(s)]^{q+1}`
pub fn j_function(s: f64, alpha: f64, q: f64, d: f64) -> f64 {
    let inner = (2.0 * s).powf(q / (q + 1.0)) + 2.0 * k_function(s, alpha, q, d);
    (4.0 / 3.0f64).powf(q + 1.0) * inner.powf(q + 1.0)
}

impl EnvelopeConstants {
    /// Builds the constants from explicit embedding constants. `d = 0` is
    /// accepted so the d-free part of `K` can be inspected.
    pub fn new(
        e0: f64,
        alpha: f64,
        q: f64,
        kappa: f64,
        d: f64,
        c_prime: f64,
        lower_coeff_variant: LowerCoeffVariant,
    ) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::ZeroDamping);
        }
        if !(e0 > 0.0 && e0.is_finite()) {
            return Err(Error::NonPositiveInitialEnergy(e0));
        }
        if !(q > 0.0) {
            return Err(Error::InvalidParam { field: "q", reason: format!("must be positive, got {q}") });
        }
        Ok(Self {
            e0,
            alpha,
            q,
            kappa,
            d,
            c_prime,
            k_of_e0: k_function(e0, alpha, q, d),
            j_of_e0: j_function(e0, alpha, q, d),
            lower_coeff_variant,
        })
    }

    pub fn with_variant(self, lower_coeff_variant: LowerCoeffVariant) -> Self {
        Self { lower_coeff_variant, ..self }
    }

    /// Limit of `t^{1/q}·lower(t)` as `t → ∞`.
    pub fn lower_asymptotic_constant(&self) -> f64 {
        (self.lower_coeff_variant.coefficient(self.q) * self.alpha * self.q).powf(-1.0 / self.q)
    }

    /// Limit of `t^{1/q}·upper(t)` as `t → ∞`.
    pub fn upper_asymptotic_constant(&self) -> f64 {
        (self.q / self.j_of_e0).powf(-1.0 / self.q)
    }
}

/// Constants for initial energy `e0` using the discrete embedding constants of `ops`.
pub fn envelope_constants(
    e0: f64,
    p: &ModelParams,
    ops: &DiscreteOperators,
    variant: LowerCoeffVariant,
) -> Result<EnvelopeConstants> {
    if p.alpha <= 0.0 {
        return Err(Error::ZeroDamping);
    }
    let emb = ops.embedding_constants()?;
    EnvelopeConstants::new(e0, p.alpha, p.q, p.kappa, emb.d, emb.c_prime, variant)
}

pub fn lower_envelope(t: f64, ec: &EnvelopeConstants) -> f64 {
    let c = ec.lower_coeff_variant.coefficient(ec.q);
    (c * ec.alpha * ec.q * t + ec.e0.powf(-ec.q)).powf(-1.0 / ec.q)
}

pub fn upper_envelope(t: f64, ec: &EnvelopeConstants) -> f64 {
    decay_bound(ec.e0, ec.j_of_e0, ec.q, t)
}

/// `[(q/c0)(t−1)⁺ + φ₀^{-q}]^{-1/q}`
fn decay_bound(phi0: f64, c0: f64, q: f64, t: f64) -> f64 {
    let tp = (t - 1.0).max(0.0);
    if tp == 0.0 {
        return phi0;
    }
    ((q / c0) * tp + phi0.powf(-q)).powf(-1.0 / q)
}

/// A sequence `φ(0), φ(1), …` on unit windows with the constant `C₀` of the
/// difference inequality `sup_{[n,n+1]} φ^{q+1} ≤ C₀(φ(n) − φ(n+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NakaoInput {
    pub phi: Vec<f64>,
    pub c0: f64,
    pub q: f64,
}

impl NakaoInput {
    pub fn new(phi: Vec<f64>, c0: f64, q: f64) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::EmptySequence);
        }
        if phi.iter().any(|&x| !(x >= 0.0)) || phi.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParam {
                field: "phi",
                reason: "must be non-negative and non-increasing".into(),
            });
        }
        if !(c0 > 0.0 && q > 0.0) {
            return Err(Error::InvalidParam { field: "c0/q", reason: "must be positive".into() });
        }
        Ok(Self { phi, c0, q })
    }

    /// Worst ratio `φ(n)^{q+1} / (C₀(φ(n) − φ(n+1)))` over consecutive pairs;
    /// `∞` for a window with no decrease but positive values.
    pub fn hypothesis_ratio(&self) -> f64 {
        self.phi
            .windows(2)
            .map(|w| window_ratio(w[0].max(w[1]).powf(self.q + 1.0), self.c0, w[0] - w[1]))
            .fold(0.0, f64::max)
    }
}

fn window_ratio(sup_pow: f64, c0: f64, diff: f64) -> f64 {
    if sup_pow == 0.0 {
        0.0
    } else if diff <= 0.0 {
        f64::INFINITY
    } else {
        sup_pow / (c0 * diff)
    }
}

/// Closed-form decay bound produced by the difference inequality.
pub fn nakao_bound(inp: &NakaoInput, t: f64) -> Result<f64> {
    let phi0 = *inp.phi.first().ok_or(Error::EmptySequence)?;
    if phi0 == 0.0 {
        return Ok(0.0);
    }
    Ok(decay_bound(phi0, inp.c0, inp.q, t))
}

pub const NAKAO_DEFAULT_TOL: f64 = 0.05;
const MIN_SAMPLES_PER_UNIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NakaoWindow {
    pub t: f64,
    pub sup_pow: f64,
    pub diff: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NakaoReport {
    pub windows: Vec<NakaoWindow>,
    pub worst_ratio: f64,
    pub worst_t: f64,
    /// Window starts where the energy did not decrease although it is positive.
    pub degenerate: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let idx = times.partition_point(|&s| s < t);
    if idx == 0 {
        return values[0];
    }
    if idx >= times.len() {
        return *values.last().unwrap();
    }
    let (t0, t1) = (times[idx - 1], times[idx]);
    if t1 == t {
        return values[idx];
    }
    let w = (t - t0) / (t1 - t0);
    values[idx - 1] * (1.0 - w) + values[idx] * w
}

/// Checks `sup_{[t,t+1]} E^{q+1} ≤ J(E₀)(E(t) − E(t+1))` on every unit window
/// starting at the first sample. The window sup is the max over samples.
pub fn verify_nakao_hypothesis(trace: &EnergyTrace, ec: &EnvelopeConstants, tol: f64) -> Result<NakaoReport> {
    let times = trace.times();
    let energies = trace.energies();
    let (Some(&t_first), Some(&t_last)) = (times.first(), times.last()) else {
        return Err(Error::TooShort { span: 0.0, needed: 2.0 });
    };
    let span = t_last - t_first;
    if span < 2.0 {
        return Err(Error::TooShort { span, needed: 2.0 });
    }
    let density = (times.len() - 1) as f64 / span;
    if density < MIN_SAMPLES_PER_UNIT * (1.0 - 1e-9) {
        return Err(Error::TooSparse { density, needed: MIN_SAMPLES_PER_UNIT });
    }
    let qp1 = ec.q + 1.0;
    let mut windows = Vec::new();
    let mut degenerate = Vec::new();
    let slack = 1e-9;
    let mut k = 0usize;
    loop {
        let t = t_first + k as f64;
        if t + 1.0 > t_last + slack {
            break;
        }
        let e_lo = interpolate(&times, &energies, t);
        let e_hi = interpolate(&times, &energies, t + 1.0);
        let lo = times.partition_point(|&s| s < t - slack);
        let hi = times.partition_point(|&s| s <= t + 1.0 + slack);
        let sup = energies[lo..hi].iter().copied().fold(e_lo.max(e_hi), f64::max);
        let sup_pow = sup.powf(qp1);
        let diff = e_lo - e_hi;
        let ratio = window_ratio(sup_pow, ec.j_of_e0, diff);
        if ratio.is_infinite() {
            degenerate.push(t);
        }
        windows.push(NakaoWindow { t, sup_pow, diff, ratio });
        k += 1;
    }
    let (worst_t, worst_ratio) = windows
        .iter()
        .map(|w| (w.t, w.ratio))
        .fold((t_first, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(NakaoReport {
        pass: worst_ratio <= 1.0 + tol,
        windows,
        worst_ratio,
        worst_t,
        degenerate,
        tol,
    })
}
