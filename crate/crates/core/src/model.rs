//! Domain types shared by every other module: run parameters, the discrete
//! state, energy breakdowns, traces, and initial-data construction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::DiscreteOperators;

/// Smallest admissible nonlocal exponent without the low-q override.
pub const Q_MIN: f64 = 0.5;
/// Smallest admissible number of interior grid points.
pub const N_MIN: usize = 8;

/// Which damping mechanism multiplies the nonlocal coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `+ α 𝓔_q ∂ₜu`
    #[default]
    Frictional,
    /// `- α 𝓔_q Δ∂ₜu`
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    #[default]
    ModalSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Coefficient of `-Δu`.
    pub kappa: f64,
    /// Damping strength.
    pub alpha: f64,
    /// Nonlocal exponent.
    pub q: f64,
    pub variant: Variant,
    /// Length of the interval `(0, length)`.
    pub length: f64,
    /// Number of interior grid points.
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// Permits `q < 1/2`; such runs are exploratory and flagged in output.
    pub allow_low_q: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            alpha: 1.0,
            q: 1.0,
            variant: Variant::Frictional,
            length: 1.0,
            n: 64,
            dt: 1e-2,
            t_end: 10.0,
            sample_every: 10,
            scheme: Scheme::ModalSplit,
            seed: 0,
            allow_low_q: false,
        }
    }
}

impl ModelParams {
    /// True for runs outside the well-posedness regime (`q < 1/2`).
    pub fn is_exploratory(&self) -> bool {
        self.q < Q_MIN
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Checks every parameter invariant and hands the parameters back unchanged.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    for (field, value) in [("kappa", p.kappa), ("alpha", p.alpha)] {
        if value.is_nan() || value < 0.0 {
            return Err(Error::NegativeCoefficient { field, value });
        }
        if !value.is_finite() {
            return Err(Error::InvalidParam { field, reason: "must be finite".into() });
        }
    }
    if !p.q.is_finite() || p.q <= 0.0 {
        return Err(Error::InvalidParam { field: "q", reason: format!("must be positive, got {}", p.q) });
    }
    if p.q < Q_MIN {
        if !p.allow_low_q {
            return Err(Error::QTooSmall { q: p.q });
        }
        log::warn!("q = {} < 1/2 is outside the well-posedness regime; run is exploratory", p.q);
    }
    if !(p.length.is_finite() && p.length > 0.0) {
        return Err(Error::InvalidParam { field: "length", reason: format!("must be positive, got {}", p.length) });
    }
    if p.n < N_MIN {
        return Err(Error::BadGrid { n: p.n });
    }
    if !(p.dt.is_finite() && p.dt > 0.0) {
        return Err(Error::BadTime(format!("dt must be positive, got {}", p.dt)));
    }
    if !p.t_end.is_finite() || p.t_end < p.dt {
        return Err(Error::BadTime(format!("t_end = {} must be at least dt = {}", p.t_end, p.dt)));
    }
    if p.sample_every == 0 {
        return Err(Error::InvalidParam { field: "sample_every", reason: "must be at least 1".into() });
    }
    Ok(p)
}

/// Displacement and velocity at the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(u: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::LengthMismatch { left: u.len(), right: v.len() });
        }
        let s = Self { u, v, t };
        s.check_finite()?;
        Ok(s)
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: vec![0.0; n], v: vec![0.0; n], t: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&x| x == 0.0)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.t.is_finite() && self.u.iter().chain(&self.v).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState { t: self.t })
        }
    }
}

/// Energy of one state split into its quadratic pieces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `½(‖Δu‖² + ‖v‖² + κ‖∇u‖²)`
    pub e_total: f64,
    pub bilap_sq: f64,
    pub vel_sq: f64,
    pub grad_sq: f64,
    /// `(‖Δu‖² + ‖v‖²)^q`
    pub coeff: f64,
}

impl EnergyBreakdown {
    /// Squared phase-space norm `‖z‖²_ℋ = ‖Δu‖² + ‖v‖²`.
    pub fn phase_norm_sq(&self) -> f64 {
        self.bilap_sq + self.vel_sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub dissipation: f64,
    /// Envelope values; absent when the envelopes are undefined for the run
    /// (no damping, zero data, strong variant).
    pub lower_env: Option<f64>,
    pub upper_env: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub samples: Vec<Sample>,
    pub params_snapshot: ModelParams,
    pub e0: f64,
}

impl EnergyTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy.e_total).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Builds a trace from bare `(t, E)` pairs; the other breakdown fields are
    /// left at zero. Used for synthetic traces and re-read CSV files.
    pub fn from_energies(params: ModelParams, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let samples: Vec<Sample> = points
            .into_iter()
            .map(|(t, e)| Sample {
                t,
                energy: EnergyBreakdown { e_total: e, ..Default::default() },
                dissipation: 0.0,
                lower_env: None,
                upper_env: None,
            })
            .collect();
        let e0 = samples.first().map_or(0.0, |s| s.energy.e_total);
        Self { samples, params_snapshot: params, e0 }
    }
}

/// Initial-data descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    /// `u(x) = amp·sin²(kπx/L)`, `v = 0`.
    SinSqMode {
        #[serde(default = "default_mode")]
        k: usize,
        #[serde(default = "default_amp")]
        amp: f64,
    },
    /// k-th eigenvector of the discrete bilaplacian, scaled so `‖Δu‖ = |amp|`.
    Eigenmode {
        #[serde(default = "default_mode")]
        k: usize,
        #[serde(default = "default_amp")]
        amp: f64,
    },
    /// JSON file `{"u": [...], "v": [...]}` with one value per interior node.
    FromFile { path: PathBuf },
}

fn default_mode() -> usize {
    1
}

fn default_amp() -> f64 {
    0.1
}

impl Default for InitialKind {
    fn default() -> Self {
        InitialKind::SinSqMode { k: 1, amp: 0.1 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    u: Vec<f64>,
    v: Vec<f64>,
}

pub fn make_initial(kind: &InitialKind, ops: &DiscreteOperators) -> Result<State> {
    let n = ops.n();
    let check_mode = |k: usize| {
        if k == 0 || k > n / 4 {
            Err(Error::BadMode { k, n })
        } else {
            Ok(())
        }
    };
    match kind {
        InitialKind::SinSqMode { k, amp } => {
            check_mode(*k)?;
            if !amp.is_finite() {
                return Err(Error::InvalidParam { field: "amp", reason: "must be finite".into() });
            }
            let length = ops.length();
            let u = ops
                .nodes()
                .map(|x| {
                    let s = (*k as f64 * PI * x / length).sin();
                    amp * s * s
                })
                .collect();
            Ok(State { u, v: vec![0.0; n], t: 0.0 })
        }
        InitialKind::Eigenmode { k, amp } => {
            check_mode(*k)?;
            if !amp.is_finite() {
                return Err(Error::InvalidParam { field: "amp", reason: "must be finite".into() });
            }
            let eig = ops.bilap_eigendecomposition()?;
            let mut u = eig.vector(k - 1);
            // sign convention: positive mean
            if u.iter().sum::<f64>() < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            let norm = ops.bilap_norm_sq(&u).sqrt();
            u.iter_mut().for_each(|x| *x *= amp / norm);
            Ok(State { u, v: vec![0.0; n], t: 0.0 })
        }
        InitialKind::FromFile { path } => read_state_file(path, n),
    }
}

fn read_state_file(path: &Path, n: usize) -> Result<State> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: StateFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    if file.u.len() != n || file.v.len() != n {
        return Err(Error::FileMismatch {
            path: path.to_path_buf(),
            reason: format!("expected {n} values, got u: {}, v: {}", file.u.len(), file.v.len()),
        });
    }
    State::new(file.u, file.v, 0.0).map_err(|_| Error::FileMismatch {
        path: path.to_path_buf(),
        reason: "non-finite entries".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_params() -> ModelParams {
        ModelParams { kappa: 1.0, alpha: 1.0, q: 0.5, n: 64, dt: 1e-3, t_end: 10.0, ..Default::default() }
    }

    #[test]
    fn valid_params_pass_through() {
        let p = ok_params();
        assert_eq!(validate_params(p.clone()).unwrap(), p);
    }

    #[test]
    fn low_q_needs_override() {
        let p = ModelParams { q: 0.4, ..ok_params() };
        assert!(matches!(validate_params(p.clone()), Err(Error::QTooSmall { .. })));
        let p = ModelParams { allow_low_q: true, ..p };
        let v = validate_params(p).unwrap();
        assert!(v.is_exploratory());
    }

    #[test]
    fn negative_alpha_rejected() {
        let p = ModelParams { alpha: -1.0, ..ok_params() };
        assert!(matches!(
            validate_params(p),
            Err(Error::NegativeCoefficient { field: "alpha", .. })
        ));
        let p = ModelParams { kappa: -0.1, ..ok_params() };
        assert!(matches!(
            validate_params(p),
            Err(Error::NegativeCoefficient { field: "kappa", .. })
        ));
    }

    #[test]
    fn grid_and_time_errors() {
        let p = ModelParams { n: 7, ..ok_params() };
        assert!(matches!(validate_params(p), Err(Error::BadGrid { n: 7 })));
        let p = ModelParams { dt: 0.0, ..ok_params() };
        assert!(matches!(validate_params(p), Err(Error::BadTime(_))));
        let p = ModelParams { t_end: 1e-4, ..ok_params() };
        assert!(matches!(validate_params(p), Err(Error::BadTime(_))));
    }

    #[test]
    fn state_rejects_nan_and_mismatch() {
        assert!(matches!(State::new(vec![0.0; 3], vec![0.0; 2], 0.0), Err(Error::LengthMismatch { .. })));
        assert!(matches!(
            State::new(vec![f64::NAN, 0.0], vec![0.0; 2], 0.0),
            Err(Error::NonFiniteState { .. })
        ));
    }
}
