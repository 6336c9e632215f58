//! Time stepping and energy-trace recording.
//!
//! `ModalSplit` is a Strang splitting: half a damping step with `u` frozen,
//! an exact rotation of every stiffness mode, and another damping half-step.
//! The damping subsystem is solved by the implicit midpoint rule, which for
//! a frozen displacement reduces to one scalar equation for the midpoint
//! value of the nonlocal coefficient.
//!
//! `Rk4` is the classical explicit scheme applied to the full right-hand
//! side. Each macro step of length `dt` is split into `m` equal RK4 steps,
//! with `m` chosen from a spectral-radius bound so that `m` stays inside the
//! RK4 stability interval.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, coefficient_from_norm_sq};
use crate::envelope::{self, EnvelopeConstants, LowerCoeffVariant};
use crate::error::{Error, Result};
use crate::model::{validate_params, EnergyTrace, ModelParams, Sample, Scheme, State, Variant};
use crate::operators::{stiffness_eigendecomposition, DiscreteOperators, EigenData};

/// Largest `ρ·Δt` accepted for one RK4 substep (the stability interval on the
/// imaginary axis ends at 2√2).
const RK4_STABLE_RADIUS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub substep_tol: f64,
    pub max_substep_iters: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        Self { scheme, dt, substep_tol: 1e-12, max_substep_iters: 50 }
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::new(p.scheme, p.dt)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::BadTime(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.substep_tol > 0.0) || self.max_substep_iters == 0 {
            return Err(Error::InvalidParam {
                field: "substep_tol",
                reason: "tolerance and iteration cap must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Precomputed data for repeated steps on one grid.
#[derive(Debug)]
pub struct Stepper<'a> {
    ops: &'a DiscreteOperators,
    params: ModelParams,
    cfg: SchemeConfig,
    /// Stiffness eigenbasis; only the modal scheme needs it.
    stiff: Option<Cow<'a, EigenData>>,
    rotation: Vec<(f64, f64, f64)>,
    neg_lap_modes: Option<EigenData>,
    stiffness_radius: f64,
    neg_lap_radius: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a DiscreteOperators, p: &ModelParams, cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let stiff = match (cfg.scheme, &ops.stiffness_eigs) {
            (Scheme::Rk4, _) => None,
            (Scheme::ModalSplit, Some(e)) => Some(Cow::Borrowed(e)),
            (Scheme::ModalSplit, None) => Some(Cow::Owned(stiffness_eigendecomposition(ops, p.kappa)?)),
        };
        let rotation = stiff
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|&lambda| {
                let omega = lambda.max(0.0).sqrt();
                let (s, c) = (omega * cfg.dt).sin_cos();
                (omega, c, s)
            })
            .collect();
        let neg_lap_modes = (p.variant == Variant::Strong && cfg.scheme == Scheme::ModalSplit)
            .then(|| ops.neg_lap_modes());
        Ok(Self {
            ops,
            params: p.clone(),
            cfg,
            stiff,
            rotation,
            neg_lap_modes,
            stiffness_radius: ops.stiffness(p.kappa).gershgorin_radius(),
            neg_lap_radius: ops.lap().gershgorin_radius(),
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn step(&self, s: &State) -> Result<State> {
        s.check_finite()?;
        if s.len() != self.ops.n() {
            return Err(Error::LengthMismatch { left: s.len(), right: self.ops.n() });
        }
        let out = match self.cfg.scheme {
            Scheme::ModalSplit => self.modal_split_step(s)?,
            Scheme::Rk4 => self.rk4_step(s)?,
        };
        out.check_finite()?;
        Ok(out)
    }

    /// Number of RK4 substeps used for a macro step starting from `s`.
    pub fn rk4_substeps(&self, s: &State) -> usize {
        let p = &self.params;
        let coeff = dynamics::nonlocal_coefficient(s, self.ops, p.q);
        let damp_radius = match p.variant {
            Variant::Frictional => 1.0,
            Variant::Strong => self.neg_lap_radius,
        };
        let rho = self.stiffness_radius.sqrt() + p.alpha * coeff * (2.0 * p.q + 1.0) * damp_radius;
        ((self.cfg.dt * rho / RK4_STABLE_RADIUS).ceil() as usize).max(1)
    }

    fn rk4_step(&self, s: &State) -> Result<State> {
        let m = self.rk4_substeps(s);
        let h = self.cfg.dt / m as f64;
        let mut cur = s.clone();
        for _ in 0..m {
            cur = rk4_single(&cur, self.ops, &self.params, h)?;
        }
        cur.t = s.t + self.cfg.dt;
        Ok(cur)
    }

    fn modal_split_step(&self, s: &State) -> Result<State> {
        let half = 0.5 * self.cfg.dt;
        let mut u = s.u.clone();
        let mut v = s.v.clone();
        self.damping_substep(&u, &mut v, half)?;
        self.linear_substep(&mut u, &mut v);
        self.damping_substep(&u, &mut v, half)?;
        Ok(State { u, v, t: s.t + self.cfg.dt })
    }

    /// Exact flow of `u'' = -S u` over one full step.
    fn linear_substep(&self, u: &mut [f64], v: &mut [f64]) {
        let stiff = self.stiff.as_ref().expect("modal scheme carries its eigenbasis");
        let n = u.len();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        stiff.to_modal(u, &mut a);
        stiff.to_modal(v, &mut b);
        for (k, &(omega, c, sn)) in self.rotation.iter().enumerate() {
            let (ak, bk) = (a[k], b[k]);
            a[k] = ak * c + bk * sn / omega;
            b[k] = -ak * omega * sn + bk * c;
        }
        stiff.from_modal(&a, u);
        stiff.from_modal(&b, v);
    }

    /// Implicit midpoint step of `v' = -α·coeff(u, v)·A v` with `u` frozen,
    /// `A = I` (frictional) or `A = -Δ` (strong).
    fn damping_substep(&self, u: &[f64], v: &mut [f64], tau: f64) -> Result<()> {
        let p = &self.params;
        if p.alpha == 0.0 || v.iter().all(|&x| x == 0.0) {
            return Ok(());
        }
        let frozen = self.ops.bilap_norm_sq(u);
        match (&self.neg_lap_modes, p.variant) {
            (Some(modes), Variant::Strong) => {
                let mut c = vec![0.0; v.len()];
                modes.to_modal(v, &mut c);
                let weights: Vec<f64> = c.iter().map(|x| x * x).collect();
                let factors = self.solve_damping(frozen, &weights, &modes.values, tau)?;
                c.iter_mut().zip(&factors).for_each(|(ck, f)| *ck *= f);
                modes.from_modal(&c, v);
            }
            _ => {
                let w = self.ops.l2_norm_sq(v);
                let f = self.solve_damping(frozen, &[w], &[1.0], tau)?[0];
                v.iter_mut().for_each(|x| *x *= f);
            }
        }
        Ok(())
    }

    /// Solves `c = (P + Σ wₖ/(1+θₖ)²)^q`, `θₖ = τ·α·c·μₖ/2`, for the midpoint
    /// coefficient `c`, and returns the per-mode amplification `(1−θₖ)/(1+θₖ)`.
    ///
    /// `c − g(c)` is strictly increasing, so the root is unique and bracketed by
    /// `[0, g(0)]`; the fixed-point equation is solved by Newton's method with
    /// a bisection fallback.
    fn solve_damping(&self, frozen: f64, weights: &[f64], rates: &[f64], tau: f64) -> Result<Vec<f64>> {
        let p = &self.params;
        let beta = 0.5 * tau * p.alpha;
        let g = |c: f64| -> (f64, f64) {
            let mut sum = 0.0;
            let mut dsum = 0.0;
            for (&w, &mu) in weights.iter().zip(rates) {
                let inv = 1.0 / (1.0 + beta * mu * c);
                sum += w * inv * inv;
                dsum += -2.0 * w * inv * inv * inv * beta * mu;
            }
            let base = frozen + sum;
            let val = coefficient_from_norm_sq(base, p.q);
            let dval = if base > 0.0 { p.q * base.powf(p.q - 1.0) * dsum } else { 0.0 };
            (val, dval)
        };
        let (mut hi, _) = g(0.0);
        let mut lo = 0.0;
        let mut c = hi;
        let mut converged = hi == 0.0;
        for _ in 0..self.cfg.max_substep_iters {
            if converged {
                break;
            }
            let (gc, dg) = g(c);
            let f = c - gc;
            if f > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            let mut next = c - f / (1.0 - dg);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            converged = (next - c).abs() <= self.cfg.substep_tol * next.abs().max(f64::MIN_POSITIVE);
            c = next;
        }
        if !converged || !c.is_finite() {
            return Err(Error::SubstepDiverged { iters: self.cfg.max_substep_iters });
        }
        Ok(rates
            .iter()
            .map(|&mu| {
                let theta = beta * mu * c;
                (1.0 - theta) / (1.0 + theta)
            })
            .collect())
    }
}

fn rk4_single(s: &State, ops: &DiscreteOperators, p: &ModelParams, h: f64) -> Result<State> {
    let axpy = |base: &State, k: &dynamics::RhsOutput, a: f64| State {
        u: base.u.iter().zip(&k.du).map(|(x, d)| x + a * d).collect(),
        v: base.v.iter().zip(&k.dv).map(|(x, d)| x + a * d).collect(),
        t: base.t,
    };
    let k1 = dynamics::rhs(s, ops, p)?;
    let k2 = dynamics::rhs(&axpy(s, &k1, 0.5 * h), ops, p)?;
    let k3 = dynamics::rhs(&axpy(s, &k2, 0.5 * h), ops, p)?;
    let k4 = dynamics::rhs(&axpy(s, &k3, h), ops, p)?;
    let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])).collect()
    };
    Ok(State {
        u: comb(&s.u, &k1.du, &k2.du, &k3.du, &k4.du),
        v: comb(&s.v, &k1.dv, &k2.dv, &k3.dv, &k4.dv),
        t: s.t + h,
    })
}

/// One step of the configured scheme. Builds the stepper each call; use
/// [`Stepper`] directly for loops.
pub fn step(s: &State, ops: &DiscreteOperators, p: &ModelParams, cfg: &SchemeConfig) -> Result<State> {
    Stepper::new(ops, p, *cfg)?.step(s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every k-th step, plus the final step.
    Every(usize),
    /// Approximately `per_decade` samples per decade of time, plus t = 0 and the final step.
    LogSpaced { per_decade: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub sampling: Sampling,
    pub envelope_variant: LowerCoeffVariant,
}

impl SimOptions {
    pub fn from_params(p: &ModelParams) -> Self {
        Self { sampling: Sampling::Every(p.sample_every), envelope_variant: LowerCoeffVariant::Theorem }
    }
}

/// Step indices at which a run with `n_steps` steps is sampled.
pub fn sample_steps(sampling: &Sampling, n_steps: usize, dt: f64) -> Vec<usize> {
    let mut steps = match sampling {
        Sampling::Every(k) => (0..=n_steps).step_by((*k).max(1)).collect::<Vec<_>>(),
        Sampling::LogSpaced { per_decade } => {
            let pd = (*per_decade).max(1) as f64;
            let t_end = n_steps as f64 * dt;
            let j0 = (pd * dt.log10()).floor() as i64;
            let j1 = (pd * t_end.log10()).ceil() as i64;
            let mut v = vec![0usize];
            for j in j0..=j1 {
                let t = 10f64.powf(j as f64 / pd);
                let k = (t / dt).round() as usize;
                if k >= 1 && k <= n_steps {
                    v.push(k);
                }
            }
            v
        }
    };
    steps.push(n_steps);
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Runs `init` to `t_end`. Envelopes are attached for the frictional variant
/// with `alpha > 0` and non-zero data.
pub fn simulate(p: &ModelParams, init: &State) -> Result<EnergyTrace> {
    simulate_with(p, init, &SimOptions::from_params(p))
}

pub fn simulate_with(p: &ModelParams, init: &State, opts: &SimOptions) -> Result<EnergyTrace> {
    let p = validate_params(p.clone())?;
    let mut ops = DiscreteOperators::new(p.length, p.n)?;
    if p.scheme == Scheme::ModalSplit {
        ops.stiffness_eigs = Some(stiffness_eigendecomposition(&ops, p.kappa)?);
    }
    simulate_on(&ops, &p, init, opts)
}

/// Same as [`simulate_with`] on pre-assembled operators.
pub fn simulate_on(ops: &DiscreteOperators, p: &ModelParams, init: &State, opts: &SimOptions) -> Result<EnergyTrace> {
    if p.t_end < p.dt {
        return Err(Error::EmptyRun { t_end: p.t_end, dt: p.dt });
    }
    if init.len() != ops.n() {
        return Err(Error::LengthMismatch { left: init.len(), right: ops.n() });
    }
    init.check_finite()?;
    let stepper = Stepper::new(ops, p, SchemeConfig::from_params(p))?;
    let n_steps = p.n_steps();
    let sample_at = sample_steps(&opts.sampling, n_steps, p.dt);

    let e0 = dynamics::energy(init, ops, p.kappa, p.q).e_total;
    let env: Option<EnvelopeConstants> = if p.variant == Variant::Frictional && p.alpha > 0.0 && e0 > 0.0 {
        Some(envelope::envelope_constants(e0, p, ops, opts.envelope_variant)?)
    } else {
        None
    };

    let record = |s: &State, t: f64| -> Sample {
        let energy = dynamics::energy(s, ops, p.kappa, p.q);
        Sample {
            t,
            energy,
            dissipation: dynamics::dissipation_from(&energy, s, ops, p),
            lower_env: env.as_ref().map(|ec| envelope::lower_envelope(t, ec)),
            upper_env: env.as_ref().map(|ec| envelope::upper_envelope(t, ec)),
        }
    };

    let mut state = State { t: 0.0, ..init.clone() };
    let mut samples = Vec::with_capacity(sample_at.len());
    let mut next = 0;
    for k in 0..=n_steps {
        if next < sample_at.len() && sample_at[next] == k {
            samples.push(record(&state, k as f64 * p.dt));
            next += 1;
        }
        if k < n_steps {
            state = stepper.step(&state)?;
        }
    }
    Ok(EnergyTrace { samples, params_snapshot: p.clone(), e0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_initial, InitialKind};
    use crate::operators::assemble_operators;

    #[test]
    fn zero_state_stays_zero() {
        let ops = assemble_operators(1.0, 16, 1.0).unwrap();
        for scheme in [Scheme::Rk4, Scheme::ModalSplit] {
            let p = ModelParams { n: 16, kappa: 1.0, scheme, ..Default::default() };
            let s = step(&State::zeros(16), &ops, &p, &SchemeConfig::new(scheme, 1e-2)).unwrap();
            assert!(s.is_zero());
            assert!((s.t - 1e-2).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_step_sets() {
        assert_eq!(sample_steps(&Sampling::Every(3), 10, 0.1), vec![0, 3, 6, 9, 10]);
        let log = sample_steps(&Sampling::LogSpaced { per_decade: 1 }, 1000, 0.1);
        assert_eq!(log, vec![0, 1, 10, 100, 1000]);
    }

    #[test]
    fn empty_run_rejected() {
        let ops = assemble_operators(1.0, 16, 0.0).unwrap();
        let p = ModelParams { n: 16, t_end: 1e-3, ..Default::default() };
        let s = State::zeros(16);
        assert!(matches!(
            simulate_on(&ops, &p, &s, &SimOptions::from_params(&p)),
            Err(Error::EmptyRun { .. })
        ));
    }

    #[test]
    fn nan_state_rejected() {
        let ops = assemble_operators(1.0, 16, 0.0).unwrap();
        let p = ModelParams { n: 16, ..Default::default() };
        let mut s = make_initial(&InitialKind::default(), &ops).unwrap();
        s.v[3] = f64::NAN;
        let cfg = SchemeConfig::from_params(&p);
        assert!(matches!(step(&s, &ops, &p, &cfg), Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn rk4_substeps_track_stiffness() {
        let ops = DiscreteOperators::new(1.0, 64).unwrap();
        let p = ModelParams { scheme: Scheme::Rk4, dt: 1e-3, ..Default::default() };
        let st = Stepper::new(&ops, &p, SchemeConfig::from_params(&p)).unwrap();
        let m = st.rk4_substeps(&State::zeros(64));
        // sqrt(16/h⁴)·dt = 4·65²·1e-3 ≈ 16.9
        assert_eq!(m, 7);
    }
}
