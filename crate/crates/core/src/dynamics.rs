//! Energies, the nonlocal damping coefficient and the right-hand side of
//!
//! ```text
//! ∂ₜₜu + Δ²u − κΔu + α(‖Δu‖² + ‖∂ₜu‖²)^q ∂ₜu = 0        (frictional)
//! ∂ₜₜu + Δ²u − κΔu − α(‖Δu‖² + ‖∂ₜu‖²)^q Δ∂ₜu = 0       (strong)
//! ```
//!
//! on the discrete grid. The strong variant's dissipation functional
//! `α·coeff·‖∇v‖²` is derived by pairing the equation with `v` the same way as
//! for the frictional one.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{EnergyBreakdown, ModelParams, State, Variant};
use crate::operators::DiscreteOperators;

#[derive(Debug, Clone, PartialEq)]
pub struct RhsOutput {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

/// `‖z‖²_ℋ = ‖Δu‖² + ‖v‖²`
pub fn phase_norm_sq(s: &State, ops: &DiscreteOperators) -> f64 {
    ops.bilap_norm_sq(&s.u) + ops.l2_norm_sq(&s.v)
}

/// `(‖Δu‖² + ‖v‖²)^q`
pub fn nonlocal_coefficient(s: &State, ops: &DiscreteOperators, q: f64) -> f64 {
    coefficient_from_norm_sq(phase_norm_sq(s, ops), q)
}

pub(crate) fn coefficient_from_norm_sq(norm_sq: f64, q: f64) -> f64 {
    if norm_sq <= 0.0 {
        0.0
    } else {
        norm_sq.powf(q)
    }
}

pub fn energy(s: &State, ops: &DiscreteOperators, kappa: f64, q: f64) -> EnergyBreakdown {
    let bilap_sq = ops.bilap_norm_sq(&s.u);
    let vel_sq = ops.l2_norm_sq(&s.v);
    let grad_sq = ops.grad_norm_sq(&s.u);
    EnergyBreakdown {
        e_total: 0.5 * (bilap_sq + vel_sq + kappa * grad_sq),
        bilap_sq,
        vel_sq,
        grad_sq,
        coeff: coefficient_from_norm_sq(bilap_sq + vel_sq, q),
    }
}

pub fn rhs(s: &State, ops: &DiscreteOperators, p: &ModelParams) -> Result<RhsOutput> {
    s.check_finite()?;
    let coeff = nonlocal_coefficient(s, ops, p.q);
    let n = s.len();
    let mut dv = vec![0.0; n];
    ops.bilap().apply_into(&s.u, &mut dv);
    let lap_u = ops.lap().apply(&s.u);
    for i in 0..n {
        dv[i] = -dv[i] + p.kappa * lap_u[i];
    }
    let damp = p.alpha * coeff;
    if damp != 0.0 {
        match p.variant {
            Variant::Frictional => {
                for (d, v) in dv.iter_mut().zip(&s.v) {
                    *d -= damp * v;
                }
            }
            Variant::Strong => {
                let lap_v = ops.lap().apply(&s.v);
                for (d, lv) in dv.iter_mut().zip(&lap_v) {
                    *d += damp * lv;
                }
            }
        }
    }
    let out = RhsOutput { du: s.v.clone(), dv };
    if out.dv.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteState { t: s.t })
    }
}

/// `-dE/dt`: `α·coeff·‖v‖²` (frictional) or `α·coeff·‖∇v‖²` (strong).
pub fn dissipation_rate(s: &State, ops: &DiscreteOperators, p: &ModelParams) -> f64 {
    if p.alpha == 0.0 {
        return 0.0;
    }
    let coeff = nonlocal_coefficient(s, ops, p.q);
    let vel = match p.variant {
        Variant::Frictional => ops.l2_norm_sq(&s.v),
        Variant::Strong => ops.grad_norm_sq(&s.v),
    };
    p.alpha * coeff * vel
}

/// Same as [`dissipation_rate`] with the energy breakdown already at hand.
pub(crate) fn dissipation_from(e: &EnergyBreakdown, s: &State, ops: &DiscreteOperators, p: &ModelParams) -> f64 {
    if p.alpha == 0.0 {
        return 0.0;
    }
    match p.variant {
        Variant::Frictional => p.alpha * e.coeff * e.vel_sq,
        Variant::Strong => p.alpha * e.coeff * ops.grad_norm_sq(&s.v),
    }
}

/// Local Lipschitz constant of `𝓜(z) = (0, κΔu − α‖z‖^{2q}_ℋ v)` on the ball of radius `r`.
pub fn lipschitz_bound(p: &ModelParams, r: f64) -> f64 {
    p.kappa + 2.0 * (2.0 * p.q + 1.0) * p.alpha * r.powf(2.0 * p.q)
}

/// Returns `‖𝓜(z1) − 𝓜(z2)‖_ℋ / ‖z1 − z2‖_ℋ` together with the ball bound.
pub fn lipschitz_ratio(
    z1: &State,
    z2: &State,
    ops: &DiscreteOperators,
    p: &ModelParams,
    r: f64,
) -> Result<(f64, f64)> {
    if z1.len() != z2.len() {
        return Err(Error::LengthMismatch { left: z1.len(), right: z2.len() });
    }
    let n1 = phase_norm_sq(z1, ops);
    let n2 = phase_norm_sq(z2, ops);
    for norm_sq in [n1, n2] {
        // small slack for states drawn exactly on the sphere
        if norm_sq.sqrt() > r * (1.0 + 1e-12) {
            return Err(Error::BallViolation { norm: norm_sq.sqrt(), radius: r });
        }
    }
    let du: Vec<f64> = z1.u.iter().zip(&z2.u).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = z1.v.iter().zip(&z2.v).map(|(a, b)| a - b).collect();
    let diff = State { u: du, v: dv, t: 0.0 };
    let denom_sq = phase_norm_sq(&diff, ops);
    if denom_sq == 0.0 {
        return Err(Error::IdenticalStates);
    }
    // the first component of 𝓜 vanishes, so only the L² norm of the second counts
    let c1 = coefficient_from_norm_sq(n1, p.q);
    let c2 = coefficient_from_norm_sq(n2, p.q);
    let lap_du = ops.lap().apply(&diff.u);
    let second: Vec<f64> = (0..z1.len())
        .map(|i| p.kappa * lap_du[i] - p.alpha * (c1 * z1.v[i] - c2 * z2.v[i]))
        .collect();
    let ratio = (ops.l2_norm_sq(&second) / denom_sq).sqrt();
    Ok((ratio, lipschitz_bound(p, r)))
}

/// Draws a state uniformly in radius on `[0, r]` and uniformly in direction,
/// measured in the ℋ-norm.
pub fn sample_state_in_ball<R: Rng + ?Sized>(rng: &mut R, ops: &DiscreteOperators, r: f64) -> State {
    let n = ops.n();
    let mut gauss = || {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    // scale u by the bilaplacian weight so both halves contribute comparably
    let u_scale = ops.h().powi(2);
    let u: Vec<f64> = (0..n).map(|_| gauss() * u_scale).collect();
    let v: Vec<f64> = (0..n).map(|_| gauss()).collect();
    let mut s = State { u, v, t: 0.0 };
    let norm = phase_norm_sq(&s, ops).sqrt();
    let target = r * rng.random::<f64>();
    let scale = if norm > 0.0 { target / norm } else { 0.0 };
    s.u.iter_mut().chain(s.v.iter_mut()).for_each(|x| *x *= scale);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialKind;
    use crate::model::make_initial;

    fn ops() -> DiscreteOperators {
        DiscreteOperators::new(1.0, 32).unwrap()
    }

    #[test]
    fn zero_state_is_equilibrium() {
        let ops = ops();
        let z = State::zeros(32);
        let p = ModelParams { kappa: 1.0, ..Default::default() };
        assert_eq!(nonlocal_coefficient(&z, &ops, 1.0), 0.0);
        assert_eq!(energy(&z, &ops, 1.0, 1.0), EnergyBreakdown::default());
        let r = rhs(&z, &ops, &p).unwrap();
        assert!(r.du.iter().chain(&r.dv).all(|&x| x == 0.0));
        assert_eq!(dissipation_rate(&z, &ops, &p), 0.0);
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(coefficient_from_norm_sq(4.0, 1.0), 4.0);
        assert_eq!(coefficient_from_norm_sq(4.0, 0.5), 2.0);
        // ‖Δu‖² = 3, ‖v‖² = 1 through the operator route
        let ops = ops();
        let s = make_initial(&InitialKind::SinSqMode { k: 1, amp: 1.0 }, &ops).unwrap();
        let b = ops.bilap_norm_sq(&s.u);
        let u: Vec<f64> = s.u.iter().map(|x| x * (3.0 / b).sqrt()).collect();
        let v = vec![(1.0 / (ops.h() * 32.0)).sqrt(); 32];
        let s = State { u, v, t: 0.0 };
        assert!((nonlocal_coefficient(&s, &ops, 1.0) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn undamped_rhs_is_linear_operator() {
        let ops = ops();
        let s = make_initial(&InitialKind::SinSqMode { k: 2, amp: 0.3 }, &ops).unwrap();
        let s = State { v: s.u.iter().map(|x| 2.0 * x).collect(), ..s };
        let p = ModelParams { alpha: 0.0, kappa: 0.0, ..Default::default() };
        let r = rhs(&s, &ops, &p).unwrap();
        assert_eq!(r.du, s.v);
        let bu = ops.bilap().apply(&s.u);
        for (a, b) in r.dv.iter().zip(&bu) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn pure_damping_when_u_vanishes() {
        let ops = ops();
        let v: Vec<f64> = ops.nodes().map(|x| (5.0 * x).cos()).collect();
        let s = State { u: vec![0.0; 32], v: v.clone(), t: 0.0 };
        let p = ModelParams { alpha: 0.7, q: 1.5, kappa: 0.0, ..Default::default() };
        let r = rhs(&s, &ops, &p).unwrap();
        let vn = ops.l2_norm_sq(&v);
        for (d, vi) in r.dv.iter().zip(&v) {
            let want = -0.7 * vn.powf(1.5) * vi;
            assert!((d - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn dissipation_arithmetic() {
        // coeff = 4 (q = 1, ‖z‖² = 4), ‖v‖² = 0.25, α = 2
        let ops = ops();
        let h = ops.h();
        let v = vec![(0.25 / (h * 32.0)).sqrt(); 32];
        let mut s = State { u: vec![0.0; 32], v, t: 0.0 };
        let fill = make_initial(&InitialKind::SinSqMode { k: 1, amp: 1.0 }, &ops).unwrap().u;
        let scale = (3.75 / ops.bilap_norm_sq(&fill)).sqrt();
        s.u = fill.iter().map(|x| x * scale).collect();
        let p = ModelParams { alpha: 2.0, q: 1.0, ..Default::default() };
        let d = dissipation_rate(&s, &ops, &p);
        assert!((d - 2.0).abs() < 1e-10, "{d}");
        let p0 = ModelParams { alpha: 0.0, ..p };
        assert_eq!(dissipation_rate(&s, &ops, &p0), 0.0);
    }

    #[test]
    fn lipschitz_against_origin() {
        let ops = ops();
        let v: Vec<f64> = ops.nodes().map(|x| x.sin()).collect();
        let z1 = State { u: vec![0.0; 32], v, t: 0.0 };
        let z0 = State::zeros(32);
        let p = ModelParams { alpha: 1.3, q: 1.0, kappa: 0.5, ..Default::default() };
        let norm = phase_norm_sq(&z1, &ops).sqrt();
        let (ratio, bound) = lipschitz_ratio(&z1, &z0, &ops, &p, 1.0).unwrap();
        assert!((ratio - 1.3 * norm.powi(2)).abs() < 1e-12);
        assert!(ratio <= bound);
        assert!(matches!(lipschitz_ratio(&z0, &z0, &ops, &p, 1.0), Err(Error::IdenticalStates)));
        assert!(matches!(lipschitz_ratio(&z1, &z0, &ops, &p, 0.1), Err(Error::BallViolation { .. })));
    }
}
