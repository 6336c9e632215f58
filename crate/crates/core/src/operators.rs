//! Finite-difference Laplacian and bilaplacian on `(0, L)` with clamped ends,
//! plus the spectral data the envelopes and the modal integrator need.
//!
//! Nodes are `x_i = i·h`, `i = 1..=n`, `h = L/(n+1)`. The boundary values are
//! eliminated: `u_0 = u_{n+1} = 0`, and the zero-slope condition is imposed by
//! the ghost reflection `u_{-1} = u_1` (resp. `u_{n+2} = u_n`), which turns the
//! first and last rows of the `(1,-4,6,-4,1)/h⁴` stencil into `(7,-4,1)/h⁴`.
//!
//! All discrete norms use the rectangle rule with weight `h`:
//! `‖u‖² = h·uᵀu`, `‖Δu‖² = h·uᵀ(bilap)u`, `‖∇u‖² = h·uᵀ(-lap)u`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::banded::SymBanded;
use crate::error::{Error, Result};
use crate::model::N_MIN;

/// Relative tolerance for the inverse-iteration eigen-solves.
pub const EIG_TOL: f64 = 1e-10;
/// Iteration cap for every eigen-solve.
pub const EIG_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    length: f64,
    h: f64,
    /// Discrete Δ (negative definite).
    lap: SymBanded,
    /// Discrete Δ² with clamped ghost elimination (positive definite).
    bilap: SymBanded,
    /// Eigenpairs of `bilap + κ(-lap)` for the κ the operators were assembled with.
    pub stiffness_eigs: Option<EigenData>,
}

/// Eigenpairs sorted ascending. Columns of `vectors` are orthonormal in the
/// h-weighted inner product.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    h: f64,
}

impl EigenData {
    fn from_symmetric(m: DMatrix<f64>, h: f64) -> Result<Self> {
        let n = m.nrows();
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, EIG_MAX_ITERS)
            .ok_or_else(|| Error::ConvergenceFailure("dense symmetric eigen-solve".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let scale = h.sqrt().recip();
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] * scale);
        Ok(Self { values, vectors, h })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The k-th eigenvector (0-based) as a plain vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// Modal coordinates `c_k = ⟨φ_k, x⟩_h`.
    pub fn to_modal(&self, x: &[f64], out: &mut [f64]) {
        let n = self.values.len();
        for (k, o) in out.iter_mut().enumerate().take(n) {
            let col = self.vectors.column(k);
            *o = self.h * col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Nodal values `x = Σ c_k φ_k`.
    pub fn from_modal(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &ck) in c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            for (o, phi) in out.iter_mut().zip(self.vectors.column(k).iter()) {
                *o += ck * phi;
            }
        }
    }
}

impl DiscreteOperators {
    /// Assembles `lap` and `bilap` without any eigen-data.
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if n < N_MIN {
            return Err(Error::BadGrid { n });
        }
        Self::new_unchecked_grid(length, n)
    }

    /// Like [`DiscreteOperators::new`] but accepts tiny grids (used for stencil checks).
    pub fn new_unchecked_grid(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParam { field: "length", reason: format!("must be positive, got {length}") });
        }
        if n < 3 {
            return Err(Error::BadGrid { n });
        }
        let h = length / (n as f64 + 1.0);
        let h2 = h * h;
        let h4 = h2 * h2;
        let lap = SymBanded::from_diagonals(vec![vec![-2.0 / h2; n], vec![1.0 / h2; n - 1]]);
        let mut main = vec![6.0 / h4; n];
        main[0] = 7.0 / h4;
        main[n - 1] = 7.0 / h4;
        let bilap = SymBanded::from_diagonals(vec![main, vec![-4.0 / h4; n - 1], vec![1.0 / h4; n - 2]]);
        Ok(Self { length, h, lap, bilap, stiffness_eigs: None })
    }

    pub fn n(&self) -> usize {
        self.lap.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn lap(&self) -> &SymBanded {
        &self.lap
    }

    pub fn bilap(&self) -> &SymBanded {
        &self.bilap
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n()).map(move |i| i as f64 * self.h)
    }

    pub fn l2_norm_sq(&self, v: &[f64]) -> f64 {
        self.h * v.iter().map(|x| x * x).sum::<f64>()
    }

    /// `‖Δu‖² := ⟨Δ²u, u⟩`
    pub fn bilap_norm_sq(&self, u: &[f64]) -> f64 {
        self.h * self.bilap.quad_form(u)
    }

    /// `‖∇u‖² := ⟨-Δu, u⟩`
    pub fn grad_norm_sq(&self, u: &[f64]) -> f64 {
        -self.h * self.lap.quad_form(u)
    }

    /// `bilap + κ(-lap)` in banded form.
    pub fn stiffness(&self, kappa: f64) -> SymBanded {
        self.bilap.add_scaled(-kappa, &self.lap)
    }

    pub fn bilap_eigendecomposition(&self) -> Result<EigenData> {
        stiffness_eigendecomposition(self, 0.0)
    }

    /// Closed-form eigenpairs of `-lap` (discrete sine modes), h-orthonormal.
    pub fn neg_lap_modes(&self) -> EigenData {
        let n = self.n();
        let np1 = n as f64 + 1.0;
        let values = (1..=n)
            .map(|j| {
                let s = (j as f64 * PI / (2.0 * np1)).sin();
                4.0 * s * s / (self.h * self.h)
            })
            .collect();
        let norm = (2.0 / self.length).sqrt();
        let vectors =
            DMatrix::from_fn(n, n, |i, j| norm * ((i + 1) as f64 * (j + 1) as f64 * PI / np1).sin());
        EigenData { values, vectors, h: self.h }
    }

    /// Λ₁, `d = Λ₁^{-1/2}` and `c′` for this grid.
    pub fn embedding_constants(&self) -> Result<EmbeddingConstants> {
        let lambda1 = biharmonic_min_eigenvalue(self)?;
        let c_prime = gradient_embedding_constant(self)?;
        Ok(EmbeddingConstants { lambda1, d: lambda1.sqrt().recip(), c_prime })
    }
}

/// Assembles the operators and the stiffness eigen-data for `kappa`.
pub fn assemble_operators(length: f64, n: usize, kappa: f64) -> Result<DiscreteOperators> {
    let mut ops = DiscreteOperators::new(length, n)?;
    ops.stiffness_eigs = Some(stiffness_eigendecomposition(&ops, kappa)?);
    Ok(ops)
}

/// Rectangle-rule L² inner product `h·Σ aᵢbᵢ`.
pub fn h_inner(a: &[f64], b: &[f64], h: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingConstants {
    /// Smallest eigenvalue of the discrete bilaplacian.
    pub lambda1: f64,
    /// Best constant in `‖u‖ ≤ d‖Δu‖`.
    pub d: f64,
    /// Best constant in `‖∇u‖² ≤ c′‖Δu‖²`.
    pub c_prime: f64,
}

/// Smallest eigenvalue Λ₁ of `bilap`, by inverse iteration.
///
/// The eigenvalue estimate is `1/(xᵀ bilap⁻¹ x)` for unit `x`; the direct
/// Rayleigh quotient loses about `‖bilap‖/Λ₁` in relative accuracy.
pub fn biharmonic_min_eigenvalue(ops: &DiscreteOperators) -> Result<f64> {
    let chol = ops.bilap.cholesky()?;
    let n = ops.n();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut prev = f64::INFINITY;
    for iter in 0..EIG_MAX_ITERS {
        let mut y = x.clone();
        chol.solve_in_place(&mut y);
        let lambda = 1.0 / dot(&x, &y);
        let norm = dot(&y, &y).sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        if iter >= 2 && (lambda - prev).abs() <= EIG_TOL * lambda {
            return Ok(lambda);
        }
        prev = lambda;
    }
    Err(Error::ConvergenceFailure("inverse iteration for the smallest bilaplacian eigenvalue".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of the pencil `(-lap)x = μ·bilap·x`, i.e. the smallest
/// `c′` with `‖∇u‖² ≤ c′‖Δu‖²` on the grid.
///
/// Power iteration on `bilap⁻¹(-lap)`, which is self-adjoint in the `(-lap)`
/// inner product; the estimate is the Rayleigh quotient in that product.
pub fn gradient_embedding_constant(ops: &DiscreteOperators) -> Result<f64> {
    let chol = ops.bilap.cholesky()?;
    let n = ops.n();
    let neg_lap = |x: &[f64]| -> Vec<f64> { ops.lap.apply(x).into_iter().map(|v| -v).collect() };
    let mut x = vec![1.0; n];
    let mut prev = f64::INFINITY;
    for iter in 0..EIG_MAX_ITERS {
        let ax = neg_lap(&x);
        let mut y = ax.clone();
        chol.solve_in_place(&mut y);
        let mu = dot(&ax, &y) / dot(&ax, &x);
        let norm = dot(&y, &y).sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        if iter >= 2 && (mu - prev).abs() <= EIG_TOL * mu {
            return Ok(mu);
        }
        prev = mu;
    }
    Err(Error::ConvergenceFailure("inverse iteration for the gradient embedding constant".into()))
}

/// Full eigendecomposition of `S = bilap + κ(-lap)`.
pub fn stiffness_eigendecomposition(ops: &DiscreteOperators, kappa: f64) -> Result<EigenData> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::NegativeCoefficient { field: "kappa", value: kappa });
    }
    EigenData::from_symmetric(ops.stiffness(kappa).to_dense(), ops.h)
}

/// Continuum values of Λ₁, d and c′ for a clamped interval of the given
/// length, reported next to the discrete ones.
pub fn continuum_reference(length: f64) -> EmbeddingConstants {
    // first positive root of cos β cosh β = 1
    let f = |b: f64| b.cos() * b.cosh() - 1.0;
    let (mut lo, mut hi) = (4.0_f64, 5.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let lambda1 = (beta / length).powi(4);
    // clamped-clamped buckling load 4π²/L²
    let c_prime = length * length / (4.0 * PI * PI);
    EmbeddingConstants { lambda1, d: lambda1.sqrt().recip(), c_prime }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_on_three_points() {
        let ops = DiscreteOperators::new_unchecked_grid(1.0, 3).unwrap();
        let h = 0.25_f64;
        assert_eq!(ops.h(), h);
        let (h2, h4) = (h * h, h.powi(4));
        assert_eq!(ops.lap().get(1, 0), 1.0 / h2);
        assert_eq!(ops.lap().get(1, 1), -2.0 / h2);
        assert_eq!(ops.lap().get(1, 2), 1.0 / h2);
        assert_eq!(ops.bilap().get(0, 0), 7.0 / h4);
        assert_eq!(ops.bilap().get(0, 1), -4.0 / h4);
        assert_eq!(ops.bilap().get(0, 2), 1.0 / h4);
    }

    #[test]
    fn bilap_is_symmetric_and_interior_rows_carry_full_stencil() {
        let ops = DiscreteOperators::new(2.0, 17).unwrap();
        let dense = ops.bilap().to_dense();
        assert_eq!(dense, dense.transpose());
        let h4 = ops.h().powi(4);
        let row: Vec<f64> = (3..8).map(|j| dense[(5, j)] * h4).collect();
        for (got, want) in row.iter().zip([1.0, -4.0, 6.0, -4.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn h_inner_examples() {
        assert!((h_inner(&[1.0; 4], &[1.0; 4], 0.2).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(h_inner(&[1.0, -1.0], &[1.0, 1.0], 0.3).unwrap(), 0.0);
        assert!(matches!(h_inner(&[1.0], &[1.0, 2.0], 0.1), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn eigenvectors_are_h_orthonormal() {
        let ops = DiscreteOperators::new(1.0, 24).unwrap();
        let eig = ops.bilap_eigendecomposition().unwrap();
        for i in 0..eig.len() {
            for j in 0..eig.len() {
                let ip = h_inner(&eig.vector(i), &eig.vector(j), ops.h()).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "({i},{j}) -> {ip}");
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn neg_lap_modes_are_eigenpairs() {
        let ops = DiscreteOperators::new(1.5, 12).unwrap();
        let modes = ops.neg_lap_modes();
        for k in 0..12 {
            let phi = modes.vector(k);
            let lphi = ops.lap().apply(&phi);
            for (a, b) in lphi.iter().zip(&phi) {
                assert!((-a - modes.values[k] * b).abs() < 1e-9 * modes.values[k]);
            }
            assert!((ops.l2_norm_sq(&phi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn modal_round_trip() {
        let ops = assemble_operators(1.0, 16, 1.0).unwrap();
        let eig = ops.stiffness_eigs.as_ref().unwrap();
        let x: Vec<f64> = ops.nodes().map(|x| (3.0 * x).sin() * x * (1.0 - x)).collect();
        let mut c = vec![0.0; 16];
        let mut back = vec![0.0; 16];
        eig.to_modal(&x, &mut c);
        eig.from_modal(&c, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn tiny_grid_rejected() {
        assert!(matches!(DiscreteOperators::new(1.0, 7), Err(Error::BadGrid { n: 7 })));
        assert!(DiscreteOperators::new(0.0, 16).is_err());
    }

    #[test]
    fn continuum_reference_root() {
        let c = continuum_reference(1.0);
        assert!((c.lambda1 - 500.564).abs() < 1e-2);
    }
}
