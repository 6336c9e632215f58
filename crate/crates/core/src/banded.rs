//! Symmetric banded matrices stored by diagonals, with a banded Cholesky
//! factorization for the inverse-iteration eigen-solves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric banded matrix. `diags[k][i]` holds entry `(i, i + k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBanded {
    /// Builds a matrix from constant-per-diagonal rows, then lets the caller
    /// patch individual entries.
    pub fn from_diagonals(diags: Vec<Vec<f64>>) -> Self {
        let n = diags.first().map_or(0, Vec::len);
        for (k, d) in diags.iter().enumerate() {
            assert_eq!(d.len(), n.saturating_sub(k), "diagonal {k} has wrong length");
        }
        Self { n, diags }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.diags.len().saturating_sub(1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k >= self.diags.len() || hi >= self.n {
            0.0
        } else {
            self.diags[k][lo]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.diags[hi - lo][lo] = value;
    }

    /// `out = A x`
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        let main = &self.diags[0];
        for i in 0..self.n {
            out[i] = main[i] * x[i];
        }
        for (k, d) in self.diags.iter().enumerate().skip(1) {
            for (i, &a) in d.iter().enumerate() {
                out[i] += a * x[i + k];
                out[i + k] += a * x[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(x, &mut out);
        out
    }

    /// `xᵀ A x` without allocating.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc: f64 = self.diags[0].iter().zip(x).map(|(a, xi)| a * xi * xi).sum();
        for (k, d) in self.diags.iter().enumerate().skip(1) {
            let off: f64 = d.iter().enumerate().map(|(i, a)| a * x[i] * x[i + k]).sum();
            acc += 2.0 * off;
        }
        acc
    }

    /// `a + s·b` for matrices of the same dimension.
    pub fn add_scaled(&self, s: f64, other: &SymBanded) -> SymBanded {
        assert_eq!(self.n, other.n);
        let bw = self.bandwidth().max(other.bandwidth());
        let diags = (0..=bw)
            .map(|k| {
                (0..self.n - k)
                    .map(|i| self.get(i, i + k) + s * other.get(i, i + k))
                    .collect()
            })
            .collect();
        SymBanded { n: self.n, diags }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bandwidth());
                let hi = (i + self.bandwidth()).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Banded Cholesky `A = L Lᵀ`; fails if the matrix is not positive definite.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let p = self.bandwidth();
        // lower[k][j] holds L(j + k, j)
        let mut lower: Vec<Vec<f64>> = (0..=p).map(|k| vec![0.0; n.saturating_sub(k)]).collect();
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 1..=p.min(j) {
                let l = lower[k][j - k];
                diag -= l * l;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            lower[0][j] = ljj;
            for k in 1..=p {
                let i = j + k;
                if i >= n {
                    break;
                }
                let mut s = self.get(i, j);
                // sum over m < j of L(i, m) L(j, m), both within the band
                for m in i.saturating_sub(p)..j {
                    s -= lower[i - m][m] * lower[j - m][m];
                }
                lower[k][j] = s / ljj;
            }
        }
        Ok(BandedCholesky { n, p, lower })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    p: usize,
    lower: Vec<Vec<f64>>,
}

impl BandedCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        // forward: L y = b
        for i in 0..self.n {
            let mut s = b[i];
            for k in 1..=self.p.min(i) {
                s -= self.lower[k][i - k] * b[i - k];
            }
            b[i] = s / self.lower[0][i];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in 1..=self.p {
                if i + k >= self.n {
                    break;
                }
                s -= self.lower[k][i] * b[i + k];
            }
            b[i] = s / self.lower[0][i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn penta(n: usize) -> SymBanded {
        SymBanded::from_diagonals(vec![vec![6.0; n], vec![-4.0; n - 1], vec![1.0; n - 2]])
    }

    #[test]
    fn apply_matches_dense() {
        let a = penta(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        let banded = a.apply(&x);
        for (d, b) in dense.iter().zip(&banded) {
            assert!((d - b).abs() < 1e-14);
        }
        let q = a.quad_form(&x);
        let direct: f64 = banded.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((q - direct).abs() < 1e-13);
    }

    #[test]
    fn cholesky_solves() {
        let a = penta(12);
        let x: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let mut b = a.apply(&x);
        a.cholesky().unwrap().solve_in_place(&mut b);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-9, "{xi} vs {bi}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SymBanded::from_diagonals(vec![vec![1.0, -1.0], vec![0.0]]);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite)));
    }
}
