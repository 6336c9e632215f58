use btbeam::operators::{
    biharmonic_min_eigenvalue, gradient_embedding_constant, h_inner, stiffness_eigendecomposition, DiscreteOperators,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// First positive root of `cos β cosh β = 1` by bisection.
fn beta1() -> f64 {
    let f = |b: f64| b.cos() * b.cosh() - 1.0;
    let (mut lo, mut hi) = (4.0_f64, 5.0_f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Dense clamped bilaplacian built from the five-point stencil with the ghost
/// values `u₀ = 0`, `u₋₁ = u₁` substituted by hand.
fn dense_bilap(n: usize, h: f64) -> DMatrix<f64> {
    let stencil = [1.0, -4.0, 6.0, -4.0, 1.0];
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (k, w) in stencil.iter().enumerate() {
            let j = i as i64 + k as i64 - 2;
            // node index j in 0..n, with -1 and n the boundary nodes, -2 and n+1 the ghosts
            if (0..n as i64).contains(&j) {
                m[(i, j as usize)] += w;
            } else if j == -2 {
                m[(i, 0)] += w;
            } else if j == n as i64 + 1 {
                m[(i, n - 1)] += w;
            }
        }
    }
    m / h.powi(4)
}

fn dense_lap(n: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0,
        1 => 1.0,
        _ => 0.0,
    }) / (h * h)
}

#[test]
fn operators_match_hand_built_stencils() {
    for n in [8, 13, 40] {
        let ops = DiscreteOperators::new(1.3, n).unwrap();
        let h = ops.h();
        assert!((h - 1.3 / (n as f64 + 1.0)).abs() < 1e-15);
        let b = dense_bilap(n, h);
        let l = dense_lap(n, h);
        assert!((ops.bilap().to_dense() - &b).amax() <= 1e-12 * b.amax());
        assert!((ops.lap().to_dense() - &l).amax() <= 1e-12 * l.amax());
        assert_eq!(ops.bilap().to_dense(), ops.bilap().to_dense().transpose());
    }
}

#[test]
fn n3_rows() {
    let ops = DiscreteOperators::new_unchecked_grid(1.0, 3).unwrap();
    let h4 = 0.25f64.powi(4);
    let b = ops.bilap().to_dense() * h4;
    assert_eq!([b[(0, 0)], b[(0, 1)], b[(0, 2)]], [7.0, -4.0, 1.0]);
    let l = ops.lap().to_dense() * 0.0625;
    assert_eq!([l[(1, 0)], l[(1, 1)], l[(1, 2)]], [1.0, -2.0, 1.0]);
}

#[test]
fn lambda1_against_transcendental_oracle() {
    let lambda1 = beta1().powi(4);
    assert!((beta1() - 4.73004).abs() < 1e-5);
    assert!((lambda1 - 500.564).abs() < 1e-3);
    let ops = DiscreteOperators::new(1.0, 128).unwrap();
    let l128 = biharmonic_min_eigenvalue(&ops).unwrap();
    assert!((l128 - lambda1).abs() / lambda1 <= 0.02, "{l128}");
}

#[test]
fn inverse_iteration_agrees_with_dense_eigensolver() {
    for n in [16, 64] {
        let ops = DiscreteOperators::new(1.0, n).unwrap();
        let dense = ops.bilap_eigendecomposition().unwrap().values[0];
        let inv = biharmonic_min_eigenvalue(&ops).unwrap();
        assert!((dense - inv).abs() <= 1e-9 * inv, "{dense} vs {inv}");
        // c′ from the dense symmetric form B^{-1/2}(-L)B^{-1/2}
        let b = ops.bilap().to_dense();
        let l = -ops.lap().to_dense();
        let eig = b.symmetric_eigen();
        let inv_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * eig.eigenvectors.transpose();
        let pencil = &inv_sqrt * l * &inv_sqrt;
        let mu_max = pencil.symmetric_eigen().eigenvalues.max();
        let c = gradient_embedding_constant(&ops).unwrap();
        assert!((mu_max - c).abs() <= 1e-8 * c, "{mu_max} vs {c}");
    }
}

#[test]
fn dimensional_scaling() {
    let base = DiscreteOperators::new(1.0, 48).unwrap();
    let (l1, c1) = (biharmonic_min_eigenvalue(&base).unwrap(), gradient_embedding_constant(&base).unwrap());
    for length in [2.0, 0.5] {
        let ops = DiscreteOperators::new(length, 48).unwrap();
        let l = biharmonic_min_eigenvalue(&ops).unwrap();
        let c = gradient_embedding_constant(&ops).unwrap();
        assert!((l - l1 / length.powi(4)).abs() <= 1e-10 * l, "{l}");
        assert!((c - c1 * length * length).abs() <= 1e-10 * c, "{c}");
    }
}

#[test]
fn gradient_constant_properties() {
    let ops = DiscreteOperators::new(1.0, 128).unwrap();
    let emb = ops.embedding_constants().unwrap();
    assert!(emb.c_prime <= emb.d);
    let fine = DiscreteOperators::new(1.0, 256).unwrap().embedding_constants().unwrap();
    assert!((fine.c_prime - emb.c_prime).abs() / fine.c_prime <= 0.02);
    // clamped buckling value 1/(4π²)
    let cont = 1.0 / (4.0 * std::f64::consts::PI.powi(2));
    assert!((fine.c_prime - cont).abs() / cont < 1e-3);
    assert!((emb.d - biharmonic_min_eigenvalue(&ops).unwrap().powf(-0.5)).abs() < 1e-15);
}

#[test]
fn stiffness_eigendecomposition_properties() {
    let ops = DiscreteOperators::new(1.0, 32).unwrap();
    let h = ops.h();
    let lambda1 = biharmonic_min_eigenvalue(&ops).unwrap();
    for kappa in [0.0, 0.5, 3.0] {
        let eig = stiffness_eigendecomposition(&ops, kappa).unwrap();
        let s = ops.stiffness(kappa).to_dense();
        // vectors are h-orthonormal, so S = h·VΛVᵀ
        let v = &eig.vectors;
        let recon = v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.values.clone())) * v.transpose() * h;
        assert!((recon - &s).norm() <= 1e-10 * s.norm());
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(eig.values[0] > 0.0);
        if kappa > 0.0 {
            assert!(eig.values[0] >= lambda1);
        } else {
            let b = ops.bilap_eigendecomposition().unwrap();
            for (a, c) in eig.values.iter().zip(&b.values) {
                assert!((a - c).abs() <= 1e-12 * c);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let ip = h_inner(&eig.vector(i), &eig.vector(j), h).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn h_inner_examples() {
    assert!((h_inner(&[1.0; 4], &[1.0; 4], 0.2).unwrap() - 0.8).abs() < 1e-15);
    assert_eq!(h_inner(&[1.0, -1.0], &[1.0, 1.0], 0.3).unwrap(), 0.0);
    assert!(h_inner(&[1.0], &[1.0, 2.0], 0.1).is_err());
}

fn random_u(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter("non-zero", |u| u.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quadratic_form_bounds(u in random_u(24)) {
        let ops = DiscreteOperators::new(1.0, 24).unwrap();
        let emb = ops.embedding_constants().unwrap();
        let h = ops.h();
        let bu = h_inner(&ops.bilap().apply(&u), &u, h).unwrap();
        let uu = h_inner(&u, &u, h).unwrap();
        let neg_lap: Vec<f64> = ops.lap().apply(&u).iter().map(|x| -x).collect();
        let gu = h_inner(&neg_lap, &u, h).unwrap();
        prop_assert!(bu >= emb.lambda1 * uu * (1.0 - 1e-12));
        prop_assert!(uu.sqrt() <= emb.d * bu.sqrt() * (1.0 + 1e-12));
        prop_assert!(gu <= emb.c_prime * bu * (1.0 + 1e-12));
        // the discrete ‖Δu‖² dominates ‖lap·u‖²
        let lu = ops.lap().apply(&u);
        prop_assert!(h_inner(&lu, &lu, h).unwrap() <= bu * (1.0 + 1e-12));
    }
}
