use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tlab_core::linalg::*;
use tlab_core::taskmodel::standard_normal_matrix;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    standard_normal_matrix(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Low-rank matrix with the given shape and rank.
fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> DenseMatrix {
    gaussian(rows, rank, seed) * gaussian(rank, cols, seed + 1000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penrose_conditions(rows in 1usize..12, cols in 1usize..12, rank_frac in 0.2f64..1.0, seed in 0u64..1000) {
        let rank = ((rows.min(cols) as f64 * rank_frac).ceil() as usize).max(1);
        let a = low_rank(rows, cols, rank, seed);
        let p = pseudoinverse(&a).unwrap();
        let scale = max_abs(&a).max(1.0) * max_abs(&p).max(1.0);
        let tol = 1e-9 * scale * scale;
        prop_assert!(max_abs(&(&a * &p * &a - &a)) < tol);
        prop_assert!(max_abs(&(&p * &a * &p - &p)) < tol);
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!(max_abs(&(&ap - ap.transpose())) < tol);
        prop_assert!(max_abs(&(&pa - pa.transpose())) < tol);
    }

    #[test]
    fn min_norm_matches_pseudoinverse(rows in 1usize..15, cols in 1usize..15, seed in 0u64..1000) {
        let z = gaussian(rows, cols, seed);
        let v = gaussian(rows, 1, seed + 7).column(0).into_owned();
        let x = min_norm_solve(&z, &v);
        let y = pseudoinverse(&z).unwrap() * &v;
        prop_assert!((&x - &y).norm() <= 1e-8 * y.norm().max(1.0));
    }

    #[test]
    fn min_norm_interpolates_when_wide(rows in 1usize..10, extra in 1usize..10, seed in 0u64..1000) {
        let cols = rows + extra;
        let z = gaussian(rows, cols, seed);
        let v = gaussian(rows, 1, seed + 3).column(0).into_owned();
        let x = min_norm_solve(&z, &v);
        prop_assert!((&z * &x - &v).norm() < 1e-8 * v.norm().max(1.0));
        // Orthogonal to the null space: lies in the row space.
        let proj = z.transpose() * pseudoinverse(&z.transpose()).unwrap() * &x;
        prop_assert!((&proj - &x).norm() < 1e-8 * x.norm().max(1.0));
    }

    #[test]
    fn psd_sqrt_squares_back(n in 1usize..10, seed in 0u64..1000) {
        let g = gaussian(n, n + 2, seed);
        let s = &g * g.transpose();
        let r = sym_psd_sqrt(&s).unwrap();
        prop_assert!(max_abs(&(&r * &r - &s)) < 1e-9 * max_abs(&s).max(1.0));
        prop_assert!(asymmetry(&r) < 1e-12 * max_abs(&r).max(1.0));
    }

    #[test]
    fn eig_reconstructs(n in 1usize..10, seed in 0u64..1000) {
        let g = gaussian(n, n, seed);
        let s = &g + g.transpose();
        let spec = eig_sym(&s).unwrap();
        prop_assert!(max_abs(&(spec.reconstruct() - &s)) < 1e-10 * max_abs(&s).max(1.0));
        prop_assert!(spec.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn rank_deficient_min_norm_uses_pseudoinverse() {
    let z = low_rank(8, 12, 3, 5);
    let v = gaussian(8, 1, 9).column(0).into_owned();
    let x = min_norm_solve(&z, &v);
    let y = pseudoinverse(&z).unwrap() * &v;
    assert!((&x - &y).norm() <= 1e-8 * y.norm());
}

#[test]
fn spd_solve_matches_inverse() {
    let g = gaussian(6, 9, 2);
    let s = &g * g.transpose();
    let b = gaussian(6, 1, 3).column(0).into_owned();
    let x = spd_solve(&s, &b).unwrap();
    assert!((&s * &x - &b).norm() < 1e-10 * b.norm());
}

#[test]
fn eig_ratio_detects_singularity() {
    let z = low_rank(5, 5, 2, 4);
    let s = &z * z.transpose();
    assert!(min_max_eig_ratio(&s) < 1e-10);
    assert!(min_max_eig_ratio(&DenseMatrix::identity(4, 4)) > 0.99);
}

#[test]
fn nonfinite_inputs_rejected() {
    let mut a = DenseMatrix::identity(3, 3);
    a[(1, 2)] = f64::INFINITY;
    assert!(eig_sym(&a).is_err());
    assert!(sym_psd_sqrt(&a).is_err());
}
