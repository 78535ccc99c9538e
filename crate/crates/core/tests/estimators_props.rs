use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tlab_core::debias::{tune_validation, validation_surface, DebiasGrid};
use tlab_core::estimators::*;
use tlab_core::linalg::{pseudoinverse, spd_solve, DenseMatrix, Vector};
use tlab_core::stats::McEstimate;
use tlab_core::taskmodel::{
    gen_dataset, gram_sum, standard_normal_matrix, standard_normal_vector, CovarianceSpec, Dataset,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Problem {
    x: DenseMatrix,
    y: Vector,
    pretrained: Vec<LinearPredictor>,
    relations: Vec<DenseMatrix>,
}

fn problem(n: usize, d: usize, m: usize, seed: u64) -> Problem {
    let mut g = rng(seed);
    let x = standard_normal_matrix(n, d, &mut g);
    let y = standard_normal_vector(n, &mut g);
    let pretrained = (0..m)
        .map(|_| LinearPredictor::new(standard_normal_vector(d, &mut g)).unwrap())
        .collect();
    let relations = (0..m)
        .map(|_| DenseMatrix::identity(d, d) + standard_normal_matrix(d, d, &mut g) * 0.3)
        .collect();
    Problem {
        x,
        y,
        pretrained,
        relations,
    }
}

fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transfer_objective_is_minimized(n in 2usize..12, d in 1usize..8, m in 1usize..4, alpha in 1e-3f64..10.0, seed in 0u64..500) {
        let p = problem(n, d, m, seed);
        let fit = fit_transfer(&p.x, &p.y, &p.pretrained, &p.relations, alpha, n).unwrap();
        let b = &fit.predictor.coef;
        // Gradient of the objective: −2Xᵀ(y − Xb) + 2nα Σ H̃ᵀ(H̃b − θ̂).
        let mut grad = -(p.x.tr_mul(&(&p.y - &p.x * b))) * 2.0;
        for (h, t) in p.relations.iter().zip(&p.pretrained) {
            grad += h.tr_mul(&(h * b - &t.coef)) * (2.0 * n as f64 * alpha);
        }
        let scale = p.x.tr_mul(&p.y).norm() + 1.0;
        prop_assert!(grad.norm() < 1e-6 * scale);
        let f0 = transfer_objective(&p.x, &p.y, &p.pretrained, &p.relations, alpha, n, b);
        let mut g = rng(seed + 1);
        for _ in 0..10 {
            let delta = standard_normal_vector(d, &mut g) * 1e-3;
            let f1 = transfer_objective(&p.x, &p.y, &p.pretrained, &p.relations, alpha, n, &(b + delta));
            prop_assert!(f1 >= f0 - 1e-12 * f0.abs());
        }
    }

    #[test]
    fn tikhonov_augmented_equivalence(n in 2usize..12, d in 1usize..8, m in 1usize..4, alpha in 1e-2f64..5.0, lambda in 1e-2f64..5.0, seed in 0u64..500) {
        let p = problem(n, d, m, seed);
        let na = n as f64 * alpha;
        // Minimizer of the objective plus λ Σ‖H̃_j b‖².
        let r2 = gram_sum(&p.relations).unwrap();
        let a = p.x.tr_mul(&p.x) + &r2 * (na + lambda);
        let rhs = p.x.tr_mul(&p.y) + pretrained_pull(&p.pretrained, &p.relations) * na;
        let direct = spd_solve(&a, &rhs).unwrap();
        let nu = 1.0 + lambda / na;
        let a_star = n as f64 * alpha * alpha / (na + lambda);
        let scaled: Vec<DenseMatrix> = p.relations.iter().map(|h| h * nu).collect();
        let fit = fit_transfer(&p.x, &p.y, &p.pretrained, &scaled, a_star, n).unwrap();
        prop_assert!(rel_diff(&fit.predictor.coef, &direct) < 1e-8);
    }

    #[test]
    fn scalar_relations_permutation_invariant(n in 2usize..10, d in 1usize..8, m in 2usize..5, c in 0.1f64..2.0, seed in 0u64..500) {
        let p = problem(n, d, m, seed);
        let rel = vec![DenseMatrix::identity(d, d) * c; m];
        let a = fit_transfer(&p.x, &p.y, &p.pretrained, &rel, 0.3, n).unwrap();
        let mut rev = p.pretrained.clone();
        rev.reverse();
        let b = fit_transfer(&p.x, &p.y, &rev, &rel, 0.3, n).unwrap();
        prop_assert!(rel_diff(&a.predictor.coef, &b.predictor.coef) < 1e-12);
    }

    #[test]
    fn penalty_path_matches_closed_form(n in 1usize..14, d in 1usize..10, m in 1usize..4, alpha in 1e-4f64..100.0, seed in 0u64..500) {
        let p = problem(n, d, m, seed);
        let nf = n as f64;
        // General relations.
        let r2 = gram_sum(&p.relations).unwrap();
        let t0 = pretrained_pull(&p.pretrained, &p.relations);
        let path = PenaltyPath::new(&p.x, &p.y, Some(&r2), &t0).unwrap();
        let fit = fit_transfer(&p.x, &p.y, &p.pretrained, &p.relations, alpha, n).unwrap();
        let coef = path.coef(nf * alpha, nf * alpha);
        prop_assert!(rel_diff(&coef, &fit.predictor.coef) < 1e-7);
        let xv = standard_normal_matrix(5, d, &mut rng(seed + 2));
        let pred = path.predict(&path.design(&xv), nf * alpha, nf * alpha);
        prop_assert!(rel_diff(&pred, &(&xv * &fit.predictor.coef)) < 1e-7);
        // Scaled identity relations through the R0² = I path.
        let rho = 0.4;
        let rel = vec![DenseMatrix::identity(d, d) * rho; m];
        let mut sum = Vector::zeros(d);
        for t in &p.pretrained {
            sum += &t.coef;
        }
        let path = PenaltyPath::new(&p.x, &p.y, None, &sum).unwrap();
        let fit = fit_transfer(&p.x, &p.y, &p.pretrained, &rel, alpha, n).unwrap();
        let coef = path.coef(nf * alpha * m as f64 * rho * rho, nf * alpha * rho);
        prop_assert!(rel_diff(&coef, &fit.predictor.coef) < 1e-7);
    }

    #[test]
    fn tikhonov_scaled_identity_is_ridge(n in 2usize..10, d in 1usize..8, a in 0.1f64..3.0, alpha in 1e-2f64..5.0, seed in 0u64..500) {
        let p = problem(n, d, 1, seed);
        let t = fit_tikhonov(&p.x, &p.y, &(DenseMatrix::identity(d, d) * a), alpha, n).unwrap();
        let r = fit_ridge(&p.x, &p.y, alpha * a * a, n).unwrap();
        prop_assert!(rel_diff(&t.coef, &r.coef) < 1e-10);
    }

    #[test]
    fn tikhonov_is_transfer_with_zero_pretrained(n in 2usize..10, d in 1usize..8, m in 1usize..4, alpha in 1e-2f64..5.0, seed in 0u64..500) {
        let p = problem(n, d, m, seed);
        let r2 = gram_sum(&p.relations).unwrap();
        let r = tlab_core::linalg::sym_psd_sqrt(&r2).unwrap();
        let zeros = vec![null_predictor(d); m];
        let t = fit_tikhonov(&p.x, &p.y, &r, alpha, n).unwrap();
        let f = fit_transfer(&p.x, &p.y, &zeros, &p.relations, alpha, n).unwrap();
        prop_assert!(rel_diff(&t.coef, &f.predictor.coef) < 1e-8);
    }
}

#[test]
fn min_norm_exact_recovery() {
    let mut g = rng(1);
    let theta = standard_normal_vector(6, &mut g);
    for rows in [6usize, 20] {
        let z = standard_normal_matrix(rows, 6, &mut g);
        let v = &z * &theta;
        let p = fit_min_norm_ls(&z, &v).unwrap();
        assert!((&p.coef - &theta).norm() < 1e-8);
    }
}

#[test]
fn min_norm_wide_interpolates_in_row_space() {
    let mut g = rng(2);
    let z = standard_normal_matrix(4, 10, &mut g);
    let v = standard_normal_vector(4, &mut g);
    let p = fit_min_norm_ls(&z, &v).unwrap();
    assert!((&v - &z * &p.coef).norm() < 1e-8);
    let row_proj = pseudoinverse(&z).unwrap() * &z;
    assert!((&row_proj * &p.coef - &p.coef).norm() < 1e-8);
    assert!(fit_min_norm_ls(&z, &Vector::zeros(3)).is_err());
}

#[test]
fn ridge_limits() {
    let p = problem(30, 5, 1, 3);
    let big = fit_ridge(&p.x, &p.y, 1e9, 30).unwrap();
    assert!(big.coef.norm() <= p.x.tr_mul(&p.y).norm() / (30.0 * 1e9) * (1.0 + 1e-9));
    let tiny = fit_ridge(&p.x, &p.y, 1e-12, 30).unwrap();
    let ls = fit_min_norm_ls(&p.x, &p.y).unwrap();
    assert!((&tiny.coef - &ls.coef).norm() < 1e-6);
}

#[test]
fn transfer_reduces_to_ridge() {
    let p = problem(8, 5, 1, 4);
    let eye = vec![DenseMatrix::identity(5, 5)];
    let zero = vec![null_predictor(5)];
    let t = fit_transfer(&p.x, &p.y, &zero, &eye, 0.7, 8).unwrap();
    let r = fit_ridge(&p.x, &p.y, 0.7, 8).unwrap();
    assert!(rel_diff(&t.predictor.coef, &r.coef) < 1e-12);
    assert_eq!(t.alpha, 0.7);
    assert_eq!(t.assumed_relations.len(), 1);
}

#[test]
fn transfer_ridgeless_limit_underparameterized() {
    let p = problem(40, 6, 2, 5);
    let t = fit_transfer(&p.x, &p.y, &p.pretrained, &p.relations, 1e-10, 40).unwrap();
    let ls = fit_min_norm_ls(&p.x, &p.y).unwrap();
    assert!((&t.predictor.coef - &ls.coef).norm() < 1e-5);
}

#[test]
fn mismatched_lists_rejected() {
    let p = problem(5, 3, 2, 6);
    assert!(fit_transfer(&p.x, &p.y, &p.pretrained, &p.relations[..1], 0.1, 5).is_err());
}

#[test]
fn null_and_analytic_errors() {
    let d = 3;
    assert_eq!(null_predictor(d).coef, Vector::zeros(d));
    let beta = Vector::from_vec(vec![1.0, 2.0, 0.5]);
    let e = test_error_analytic(&null_predictor(d), &beta, &DenseMatrix::identity(d, d), 0.1).unwrap();
    assert!((e - (0.1 + beta.norm_squared())).abs() < 1e-15);
    let mut off = beta.clone();
    off[0] += 1.0;
    let p = LinearPredictor::new(off).unwrap();
    let e = test_error_analytic(&p, &beta, &DenseMatrix::identity(d, d), 0.1).unwrap();
    assert!((e - 1.1).abs() < 1e-15);
    let perfect = LinearPredictor::new(beta.clone()).unwrap();
    assert_eq!(test_error_analytic(&perfect, &beta, &DenseMatrix::identity(d, d), 0.1).unwrap(), 0.1);
}

#[test]
fn mc_error_matches_analytic() {
    let d = 8;
    let mut g = rng(7);
    let beta = standard_normal_vector(d, &mut g);
    let pred = LinearPredictor::new(standard_normal_vector(d, &mut g)).unwrap();
    let cov = CovarianceSpec::ExpDecay { rate: 0.5 };
    let test = gen_dataset(&beta, cov, 0.2, 100_000, &mut g).unwrap();
    let sq: Vec<f64> = (&test.inputs * &pred.coef - &test.outputs)
        .iter()
        .map(|r| r * r)
        .collect();
    let est = McEstimate::from_samples(&sq);
    assert!((est.mean - test_error_mc(&pred, &test).unwrap()).abs() < 1e-12);
    let sigma_x = tlab_core::taskmodel::build_covariance(cov, d).unwrap();
    let analytic = test_error_analytic(&pred, &beta, &sigma_x, 0.2).unwrap();
    assert!(est.z_score(analytic) < 3.0, "{est:?} vs {analytic}");
}

#[test]
fn mc_error_trivial_cases() {
    let zero = Dataset::new(DenseMatrix::from_element(4, 2, 1.0), Vector::zeros(4)).unwrap();
    assert_eq!(test_error_mc(&null_predictor(2), &zero).unwrap(), 0.0);
    let beta = Vector::from_vec(vec![1.0, -1.0]);
    let clean = gen_dataset(&beta, CovarianceSpec::Identity, 0.0, 10, &mut rng(8)).unwrap();
    let p = LinearPredictor::new(beta).unwrap();
    assert!(test_error_mc(&p, &clean).unwrap() < 1e-28);
}

#[test]
fn nonfinite_coef_rejected() {
    assert!(LinearPredictor::new(Vector::from_vec(vec![f64::NAN])).is_err());
}

#[test]
fn tune_validation_is_exhaustive_minimum() {
    let d = 10;
    let mut g = rng(10);
    let beta = standard_normal_vector(d, &mut g) * 0.3;
    let train = gen_dataset(&beta, CovarianceSpec::Identity, 0.1, 6, &mut g).unwrap();
    let val = gen_dataset(&beta, CovarianceSpec::Identity, 0.1, 200, &mut g).unwrap();
    let pretrained: Vec<LinearPredictor> = (0..4)
        .map(|_| LinearPredictor::new(&beta * 0.4 + standard_normal_vector(d, &mut g) * 0.05).unwrap())
        .collect();
    let grids = DebiasGrid::new(vec![0.01, 0.1, 1.0, 10.0], vec![0.2, 0.4, 1.0, 1.3]).unwrap();
    let sel = tune_validation(&train, &val, &pretrained, &grids, 6).unwrap();
    // Recompute every pair with the closed form.
    let mut best = f64::INFINITY;
    for &r in &grids.rho_grid {
        for &a in &grids.alpha_grid {
            let rel = vec![DenseMatrix::identity(d, d) * r; pretrained.len()];
            let f = fit_transfer(&train.inputs, &train.outputs, &pretrained, &rel, a, 6).unwrap();
            let e = mse(&f.predictor.predict(&val.inputs), &val.outputs);
            best = best.min(e);
        }
    }
    assert!((sel.val_error - best).abs() < 1e-10 * best);
    let surface = validation_surface(&train, &val, &pretrained, &grids, 6).unwrap();
    assert_eq!(surface.len(), 16);
    // Joint tuning is no worse than α-only tuning at ρ̃ = 1.
    let rho_one = grids.rho_grid.iter().position(|&r| r == 1.0).unwrap();
    let alpha_only = surface[rho_one * 4..rho_one * 4 + 4]
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(sel.val_error <= alpha_only);
    // Single-element grids.
    let one = DebiasGrid::new(vec![0.5], vec![0.7]).unwrap();
    let s = tune_validation(&train, &val, &pretrained, &one, 6).unwrap();
    assert_eq!((s.alpha, s.rho), (0.5, 0.7));
    // Determinism.
    let again = tune_validation(&train, &val, &pretrained, &grids, 6).unwrap();
    assert_eq!((again.alpha, again.rho), (sel.alpha, sel.rho));
}
