use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tlab_core::linalg::{eig_sym, DenseMatrix, Vector};
use tlab_core::stats::McEstimate;
use tlab_core::taskmodel::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shift(d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(d, d, |a, b| if b == (a + 1) % d { 1.0 } else { 0.0 })
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn circulant_commutes_with_shift(half in 2usize..20, kappa in 1.0f64..20.0) {
        let d = 2 * half;
        let h = build_relation(&TaskRelationSpec::Circulant { kappa }, d, &mut rng(0)).unwrap();
        let p = shift(d);
        prop_assert!((&h * &p - &p * &h).amax() < 1e-8);
        let eig = sorted(eig_sym(&h).unwrap().values.as_slice().to_vec());
        let want = sorted(circulant_spectrum(kappa, d));
        for (a, b) in eig.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let top = want[d - 1];
        let bottom = want[0];
        prop_assert!((top / bottom - kappa).abs() < 1e-9 * kappa);
    }

    #[test]
    fn subspace_is_projector(d in 2usize..24, frac in 0.1f64..1.0, seed in 0u64..500) {
        let r = ((d as f64 * frac).ceil() as usize).clamp(1, d - 1);
        let h = build_relation(&TaskRelationSpec::Subspace { r }, d, &mut rng(seed)).unwrap();
        prop_assert!((&h * &h - &h).amax() < 1e-10);
        prop_assert!((&h - h.transpose()).amax() < 1e-12);
        prop_assert!((h.trace() - r as f64).abs() < 1e-9);
    }

    #[test]
    fn energy_subspace_preserves_energy(d in 2usize..24, frac in 0.1f64..1.0, seed in 0u64..500) {
        let r = ((d as f64 * frac).ceil() as usize).clamp(1, d - 1);
        let h = build_relation(&TaskRelationSpec::EnergySubspace { r }, d, &mut rng(seed)).unwrap();
        prop_assert!((h.norm_squared() - d as f64).abs() < 1e-8 * d as f64);
    }

    #[test]
    fn exp_decay_is_positive_definite(d in 1usize..30, rate in 0.0f64..0.99) {
        let s = build_covariance(CovarianceSpec::ExpDecay { rate }, d).unwrap();
        let spec = eig_sym(&s).unwrap();
        prop_assert!(spec.values[d - 1] > 0.0);
    }
}

#[test]
fn circulant_unit_energy() {
    let d = 64;
    let h = build_relation(&TaskRelationSpec::Circulant { kappa: 5.0 }, d, &mut rng(0)).unwrap();
    assert!((h.norm_squared() / d as f64 - 1.0).abs() < 1e-12);
}

#[test]
fn scaled_relation() {
    let spec = TaskRelationSpec::Scaled {
        base: Box::new(TaskRelationSpec::Identity),
        factor: 0.25,
    };
    let h = build_relation(&spec, 4, &mut rng(0)).unwrap();
    assert_eq!(h, DenseMatrix::identity(4, 4) * 0.25);
    assert!(spec.is_deterministic());
    assert!(!TaskRelationSpec::Subspace { r: 2 }.is_deterministic());
}

#[test]
fn invalid_relations_rejected() {
    assert!(TaskRelationSpec::Subspace { r: 0 }.validate(8).is_err());
    assert!(TaskRelationSpec::Subspace { r: 9 }.validate(8).is_err());
    assert!(TaskRelationSpec::Circulant { kappa: 0.5 }.validate(8).is_err());
}

#[test]
fn beta_second_moment() {
    // E‖β‖² = b.
    let mut g = rng(3);
    let xs: Vec<f64> = (0..4000)
        .map(|_| sample_beta(2.0, 16, &mut g).unwrap().norm_squared())
        .collect();
    let est = McEstimate::from_samples(&xs);
    assert!(est.z_score(2.0) < 4.0, "{est:?}");
    assert!(sample_beta(0.0, 4, &mut g).is_err());
}

#[test]
fn source_theta_mean_and_noise() {
    let d = 8;
    let beta = Vector::from_element(d, 1.0);
    let h = DenseMatrix::identity(d, d) * 0.5;
    let mut g = rng(4);
    let xs: Vec<f64> = (0..4000)
        .map(|_| {
            let t = make_source_theta(&beta, &h, 0.8, d, &mut g).unwrap();
            (t - &h * &beta).norm_squared()
        })
        .collect();
    assert!(McEstimate::from_samples(&xs).z_score(0.8) < 4.0);
    assert!(make_source_theta(&beta, &DenseMatrix::identity(3, 3), 0.1, d, &mut g).is_err());
}

#[test]
fn design_covariance_matches() {
    let d = 6;
    let spec = CovarianceSpec::ExpDecay { rate: 0.5 };
    let sampler = DesignSampler::new(spec, d).unwrap();
    let x = sampler.inputs(20_000, &mut rng(5));
    let emp = x.tr_mul(&x) / 20_000.0;
    let truth = build_covariance(spec, d).unwrap();
    // Entry stderr is at most sqrt(2/N) ≈ 0.01.
    assert!((emp - truth).amax() < 0.045);
}

#[test]
fn dataset_noise_level() {
    let d = 10;
    let beta = Vector::from_element(d, 0.3);
    let ds = gen_dataset(&beta, CovarianceSpec::Identity, 0.25, 20_000, &mut rng(6)).unwrap();
    let resid = &ds.outputs - &ds.inputs * &beta;
    let var = resid.norm_squared() / resid.len() as f64;
    assert!((var - 0.25).abs() < 4.0 * 0.25 * (2.0 / 20_000f64).sqrt());
    assert!(gen_dataset(&beta, CovarianceSpec::Identity, 0.25, 0, &mut rng(6)).is_err());
}

#[test]
fn same_seed_same_data() {
    let beta = Vector::from_element(5, 1.0);
    let a = gen_dataset(&beta, CovarianceSpec::Identity, 0.1, 7, &mut rng(9)).unwrap();
    let b = gen_dataset(&beta, CovarianceSpec::Identity, 0.1, 7, &mut rng(9)).unwrap();
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.outputs, b.outputs);
}

#[test]
fn relation_gram_ratio_diagnostic() {
    let d = 6;
    let p = build_relation(&TaskRelationSpec::Subspace { r: 3 }, d, &mut rng(1)).unwrap();
    assert!(relation_gram_ratio(std::slice::from_ref(&p)).unwrap() < 1e-10);
    let q = DenseMatrix::identity(d, d) - &p;
    assert!(relation_gram_ratio(&[p, q]).unwrap() > 0.99);
}
