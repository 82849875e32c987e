mod common;

use common::oracle;
use mnchange::{FeatureMap, ParameterVector};
use nalgebra::DVector;
use proptest::prelude::*;

const STEP: f64 = 1e-5;

fn feature_map(b: usize) -> FeatureMap {
    if b == 1 {
        FeatureMap::quadratic()
    } else {
        oracle::cubic_features()
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1_000_000, m in 2usize..=5, cubic in any::<bool>()) {
        let b = if cubic { 3 } else { 1 };
        let fmap = feature_map(b);
        let (p, q) = oracle::random_samples(seed, m, 30, 25);
        let pr = oracle::problem(&p, &q, &fmap);
        let theta = oracle::random_theta(seed ^ 1, pr.dim(), 0.4);
        let tv = ParameterVector::from_flat(m, b, theta.clone()).unwrap();
        let g = pr.gradient(&tv).unwrap().into_vector();

        let fd = DVector::from_fn(pr.dim(), |j, _| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += STEP;
            dn[j] -= STEP;
            let l = |t: DVector<f64>| pr.loss(&ParameterVector::from_flat(m, b, t).unwrap()).unwrap();
            (l(up) - l(dn)) / (2.0 * STEP)
        });
        prop_assert!(rel(&g, &fd) < 1e-6, "relative error {}", rel(&g, &fd));

        // the naive definition agrees with both
        let fp = oracle::feature_rows(&p, &fmap);
        let fq = oracle::feature_rows(&q, &fmap);
        let naive = DVector::from_vec(oracle::gradient(&fp, &fq, theta.as_slice()));
        prop_assert!((&naive - &g).amax() < 1e-12);
        let naive_loss = oracle::loss(&fp, &fq, theta.as_slice());
        prop_assert!((naive_loss - pr.loss(&tv).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_gradient_differences_and_laplacian(seed in 0u64..1_000_000, m in 2usize..=5, cubic in any::<bool>()) {
        let b = if cubic { 3 } else { 1 };
        let fmap = feature_map(b);
        let (p, q) = oracle::random_samples(seed, m, 30, 20);
        let pr = oracle::problem(&p, &q, &fmap);
        let theta = oracle::random_theta(seed ^ 2, pr.dim(), 0.4);
        let h = pr.hessian(&ParameterVector::from_flat(m, b, theta.clone()).unwrap()).unwrap();
        let h = h.matrix();

        let grad = |t: DVector<f64>| pr.gradient(&ParameterVector::from_flat(m, b, t).unwrap()).unwrap().into_vector();
        for j in 0..pr.dim() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += STEP;
            dn[j] -= STEP;
            let col = (grad(up) - grad(dn)) / (2.0 * STEP);
            let exact = h.column(j).into_owned();
            prop_assert!((&exact - &col).norm() <= 1e-5 * exact.norm().max(1.0), "column {j}");
        }

        let fq = oracle::feature_rows(&q, &fmap);
        let lap = oracle::laplacian_hessian(&fq, theta.as_slice());
        prop_assert!((h - &lap).amax() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ratios_self_normalize_over_q(seed in 0u64..1_000_000, scale in 0.01f64..3.0) {
        let (p, q) = oracle::random_samples(seed % 17, 4, 20, 40);
        let pr = oracle::problem(&p, &q, &FeatureMap::quadratic());
        let theta = oracle::random_theta(seed, pr.dim(), scale);
        let r = pr.q_ratios(&ParameterVector::from_flat(4, 1, theta).unwrap()).unwrap();
        prop_assert!((r.mean() - 1.0).abs() < 1e-10);
        prop_assert!(r.iter().all(|x| *x > 0.0));
    }
}

#[test]
fn large_scores_do_not_overflow() {
    let (p, q) = oracle::random_samples(3, 3, 10, 10);
    let pr = oracle::problem(&p, &q, &FeatureMap::quadratic());
    let theta = ParameterVector::from_flat(3, 1, DVector::from_element(pr.dim(), 400.0)).unwrap();
    let l = pr.loss(&theta).unwrap();
    assert!(l.is_finite());
    let r = pr.q_ratios(&theta).unwrap();
    assert!((r.mean() - 1.0).abs() < 1e-10);
    assert!(pr.hessian(&theta).unwrap().matrix().iter().all(|v| v.is_finite()));
}

#[test]
fn hessian_is_positive_semidefinite() {
    for seed in 0..5 {
        let (p, q) = oracle::random_samples(seed, 4, 30, 30);
        let pr = oracle::problem(&p, &q, &oracle::cubic_features());
        let theta = oracle::random_theta(seed, pr.dim(), 0.3);
        let h = pr.hessian(&ParameterVector::from_flat(4, 3, theta).unwrap()).unwrap();
        let eig = h.matrix().clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-10);
    }
}
