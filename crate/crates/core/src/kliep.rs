//! KLIEP loss and its derivatives.
//!
//! ```text
//!   ℓ(θ) = −(1/n_p) Σ_i ⟨θ, f(x_p⁽ⁱ⁾)⟩ + log( (1/n_q) Σ_j exp⟨θ, f(x_q⁽ʲ⁾)⟩ )
//! ```
//!
//! The gradient is the gap between the ratio-weighted Q feature mean and the
//! plain P feature mean; the Hessian is the ratio-weighted covariance of the
//! Q features.
//!
//! For Gaussian networks the quadratic feature map `ψ(a, b) = a·b` reproduces
//! the precision-difference model `exp(−½ xᵀΔx)`: off-diagonal blocks hold
//! `θ_{u,v} = −Δ_{u,v}` and diagonal blocks hold `θ_{u,u} = −½ Δ_{u,u}`. Only
//! `θ` is stored; `Δ` never appears in the API.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    featurize, log_sum_exp, FeatureMap, FeatureTensor, PairIndex, ParameterVector, SampleMatrix,
};

/// Largest parameter dimension for which the Hessian is materialized.
pub const MAX_DENSE_DIM: usize = 5000;

/// Featurized P and Q samples with the cached P feature mean.
#[derive(Debug, Clone)]
pub struct KliepProblem {
    p_features: FeatureTensor,
    q_features: FeatureTensor,
    p_mean: DVector<f64>,
    fmap: FeatureMap,
}

impl KliepProblem {
    pub fn new(p: &SampleMatrix, q: &SampleMatrix, fmap: FeatureMap) -> Result<Self> {
        if p.m() != q.m() {
            return Err(Error::Dimension(format!(
                "P has {} columns, Q has {}",
                p.m(),
                q.m()
            )));
        }
        let p_features = featurize(p, &fmap)?;
        let q_features = featurize(q, &fmap)?;
        Self::from_features(p_features, q_features, fmap)
    }

    pub fn from_features(
        p_features: FeatureTensor,
        q_features: FeatureTensor,
        fmap: FeatureMap,
    ) -> Result<Self> {
        if p_features.m() != q_features.m() || p_features.b() != q_features.b() {
            return Err(Error::Dimension(
                "P and Q features disagree on m or b".into(),
            ));
        }
        if fmap.dim() != p_features.b() {
            return Err(Error::Dimension(format!(
                "feature map dimension {} against tensors with b = {}",
                fmap.dim(),
                p_features.b()
            )));
        }
        let p_mean = p_features.mean();
        Ok(Self {
            p_features,
            q_features,
            p_mean,
            fmap,
        })
    }

    pub fn m(&self) -> usize {
        self.p_features.m()
    }

    pub fn b(&self) -> usize {
        self.p_features.b()
    }

    pub fn dim(&self) -> usize {
        self.p_features.dim()
    }

    pub fn n_p(&self) -> usize {
        self.p_features.n()
    }

    pub fn n_q(&self) -> usize {
        self.q_features.n()
    }

    pub fn p_features(&self) -> &FeatureTensor {
        &self.p_features
    }

    pub fn q_features(&self) -> &FeatureTensor {
        &self.q_features
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.fmap
    }

    pub fn zero_parameter(&self) -> ParameterVector {
        ParameterVector::zeros(self.m(), self.b())
    }

    fn check(&self, theta: &ParameterVector) -> Result<()> {
        theta.check_compatible(self.m(), self.b())
    }

    /// Q scores `⟨θ, f(x_q⁽ʲ⁾)⟩` and the empirical log normalizer.
    fn q_scores(&self, theta: &DVector<f64>) -> (DVector<f64>, f64) {
        let scores = self.q_features.matrix() * theta;
        let log_norm = log_sum_exp(scores.as_slice()) - (self.n_q() as f64).ln();
        (scores, log_norm)
    }

    pub fn loss(&self, theta: &ParameterVector) -> Result<f64> {
        self.check(theta)?;
        Ok(self.loss_flat(theta.as_vector()))
    }

    pub fn gradient(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        self.check(theta)?;
        let (_, g) = self.loss_and_gradient_flat(theta.as_vector());
        ParameterVector::from_flat(self.m(), self.b(), g)
    }

    pub fn loss_and_gradient(&self, theta: &ParameterVector) -> Result<(f64, ParameterVector)> {
        self.check(theta)?;
        let (l, g) = self.loss_and_gradient_flat(theta.as_vector());
        Ok((l, ParameterVector::from_flat(self.m(), self.b(), g)?))
    }

    pub(crate) fn loss_flat(&self, theta: &DVector<f64>) -> f64 {
        let (_, log_norm) = self.q_scores(theta);
        -self.p_mean.dot(theta) + log_norm
    }

    pub(crate) fn loss_and_gradient_flat(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let (scores, log_norm) = self.q_scores(theta);
        let weights = normalized_weights(&scores);
        let mut grad = self.q_features.matrix().tr_mul(&weights);
        grad -= &self.p_mean;
        (-self.p_mean.dot(theta) + log_norm, grad)
    }

    /// Importance weights `r̂(x_q⁽ʲ⁾; θ) / n_q`, renormalized to sum to one.
    pub fn ratio_weights(&self, theta: &ParameterVector) -> Result<DVector<f64>> {
        self.check(theta)?;
        let (scores, _) = self.q_scores(theta.as_vector());
        Ok(normalized_weights(&scores))
    }

    /// Empirical ratios `r̂(x_q⁽ʲ⁾; θ)` over the Q sample; they average to one.
    pub fn q_ratios(&self, theta: &ParameterVector) -> Result<DVector<f64>> {
        Ok(self.ratio_weights(theta)? * self.n_q() as f64)
    }

    /// Empirical ratios evaluated at the P samples.
    pub fn p_ratios(&self, theta: &ParameterVector) -> Result<DVector<f64>> {
        self.check(theta)?;
        let (_, log_norm) = self.q_scores(theta.as_vector());
        let p_scores = self.p_features.matrix() * theta.as_vector();
        Ok(p_scores.map(|s| (s - log_norm).exp()))
    }

    /// Sample Fisher information: the ratio-weighted covariance of `f` over Q.
    pub fn hessian(&self, theta: &ParameterVector) -> Result<FisherInfo> {
        self.check(theta)?;
        let k = self.dim();
        if k > MAX_DENSE_DIM {
            return Err(Error::TooLarge {
                cols: k,
                limit: MAX_DENSE_DIM,
            });
        }
        let weights = self.ratio_weights(theta)?;
        let f = self.q_features.matrix();
        let mut scaled = f.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= weights[i].sqrt();
        }
        let mean = f.tr_mul(&weights);
        let mut h = scaled.tr_mul(&scaled);
        h.ger(-1.0, &mean, &mean, 1.0);
        // exact symmetry
        for i in 0..k {
            for j in 0..i {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        Ok(FisherInfo {
            m: self.m(),
            b: self.b(),
            matrix: h,
        })
    }
}

/// Softmax of the scores, computed with max subtraction.
fn normalized_weights(scores: &DVector<f64>) -> DVector<f64> {
    let max = scores.max();
    let mut w = scores.map(|s| (s - max).exp());
    let total: f64 = w.iter().sum();
    w /= total;
    w
}

/// Hessian of the KLIEP loss, indexed by flattened parameters.
#[derive(Debug, Clone)]
pub struct FisherInfo {
    m: usize,
    b: usize,
    matrix: DMatrix<f64>,
}

impl FisherInfo {
    /// Wraps a symmetric matrix indexed by flattened `(pair, component)`.
    pub fn from_matrix(m: usize, b: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let k = crate::model::pair_count(m) * b;
        if matrix.shape() != (k, k) {
            return Err(Error::Dimension(format!(
                "Fisher information must be {k} × {k}, got {:?}",
                matrix.shape()
            )));
        }
        Ok(Self { m, b, matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> usize {
        self.b
    }

    fn indices(&self, pairs: &[PairIndex]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(pairs.len() * self.b);
        for p in pairs {
            let g = p.flat(self.m)?;
            out.extend(g * self.b..(g + 1) * self.b);
        }
        Ok(out)
    }

    /// All `b × b` blocks for the requested row and column pairs, in order.
    pub fn submatrix(&self, rows: &[PairIndex], cols: &[PairIndex]) -> Result<DMatrix<f64>> {
        let r = self.indices(rows)?;
        let c = self.indices(cols)?;
        Ok(DMatrix::from_fn(r.len(), c.len(), |i, j| self.matrix[(r[i], c[j])]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pair_count;

    fn problem(p: &[&[f64]], q: &[&[f64]]) -> KliepProblem {
        let to = |rows: &[&[f64]]| {
            SampleMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
        };
        KliepProblem::new(&to(p), &to(q), FeatureMap::quadratic()).unwrap()
    }

    #[test]
    fn loss_vanishes_at_zero() {
        let pr = problem(&[&[1.0, 2.0], &[0.5, -1.0]], &[&[0.3, 0.1], &[2.0, 1.0]]);
        assert_eq!(pr.loss(&pr.zero_parameter()).unwrap(), 0.0);
    }

    #[test]
    fn single_identical_samples_cancel() {
        let pr = problem(&[&[1.3, -0.7]], &[&[1.3, -0.7]]);
        let theta = ParameterVector::from_flat(2, 1, DVector::from_vec(vec![0.4, -2.0, 1.1]))
            .unwrap();
        assert!(pr.loss(&theta).unwrap().abs() < 1e-14);
    }

    #[test]
    fn loss_matches_scalar_evaluation() {
        // P feature for (1,0) averages to 1.0; single Q sample
        let pr = problem(&[&[1.0, 2.0], &[1.0, 0.0]], &[&[0.5, 3.0]]);
        let t = 0.37;
        let mut theta = pr.zero_parameter();
        theta.set_pair(PairIndex::new(1, 0), &[t]).unwrap();
        let expected = -t * 1.0 + t * 0.5 * 3.0;
        assert!((pr.loss(&theta).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn gradient_at_zero_is_mean_gap() {
        let pr = problem(
            &[&[1.0, 2.0], &[0.5, -1.0], &[0.0, 1.0]],
            &[&[0.3, 0.1], &[2.0, 1.0]],
        );
        let g = pr.gradient(&pr.zero_parameter()).unwrap();
        let gap = pr.q_features().mean() - pr.p_features().mean();
        assert!((g.as_vector() - gap).amax() < 1e-15);

        let same = problem(&[&[1.0, 2.0], &[0.5, -1.0]], &[&[1.0, 2.0], &[0.5, -1.0]]);
        assert_eq!(same.gradient(&same.zero_parameter()).unwrap().as_vector().amax(), 0.0);
    }

    #[test]
    fn hessian_at_zero_is_plain_covariance() {
        let pr = problem(&[&[1.0, 2.0]], &[&[0.3, 0.1], &[2.0, 1.0], &[-1.0, 0.5]]);
        let h = pr.hessian(&pr.zero_parameter()).unwrap();
        let f = pr.q_features().matrix();
        let mean = pr.q_features().mean();
        let n = f.nrows() as f64;
        for a in 0..3 {
            for b in 0..3 {
                let cov: f64 = (0..f.nrows())
                    .map(|i| (f[(i, a)] - mean[a]) * (f[(i, b)] - mean[b]))
                    .sum::<f64>()
                    / n;
                assert!((h.matrix()[(a, b)] - cov).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hessian_single_q_sample_is_zero() {
        let pr = problem(&[&[1.0, 2.0]], &[&[0.3, 0.1]]);
        let theta = ParameterVector::from_flat(2, 1, DVector::from_vec(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert!(pr.hessian(&theta).unwrap().matrix().amax() < 1e-15);
    }

    #[test]
    fn hessian_size_guard() {
        // m = 100 gives 5050 parameters
        let rows: Vec<Vec<f64>> = vec![(0..100).map(|i| i as f64 * 0.01).collect()];
        let s = SampleMatrix::from_rows(&rows).unwrap();
        let pr = KliepProblem::new(&s, &s, FeatureMap::quadratic()).unwrap();
        assert!(matches!(
            pr.hessian(&pr.zero_parameter()),
            Err(Error::TooLarge { cols: 5050, .. })
        ));
    }

    #[test]
    fn submatrix_extraction() {
        let pr = problem(&[&[1.0, 2.0]], &[&[0.3, 0.1], &[2.0, 1.0], &[-1.0, 0.5]]);
        let h = pr.hessian(&pr.zero_parameter()).unwrap();
        let all = crate::model::all_pairs(2);
        assert_eq!(h.submatrix(&all, &all).unwrap(), *h.matrix());
        let one = [PairIndex::new(1, 0)];
        assert_eq!(h.submatrix(&one, &one).unwrap()[(0, 0)], h.matrix()[(1, 1)]);
        let s = [PairIndex::new(1, 1), PairIndex::new(0, 0)];
        let sub = h.submatrix(&s, &s).unwrap();
        assert_eq!(sub[(0, 0)], h.matrix()[(2, 2)]);
        assert_eq!(sub[(0, 1)], h.matrix()[(2, 0)]);
        assert_eq!(sub[(1, 0)], h.matrix()[(0, 2)]);
        assert_eq!(sub[(1, 1)], h.matrix()[(0, 0)]);
        assert!(h.submatrix(&[PairIndex::new(2, 0)], &one).is_err());
        assert_eq!(pair_count(2), 3);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let pr = problem(&[&[1.0, 2.0]], &[&[0.3, 0.1]]);
        assert!(pr.loss(&ParameterVector::zeros(3, 1)).is_err());
        let a = SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = SampleMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(KliepProblem::new(&a, &b, FeatureMap::quadratic()).is_err());
    }
}
