use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::GaussianMnSpec;
use crate::error::{Error, Result};
use crate::model::SampleMatrix;

/// Proposals allowed before rejection sampling gives up.
pub const MAX_PROPOSALS: usize = 10_000_000;
/// Proposals inspected before the acceptance rate is checked.
const PILOT_PROPOSALS: usize = 100_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Draws `N(0, Θ⁻¹)` by solving `Lᵀ x = z` with `Θ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    upper: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(spec: &GaussianMnSpec) -> Result<Self> {
        Self::from_precision(spec.precision())
    }

    pub fn from_precision(precision: DMatrix<f64>) -> Result<Self> {
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        Ok(Self {
            upper: chol.l().transpose(),
        })
    }

    pub fn m(&self) -> usize {
        self.upper.nrows()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.m(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.upper
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleMatrix> {
        let rows: Vec<DVector<f64>> = (0..n).map(|_| self.draw(rng)).collect();
        to_matrix(&rows, self.m())
    }

    /// Rejection sampler for the ball `‖x‖ ≤ radius`. Returns the samples and
    /// the number of proposals used.
    pub fn sample_in_ball<R: Rng + ?Sized>(
        &self,
        radius: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<(SampleMatrix, usize)> {
        if !(radius > 0.0) {
            return Err(Error::Config("truncation radius must be positive".into()));
        }
        let r2 = radius * radius;
        let mut rows = Vec::with_capacity(n);
        let mut proposals = 0usize;
        while rows.len() < n {
            if proposals >= MAX_PROPOSALS {
                return Err(Error::Sampler(format!(
                    "only {} of {n} samples inside radius {radius} after {MAX_PROPOSALS} proposals",
                    rows.len()
                )));
            }
            if proposals == PILOT_PROPOSALS
                && (rows.len() as f64) / (proposals as f64) <= MIN_ACCEPTANCE
            {
                return Err(Error::Sampler(format!(
                    "acceptance rate {:.2e} inside radius {radius} is below {MIN_ACCEPTANCE}",
                    rows.len() as f64 / proposals as f64
                )));
            }
            proposals += 1;
            let x = self.draw(rng);
            if x.norm_squared() <= r2 {
                rows.push(x);
            }
        }
        Ok((to_matrix(&rows, self.m())?, proposals))
    }
}

fn to_matrix(rows: &[DVector<f64>], m: usize) -> Result<SampleMatrix> {
    SampleMatrix::new(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

/// `n` i.i.d. draws from the zero-mean Gaussian network.
pub fn sample_gaussian<R: Rng + ?Sized>(
    spec: &GaussianMnSpec,
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    GaussianSampler::new(spec)?.sample(n, rng)
}

/// `n` draws from the Gaussian network restricted to `‖x‖ ≤ radius`.
pub fn sample_truncated_gaussian<R: Rng + ?Sized>(
    spec: &GaussianMnSpec,
    radius: f64,
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    Ok(GaussianSampler::new(spec)?.sample_in_ball(radius, n, rng)?.0)
}
