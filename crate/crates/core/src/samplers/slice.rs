use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::EightShapedSpec;
use crate::error::{Error, Result};
use crate::model::{saturating_quartic, SampleMatrix};

/// Shrinkage steps allowed before a slice is declared collapsed.
const MAX_SHRINKS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// Full sweeps discarded before the first kept sample.
    pub burn_in: usize,
    /// Full sweeps between kept samples.
    pub thin: usize,
    pub width: f64,
    pub max_steps: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thin: 5,
            width: 1.0,
            max_steps: 50,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("slice thinning must be at least 1".into()));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::Config("slice width must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("slice max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One univariate slice-sampling update with stepping out and shrinkage.
/// `logf(x0)` must be finite. Returns `None` when the slice collapses.
pub fn slice_step<F, R>(x0: f64, logf: F, width: f64, max_steps: usize, rng: &mut R) -> Option<f64>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let y = logf(x0) - rng.sample::<f64, _>(Exp1);
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut j = (max_steps as f64 * rng.random::<f64>()).floor() as usize;
    let mut k = (max_steps - 1).saturating_sub(j);
    while j > 0 && logf(lo) > y {
        lo -= width;
        j -= 1;
    }
    while k > 0 && logf(hi) > y {
        hi += width;
        k -= 1;
    }
    for _ in 0..MAX_SHRINKS {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        if logf(x1) > y {
            return Some(x1);
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    None
}

/// Coordinate-wise slice sampler for the eight-shaped network, started at
/// the origin.
pub fn sample_slice<R: Rng + ?Sized>(
    spec: &EightShapedSpec,
    n: usize,
    cfg: &SliceConfig,
    rng: &mut R,
) -> Result<SampleMatrix> {
    cfg.validate()?;
    let m = spec.m();
    let nbrs = spec.graph.neighbors();
    let r2 = spec.radius * spec.radius;
    let mut x = vec![0.0; m];
    let mut sq_norm = 0.0;

    let sweep = |x: &mut Vec<f64>, sq_norm: &mut f64, rng: &mut R| -> Result<()> {
        for c in 0..m {
            // squared norm over the other coordinates
            let rest = (*sq_norm - x[c] * x[c]).max(0.0);
            let logf = |t: f64| {
                if rest + t * t > r2 {
                    return f64::NEG_INFINITY;
                }
                let pair: f64 = nbrs[c].iter().map(|&v| saturating_quartic(t, x[v])).sum();
                -spec.theta0 * t * t - spec.theta1 * pair
            };
            let t = slice_step(x[c], logf, cfg.width, cfg.max_steps, rng)
                .ok_or(Error::SliceCollapse { coordinate: c })?;
            x[c] = t;
            *sq_norm = rest + t * t;
        }
        Ok(())
    };

    for _ in 0..cfg.burn_in {
        sweep(&mut x, &mut sq_norm, rng)?;
    }
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for _ in 0..cfg.thin {
            sweep(&mut x, &mut sq_norm, rng)?;
        }
        for c in 0..m {
            out[(i, c)] = x[c];
        }
    }
    SampleMatrix::new(out)
}
