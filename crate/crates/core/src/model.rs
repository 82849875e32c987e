//! Pairwise log-linear density-ratio model.
//!
//! The ratio between the two densities is modelled directly as
//!
//! ```text
//!   r(x; θ) = exp( Σ_{u ≥ v} θ_{u,v}ᵀ ψ(x_u, x_v) ) / N(θ)
//! ```
//!
//! where `N(θ)` is replaced by its sample average over the Q data. Parameters
//! are grouped per node pair `(u, v)` with `u ≥ v`, diagonal pairs included,
//! and laid out in column-major lower-triangular order:
//! `(0,0), (1,0), …, (m-1,0), (1,1), …, (m-1,m-1)`.
//!
//! Node indices are zero-based throughout the crate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node pair `(u, v)` with `u ≥ v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairIndex {
    pub u: usize,
    pub v: usize,
}

impl PairIndex {
    /// Builds a pair, swapping the arguments if necessary so that `u ≥ v`.
    pub fn new(a: usize, b: usize) -> Self {
        if a >= b {
            Self { u: a, v: b }
        } else {
            Self { u: b, v: a }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.u == self.v
    }

    pub fn flat(&self, m: usize) -> Result<usize> {
        pair_index_flatten(self.u, self.v, m)
    }
}

impl fmt::Display for PairIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.u, self.v)
    }
}

/// Number of pair groups for `m` nodes.
pub fn pair_count(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Flat position of pair `(u, v)` in the column-major lower-triangular order.
pub fn pair_index_flatten(u: usize, v: usize, m: usize) -> Result<usize> {
    if v > u || u >= m {
        return Err(Error::PairOutOfRange { u, v, m });
    }
    // column v starts after v columns of lengths m, m-1, ..., m-v+1
    let start = v * m - v * v.saturating_sub(1) / 2;
    Ok(start + (u - v))
}

/// Inverse of [`pair_index_flatten`].
pub fn pair_index_unflatten(index: usize, m: usize) -> Result<PairIndex> {
    if index >= pair_count(m) {
        return Err(Error::PairOutOfRange { u: index, v: 0, m });
    }
    let mut start = 0;
    for v in 0..m {
        let len = m - v;
        if index < start + len {
            return Ok(PairIndex { u: v + index - start, v });
        }
        start += len;
    }
    unreachable!("index bounded by pair_count")
}

/// All pairs of an `m`-node model in flat order.
pub fn all_pairs(m: usize) -> Vec<PairIndex> {
    let mut out = Vec::with_capacity(pair_count(m));
    for v in 0..m {
        for u in v..m {
            out.push(PairIndex { u, v });
        }
    }
    out
}

/// All off-diagonal pairs `u > v` in flat order.
pub fn off_diagonal_pairs(m: usize) -> Vec<PairIndex> {
    all_pairs(m).into_iter().filter(|p| !p.is_diagonal()).collect()
}

type PairFn = dyn Fn(f64, f64, &mut [f64]) + Send + Sync;

/// User-supplied pairwise basis function.
#[derive(Clone)]
pub struct CustomFeature {
    name: String,
    dim: usize,
    func: Arc<PairFn>,
}

impl fmt::Debug for CustomFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFeature")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum FeatureKind {
    /// `ψ(x_u, x_v) = x_u x_v`.
    Quadratic,
    /// `ψ(x_u, x_v) = exp(-(x_u - x_v)² / bandwidth)`.
    Rbf { bandwidth: f64 },
    Custom(CustomFeature),
}

/// Pairwise basis function `ψ : R² → R^b`, shared by every pair.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
}

impl FeatureMap {
    pub fn quadratic() -> Self {
        Self {
            kind: FeatureKind::Quadratic,
        }
    }

    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!(
                "RBF bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            kind: FeatureKind::Rbf { bandwidth },
        })
    }

    /// Wraps a callable writing `dim` outputs for the pair `(x_u, x_v)`.
    pub fn custom<F>(name: impl Into<String>, dim: usize, func: F) -> Result<Self>
    where
        F: Fn(f64, f64, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::Config("custom feature dimension must be positive".into()));
        }
        Ok(Self {
            kind: FeatureKind::Custom(CustomFeature {
                name: name.into(),
                dim,
                func: Arc::new(func),
            }),
        })
    }

    /// `ψ(x_u, x_v) = s/(1 + s)` with `s = x_u² x_v²`: the bounded pairwise
    /// potential used by the non-Gaussian synthetic networks.
    pub fn saturating_quartic() -> Self {
        Self::custom("saturating-quartic", 1, |a, b, out| {
            out[0] = saturating_quartic(a, b);
        })
        .expect("dimension is positive")
    }

    /// Parses `quadratic`, `rbf:<bandwidth>` or `saturating-quartic`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "quadratic" => Ok(Self::quadratic()),
            "saturating-quartic" => Ok(Self::saturating_quartic()),
            "rbf" => Self::rbf(0.5),
            _ => {
                if let Some(bw) = name.strip_prefix("rbf:") {
                    let bw: f64 = bw
                        .parse()
                        .map_err(|_| Error::Config(format!("bad RBF bandwidth in '{name}'")))?;
                    Self::rbf(bw)
                } else {
                    Err(Error::Config(format!("unknown feature map '{name}'")))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FeatureKind::Quadratic => "quadratic".into(),
            FeatureKind::Rbf { bandwidth } => format!("rbf:{bandwidth}"),
            FeatureKind::Custom(c) => c.name.clone(),
        }
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    /// Output dimension `b` per pair.
    pub fn dim(&self) -> usize {
        match &self.kind {
            FeatureKind::Quadratic | FeatureKind::Rbf { .. } => 1,
            FeatureKind::Custom(c) => c.dim,
        }
    }

    #[inline]
    pub fn eval(&self, xu: f64, xv: f64, out: &mut [f64]) {
        match &self.kind {
            FeatureKind::Quadratic => out[0] = xu * xv,
            FeatureKind::Rbf { bandwidth } => {
                let d = xu - xv;
                out[0] = (-d * d / bandwidth).exp();
            }
            FeatureKind::Custom(c) => (c.func)(xu, xv, out),
        }
    }
}

#[inline]
pub(crate) fn saturating_quartic(a: f64, b: f64) -> f64 {
    let s = a * a * b * b;
    s / (1.0 + s)
}

/// Grouped parameter vector, one length-`b` block per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    m: usize,
    b: usize,
    values: DVector<f64>,
}

impl ParameterVector {
    pub fn zeros(m: usize, b: usize) -> Self {
        Self {
            m,
            b,
            values: DVector::zeros(b * pair_count(m)),
        }
    }

    pub fn from_flat(m: usize, b: usize, values: DVector<f64>) -> Result<Self> {
        let expected = b * pair_count(m);
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "parameter vector of length {} for m = {m}, b = {b} (expected {expected})",
                values.len()
            )));
        }
        Ok(Self { m, b, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn num_groups(&self) -> usize {
        pair_count(self.m)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_mut_vector(&mut self) -> &mut DVector<f64> {
        &mut self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn block(&self, group: usize) -> &[f64] {
        &self.values.as_slice()[group * self.b..(group + 1) * self.b]
    }

    pub fn block_mut(&mut self, group: usize) -> &mut [f64] {
        let b = self.b;
        &mut self.values.as_mut_slice()[group * b..(group + 1) * b]
    }

    pub fn pair_block(&self, pair: PairIndex) -> Result<&[f64]> {
        Ok(self.block(pair.flat(self.m)?))
    }

    pub fn set_pair(&mut self, pair: PairIndex, value: &[f64]) -> Result<()> {
        if value.len() != self.b {
            return Err(Error::Dimension(format!(
                "block of length {} for b = {}",
                value.len(),
                self.b
            )));
        }
        let g = pair.flat(self.m)?;
        self.block_mut(g).copy_from_slice(value);
        Ok(())
    }

    pub fn group_norm(&self, group: usize) -> f64 {
        self.block(group).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn group_norms(&self) -> Vec<f64> {
        (0..self.num_groups()).map(|g| self.group_norm(g)).collect()
    }

    /// Pairs whose block is not exactly zero.
    pub fn support(&self) -> Vec<PairIndex> {
        all_pairs(self.m)
            .into_iter()
            .enumerate()
            .filter(|(g, _)| self.block(*g).iter().any(|&x| x != 0.0))
            .map(|(_, p)| p)
            .collect()
    }

    pub fn check_compatible(&self, m: usize, b: usize) -> Result<()> {
        if self.m != m || self.b != b {
            return Err(Error::Dimension(format!(
                "parameter (m = {}, b = {}) against features (m = {m}, b = {b})",
                self.m, self.b
            )));
        }
        Ok(())
    }
}

/// `n × m` matrix of samples from one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 1 {
            return Err(Error::InvalidData("sample matrix needs at least one row".into()));
        }
        if values.ncols() < 2 {
            return Err(Error::InvalidData(format!(
                "sample matrix needs at least two columns, got {}",
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {r}, column {c}"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidData("no rows".into()));
        }
        let m = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidData(format!(
                "row {i} has {} columns, expected {m}",
                rows[i].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// New matrix made of the given rows, in order (rows may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.values.select_rows(rows.iter()))
    }
}

/// Featurized samples: row `i` is `f(x⁽ⁱ⁾)`, the concatenation of `ψ` over
/// all pairs in flat order.
#[derive(Debug, Clone)]
pub struct FeatureTensor {
    m: usize,
    b: usize,
    values: DMatrix<f64>,
}

impl FeatureTensor {
    pub fn from_matrix(m: usize, b: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != b * pair_count(m) {
            return Err(Error::Dimension(format!(
                "feature matrix with {} columns for m = {m}, b = {b}",
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::InvalidData("feature matrix needs at least one row".into()));
        }
        Ok(Self { m, b, values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// Total feature dimension `b · m(m+1)/2`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Column means, summed in row order.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(
            self.dim(),
            self.values.column_iter().map(|c| c.iter().sum::<f64>() / n),
        )
    }

    /// `⟨θ, f(x⁽ⁱ⁾)⟩` for every row.
    pub fn scores(&self, theta: &ParameterVector) -> Result<DVector<f64>> {
        theta.check_compatible(self.m, self.b)?;
        Ok(&self.values * theta.as_vector())
    }
}

/// Evaluates the feature map on every row. Rows are processed in parallel;
/// each row is independent so the result does not depend on scheduling.
pub fn featurize(data: &SampleMatrix, fmap: &FeatureMap) -> Result<FeatureTensor> {
    let m = data.m();
    let b = fmap.dim();
    let pairs = all_pairs(m);
    let k = b * pairs.len();
    let x = data.values();
    let rows: Vec<Vec<f64>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; k];
            for (g, p) in pairs.iter().enumerate() {
                fmap.eval(x[(i, p.u)], x[(i, p.v)], &mut row[g * b..(g + 1) * b]);
            }
            row
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            let p = pairs[j / b];
            return Err(Error::NonFiniteFeature {
                sample: i,
                u: p.u,
                v: p.v,
            });
        }
    }
    let values = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    FeatureTensor::from_matrix(m, b, values)
}

/// Numerically stable `log Σ exp(a_i)`.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + a.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Unnormalized log-ratio `⟨θ, f(x⁽ⁱ⁾)⟩` for one featurized sample.
pub fn log_ratio_unnormalized(
    theta: &ParameterVector,
    features: &FeatureTensor,
    i: usize,
) -> Result<f64> {
    theta.check_compatible(features.m(), features.b())?;
    if i >= features.n() {
        return Err(Error::Dimension(format!(
            "sample index {i} out of range for {} rows",
            features.n()
        )));
    }
    Ok(features.matrix().row(i).transpose().dot(theta.as_vector()))
}

/// `Â(θ) = log( (1/n_q) Σ_i exp⟨θ, f(x_q⁽ⁱ⁾)⟩ )`.
pub fn empirical_log_normalizer(theta: &ParameterVector, q_features: &FeatureTensor) -> Result<f64> {
    let scores = q_features.scores(theta)?;
    Ok(log_sum_exp(scores.as_slice()) - (q_features.n() as f64).ln())
}

/// `r̂(x; θ) = exp(⟨θ, f(x)⟩ − Â(θ))` for an already featurized `x`.
pub fn empirical_ratio(
    theta: &ParameterVector,
    q_features: &FeatureTensor,
    x_features: &DVector<f64>,
) -> Result<f64> {
    if x_features.len() != q_features.dim() {
        return Err(Error::Dimension(format!(
            "feature row of length {} against dimension {}",
            x_features.len(),
            q_features.dim()
        )));
    }
    let log_norm = empirical_log_normalizer(theta, q_features)?;
    Ok((x_features.dot(theta.as_vector()) - log_norm).exp())
}
