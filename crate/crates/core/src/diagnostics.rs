//! Support-recovery metrics, ROC curves, assumption checks and bootstrap
//! stability.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kliep::{FisherInfo, KliepProblem};
use crate::model::{all_pairs, FeatureMap, PairIndex, ParameterVector, SampleMatrix};
use crate::optim::{solve_path, PathConfig, SolverConfig, SolverReport};
use crate::seed::{derive_seed, rng_from_seed};

/// Relative eigenvalue below which `I_SS` is treated as singular.
const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub exact: bool,
    pub tpr: f64,
    pub tnr: f64,
}

fn check_subset(set: &[PairIndex], universe: &BTreeSet<PairIndex>, what: &str) -> Result<()> {
    match set.iter().find(|p| !universe.contains(p)) {
        Some(p) => Err(Error::InvalidData(format!("{what} pair {p} is outside the universe"))),
        None => Ok(()),
    }
}

/// TPR over `truth` and TNR over `universe \ truth`. An empty class scores 1.
pub fn compare_support(
    estimated: &[PairIndex],
    truth: &[PairIndex],
    universe: &[PairIndex],
) -> Result<RecoveryResult> {
    let uni: BTreeSet<PairIndex> = universe.iter().copied().collect();
    check_subset(estimated, &uni, "estimated")?;
    check_subset(truth, &uni, "true")?;
    let est: BTreeSet<PairIndex> = estimated.iter().copied().collect();
    let tru: BTreeSet<PairIndex> = truth.iter().copied().collect();
    let tp = est.intersection(&tru).count();
    let negatives = uni.len() - tru.len();
    let tn = uni.iter().filter(|p| !tru.contains(p) && !est.contains(p)).count();
    Ok(RecoveryResult {
        exact: est == tru,
        tpr: if tru.is_empty() { 1.0 } else { tp as f64 / tru.len() as f64 },
        tnr: if negatives == 0 { 1.0 } else { tn as f64 / negatives as f64 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tpr: f64,
    pub tnr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    /// Distinct operating points sorted by increasing TNR.
    pub points: Vec<RocPoint>,
    /// `None` when the truth is empty or fills the universe.
    pub auc: Option<f64>,
}

/// Area under the curve through `(0,0)`, the non-dominated points and `(1,1)`
/// in `(1 − tnr, tpr)` coordinates, by the trapezoid rule.
pub fn auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (1.0 - p.tnr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    // sort by fpr, best tpr first; keep points whose tpr beats all lower fpr
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut front: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        match front.last() {
            Some(last) if p.1 <= last.1 => {}
            Some(last) if p.0 == last.0 => {
                front.pop();
                front.push(p);
            }
            _ => front.push(p),
        }
    }
    if front.last().is_some_and(|l| l.0 < 1.0) {
        front.push((1.0, front.last().unwrap().1));
    }
    front
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

/// ROC points of a sequence of estimated supports. Pairs outside the universe
/// are dropped from each support before scoring.
pub fn roc_curve(
    supports: &[Vec<PairIndex>],
    truth: &[PairIndex],
    universe: &[PairIndex],
) -> Result<RocCurve> {
    if supports.len() < 2 {
        return Err(Error::InvalidData("a ROC curve needs at least 2 operating points".into()));
    }
    let uni: BTreeSet<PairIndex> = universe.iter().copied().collect();
    let mut points = Vec::with_capacity(supports.len());
    for s in supports {
        let inside: Vec<PairIndex> = s.iter().copied().filter(|p| uni.contains(p)).collect();
        let r = compare_support(&inside, truth, universe)?;
        points.push(RocPoint {
            tpr: r.tpr,
            tnr: r.tnr,
        });
    }
    points.sort_by(|a, b| a.tnr.total_cmp(&b.tnr).then(a.tpr.total_cmp(&b.tpr)));
    points.dedup();
    let t: BTreeSet<PairIndex> = truth.iter().copied().collect();
    let degenerate = t.is_empty() || t.len() == uni.len();
    Ok(RocCurve {
        auc: (!degenerate).then(|| auc(&points)),
        points,
    })
}

pub fn roc_from_path(
    reports: &[SolverReport],
    truth: &[PairIndex],
    universe: &[PairIndex],
) -> Result<RocCurve> {
    let supports: Vec<Vec<PairIndex>> = reports.iter().map(|r| r.support.clone()).collect();
    roc_curve(&supports, truth, universe)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `Λ_min(I_SS)`; `None` when `S` is empty.
    pub lambda_min_ss: Option<f64>,
    /// `max_{t ∈ Sᶜ} Σ |(I_{tS} I_SS⁻¹)_ij|`, zero when `Sᶜ` is empty.
    pub incoherence: f64,
    /// `I_SS` was singular and a pseudo-inverse was used.
    pub singular: bool,
    /// Min and max of the estimated ratio over Q samples at the supplied θ.
    pub ratio_range: (f64, f64),
    pub ratio_range_hat: Option<(f64, f64)>,
}

/// `Λ_min(I_SS)`, incoherence and the singular flag for a given information
/// matrix and support.
pub fn dependency_and_incoherence(
    info: &FisherInfo,
    support: &[PairIndex],
) -> Result<(Option<f64>, f64, bool)> {
    let s: BTreeSet<PairIndex> = support.iter().copied().collect();
    if s.is_empty() {
        return Ok((None, 0.0, false));
    }
    let s: Vec<PairIndex> = s.into_iter().collect();
    let complement: Vec<PairIndex> = all_pairs(info.m()).into_iter().filter(|p| !s.contains(p)).collect();
    let i_ss = info.submatrix(&s, &s)?;
    let eig = SymmetricEigen::new(i_ss.clone());
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.amax();
    let singular = lmin <= SINGULAR_RTOL * lmax.max(f64::MIN_POSITIVE);
    let inv: DMatrix<f64> = if singular {
        i_ss.pseudo_inverse(SINGULAR_RTOL * lmax.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidData(e.to_string()))?
    } else {
        i_ss.clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| i_ss.try_inverse())
            .ok_or_else(|| Error::InvalidData("I_SS is not invertible".into()))?
    };
    let mut incoherence = 0.0_f64;
    for t in &complement {
        let row = info.submatrix(std::slice::from_ref(t), &s)?;
        let y = row * &inv;
        incoherence = incoherence.max(y.iter().map(|v| v.abs()).sum());
    }
    Ok((Some(lmin), incoherence, singular))
}

fn ratio_range(problem: &KliepProblem, theta: &ParameterVector) -> Result<(f64, f64)> {
    let r = problem.q_ratios(theta)?;
    Ok((r.min(), r.max()))
}

/// Evaluates the dependency and incoherence conditions on `I(θ)` for the
/// support `S`, and the empirical ratio range at `θ` and optionally `θ̂`.
pub fn assumption_report(
    problem: &KliepProblem,
    theta: &ParameterVector,
    support: &[PairIndex],
    theta_hat: Option<&ParameterVector>,
) -> Result<AssumptionReport> {
    let info = problem.hessian(theta)?;
    let (lambda_min_ss, incoherence, singular) = dependency_and_incoherence(&info, support)?;
    if singular {
        log::warn!("I_SS is singular; incoherence uses a pseudo-inverse");
    }
    Ok(AssumptionReport {
        lambda_min_ss,
        incoherence,
        singular,
        ratio_range: ratio_range(problem, theta)?,
        ratio_range_hat: theta_hat.map(|t| ratio_range(problem, t)).transpose()?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub trials: usize,
    /// The path stops at the first λ whose support exceeds this size.
    pub target_support: usize,
    pub path: PathConfig,
    pub solver: SolverConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCount {
    pub u: usize,
    pub v: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub trials: usize,
    /// Trials whose solve returned an error; they add no counts.
    pub failures: usize,
    /// Off-diagonal edges selected at least once, in pair order.
    pub counts: Vec<EdgeCount>,
}

impl BootstrapSummary {
    pub fn count(&self, pair: PairIndex) -> usize {
        self.counts
            .iter()
            .find(|c| c.u == pair.u && c.v == pair.v)
            .map_or(0, |c| c.count)
    }

    /// Edges selected in more than `k` trials.
    pub fn stable_edges(&self, k: usize) -> Vec<PairIndex> {
        self.counts
            .iter()
            .filter(|c| c.count > k)
            .map(|c| PairIndex { u: c.u, v: c.v })
            .collect()
    }
}

fn resample<R: Rng + ?Sized>(data: &SampleMatrix, rng: &mut R) -> Result<SampleMatrix> {
    let n = data.n();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select_rows(&rows)
}

fn bootstrap_trial(
    p: &SampleMatrix,
    q: &SampleMatrix,
    fmap: &FeatureMap,
    cfg: &BootstrapConfig,
    trial: usize,
) -> Result<Vec<PairIndex>> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[trial as u64]));
    let pb = resample(p, &mut rng)?;
    let qb = resample(q, &mut rng)?;
    let problem = KliepProblem::new(&pb, &qb, fmap.clone())?;
    let path = PathConfig {
        stop_above: Some(cfg.target_support),
        ..cfg.path.clone()
    };
    let reports = solve_path(&problem, &path, &cfg.solver)?;
    Ok(reports
        .last()
        .map(|r| r.support.iter().copied().filter(|e| !e.is_diagonal()).collect())
        .unwrap_or_default())
}

/// Resamples both datasets with replacement, runs the stopped λ-path on each
/// replicate and counts how often every edge is selected. Trials run in
/// parallel; each has its own seed derived from the trial index.
pub fn bootstrap(
    p: &SampleMatrix,
    q: &SampleMatrix,
    fmap: &FeatureMap,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary> {
    if cfg.trials == 0 {
        return Err(Error::Config("bootstrap needs at least one trial".into()));
    }
    if p.m() != q.m() {
        return Err(Error::Dimension(format!("m_p = {} but m_q = {}", p.m(), q.m())));
    }
    let results: Vec<Result<Vec<PairIndex>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| bootstrap_trial(p, q, fmap, cfg, t))
        .collect();
    let mut counts: BTreeMap<PairIndex, usize> = BTreeMap::new();
    let mut failures = 0;
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(edges) => {
                for e in edges {
                    *counts.entry(e).or_default() += 1;
                }
            }
            Err(e) => {
                log::warn!("bootstrap trial {t} failed: {e}");
                failures += 1;
            }
        }
    }
    let mut counts: Vec<EdgeCount> = counts
        .into_iter()
        .map(|(p, count)| EdgeCount { u: p.u, v: p.v, count })
        .collect();
    counts.sort_by_key(|c| (c.v, c.u));
    Ok(BootstrapSummary {
        trials: cfg.trials,
        failures,
        counts,
    })
}
