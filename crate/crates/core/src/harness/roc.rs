use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::success::{cells, draw_trial, Cell};
use super::ExperimentConfig;
use crate::baseline::{solve_diffnet, threshold_sweep, DiffNetProblem};
use crate::diagnostics::{roc_curve, roc_from_path, RocCurve};
use crate::error::{Error, Result};
use crate::model::{off_diagonal_pairs, PairIndex};
use crate::optim::solve_path;

/// One trial of the KLIEP versus baseline comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocTrial {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub d: usize,
    pub trial: usize,
    /// Set when the trial could not be scored; the curves are then absent.
    pub skipped: Option<String>,
    pub kliep: Option<RocCurve>,
    /// Baseline curve at the ε fraction chosen for the whole cell.
    pub baseline: Option<RocCurve>,
    pub best_epsilon: Option<f64>,
    /// Baseline solves dropped because ADMM did not converge.
    pub excluded_epsilons: usize,
    /// Baseline AUC for every ε fraction, `None` where the solve was dropped.
    pub epsilon_aucs: Vec<Option<f64>>,
    #[serde(skip)]
    curves: Vec<Option<(f64, RocCurve)>>,
}

impl RocTrial {
    pub fn kliep_auc(&self) -> Option<f64> {
        self.kliep.as_ref().and_then(|c| c.auc)
    }

    pub fn baseline_auc(&self) -> Option<f64> {
        self.baseline.as_ref().and_then(|c| c.auc)
    }
}

/// Per-cell means over the scored trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocSummary {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub d: usize,
    pub scored: usize,
    pub skipped: usize,
    pub mean_kliep_auc: Option<f64>,
    pub mean_baseline_auc: Option<f64>,
    /// Fraction of scored trials with a strictly larger KLIEP AUC.
    pub kliep_win_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCompareResult {
    pub trials: Vec<RocTrial>,
    pub summaries: Vec<RocSummary>,
}

fn run_roc_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> Result<RocTrial> {
    let mut out = RocTrial {
        m: cell.m,
        n_p: cell.n_p,
        n_q: cell.n_q,
        d: cell.d,
        trial,
        skipped: None,
        kliep: None,
        baseline: None,
        best_epsilon: None,
        excluded_epsilons: 0,
        epsilon_aucs: Vec::new(),
        curves: Vec::new(),
    };
    let (inst, problem, p, q) = draw_trial(cfg, cell, trial)?;
    let universe = off_diagonal_pairs(cell.m);
    let truth: Vec<PairIndex> = inst.support.iter().copied().filter(|e| !e.is_diagonal()).collect();
    if truth.is_empty() || truth.len() == universe.len() {
        out.skipped = Some("degenerate truth: no changed or no unchanged edges".into());
        return Ok(out);
    }

    let reports = solve_path(&problem, &cfg.path, &cfg.solver)?;
    let kliep = if reports.len() >= 2 {
        roc_from_path(&reports, &truth, &universe)?
    } else {
        // a single λ still yields the empty-support point plus its own
        let mut supports = vec![Vec::new()];
        supports.extend(reports.iter().map(|r| r.support.clone()));
        roc_curve(&supports, &truth, &universe)?
    };
    out.kliep = Some(kliep);

    let base = DiffNetProblem::from_samples(&p, &q, 1.0)?;
    let trivial = base.trivial_epsilon();
    for &f in &cfg.roc.epsilon_fractions {
        let eps = f * trivial;
        let sol = solve_diffnet(&base.with_epsilon(eps)?, &cfg.roc.admm)?;
        if !sol.converged {
            log::warn!("baseline ε = {eps:.3e} did not converge (m = {}, trial {trial})", cell.m);
            out.excluded_epsilons += 1;
            out.curves.push(None);
            continue;
        }
        let mut supports: Vec<Vec<PairIndex>> = threshold_sweep(&sol.delta).into_iter().map(|(_, s)| s).collect();
        if supports.len() < 2 {
            supports.push(Vec::new());
        }
        out.curves.push(Some((eps, roc_curve(&supports, &truth, &universe)?)));
    }
    out.epsilon_aucs = out.curves.iter().map(|c| c.as_ref().and_then(|(_, c)| c.auc)).collect();
    Ok(out)
}

/// Mean AUC of one ε fraction over the trials where its solve was kept.
fn mean_fraction_auc(trials: &[&mut RocTrial], k: usize) -> Option<f64> {
    let v: Vec<f64> = trials.iter().filter_map(|t| t.epsilon_aucs.get(k).copied().flatten()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Picks one ε fraction per cell by mean baseline AUC and attaches its curve
/// to every trial of the cell.
fn select_epsilon(cfg: &ExperimentConfig, trials: &mut [&mut RocTrial]) {
    let best = (0..cfg.roc.epsilon_fractions.len())
        .filter_map(|k| Some((k, mean_fraction_auc(trials, k)?)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k);
    for t in trials.iter_mut() {
        if t.skipped.is_some() {
            continue;
        }
        match best.and_then(|k| t.curves.get(k).cloned().flatten()) {
            Some((eps, curve)) => {
                t.best_epsilon = Some(eps);
                t.baseline = Some(curve);
            }
            None => t.skipped = Some("baseline solve at the selected ε did not converge".into()),
        }
    }
}

/// KLIEP λ-path ROC against the thresholded baseline on the same samples,
/// scored over off-diagonal pairs. For the baseline every ε in the grid is
/// swept over τ, and each cell keeps the ε whose mean AUC over trials is
/// largest.
pub fn run_roc_compare(cfg: &ExperimentConfig) -> Result<RocCompareResult> {
    cfg.validate()?;
    let cells = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<RocTrial>> = jobs
        .par_iter()
        .map(|&(c, t)| run_roc_trial(cfg, cells[c], t))
        .collect();

    let mut trials = Vec::with_capacity(results.len());
    for (r, &(c, t)) in results.into_iter().zip(&jobs) {
        match r {
            Ok(tr) => trials.push(tr),
            Err(e) => {
                let cell = cells[c];
                log::warn!("roc cell {cell:?} trial {t}: {e}");
                trials.push(RocTrial {
                    m: cell.m,
                    n_p: cell.n_p,
                    n_q: cell.n_q,
                    d: cell.d,
                    trial: t,
                    skipped: Some(format!("error: {e}")),
                    kliep: None,
                    baseline: None,
                    best_epsilon: None,
                    excluded_epsilons: 0,
                    epsilon_aucs: Vec::new(),
                    curves: Vec::new(),
                });
            }
        }
    }
    for cell in &cells {
        let mut mine: Vec<&mut RocTrial> = trials
            .iter_mut()
            .filter(|t| (t.m, t.n_p, t.n_q, t.d) == (cell.m, cell.n_p, cell.n_q, cell.d))
            .collect();
        select_epsilon(cfg, &mut mine);
    }
    if trials.iter().all(|t| t.skipped.is_some()) && !trials.is_empty() {
        log::warn!("no ROC trial could be scored");
    }

    let summaries = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&RocTrial> = trials
                .iter()
                .filter(|t| (t.m, t.n_p, t.n_q, t.d) == (cell.m, cell.n_p, cell.n_q, cell.d))
                .collect();
            let pairs: Vec<(f64, f64)> = mine
                .iter()
                .filter_map(|t| Some((t.kliep_auc()?, t.baseline_auc()?)))
                .collect();
            let n = pairs.len();
            let mean = |f: fn(&(f64, f64)) -> f64| (n > 0).then(|| pairs.iter().map(f).sum::<f64>() / n as f64);
            RocSummary {
                m: cell.m,
                n_p: cell.n_p,
                n_q: cell.n_q,
                d: cell.d,
                scored: n,
                skipped: mine.len() - n,
                mean_kliep_auc: mean(|p| p.0),
                mean_baseline_auc: mean(|p| p.1),
                kliep_win_fraction: (n > 0).then(|| pairs.iter().filter(|p| p.0 > p.1).count() as f64 / n as f64),
            }
        })
        .collect();
    Ok(RocCompareResult { trials, summaries })
}

impl RocCompareResult {
    pub fn summary(&self, m: usize) -> Result<&RocSummary> {
        self.summaries
            .iter()
            .find(|s| s.m == m)
            .ok_or_else(|| Error::InvalidData(format!("no ROC cell with m = {m}")))
    }
}
