use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::success::{cells, Cell};
use super::ExperimentConfig;
use crate::diagnostics::assumption_report;
use crate::error::{Error, Result};
use crate::kliep::KliepProblem;
use crate::seed::{derive_seed, rng_from_seed};

/// Assumption checks at the true change for one sample draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseRow {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub d: usize,
    pub trial: usize,
    pub lambda_min_ss: Option<f64>,
    pub incoherence: f64,
    pub singular: bool,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseResult {
    pub rows: Vec<DiagnoseRow>,
}

impl DiagnoseResult {
    /// `(max − min) / median` of a per-row statistic, ignoring missing values.
    pub fn relative_spread(values: &[f64]) -> Option<f64> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        (median != 0.0).then(|| (v[n - 1] - v[0]) / median.abs())
    }
}

fn diagnose_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> Result<DiagnoseRow> {
    // the instance is fixed per cell; only the samples change between trials
    let mut inst_rng = rng_from_seed(derive_seed(cfg.seed, &[cell.m as u64, cell.d as u64]));
    let inst = cfg.make_instance(cell.m, cell.d, &mut inst_rng)?;
    let mut rng = rng_from_seed(cell.trial_seed(cfg.seed, trial));
    let p = inst.p.sample(cell.n_p, &mut rng)?;
    let q = inst.q.sample(cell.n_q, &mut rng)?;
    let problem = KliepProblem::new(&p, &q, inst.feature_map())?;
    let r = assumption_report(&problem, &inst.theta_star, &inst.support, None)?;
    Ok(DiagnoseRow {
        m: cell.m,
        n_p: cell.n_p,
        n_q: cell.n_q,
        d: cell.d,
        trial,
        lambda_min_ss: r.lambda_min_ss,
        incoherence: r.incoherence,
        singular: r.singular,
        ratio_min: r.ratio_range.0,
        ratio_max: r.ratio_range.1,
    })
}

/// Dependency, incoherence and ratio-range diagnostics at `θ*`. Each cell
/// fixes one instance and redraws the samples in every trial, so the rows
/// show the sampling variability of the diagnostics.
pub fn run_diagnose(cfg: &ExperimentConfig) -> Result<DiagnoseResult> {
    cfg.validate()?;
    let cells = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let rows: Vec<Result<DiagnoseRow>> = jobs
        .par_iter()
        .map(|&(c, t)| diagnose_trial(cfg, cells[c], t))
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        match r {
            Ok(row) => out.push(row),
            Err(e) => log::warn!("diagnose trial failed: {e}"),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidData("every diagnose trial failed".into()));
    }
    Ok(DiagnoseResult { rows: out })
}
