use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::diagnostics::compare_support;
use crate::error::{Error, Result};
use crate::kliep::KliepProblem;
use crate::model::all_pairs;
use crate::optim::{lambda_scaling, solve, SolverConfig};
use crate::samplers::ChangeInstance;
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub d: usize,
}

impl Cell {
    pub fn np_per_log_m(&self) -> f64 {
        self.n_p as f64 / (self.m as f64).ln()
    }

    pub fn trial_seed(&self, base: u64, trial: usize) -> u64 {
        derive_seed(
            base,
            &[self.m as u64, self.n_p as u64, self.n_q as u64, self.d as u64, trial as u64],
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub d: usize,
    pub np_per_log_m: f64,
    pub trials: usize,
    pub successes: usize,
    /// Fraction of trials with exact support recovery.
    pub success_rate: f64,
    /// Binomial standard error of `success_rate`.
    pub se: f64,
    /// Trials that raised an error; they count as unsuccessful.
    pub failures: usize,
    /// Trials whose solver stopped before meeting the KKT tolerance.
    pub non_converged: usize,
    pub mean_tpr: f64,
    pub mean_tnr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessRateTable {
    pub cells: Vec<CellResult>,
    /// Largest pairwise gap between the success curves of different `m`
    /// (same `d`, `n_q` rule) on their common `n_p / ln m` range.
    pub alignment_gap: Option<f64>,
}

impl SuccessRateTable {
    /// Success curve `(n_p / ln m, rate)` for one `(m, d)`, sorted by abscissa.
    pub fn curve(&self, m: usize, d: usize) -> Vec<(f64, f64)> {
        let mut c: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|r| r.m == m && r.d == d)
            .map(|r| (r.np_per_log_m, r.success_rate))
            .collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        c
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    exact: bool,
    converged: bool,
    tpr: f64,
    tnr: f64,
}

/// Instance plus P and Q samples for one trial of a cell.
pub(crate) fn draw_trial(
    cfg: &ExperimentConfig,
    cell: Cell,
    trial: usize,
) -> Result<(ChangeInstance, KliepProblem, crate::model::SampleMatrix, crate::model::SampleMatrix)> {
    let mut rng: Rng = rng_from_seed(cell.trial_seed(cfg.seed, trial));
    let inst = cfg.make_instance(cell.m, cell.d, &mut rng)?;
    let p = inst.p.sample(cell.n_p, &mut rng)?;
    let q = inst.q.sample(cell.n_q, &mut rng)?;
    let problem = KliepProblem::new(&p, &q, inst.feature_map())?;
    Ok((inst, problem, p, q))
}

fn run_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> Result<TrialOutcome> {
    let (inst, problem, _, _) = draw_trial(cfg, cell, trial)?;
    let solver = SolverConfig {
        lambda: lambda_scaling(cell.n_p, cell.m as f64, cfg.c),
        ..cfg.solver.clone()
    };
    let report = solve(&problem, &solver, &problem.zero_parameter())?;
    let r = compare_support(&report.support, &inst.support, &all_pairs(cell.m))?;
    Ok(TrialOutcome {
        exact: r.exact,
        converged: report.converged,
        tpr: r.tpr,
        tnr: r.tnr,
    })
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &m in &cfg.m_grid {
        for d in cfg.d.values(m) {
            for n_p in cfg.n_p_grid.values(m) {
                out.push(Cell {
                    m,
                    n_p,
                    n_q: cfg.n_q.n_q(n_p),
                    d,
                });
            }
        }
    }
    out
}

/// Exact-recovery rate per `(m, d, n_p)` cell with `λ = C √(ln m / n_p)`.
pub fn run_success_rate(cfg: &ExperimentConfig) -> Result<SuccessRateTable> {
    cfg.validate()?;
    let cells = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<Result<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(cfg, cells[c], t))
        .collect();

    let mut results = Vec::with_capacity(cells.len());
    for (ci, cell) in cells.iter().enumerate() {
        let slice = &outcomes[ci * cfg.trials..(ci + 1) * cfg.trials];
        let mut successes = 0;
        let mut failures = 0;
        let mut non_converged = 0;
        let (mut tpr, mut tnr) = (0.0, 0.0);
        for (t, o) in slice.iter().enumerate() {
            match o {
                Ok(o) => {
                    successes += o.exact as usize;
                    non_converged += (!o.converged) as usize;
                    tpr += o.tpr;
                    tnr += o.tnr;
                }
                Err(e) => {
                    log::warn!("cell {cell:?} trial {t}: {e}");
                    failures += 1;
                }
            }
        }
        let n = cfg.trials as f64;
        let ok = (cfg.trials - failures).max(1) as f64;
        let rate = successes as f64 / n;
        results.push(CellResult {
            m: cell.m,
            n_p: cell.n_p,
            n_q: cell.n_q,
            d: cell.d,
            np_per_log_m: cell.np_per_log_m(),
            trials: cfg.trials,
            successes,
            success_rate: rate,
            se: (rate * (1.0 - rate) / n).sqrt(),
            failures,
            non_converged,
            mean_tpr: tpr / ok,
            mean_tnr: tnr / ok,
        });
        log::info!(
            "m = {}, d = {}, n_p = {}, n_q = {}: success {:.3}",
            cell.m,
            cell.d,
            cell.n_p,
            cell.n_q,
            rate
        );
    }
    if results.iter().all(|r| r.failures == r.trials) {
        return Err(Error::Sampler("every trial failed".into()));
    }

    let mut table = SuccessRateTable {
        cells: results,
        alignment_gap: None,
    };
    let mut ds: Vec<usize> = table.cells.iter().map(|c| c.d).collect();
    ds.sort_unstable();
    ds.dedup();
    let mut gap: Option<f64> = None;
    for d in ds {
        let curves: Vec<Vec<(f64, f64)>> = cfg.m_grid.iter().map(|&m| table.curve(m, d)).collect();
        if let Some(g) = curve_alignment_gap(&curves) {
            gap = Some(gap.map_or(g, |x: f64| x.max(g)));
        }
    }
    table.alignment_gap = gap;
    Ok(table)
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    match curve.iter().position(|p| p.0 >= x) {
        Some(0) => curve[0].1,
        Some(i) => {
            let (a, b) = (curve[i - 1], curve[i]);
            if b.0 == a.0 {
                b.1
            } else {
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
        }
        None => curve.last().map_or(0.0, |p| p.1),
    }
}

/// Largest `|y_i(x) − y_j(x)|` over pairs of curves, with each curve linearly
/// interpolated at every abscissa of every curve inside the shared range.
/// `None` with fewer than two non-empty curves or no overlap.
pub fn curve_alignment_gap(curves: &[Vec<(f64, f64)>]) -> Option<f64> {
    let curves: Vec<&Vec<(f64, f64)>> = curves.iter().filter(|c| !c.is_empty()).collect();
    if curves.len() < 2 {
        return None;
    }
    let lo = curves.iter().map(|c| c[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|c| c[c.len() - 1].0).fold(f64::INFINITY, f64::min);
    if lo > hi {
        return None;
    }
    let mut xs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.iter().map(|p| p.0))
        .filter(|x| *x >= lo && *x <= hi)
        .collect();
    xs.push(lo);
    xs.push(hi);
    let mut gap = 0.0_f64;
    for x in xs {
        let ys: Vec<f64> = curves.iter().map(|c| interpolate(c, x)).collect();
        let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        gap = gap.max(max - min);
    }
    Some(gap)
}
