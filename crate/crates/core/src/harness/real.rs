use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::diagnostics::{bootstrap, BootstrapConfig, BootstrapSummary, EdgeCount};
use crate::error::{Error, Result};
use crate::io::read_samples;
use crate::kliep::KliepProblem;
use crate::model::{FeatureMap, PairIndex, SampleMatrix};
use crate::optim::{solve_path, PathConfig, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    /// Group norm `‖θ̂_{u,v}‖` at the stopping λ.
    pub norm: f64,
}

/// The same analysis with the roles of P and Q exchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapCheck {
    pub stop_lambda: f64,
    pub edges: Vec<WeightedEdge>,
    /// Edges found in both directions.
    pub shared: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealResult {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub feature: String,
    /// λ values visited, in path order.
    pub lambdas: Vec<f64>,
    pub stop_lambda: f64,
    /// Groups in the final support, diagonal groups included.
    pub support_size: usize,
    pub converged: bool,
    /// Off-diagonal change edges, largest norm first.
    pub edges: Vec<WeightedEdge>,
    /// Nodes whose own potential changed.
    pub changed_nodes: Vec<usize>,
    pub swap: Option<SwapCheck>,
    pub bootstrap: Option<BootstrapSummary>,
    /// Edges selected in more than `stable_fraction · trials` replicates.
    pub stable_edges: Vec<EdgeCount>,
}

struct PathOutcome {
    lambdas: Vec<f64>,
    last: SolverReport,
}

fn stopped_path(p: &SampleMatrix, q: &SampleMatrix, fmap: &FeatureMap, cfg: &ExperimentConfig) -> Result<PathOutcome> {
    let problem = KliepProblem::new(p, q, fmap.clone())?;
    let path = PathConfig {
        stop_above: Some(cfg.real.target_support),
        ..cfg.path.clone()
    };
    let reports = solve_path(&problem, &path, &cfg.solver)?;
    let lambdas = reports.iter().map(|r| r.lambda).collect();
    let last = reports.into_iter().last().ok_or_else(|| Error::Config("λ grid is empty".into()))?;
    Ok(PathOutcome { lambdas, last })
}

fn weighted_edges(report: &SolverReport) -> Result<Vec<WeightedEdge>> {
    let mut edges = Vec::new();
    for e in report.support.iter().filter(|e| !e.is_diagonal()) {
        let block = report.theta_hat.pair_block(*e)?;
        edges.push(WeightedEdge {
            u: e.u,
            v: e.v,
            norm: block.iter().map(|x| x * x).sum::<f64>().sqrt(),
        });
    }
    edges.sort_by(|a, b| b.norm.total_cmp(&a.norm).then((a.v, a.u).cmp(&(b.v, b.u))));
    Ok(edges)
}

/// Stopped λ-path on in-memory samples, with the optional swap check and
/// bootstrap from `cfg.real`.
pub fn analyze_samples(p: &SampleMatrix, q: &SampleMatrix, cfg: &ExperimentConfig) -> Result<RealResult> {
    if p.m() != q.m() {
        return Err(Error::Dimension(format!(
            "P has {} columns but Q has {}",
            p.m(),
            q.m()
        )));
    }
    let fmap = FeatureMap::from_name(&cfg.real.feature)?;
    let forward = stopped_path(p, q, &fmap, cfg)?;
    let edges = weighted_edges(&forward.last)?;

    let swap = if cfg.real.swap_check {
        let back = stopped_path(q, p, &fmap, cfg)?;
        let back_edges = weighted_edges(&back.last)?;
        let fwd: BTreeSet<(usize, usize)> = edges.iter().map(|e| (e.u, e.v)).collect();
        let shared = back_edges.iter().filter(|e| fwd.contains(&(e.u, e.v))).count();
        Some(SwapCheck {
            stop_lambda: back.last.lambda,
            edges: back_edges,
            shared,
        })
    } else {
        None
    };

    let (boot, stable_edges) = if cfg.real.bootstrap_trials > 0 {
        let bc = BootstrapConfig {
            trials: cfg.real.bootstrap_trials,
            target_support: cfg.real.target_support,
            path: cfg.path.clone(),
            solver: cfg.solver.clone(),
            seed: cfg.seed,
        };
        let summary = bootstrap(p, q, &fmap, &bc)?;
        let k = (cfg.real.stable_fraction * bc.trials as f64).floor() as usize;
        let stable: Vec<EdgeCount> = summary.counts.iter().copied().filter(|c| c.count > k).collect();
        (Some(summary), stable)
    } else {
        (None, Vec::new())
    };

    Ok(RealResult {
        m: p.m(),
        n_p: p.n(),
        n_q: q.n(),
        feature: fmap.name(),
        lambdas: forward.lambdas,
        stop_lambda: forward.last.lambda,
        support_size: forward.last.support.len(),
        converged: forward.last.converged,
        edges,
        changed_nodes: forward
            .last
            .support
            .iter()
            .filter(|e: &&PairIndex| e.is_diagonal())
            .map(|e| e.u)
            .collect(),
        swap,
        bootstrap: boot,
        stable_edges,
    })
}

/// Loads `cfg.real.p_csv` and `cfg.real.q_csv` and runs [`analyze_samples`].
pub fn run_real(cfg: &ExperimentConfig) -> Result<RealResult> {
    cfg.validate()?;
    let p = read_samples(&cfg.real.p_csv)?;
    let q = read_samples(&cfg.real.q_csv)?;
    analyze_samples(&p, &q, cfg)
}
