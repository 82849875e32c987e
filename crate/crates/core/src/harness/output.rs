use std::path::Path;

use serde::{Deserialize, Serialize};

use super::diagnose::run_diagnose;
use super::real::run_real;
use super::roc::{run_roc_compare, RocCompareResult};
use super::success::{run_success_rate, SuccessRateTable};
use super::svg::{line_chart, Series};
use super::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::io::write_json;

/// Run description written after every other artifact; a directory without
/// one is incomplete.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Artifacts in the run directory, manifest excluded.
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], files: &mut Vec<String>) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    files.push(name.to_string());
    Ok(())
}

fn write_svg(dir: &Path, name: &str, body: &str, files: &mut Vec<String>) {
    match std::fs::write(dir.join(name), body) {
        Ok(()) => files.push(name.to_string()),
        Err(e) => log::warn!("could not write {name}: {e}"),
    }
}

fn success_outputs(dir: &Path, table: &SuccessRateTable, files: &mut Vec<String>) -> Result<serde_json::Value> {
    write_csv(dir, "success_rate.csv", &table.cells, files)?;
    let mut keys: Vec<(usize, usize)> = table.cells.iter().map(|c| (c.m, c.d)).collect();
    keys.sort_unstable();
    keys.dedup();
    let series: Vec<Series> = keys
        .iter()
        .map(|&(m, d)| Series {
            label: format!("m = {m}, d = {d}"),
            points: table.curve(m, d),
        })
        .collect();
    let svg = line_chart("Exact recovery rate", "n_p / ln m", "success rate", &series, Some((0.0, 1.0)));
    write_svg(dir, "success_rate.svg", &svg, files);
    Ok(serde_json::json!({ "alignment_gap": table.alignment_gap, "cells": table.cells.len() }))
}

#[derive(Serialize)]
struct RocTrialRow {
    m: usize,
    n_p: usize,
    n_q: usize,
    d: usize,
    trial: usize,
    kliep_auc: Option<f64>,
    baseline_auc: Option<f64>,
    best_epsilon: Option<f64>,
    excluded_epsilons: usize,
    skipped: Option<String>,
}

#[derive(Serialize)]
struct RocPointRow {
    m: usize,
    trial: usize,
    method: &'static str,
    tpr: f64,
    tnr: f64,
}

fn roc_outputs(dir: &Path, res: &RocCompareResult, files: &mut Vec<String>) -> Result<serde_json::Value> {
    let rows: Vec<RocTrialRow> = res
        .trials
        .iter()
        .map(|t| RocTrialRow {
            m: t.m,
            n_p: t.n_p,
            n_q: t.n_q,
            d: t.d,
            trial: t.trial,
            kliep_auc: t.kliep_auc(),
            baseline_auc: t.baseline_auc(),
            best_epsilon: t.best_epsilon,
            excluded_epsilons: t.excluded_epsilons,
            skipped: t.skipped.clone(),
        })
        .collect();
    write_csv(dir, "roc_trials.csv", &rows, files)?;
    let mut points = Vec::new();
    for t in &res.trials {
        for (method, curve) in [("kliep", &t.kliep), ("baseline", &t.baseline)] {
            if let Some(c) = curve {
                points.extend(c.points.iter().map(|p| RocPointRow {
                    m: t.m,
                    trial: t.trial,
                    method,
                    tpr: p.tpr,
                    tnr: p.tnr,
                }));
            }
        }
    }
    write_csv(dir, "roc_points.csv", &points, files)?;
    write_csv(dir, "roc_summary.csv", &res.summaries, files)?;

    // first scored trial of each cell
    let mut series = Vec::new();
    for s in &res.summaries {
        if let Some(t) = res
            .trials
            .iter()
            .find(|t| t.m == s.m && t.n_p == s.n_p && t.d == s.d && t.skipped.is_none())
        {
            for (name, curve) in [("KLIEP", &t.kliep), ("baseline", &t.baseline)] {
                if let Some(c) = curve {
                    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
                    pts.extend(c.points.iter().map(|p| (1.0 - p.tnr, p.tpr)));
                    pts.push((1.0, 1.0));
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                    series.push(Series {
                        label: format!("{name}, m = {}, trial {}", t.m, t.trial),
                        points: pts,
                    });
                }
            }
        }
    }
    let svg = line_chart("ROC", "1 - TNR", "TPR", &series, Some((0.0, 1.0)));
    write_svg(dir, "roc.svg", &svg, files);
    Ok(serde_json::to_value(&res.summaries)?)
}

/// Runs the experiment named by `cfg.kind`, writes its CSV and SVG artifacts
/// into `out_dir` and finally `manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let summary = match cfg.kind {
        ExperimentKind::SuccessRate
        | ExperimentKind::NqCoupling
        | ExperimentKind::DSweep
        | ExperimentKind::NonGaussian => success_outputs(dir, &run_success_rate(cfg)?, &mut files)?,
        ExperimentKind::RocCompare => roc_outputs(dir, &run_roc_compare(cfg)?, &mut files)?,
        ExperimentKind::RealData | ExperimentKind::Bootstrap => {
            let res = run_real(cfg)?;
            write_csv(dir, "edges.csv", &res.edges, &mut files)?;
            if let Some(b) = &res.bootstrap {
                write_csv(dir, "bootstrap.csv", &b.counts, &mut files)?;
            }
            write_json(dir.join("real.json"), &res)?;
            files.push("real.json".into());
            serde_json::json!({
                "edges": res.edges.len(),
                "stop_lambda": res.stop_lambda,
                "stable_edges": res.stable_edges.len(),
            })
        }
        ExperimentKind::Diagnose => {
            let res = run_diagnose(cfg)?;
            write_csv(dir, "diagnose.csv", &res.rows, &mut files)?;
            serde_json::json!({ "rows": res.rows.len() })
        }
    };
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.kind.name().into(),
        seed: cfg.seed,
        config: cfg.clone(),
        files,
        summary,
    };
    write_json(dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
