//! Config-driven experiments: success-rate grids, ROC comparison against the
//! covariance baseline, real two-sample analysis and assumption diagnostics.
//!
//! Every trial draws from its own stream seeded by
//! `derive_seed(base, [m, n_p, n_q, d, trial])`, so a cell's results do not
//! depend on which other cells are in the grid or on the thread count.

mod diagnose;
mod output;
mod real;
mod roc;
mod success;
mod svg;

pub use diagnose::{run_diagnose, DiagnoseResult, DiagnoseRow};
pub use output::{run_experiment, Manifest};
pub use real::{analyze_samples, run_real, RealResult, SwapCheck, WeightedEdge};
pub use roc::{run_roc_compare, RocCompareResult, RocSummary, RocTrial};
pub use success::{curve_alignment_gap, run_success_rate, CellResult, SuccessRateTable};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::AdmmConfig;
use crate::error::{Error, Result};
use crate::model::FeatureMap;
use crate::optim::{PathConfig, SolverConfig};
use crate::samplers::{
    build_lattice, build_random, make_eight_shaped_change, make_gaussian_change_with,
    make_truncated_gaussian_change, ChangeInstance, EightShapedSpec, GraphSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SuccessRate,
    NqCoupling,
    DSweep,
    NonGaussian,
    RocCompare,
    RealData,
    Bootstrap,
    Diagnose,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SuccessRate => "success-rate",
            ExperimentKind::NqCoupling => "nq-coupling",
            ExperimentKind::DSweep => "d-sweep",
            ExperimentKind::NonGaussian => "non-gaussian",
            ExperimentKind::RocCompare => "roc",
            ExperimentKind::RealData => "real",
            ExperimentKind::Bootstrap => "bootstrap",
            ExperimentKind::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Gaussian {
        #[serde(default = "default_theta0")]
        theta0: f64,
        #[serde(default = "default_theta1")]
        theta1: f64,
    },
    TruncatedGaussian { radius: f64 },
    /// Stand-in non-Gaussian network, see [`crate::samplers`].
    EightShaped {
        #[serde(default = "one")]
        theta0: f64,
        #[serde(default = "five")]
        theta1: f64,
        #[serde(default = "fifteen")]
        radius: f64,
    },
}

fn default_theta0() -> f64 {
    2.0
}
fn default_theta1() -> f64 {
    -0.4
}
fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn fifteen() -> f64 {
    15.0
}

impl Default for Family {
    fn default() -> Self {
        Family::Gaussian {
            theta0: 2.0,
            theta1: -0.4,
        }
    }
}

impl Family {
    pub fn feature_map(&self) -> FeatureMap {
        match self {
            Family::EightShaped { .. } => FeatureMap::saturating_quartic(),
            _ => FeatureMap::quadratic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    /// 4-neighbour lattice; `m` must be a perfect square.
    Lattice,
    Random { connectivity: f64 },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Lattice
    }
}

impl TopologyConfig {
    fn validate_m(&self, m: usize) -> Result<()> {
        match self {
            TopologyConfig::Lattice => {
                let g = lattice_side(m)
                    .ok_or_else(|| Error::Config(format!("lattice needs a square m, got {m}")))?;
                if g < 2 {
                    return Err(Error::Config("lattice needs m ≥ 4".into()));
                }
                Ok(())
            }
            TopologyConfig::Random { connectivity } => {
                if !(*connectivity > 0.0 && *connectivity < 1.0) || m < 2 {
                    return Err(Error::Config("random graphs need 0 < p < 1 and m ≥ 2".into()));
                }
                Ok(())
            }
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<GraphSpec> {
        match self {
            TopologyConfig::Lattice => build_lattice(
                lattice_side(m).ok_or_else(|| Error::Config(format!("m = {m} is not a square")))?,
            ),
            TopologyConfig::Random { connectivity } => build_random(m, *connectivity, rng),
        }
    }
}

fn lattice_side(m: usize) -> Option<usize> {
    let g = (m as f64).sqrt().round() as usize;
    (g * g == m).then_some(g)
}

/// `n_p` values, either absolute or as multiples of `ln m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpGrid {
    Absolute(Vec<usize>),
    PerLogM(Vec<f64>),
}

impl Default for NpGrid {
    fn default() -> Self {
        NpGrid::Absolute(vec![50])
    }
}

impl NpGrid {
    pub fn values(&self, m: usize) -> Vec<usize> {
        match self {
            NpGrid::Absolute(v) => v.clone(),
            NpGrid::PerLogM(r) => r
                .iter()
                .map(|r| ((r * (m as f64).ln()).round() as usize).max(1))
                .collect(),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            NpGrid::Absolute(v) => v.is_empty(),
            NpGrid::PerLogM(v) => v.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NqRule {
    Fixed(usize),
    /// `max(min, ⌈c · n_p²⌉)`.
    QuadraticInNp { c: f64, min: usize },
    /// `⌈c · n_p⌉`.
    LinearInNp(f64),
    EqualNp,
}

impl Default for NqRule {
    fn default() -> Self {
        NqRule::Fixed(1000)
    }
}

impl NqRule {
    pub fn n_q(&self, n_p: usize) -> usize {
        let n = match self {
            NqRule::Fixed(n) => *n,
            NqRule::QuadraticInNp { c, min } => ((c * (n_p * n_p) as f64).ceil() as usize).max(*min),
            NqRule::LinearInNp(c) => (c * n_p as f64).ceil() as usize,
            NqRule::EqualNp => n_p,
        };
        n.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DRule {
    Fixed(usize),
    /// `⌊√m⌋`.
    SqrtM,
    Grid(Vec<usize>),
}

impl Default for DRule {
    fn default() -> Self {
        DRule::Fixed(4)
    }
}

impl DRule {
    pub fn values(&self, m: usize) -> Vec<usize> {
        match self {
            DRule::Fixed(d) => vec![*d],
            DRule::SqrtM => vec![(m as f64).sqrt().floor() as usize],
            DRule::Grid(v) => v.clone(),
        }
    }
}

/// Settings for the ROC comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocSettings {
    /// Baseline ε values as fractions of `‖Σp − Σq‖_∞`.
    pub epsilon_fractions: Vec<f64>,
    pub admm: AdmmConfig,
}

impl Default for RocSettings {
    fn default() -> Self {
        Self {
            epsilon_fractions: vec![0.1, 0.2, 0.3, 0.45, 0.6, 0.8],
            admm: AdmmConfig::default(),
        }
    }
}

/// Settings for two-sample analysis of user data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealSettings {
    pub p_csv: String,
    pub q_csv: String,
    /// Feature map name accepted by [`FeatureMap::from_name`].
    pub feature: String,
    /// The λ path stops once the support has more than this many groups.
    pub target_support: usize,
    pub swap_check: bool,
    /// Bootstrap replicates; zero disables the bootstrap.
    pub bootstrap_trials: usize,
    /// Edges counted in more than this fraction of replicates are stable.
    pub stable_fraction: f64,
}

impl Default for RealSettings {
    fn default() -> Self {
        Self {
            p_csv: String::new(),
            q_csv: String::new(),
            feature: "quadratic".into(),
            target_support: 10,
            swap_check: true,
            bootstrap_trials: 0,
            stable_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    #[serde(default)]
    pub n_p_grid: NpGrid,
    #[serde(default)]
    pub n_q: NqRule,
    #[serde(default)]
    pub d: DRule,
    /// λ = C √(ln m / n_p).
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub roc: RocSettings,
    #[serde(default)]
    pub real: RealSettings,
}

fn default_m_grid() -> Vec<usize> {
    vec![9]
}
fn default_c() -> f64 {
    1.0
}
fn default_trials() -> usize {
    50
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            family: Family::default(),
            topology: TopologyConfig::default(),
            m_grid: default_m_grid(),
            n_p_grid: NpGrid::default(),
            n_q: NqRule::default(),
            d: DRule::default(),
            c: default_c(),
            trials: default_trials(),
            seed: 0,
            solver: SolverConfig::default(),
            path: PathConfig::default(),
            roc: RocSettings::default(),
            real: RealSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field the experiment kind uses, before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config("C must be positive".into()));
        }
        self.solver.validate()?;
        match self.kind {
            ExperimentKind::RealData | ExperimentKind::Bootstrap => {
                if self.real.p_csv.is_empty() || self.real.q_csv.is_empty() {
                    return Err(Error::Config("real data needs p_csv and q_csv".into()));
                }
                FeatureMap::from_name(&self.real.feature)?;
                if !(self.real.stable_fraction >= 0.0 && self.real.stable_fraction <= 1.0) {
                    return Err(Error::Config("stable_fraction must lie in [0, 1]".into()));
                }
                if self.kind == ExperimentKind::Bootstrap && self.real.bootstrap_trials == 0 {
                    return Err(Error::Config("bootstrap needs bootstrap_trials ≥ 1".into()));
                }
                return Ok(());
            }
            _ => {}
        }
        if self.m_grid.is_empty() || self.n_p_grid.is_empty() {
            return Err(Error::Config("m and n_p grids must be non-empty".into()));
        }
        for &m in &self.m_grid {
            self.topology.validate_m(m)?;
            if self.n_p_grid.values(m).iter().any(|&n| n == 0) {
                return Err(Error::Config("n_p values must be positive".into()));
            }
            if self.d.values(m).is_empty() {
                return Err(Error::Config("d grid must be non-empty".into()));
            }
        }
        match &self.n_q {
            NqRule::Fixed(0) => return Err(Error::Config("n_q must be positive".into())),
            NqRule::QuadraticInNp { c, .. } | NqRule::LinearInNp(c) if !(*c > 0.0) => {
                return Err(Error::Config("n_q coefficient must be positive".into()))
            }
            _ => {}
        }
        if let Family::TruncatedGaussian { radius } = self.family {
            if !(radius > 0.0) {
                return Err(Error::Config("truncation radius must be positive".into()));
            }
        }
        if self.kind == ExperimentKind::RocCompare {
            if self.roc.epsilon_fractions.is_empty()
                || self.roc.epsilon_fractions.iter().any(|f| !(*f > 0.0))
            {
                return Err(Error::Config("ε fractions must be positive and non-empty".into()));
            }
            self.roc.admm.validate()?;
        }
        Ok(())
    }

    /// Draws a fresh P/Q pair with `d` changed edges on an `m`-node graph.
    pub fn make_instance<R: Rng + ?Sized>(&self, m: usize, d: usize, rng: &mut R) -> Result<ChangeInstance> {
        let graph = self.topology.build(m, rng)?;
        match &self.family {
            Family::Gaussian { theta0, theta1 } => {
                make_gaussian_change_with(&graph, d, *theta0, *theta1, rng)
            }
            Family::TruncatedGaussian { radius } => {
                make_truncated_gaussian_change(&graph, d, *radius, rng)
            }
            Family::EightShaped {
                theta0,
                theta1,
                radius,
            } => {
                let spec = EightShapedSpec::new(graph, *theta0, *theta1, *radius)?;
                make_eight_shaped_change(&spec, d, rng)
            }
        }
    }
}
