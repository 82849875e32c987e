//! Synthetic pairwise Markov networks with known changes, and samplers for
//! them.
//!
//! Gaussian networks use the density
//! `p(x) ∝ exp(−θ₀ Σ_u x_u² − Σ_{(u,v)∈E} θ₁ x_u x_v)`, i.e. precision
//! `Θ_uu = 2θ₀`, `Θ_uv = θ₁`. The Q network flips the sign of `θ₁` on `d`
//! randomly chosen edges.
//!
//! The "eight-shaped" family is a stand-in non-Gaussian network:
//! `p(x) ∝ exp(−θ₀ Σ_u x_u² − θ₁ Σ_{(u,v)∈E} s_uv/(1 + s_uv))` with
//! `s_uv = x_u² x_v²`, truncated to a ball. The Q network deletes the pairwise
//! potential on `d` edges. It is not the exact potential of any published
//! figure; only qualitative behaviour should be compared.

mod gaussian;
mod graph;
mod slice;

pub use gaussian::{sample_gaussian, sample_truncated_gaussian, GaussianSampler};
pub use graph::{build_lattice, build_random, GraphSpec, Topology};
pub use slice::{sample_slice, slice_step, SliceConfig};

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMap, PairIndex, ParameterVector, SampleMatrix};

/// Attempts at drawing a positive-definite change before giving up.
pub const MAX_PD_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMnSpec {
    pub graph: GraphSpec,
    pub theta0: f64,
    pub theta1: f64,
    /// Edges whose potential is `−θ₁` instead of `θ₁`.
    pub flipped: Vec<PairIndex>,
}

impl GaussianMnSpec {
    pub fn new(graph: GraphSpec, theta0: f64, theta1: f64, flipped: Vec<PairIndex>) -> Result<Self> {
        let mut flipped = flipped;
        flipped.sort();
        flipped.dedup();
        if let Some(e) = flipped.iter().find(|e| !graph.has_edge(**e)) {
            return Err(Error::Config(format!("flipped pair {e} is not a graph edge")));
        }
        let spec = Self {
            graph,
            theta0,
            theta1,
            flipped,
        };
        if spec.precision().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(format!(
                "θ₀ = {theta0}, θ₁ = {theta1}, {} flipped edges",
                spec.flipped.len()
            )));
        }
        Ok(spec)
    }

    /// Defaults `θ₀ = 2`, `θ₁ = −0.4`.
    pub fn standard(graph: GraphSpec) -> Result<Self> {
        Self::new(graph, 2.0, -0.4, Vec::new())
    }

    pub fn m(&self) -> usize {
        self.graph.m
    }

    pub fn edge_potential(&self, e: PairIndex) -> f64 {
        if self.flipped.binary_search(&e).is_ok() {
            -self.theta1
        } else {
            self.theta1
        }
    }

    pub fn precision(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut p = DMatrix::from_diagonal_element(m, m, 2.0 * self.theta0);
        for &e in &self.graph.edges {
            let w = self.edge_potential(e);
            p[(e.u, e.v)] = w;
            p[(e.v, e.u)] = w;
        }
        p
    }

    /// Exponent coefficients on quadratic features `x_u x_v`.
    pub fn natural_parameter(&self) -> ParameterVector {
        let m = self.m();
        let mut theta = ParameterVector::zeros(m, 1);
        for u in 0..m {
            theta.set_pair(PairIndex { u, v: u }, &[-self.theta0]).expect("valid pair");
        }
        for &e in &self.graph.edges {
            theta.set_pair(e, &[-self.edge_potential(e)]).expect("valid pair");
        }
        theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightShapedSpec {
    pub graph: GraphSpec,
    pub theta0: f64,
    pub theta1: f64,
    pub radius: f64,
}

impl EightShapedSpec {
    /// Number of base-Gaussian draws used to check the truncation ball.
    const PILOT_DRAWS: usize = 10_000;

    /// Validates the spec; the truncation ball must keep at least a 1e-4
    /// fraction of the untruncated univariate part, estimated by a seeded pilot.
    pub fn new(graph: GraphSpec, theta0: f64, theta1: f64, radius: f64) -> Result<Self> {
        if !(theta0 > 0.0) {
            return Err(Error::Config("eight-shaped θ₀ must be positive".into()));
        }
        if !(theta1 >= 0.0) {
            return Err(Error::Config("eight-shaped θ₁ must be non-negative".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config("truncation radius must be positive".into()));
        }
        let spec = Self {
            graph,
            theta0,
            theta1,
            radius,
        };
        let rate = spec.pilot_acceptance();
        if rate <= 1e-4 {
            return Err(Error::Sampler(format!(
                "truncation ball of radius {radius} accepts only {rate:.2e} of the mass"
            )));
        }
        Ok(spec)
    }

    /// Defaults `θ₀ = 1`, `θ₁ = 5`, radius 15.
    pub fn standard(graph: GraphSpec) -> Result<Self> {
        Self::new(graph, 1.0, 5.0, 15.0)
    }

    pub fn m(&self) -> usize {
        self.graph.m
    }

    /// Fraction of draws from the univariate part `exp(−θ₀ Σ x²)` falling in
    /// the ball. The pairwise term is bounded, so this bounds the acceptance
    /// of the full density up to `exp(−θ₁|E|)`.
    fn pilot_acceptance(&self) -> f64 {
        let mut rng = crate::seed::rng_from_seed(0x5EED);
        let sd = (0.5 / self.theta0).sqrt();
        let r2 = self.radius * self.radius;
        let m = self.m();
        let inside = (0..Self::PILOT_DRAWS)
            .filter(|_| {
                let s: f64 = (0..m)
                    .map(|_| {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        (z * sd).powi(2)
                    })
                    .sum();
                s <= r2
            })
            .count();
        inside as f64 / Self::PILOT_DRAWS as f64
    }

    /// Unnormalized log density, `−∞` outside the ball.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 > self.radius * self.radius {
            return f64::NEG_INFINITY;
        }
        let pair: f64 = self
            .graph
            .edges
            .iter()
            .map(|e| crate::model::saturating_quartic(x[e.u], x[e.v]))
            .sum();
        -self.theta0 * r2 - self.theta1 * pair
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gaussian(GaussianMnSpec),
    TruncatedGaussian { spec: GaussianMnSpec, radius: f64 },
    EightShaped(EightShapedSpec),
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        match self {
            ModelSpec::Gaussian(s) | ModelSpec::TruncatedGaussian { spec: s, .. } => s.m(),
            ModelSpec::EightShaped(s) => s.m(),
        }
    }

    /// Feature map under which the change between two specs of this family
    /// is exactly representable.
    pub fn feature_map(&self) -> FeatureMap {
        match self {
            ModelSpec::Gaussian(_) | ModelSpec::TruncatedGaussian { .. } => FeatureMap::quadratic(),
            ModelSpec::EightShaped(_) => FeatureMap::saturating_quartic(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleMatrix> {
        match self {
            ModelSpec::Gaussian(s) => sample_gaussian(s, n, rng),
            ModelSpec::TruncatedGaussian { spec, radius } => {
                sample_truncated_gaussian(spec, *radius, n, rng)
            }
            ModelSpec::EightShaped(s) => sample_slice(s, n, &SliceConfig::default(), rng),
        }
    }
}

/// A P/Q pair of networks with the ground-truth change.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeInstance {
    pub p: ModelSpec,
    pub q: ModelSpec,
    /// Pairs whose potentials differ between P and Q.
    pub support: Vec<PairIndex>,
    /// True change `θ_p − θ_q` in the coordinates of [`ModelSpec::feature_map`].
    #[serde(with = "theta_serde")]
    pub theta_star: ParameterVector,
}

impl ChangeInstance {
    pub fn d(&self) -> usize {
        self.support.len()
    }

    pub fn m(&self) -> usize {
        self.p.m()
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.p.feature_map()
    }
}

mod theta_serde {
    use super::*;
    use nalgebra::DVector;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        m: usize,
        b: usize,
        values: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(t: &ParameterVector, s: S) -> std::result::Result<S::Ok, S::Error> {
        Flat {
            m: t.m(),
            b: t.b(),
            values: t.as_vector().iter().copied().collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ParameterVector, D::Error> {
        let f = Flat::deserialize(d)?;
        ParameterVector::from_flat(f.m, f.b, DVector::from_vec(f.values))
            .map_err(serde::de::Error::custom)
    }
}

fn pick_edges<R: Rng + ?Sized>(graph: &GraphSpec, d: usize, rng: &mut R) -> Result<Vec<PairIndex>> {
    if d > graph.edges.len() {
        return Err(Error::Config(format!(
            "cannot change {d} edges of a graph with {}",
            graph.edges.len()
        )));
    }
    let mut picked: Vec<PairIndex> = index::sample(rng, graph.edges.len(), d)
        .into_iter()
        .map(|i| graph.edges[i])
        .collect();
    picked.sort();
    Ok(picked)
}

/// Gaussian change with the default potentials `θ₀ = 2`, `θ₁ = −0.4`.
pub fn make_gaussian_change<R: Rng + ?Sized>(
    graph: &GraphSpec,
    d: usize,
    rng: &mut R,
) -> Result<ChangeInstance> {
    make_gaussian_change_with(graph, d, 2.0, -0.4, rng)
}

/// P uses `θ₁` on every edge, Q flips the sign on `d` uniformly chosen edges.
/// Subsets that make either precision indefinite are redrawn.
pub fn make_gaussian_change_with<R: Rng + ?Sized>(
    graph: &GraphSpec,
    d: usize,
    theta0: f64,
    theta1: f64,
    rng: &mut R,
) -> Result<ChangeInstance> {
    let p = GaussianMnSpec::new(graph.clone(), theta0, theta1, Vec::new())?;
    for _ in 0..MAX_PD_ATTEMPTS {
        let flipped = pick_edges(graph, d, rng)?;
        let q = match GaussianMnSpec::new(graph.clone(), theta0, theta1, flipped.clone()) {
            Ok(q) => q,
            Err(Error::NotPositiveDefinite(_)) => continue,
            Err(e) => return Err(e),
        };
        let theta_star = ParameterVector::from_flat(
            graph.m,
            1,
            p.natural_parameter().as_vector() - q.natural_parameter().as_vector(),
        )?;
        return Ok(ChangeInstance {
            p: ModelSpec::Gaussian(p),
            q: ModelSpec::Gaussian(q),
            support: flipped,
            theta_star,
        });
    }
    Err(Error::NotPositiveDefinite(format!(
        "no positive-definite change with d = {d} after {MAX_PD_ATTEMPTS} attempts"
    )))
}

/// Same as [`make_gaussian_change_with`] but both networks are truncated to
/// a ball of the given radius.
pub fn make_truncated_gaussian_change<R: Rng + ?Sized>(
    graph: &GraphSpec,
    d: usize,
    radius: f64,
    rng: &mut R,
) -> Result<ChangeInstance> {
    let inst = make_gaussian_change(graph, d, rng)?;
    let wrap = |s: ModelSpec| match s {
        ModelSpec::Gaussian(spec) => ModelSpec::TruncatedGaussian { spec, radius },
        other => other,
    };
    Ok(ChangeInstance {
        p: wrap(inst.p),
        q: wrap(inst.q),
        ..inst
    })
}

/// P has the pairwise potential on every edge, Q drops it on `d` edges.
pub fn make_eight_shaped_change<R: Rng + ?Sized>(
    p_spec: &EightShapedSpec,
    d: usize,
    rng: &mut R,
) -> Result<ChangeInstance> {
    let removed = pick_edges(&p_spec.graph, d, rng)?;
    let q_graph = p_spec.graph.without_edges(&removed);
    let q_spec = EightShapedSpec::new(q_graph, p_spec.theta0, p_spec.theta1, p_spec.radius)?;
    let mut theta_star = ParameterVector::zeros(p_spec.m(), 1);
    for &e in &removed {
        theta_star.set_pair(e, &[-p_spec.theta1])?;
    }
    Ok(ChangeInstance {
        p: ModelSpec::EightShaped(p_spec.clone()),
        q: ModelSpec::EightShaped(q_spec),
        support: removed,
        theta_star,
    })
}
