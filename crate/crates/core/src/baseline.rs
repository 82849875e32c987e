//! Covariance-based differential network baseline.
//!
//! Solves `min ‖Δ‖₁ s.t. ‖Σp Δ Σq + Σp − Σq‖_∞ ≤ ε` over symmetric `Δ` by
//! ADMM, then thresholds `|Δ̂|` to obtain an edge set.
//!
//! The unknowns are the `m(m+1)/2` entries `Δ_uv`, `u ≥ v`; the entrywise
//! norm counts each off-diagonal entry twice. With `A x = vec(Σp Δ Σq)` and
//! `b = vec(Σq − Σp)` the splitting is `z₁ = x`, `z₂ = A x − b`, so each
//! iteration is one cached Cholesky solve, a soft-threshold and a clip.
//! Rows and columns of `A` are Ruiz-equilibrated first. An iterate that is
//! still infeasible at `max_iters` is polished on its own support; it counts
//! as converged when the polished point is feasible and its objective moved by
//! at most 1e-3 relative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pair_count, PairIndex, SampleMatrix};

/// Constraint violation tolerated in a returned solution.
pub const FEASIBILITY_SLACK: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-10;
const RHO_BALANCE: f64 = 10.0;
const RHO_UPDATE_SPACING: usize = 50;
const RUIZ_PASSES: usize = 15;
const POLISH_ROUNDS: usize = 10;
const POLISH_OBJECTIVE_RTOL: f64 = 1e-3;

/// `XᵀX / n`, the zero-mean sample covariance.
pub fn sample_covariance(data: &SampleMatrix) -> DMatrix<f64> {
    let x = data.values();
    let mut s = x.tr_mul(x) / data.n() as f64;
    symmetrize(&mut s);
    s
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffNetProblem {
    sigma_p: DMatrix<f64>,
    sigma_q: DMatrix<f64>,
    epsilon: f64,
}

impl DiffNetProblem {
    pub fn new(sigma_p: DMatrix<f64>, sigma_q: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("ε must be positive, got {epsilon}")));
        }
        let m = sigma_p.nrows();
        if sigma_p.shape() != (m, m) || sigma_q.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "covariances {:?} and {:?} must be square of equal size",
                sigma_p.shape(),
                sigma_q.shape()
            )));
        }
        for (name, s) in [("Σp", &sigma_p), ("Σq", &sigma_q)] {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("{name} has non-finite entries")));
            }
            if (s - s.transpose()).amax() > SYMMETRY_TOL {
                return Err(Error::InvalidData(format!("{name} is not symmetric")));
            }
            let min_eig = s.clone().symmetric_eigenvalues().min();
            if min_eig < -SYMMETRY_TOL {
                return Err(Error::InvalidData(format!(
                    "{name} is not positive semidefinite (eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(Self {
            sigma_p,
            sigma_q,
            epsilon,
        })
    }

    pub fn from_samples(p: &SampleMatrix, q: &SampleMatrix, epsilon: f64) -> Result<Self> {
        if p.m() != q.m() {
            return Err(Error::Dimension(format!("m_p = {} but m_q = {}", p.m(), q.m())));
        }
        Self::new(sample_covariance(p), sample_covariance(q), epsilon)
    }

    pub fn m(&self) -> usize {
        self.sigma_p.nrows()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma_p(&self) -> &DMatrix<f64> {
        &self.sigma_p
    }

    pub fn sigma_q(&self) -> &DMatrix<f64> {
        &self.sigma_q
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.sigma_p.clone(), self.sigma_q.clone(), epsilon)
    }

    /// `Σp Δ Σq + Σp − Σq`.
    pub fn residual(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.sigma_p * delta * &self.sigma_q + &self.sigma_p - &self.sigma_q
    }

    /// Amount by which `delta` exceeds the constraint, zero if feasible.
    pub fn feasibility_gap(&self, delta: &DMatrix<f64>) -> f64 {
        (self.residual(delta).amax() - self.epsilon).max(0.0)
    }

    /// `‖Σp − Σq‖_∞`; any `ε` at or above it makes `Δ = 0` optimal.
    pub fn trivial_epsilon(&self) -> f64 {
        (&self.sigma_p - &self.sigma_q).amax()
    }
}

/// Entrywise `ℓ₁` norm over the full matrix.
pub fn l1_objective(delta: &DMatrix<f64>) -> f64 {
    delta.iter().map(|v| v.abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 5000,
            tol: 1e-6,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("ADMM ρ must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("ADMM max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("ADMM tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffNetSolution {
    /// Symmetric estimate `Δ̂`.
    pub delta: DMatrix<f64>,
    pub epsilon: f64,
    pub objective: f64,
    pub feasibility_gap: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl DiffNetSolution {
    pub fn is_feasible(&self) -> bool {
        self.feasibility_gap <= FEASIBILITY_SLACK
    }

    pub fn threshold(&self, tau: f64) -> Vec<PairIndex> {
        threshold(&self.delta, tau)
    }

    /// Supports for every distinct off-diagonal magnitude, strongest first,
    /// preceded by the empty support.
    pub fn threshold_sweep(&self) -> Vec<(f64, Vec<PairIndex>)> {
        threshold_sweep(&self.delta)
    }
}

/// Off-diagonal pairs `u > v` with `Δ_uv ≠ 0` and `|Δ_uv| ≥ τ`.
pub fn threshold(delta: &DMatrix<f64>, tau: f64) -> Vec<PairIndex> {
    let m = delta.nrows();
    let mut out = Vec::new();
    for v in 0..m {
        for u in v + 1..m {
            let a = delta[(u, v)].abs();
            if a != 0.0 && a >= tau {
                out.push(PairIndex { u, v });
            }
        }
    }
    out
}

pub fn threshold_sweep(delta: &DMatrix<f64>) -> Vec<(f64, Vec<PairIndex>)> {
    let m = delta.nrows();
    let mut levels: Vec<f64> = (0..m)
        .flat_map(|v| (v + 1..m).map(move |u| (u, v)))
        .map(|(u, v)| delta[(u, v)].abs())
        .filter(|a| *a > 0.0)
        .collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut out = vec![(f64::INFINITY, Vec::new())];
    out.extend(levels.into_iter().map(|t| (t, threshold(delta, t))));
    out
}

/// Column `k` of the linear map, for pair `(i, j)`: `vec(Σp (E_ij + E_ji) Σq)`
/// or `vec(Σp E_ii Σq)` on the diagonal, column-major.
fn constraint_matrix(sp: &DMatrix<f64>, sq: &DMatrix<f64>) -> DMatrix<f64> {
    let m = sp.nrows();
    let k = pair_count(m);
    let mut a = DMatrix::zeros(m * m, k);
    let mut col = 0;
    for v in 0..m {
        for u in v..m {
            for c in 0..m {
                for r in 0..m {
                    let mut val = sp[(r, u)] * sq[(v, c)];
                    if u != v {
                        val += sp[(r, v)] * sq[(u, c)];
                    }
                    a[(c * m + r, col)] = val;
                }
            }
            col += 1;
        }
    }
    a
}

fn unpack(x: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m, m);
    let mut k = 0;
    for v in 0..m {
        for u in v..m {
            d[(u, v)] = x[k];
            d[(v, u)] = x[k];
            k += 1;
        }
    }
    d
}

/// Ruiz equilibration: row and column scalings `(E, D)` that bring every row
/// and column of `E A D` to unit ∞-norm.
fn equilibrate(a: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let (r, c) = a.shape();
    let mut e = DVector::from_element(r, 1.0);
    let mut d = DVector::from_element(c, 1.0);
    for _ in 0..RUIZ_PASSES {
        let mut rmax = DVector::zeros(r);
        let mut cmax = DVector::zeros(c);
        for j in 0..c {
            for i in 0..r {
                let v = (e[i] * a[(i, j)] * d[j]).abs();
                rmax[i] = f64::max(rmax[i], v);
                cmax[j] = f64::max(cmax[j], v);
            }
        }
        for i in 0..r {
            if rmax[i] > 0.0 {
                e[i] /= rmax[i].sqrt();
            }
        }
        for j in 0..c {
            if cmax[j] > 0.0 {
                d[j] /= cmax[j].sqrt();
            }
        }
    }
    (e, d)
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Restores feasibility of an ADMM iterate without changing its support:
/// the minimum-norm correction on the nonzero entries that moves every
/// violated or active row onto the boundary, repeated while new rows appear.
fn polish(a0: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64, x0: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..x0.len()).filter(|&i| x0[i] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let edge = eps * (1.0 - 1e-9);
    let mut x = x0.clone();
    for _ in 0..POLISH_ROUNDS {
        let r = a0 * &x - DVector::from_column_slice(b.as_slice());
        if r.amax() <= eps + 0.5 * FEASIBILITY_SLACK {
            return Some(x);
        }
        let rows: Vec<usize> = (0..r.len()).filter(|&i| r[i].abs() >= eps * (1.0 - 1e-6)).collect();
        let sub = DMatrix::from_fn(rows.len(), support.len(), |i, j| a0[(rows[i], support[j])]);
        let target = DVector::from_iterator(rows.len(), rows.iter().map(|&i| r[i].signum() * edge - r[i]));
        let step = sub.svd(true, true).solve(&target, 1e-12).ok()?;
        for (j, &c) in support.iter().enumerate() {
            x[c] += step[j];
        }
    }
    let r = a0 * &x - DVector::from_column_slice(b.as_slice());
    (r.amax() <= eps + 0.5 * FEASIBILITY_SLACK).then_some(x)
}

pub fn solve_diffnet(problem: &DiffNetProblem, cfg: &AdmmConfig) -> Result<DiffNetSolution> {
    cfg.validate()?;
    let m = problem.m();
    let eps = problem.epsilon;
    if problem.trivial_epsilon() <= eps {
        let delta = DMatrix::zeros(m, m);
        return Ok(DiffNetSolution {
            feasibility_gap: problem.feasibility_gap(&delta),
            delta,
            epsilon: eps,
            objective: 0.0,
            converged: true,
            iterations: 0,
        });
    }

    let (sp, sq) = (&problem.sigma_p, &problem.sigma_q);
    let a0 = constraint_matrix(sp, sq);
    let (row_s, col_s) = equilibrate(&a0);
    let k = a0.ncols();
    // scaled problem: x = D x̃, rows multiplied by E
    let a = DMatrix::from_fn(m * m, k, |r, c| row_s[r] * a0[(r, c)] * col_s[c]);
    let b = DVector::from_iterator(m * m, (sq - sp).iter().zip(row_s.iter()).map(|(v, e)| v * e));
    let bound = row_s.map(|e| eps * e);
    let weights = DVector::from_iterator(
        k,
        (0..m)
            .flat_map(|v| (v..m).map(move |u| if u == v { 1.0 } else { 2.0 }))
            .zip(col_s.iter())
            .map(|(w, d)| w * d),
    );

    let mut normal = a.tr_mul(&a);
    for i in 0..k {
        normal[(i, i)] += 1.0;
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("ADMM normal matrix".into()))?;
    let to_delta = |z: &DVector<f64>| unpack(&z.component_mul(&col_s), m);

    let mut rho = cfg.rho;
    let mut z1 = DVector::zeros(k);
    let mut z2 = DVector::zeros(m * m);
    let mut u1 = DVector::zeros(k);
    let mut u2 = DVector::zeros(m * m);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let rhs = (&z1 - &u1) + a.tr_mul(&(&b + &z2 - &u2));
        let x = chol.solve(&rhs);
        let ax_b = &a * &x - &b;

        let z1_old = z1.clone();
        let z2_old = z2.clone();
        z1 = DVector::from_fn(k, |i, _| soft(x[i] + u1[i], weights[i] / rho));
        z2 = DVector::from_fn(m * m, |i, _| (ax_b[i] + u2[i]).clamp(-bound[i], bound[i]));
        let r1 = &x - &z1;
        let r2 = &ax_b - &z2;
        u1 += &r1;
        u2 += &r2;

        let primal = r1.amax().max(r2.amax());
        let dual = rho * (&z1 - &z1_old).amax().max((&z2 - &z2_old).amax());
        if primal <= cfg.tol && dual <= cfg.tol {
            let gap = problem.feasibility_gap(&to_delta(&z1));
            if gap <= FEASIBILITY_SLACK {
                converged = true;
                break;
            }
        }
        // residual balancing; the x-update matrix does not depend on ρ
        if iterations % RHO_UPDATE_SPACING == 0 {
            let factor = if primal > RHO_BALANCE * dual {
                2.0
            } else if dual > RHO_BALANCE * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u1 /= factor;
                u2 /= factor;
            }
        }
    }
    let mut delta = to_delta(&z1);
    let mut gap = problem.feasibility_gap(&delta);
    if !converged {
        let x0 = z1.component_mul(&col_s);
        if let Some(x) = polish(&a0, &(sq - sp), eps, &x0) {
            let candidate = unpack(&x, m);
            let g = problem.feasibility_gap(&candidate);
            let (before, after) = (l1_objective(&delta), l1_objective(&candidate));
            if g <= FEASIBILITY_SLACK && (after - before).abs() <= POLISH_OBJECTIVE_RTOL * before.max(1e-12) {
                delta = candidate;
                gap = g;
                converged = true;
            }
        }
    }
    if !converged {
        log::warn!("differential network ADMM stopped after {iterations} iterations, gap {gap:.2e}");
    }
    Ok(DiffNetSolution {
        objective: l1_objective(&delta),
        feasibility_gap: gap,
        delta,
        epsilon: eps,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        let x = SampleMatrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let c = sample_covariance(&x);
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((c - &r * r.transpose()).amax() < 1e-15);

        let id = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(sample_covariance(&id), DMatrix::identity(2, 2) * 0.5);

        let a = SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]]).unwrap();
        let b = SampleMatrix::from_rows(&[vec![0.5, 0.0], vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert!((sample_covariance(&a) - sample_covariance(&b)).amax() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, -0.2, 0.0, -0.2, 1.0]);
        assert_eq!(threshold(&d, 0.3), vec![PairIndex::new(1, 0)]);
        assert_eq!(threshold(&d, 0.0), vec![PairIndex::new(1, 0), PairIndex::new(2, 1)]);
        assert!(threshold(&d, 0.6).is_empty());
        let sweep = threshold_sweep(&d);
        assert_eq!(sweep.len(), 3);
        assert!(sweep[0].1.is_empty());
        assert_eq!(sweep[2].1.len(), 2);
    }

    #[test]
    fn equal_covariances_give_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p = DiffNetProblem::new(s.clone(), s, 0.01).unwrap();
        let sol = solve_diffnet(&p, &AdmmConfig::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.is_feasible());
    }

    #[test]
    fn large_epsilon_gives_zero() {
        let sp = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let sq = DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 1.0]);
        let p = DiffNetProblem::new(sp, sq, 1.0).unwrap();
        let sol = solve_diffnet(&p, &AdmmConfig::default()).unwrap();
        assert_eq!(sol.delta, DMatrix::zeros(2, 2));
    }

    #[test]
    fn constraint_map_matches_matrix_product() {
        let sp = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.3, 0.1, 1.0, -0.2, 0.3, -0.2, 1.5]);
        let sq = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.0, 0.4, 1.2, 0.1, 0.0, 0.1, 0.9]);
        let x = DVector::from_vec(vec![0.3, -1.0, 0.5, 2.0, 0.7, -0.4]);
        let delta = unpack(&x, 3);
        let direct = &sp * &delta * &sq;
        let via_map = constraint_matrix(&sp, &sq) * &x;
        for (a, b) in direct.iter().zip(via_map.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn returned_solutions_are_symmetric_and_feasible() {
        let sp = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.3, 0.0, 0.3, 1.0]);
        let sq = DMatrix::from_row_slice(3, 3, &[1.0, -0.1, 0.1, -0.1, 0.8, 0.0, 0.1, 0.0, 1.1]);
        let p = DiffNetProblem::new(sp, sq, 0.02).unwrap();
        let sol = solve_diffnet(&p, &AdmmConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.is_feasible(), "gap {}", sol.feasibility_gap);
        assert!((&sol.delta - sol.delta.transpose()).amax() < 1e-8);
    }

    #[test]
    fn invalid_problems_rejected() {
        let s = DMatrix::identity(2, 2);
        assert!(DiffNetProblem::new(s.clone(), s.clone(), 0.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(DiffNetProblem::new(asym, s.clone(), 0.1).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(DiffNetProblem::new(indef, s, 0.1).is_err());
    }
}
