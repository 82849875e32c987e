#![allow(dead_code)]

pub mod lp;
pub mod oracle;

use mnchange::baseline::DiffNetProblem;
use nalgebra::DMatrix;

/// Reference optimum of the differential network program over a general
/// `m × m` matrix with explicit symmetry rows, `Δ = Δ⁺ − Δ⁻`.
pub fn diffnet_lp(problem: &DiffNetProblem) -> (f64, DMatrix<f64>) {
    use lp::Row;
    let m = problem.m();
    let (sp, sq, eps) = (problem.sigma_p(), problem.sigma_q(), problem.epsilon());
    let nv = m * m;
    // column-major entry index e = j·m + i for Δ_ij; Δ⁺ then Δ⁻
    let mut rows = Vec::new();
    for c in 0..m {
        for r in 0..m {
            let mut coef = vec![0.0; 2 * nv];
            for j in 0..m {
                for i in 0..m {
                    let w = sp[(r, i)] * sq[(j, c)];
                    coef[j * m + i] = w;
                    coef[nv + j * m + i] = -w;
                }
            }
            let target = sq[(r, c)] - sp[(r, c)];
            rows.push((coef.clone(), Row::Le, eps + target));
            rows.push((coef, Row::Ge, target - eps));
        }
    }
    for j in 0..m {
        for i in j + 1..m {
            let mut coef = vec![0.0; 2 * nv];
            coef[j * m + i] = 1.0;
            coef[nv + j * m + i] = -1.0;
            coef[i * m + j] = -1.0;
            coef[nv + i * m + j] = 1.0;
            rows.push((coef, Row::Eq, 0.0));
        }
    }
    let (value, x) = lp::minimize(&vec![1.0; 2 * nv], &rows).expect("feasible bounded LP");
    let delta = DMatrix::from_fn(m, m, |i, j| x[j * m + i] - x[nv + j * m + i]);
    (value, delta)
}

/// Seeded covariance pairs for `m ≤ 3` baseline fixtures.
pub fn diffnet_fixtures() -> Vec<DiffNetProblem> {
    let mut out = Vec::new();
    let sp = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let sq = DMatrix::from_row_slice(2, 2, &[1.2, -0.1, -0.1, 1.0]);
    out.push(DiffNetProblem::new(sp.clone(), sq.clone(), 0.01).unwrap());
    out.push(DiffNetProblem::new(sp, sq, 0.1).unwrap());
    let sp = DMatrix::from_row_slice(2, 2, &[0.26, 0.02, 0.02, 0.25]);
    let sq = DMatrix::from_row_slice(2, 2, &[0.25, -0.03, -0.03, 0.27]);
    out.push(DiffNetProblem::new(sp, sq, 0.005).unwrap());
    let sp = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.3, 0.0, 0.3, 1.0]);
    let sq = DMatrix::from_row_slice(3, 3, &[1.0, -0.1, 0.1, -0.1, 0.8, 0.0, 0.1, 0.0, 1.1]);
    out.push(DiffNetProblem::new(sp.clone(), sq.clone(), 0.02).unwrap());
    out.push(DiffNetProblem::new(sp, sq, 0.1).unwrap());
    // covariances of seeded Gaussian samples
    use mnchange::samplers::{build_lattice, make_gaussian_change};
    use mnchange::seed::rng_from_seed;
    let g = build_lattice(2).unwrap();
    for seed in 0..3 {
        let mut rng = rng_from_seed(seed);
        let inst = make_gaussian_change(&g, 1, &mut rng).unwrap();
        let p = inst.p.sample(60, &mut rng).unwrap();
        let q = inst.q.sample(60, &mut rng).unwrap();
        let keep = |x: &mnchange::SampleMatrix| {
            mnchange::SampleMatrix::new(x.values().columns(0, 3).into_owned()).unwrap()
        };
        let prob = DiffNetProblem::from_samples(&keep(&p), &keep(&q), 1.0).unwrap();
        let eps = 0.3 * prob.trivial_epsilon();
        out.push(prob.with_epsilon(eps).unwrap());
    }
    out
}
