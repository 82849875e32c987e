//! Dense two-phase simplex with Bland's rule, for small reference LPs.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Row {
    Le,
    Ge,
    Eq,
}

const PIVOT_TOL: f64 = 1e-10;

/// Minimizes `cᵀx` subject to the given rows and `x ≥ 0`. Returns the optimal
/// value and point, or `None` if infeasible or unbounded.
pub fn minimize(c: &[f64], rows: &[(Vec<f64>, Row, f64)]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, Row, f64)> = rows.to_vec();
    for (a, kind, b) in &mut rows {
        if *b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *kind = match kind {
                Row::Le => Row::Ge,
                Row::Ge => Row::Le,
                Row::Eq => Row::Eq,
            };
        }
    }
    let n_slack = rows.iter().filter(|r| r.1 != Row::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Row::Le).count();
    let cols = n + n_slack + n_art;
    let mut t = vec![vec![0.0; cols + 1]; rows.len()];
    let mut basis = vec![0; rows.len()];
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coef, kind, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coef);
        t[i][cols] = *b;
        match kind {
            Row::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Row::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Row::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }

    let mut phase1 = vec![0.0; cols];
    phase1[n + n_slack..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, cols)?;
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n + n_slack)
        .map(|(i, _)| t[i][cols])
        .sum();
    if infeas > 1e-8 {
        return None;
    }
    // drive zero-level artificials out of the basis, dropping redundant rows
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n + n_slack {
            match (0..n + n_slack).find(|&j| t[i][j].abs() > PIVOT_TOL) {
                Some(j) => {
                    pivot(&mut t, &mut basis, i, j);
                    i += 1;
                }
                None => {
                    t.remove(i);
                    basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    run(&mut t, &mut basis, &phase2, n + n_slack)?;

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][cols];
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((value, x))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
    let p = t[r][j];
    t[r].iter_mut().for_each(|v| *v /= p);
    let pr = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[j];
            if f != 0.0 {
                row.iter_mut().zip(&pr).for_each(|(v, w)| *v -= f * w);
            }
        }
    }
    basis[r] = j;
}

/// Simplex iterations over columns `< allowed`; `None` if unbounded.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Option<()> {
    let rhs = t[0].len() - 1;
    for _ in 0..100_000 {
        let entering = (0..allowed).find(|&j| {
            let rc = cost[j] - basis.iter().enumerate().map(|(i, &b)| cost[b] * t[i][j]).sum::<f64>();
            rc < -1e-9
        });
        let Some(j) = entering else { return Some(()) };
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..t.len() {
            if t[i][j] > PIVOT_TOL {
                let ratio = t[i][rhs] / t[i][j];
                let better = match best {
                    None => true,
                    Some((r, _, b)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < b),
                };
                if better {
                    best = Some((ratio, i, basis[i]));
                }
            }
        }
        let (_, r, _) = best?;
        pivot(t, basis, r, j);
    }
    panic!("simplex did not terminate");
}
