//! Independent oracles shared by the integration suites.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]
#![allow(dead_code)]

use contour_opt::linalg::Matrix;
use contour_opt::qpsolver::QpProblem;
use rand::Rng;

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
        if a[p][k].abs() < 1e-11 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Optimum of `min ½xᵀQx + cᵀx s.t. Gx ≤ h` for positive definite `Q`,
/// found by checking the KKT conditions on every row subset of size ≤ n.
pub fn active_set_oracle(q: &[Vec<f64>], c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    let m = g.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut a = vec![vec![0.0; n + k]; n + k];
        let mut b = vec![0.0; n + k];
        for i in 0..n {
            a[i][..n].copy_from_slice(&q[i]);
            b[i] = -c[i];
        }
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                a[n + r][j] = g[i][j];
                a[j][n + r] = g[i][j];
            }
            b[n + r] = h[i];
        }
        let Some(sol) = gauss_solve(a, b) else { continue };
        let x = &sol[..n];
        if sol[n..].iter().any(|l| *l < -1e-9) {
            continue;
        }
        if (0..m).any(|i| g[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > h[i] + 1e-9) {
            continue;
        }
        let obj = 0.5 * (0..n).map(|i| x[i] * (0..n).map(|j| q[i][j] * x[j]).sum::<f64>()).sum::<f64>()
            + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((x.to_vec(), obj));
        }
    }
    best
}

/// Random strictly convex QP with a known feasible point.
pub fn random_pd_qp<R: Rng>(rng: &mut R, n: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let mm: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = (0..n).map(|k| mm[k][i] * mm[k][j]).sum::<f64>();
        }
        q[i][i] += 0.1;
    }
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let h: Vec<f64> = g
        .iter()
        .map(|row| row.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(0.0..1.0))
        .collect();
    (q, c, g, h)
}

pub fn to_problem(q: &[Vec<f64>], c: &[f64], g: &[Vec<f64>], h: &[f64]) -> QpProblem {
    let mut p = QpProblem::new(c.len());
    p.q = Matrix::from_rows(q);
    p.c = c.to_vec();
    p.a_in = if g.is_empty() { Matrix::zeros(0, c.len()) } else { Matrix::from_rows(g) };
    p.h_in = h.to_vec();
    p
}

/// For half-planes `aᵢᵀx ≤ bᵢ` inside the box `[lo, hi]²`, marks those whose
/// removal enlarges the feasible set: the segment of line `i` kept by every
/// other half-plane and the box has positive length.
pub fn essential_halfplanes(rows: &[([f64; 2], f64)], lo: f64, hi: f64) -> Vec<bool> {
    let mut box_rows: Vec<([f64; 2], f64)> = vec![([1.0, 0.0], hi), ([-1.0, 0.0], -lo), ([0.0, 1.0], hi), ([0.0, -1.0], -lo)];
    box_rows.extend_from_slice(rows);
    (0..rows.len())
        .map(|i| {
            let (a, b) = rows[i];
            let nn = a[0] * a[0] + a[1] * a[1];
            let p0 = [a[0] * b / nn, a[1] * b / nn];
            let dir = [-a[1], a[0]];
            let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (j, (c, d)) in box_rows.iter().enumerate() {
                if j == i + 4 {
                    continue;
                }
                // c·(p0 + t dir) ≤ d
                let slope = c[0] * dir[0] + c[1] * dir[1];
                let rest = d - (c[0] * p0[0] + c[1] * p0[1]);
                if slope.abs() < 1e-14 {
                    if rest < 0.0 {
                        return false;
                    }
                } else if slope > 0.0 {
                    t_hi = t_hi.min(rest / slope);
                } else {
                    t_lo = t_lo.max(rest / slope);
                }
            }
            t_hi - t_lo > 1e-9
        })
        .collect()
}
