//! Dense convex QP solver.
//!
//! Solves `min ½xᵀQx + cᵀx + c0` subject to `E x = b`, `G x ≤ h` and
//! `lower ≤ x ≤ upper` with an operator-splitting (ADMM) iteration on the
//! stacked form `l ≤ A x ≤ u`, Ruiz equilibration, adaptive step size and a
//! final polishing solve on the guessed active set.
//!
//! Infeasibility is declared from a dual-ray certificate: the ADMM dual
//! increment `δy`, projected onto the polar of the recession cone of
//! `[l, u]`, must satisfy `‖Aᵀδy‖∞ ≤ ε·‖δy‖∞` and
//! `uᵀ(δy)₊ + lᵀ(δy)₋ < −ε·‖δy‖∞` with `ε = eps_prim_inf`. When the
//! iteration cap is hit the same test is repeated with a tenfold looser `ε`
//! (the stall fallback) before `IterLimit` is reported.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{is_psd, Cholesky, LinalgError, Lu, Matrix};
use crate::scalar::{dot, norm2, norm_inf, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("objective matrix is not symmetric positive semidefinite")]
    NotPsd,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `min ½xᵀQx + cᵀx + c0  s.t.  a_eq x = b_eq, a_in x ≤ h_in, lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QpProblem<T: Scalar = f64> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub c0: T,
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    pub a_in: Matrix<T>,
    pub h_in: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem with zero objective in `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            q: Matrix::zeros(n, n),
            c: vec![T::zero(); n],
            c0: T::zero(),
            a_eq: Matrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: Matrix::zeros(0, n),
            h_in: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        let qx = self.q.mul_vec(x);
        T::lit(0.5) * dot(x, &qx) + dot(&self.c, x) + self.c0
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let dim = |what, expected, got| if expected == got { Ok(()) } else { Err(QpError::Dimension { what, expected, got }) };
        dim("Q rows", n, self.q.rows())?;
        dim("Q cols", n, self.q.cols())?;
        dim("equality columns", n, self.a_eq.cols())?;
        dim("equality right-hand side", self.a_eq.rows(), self.b_eq.len())?;
        dim("inequality columns", n, self.a_in.cols())?;
        dim("inequality right-hand side", self.a_in.rows(), self.h_in.len())?;
        dim("lower bounds", n, self.lower.len())?;
        dim("upper bounds", n, self.upper.len())?;
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(self.q.as_slice()) || !finite(&self.c) || !self.c0.is_finite() {
            return Err(QpError::NonFinite("objective"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(&self.b_eq) {
            return Err(QpError::NonFinite("equality rows"));
        }
        if !finite(self.a_in.as_slice()) || !finite(&self.h_in) {
            return Err(QpError::NonFinite("inequality rows"));
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        let tol = T::lit(1e-8).max(T::epsilon() * T::lit(100.0));
        if !is_psd(&self.q, tol) {
            return Err(QpError::NotPsd);
        }
        Ok(())
    }
}

impl<T: Scalar> AsRef<QpProblem<T>> for QpProblem<T> {
    fn as_ref(&self) -> &QpProblem<T> {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverOptions<T: Scalar = f64> {
    pub eps_abs: T,
    pub eps_rel: T,
    pub eps_prim_inf: T,
    pub max_iter: usize,
    pub rho: T,
    pub sigma: T,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: T,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub polish_delta: T,
    pub polish_refine_iters: usize,
    pub check_every: usize,
    pub presolve_dedup: bool,
    /// Solve tall problems over a growing working set of inequality rows,
    /// adding the most violated rows until every row holds.
    pub row_generation: bool,
    /// Inequality-row count above which row generation is used.
    pub row_generation_min_rows: usize,
    pub trace: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        let eps = T::lit(1e-6).max(T::epsilon() * T::lit(100.0));
        Self {
            eps_abs: eps,
            eps_rel: eps,
            eps_prim_inf: T::lit(1e-5).max(T::epsilon() * T::lit(1000.0)),
            max_iter: 50_000,
            rho: T::lit(0.1),
            sigma: T::lit(1e-6),
            alpha: T::lit(1.6),
            scaling_iters: 10,
            adaptive_rho: true,
            polish: true,
            polish_delta: T::lit(1e-7),
            polish_refine_iters: 10,
            check_every: 10,
            presolve_dedup: true,
            row_generation: true,
            row_generation_min_rows: 256,
            trace: false,
        }
    }
}

/// Residuals recorded at one convergence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolveResult<T: Scalar = f64> {
    pub x: Vec<T>,
    pub objective: T,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `max` violation of `l ≤ Ax ≤ u`.
    pub primal_residual: T,
    /// `‖Qx + c + Eᵀν + Gᵀλ + y_box‖∞`.
    pub dual_residual: T,
    /// `max |yᵢ|·slackᵢ` over all rows.
    pub complementarity: T,
    /// Multipliers `ν` of the equality rows.
    pub y_eq: Vec<T>,
    /// Multipliers `λ ≥ 0` of the inequality rows.
    pub y_in: Vec<T>,
    /// Bound multipliers: positive at an active upper bound, negative at an
    /// active lower bound.
    pub y_box: Vec<T>,
    pub polished: bool,
    pub trace: Vec<TraceRow>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Indices of inequality rows with a positive multiplier or zero slack.
    pub fn active_inequalities(&self, prob: &QpProblem<T>, tol: T) -> Vec<usize> {
        (0..prob.a_in.rows())
            .filter(|&i| {
                let slack = prob.h_in[i] - dot(prob.a_in.row(i), &self.x);
                slack.abs() <= tol * (T::one() + prob.h_in[i].abs())
            })
            .collect()
    }

    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.trace {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Starting point for a solve, in the original (unscaled) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T: Scalar = f64> {
    pub x: Vec<T>,
    /// Multipliers `(y_eq, y_in, y_box)`; ignored when the shapes differ.
    pub y: Option<(Vec<T>, Vec<T>, Vec<T>)>,
}

impl<T: Scalar> WarmStart<T> {
    pub fn from_result(r: &SolveResult<T>) -> Self {
        Self { x: r.x.clone(), y: Some((r.y_eq.clone(), r.y_in.clone(), r.y_box.clone())) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Eq(usize),
    In(usize),
    Box(usize),
}

/// Stacked constraints `l ≤ A x ≤ u`, after presolve.
struct Stacked<T: Scalar> {
    n: usize,
    a: Vec<T>,
    l: Vec<T>,
    u: Vec<T>,
    kind: Vec<RowKind>,
}

impl<T: Scalar> Stacked<T> {
    fn m(&self) -> usize {
        self.l.len()
    }

    fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    fn mul(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    fn tr_mul(&self, y: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, yi) in y.iter().enumerate() {
            if *yi == T::zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += *a * *yi;
            }
        }
    }
}

fn bits<T: Scalar>(v: T) -> u64 {
    // -0.0 and 0.0 compare equal and must hash equal
    let v = if v == T::zero() { 0.0 } else { v.as_f64() };
    v.to_bits()
}

enum Presolved<T: Scalar> {
    Ready(Stacked<T>),
    Infeasible,
}

fn presolve<T: Scalar>(p: &QpProblem<T>, dedup: bool, tol: T) -> Presolved<T> {
    let n = p.n();
    let mut st = Stacked { n, a: Vec::new(), l: Vec::new(), u: Vec::new(), kind: Vec::new() };
    let zero_row = |r: &[T]| r.iter().all(|v| *v == T::zero());
    for i in 0..p.a_eq.rows() {
        let r = p.a_eq.row(i);
        if zero_row(r) {
            if p.b_eq[i].abs() > tol {
                return Presolved::Infeasible;
            }
            continue;
        }
        st.a.extend_from_slice(r);
        st.l.push(p.b_eq[i]);
        st.u.push(p.b_eq[i]);
        st.kind.push(RowKind::Eq(i));
    }
    let mut seen: HashMap<Vec<u64>, ()> = HashMap::new();
    for i in 0..p.a_in.rows() {
        let r = p.a_in.row(i);
        if zero_row(r) {
            if p.h_in[i] < -tol {
                return Presolved::Infeasible;
            }
            continue;
        }
        if dedup {
            let key: Vec<u64> = r.iter().copied().chain(std::iter::once(p.h_in[i])).map(bits).collect();
            if seen.insert(key, ()).is_some() {
                continue;
            }
        }
        st.a.extend_from_slice(r);
        st.l.push(T::neg_infinity());
        st.u.push(p.h_in[i]);
        st.kind.push(RowKind::In(i));
    }
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo > hi {
            return Presolved::Infeasible;
        }
        if lo == T::neg_infinity() && hi == T::infinity() {
            continue;
        }
        let mut r = vec![T::zero(); n];
        r[j] = T::one();
        st.a.extend_from_slice(&r);
        st.l.push(lo);
        st.u.push(hi);
        st.kind.push(RowKind::Box(j));
    }
    Presolved::Ready(st)
}

/// Ruiz-equilibrated copy of the problem data.
struct Scaled<T: Scalar> {
    p: Matrix<T>,
    q: Vec<T>,
    a: Stacked<T>,
    d: Vec<T>,
    e: Vec<T>,
    c: T,
}

fn clamp_norm<T: Scalar>(v: T) -> T {
    if v < T::lit(1e-4) {
        T::one()
    } else {
        v.min(T::lit(1e4))
    }
}

fn equilibrate<T: Scalar>(prob: &QpProblem<T>, st: &Stacked<T>, iters: usize) -> Scaled<T> {
    let n = st.n;
    let m = st.m();
    let mut p = prob.q.clone();
    let mut q = prob.c.clone();
    let mut a = Stacked { n, a: st.a.clone(), l: st.l.clone(), u: st.u.clone(), kind: st.kind.clone() };
    let mut d = vec![T::one(); n];
    let mut e = vec![T::one(); m];
    let mut c = T::one();
    for _ in 0..iters {
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            for i in 0..n {
                col[j] = col[j].max(p[(i, j)].abs());
            }
        }
        let mut rown = vec![T::zero(); m];
        for i in 0..m {
            for (j, v) in a.row(i).iter().enumerate() {
                col[j] = col[j].max(v.abs());
                rown[i] = rown[i].max(v.abs());
            }
        }
        let dd: Vec<T> = col.iter().map(|v| T::one() / clamp_norm(*v).sqrt()).collect();
        let ee: Vec<T> = rown.iter().map(|v| T::one() / clamp_norm(*v).sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] = p[(i, j)] * dd[i] * dd[j];
            }
            q[i] *= dd[i];
            d[i] *= dd[i];
        }
        for i in 0..m {
            let ei = ee[i];
            for (j, v) in a.a[i * n..(i + 1) * n].iter_mut().enumerate() {
                *v = *v * ei * dd[j];
            }
            e[i] *= ei;
        }
        // cost scaling
        let mut mean_col = T::zero();
        for j in 0..n {
            let mut cj = T::zero();
            for i in 0..n {
                cj = cj.max(p[(i, j)].abs());
            }
            mean_col += cj;
        }
        mean_col /= T::from_usize_lossy(n.max(1));
        let gamma = T::one() / clamp_norm(mean_col.max(norm_inf(&q)));
        p = p.scale(gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        c *= gamma;
    }
    for i in 0..m {
        a.l[i] = st.l[i] * e[i];
        a.u[i] = st.u[i] * e[i];
    }
    Scaled { p, q, a, d, e, c }
}

struct Admm<'a, T: Scalar> {
    s: &'a Scaled<T>,
    opts: &'a SolverOptions<T>,
    rho: Vec<T>,
    rho_base: T,
    chol: Cholesky<T>,
    x: Vec<T>,
    z: Vec<T>,
    y: Vec<T>,
}

fn is_eq_row<T: Scalar>(l: T, u: T) -> bool {
    l == u
}

impl<'a, T: Scalar> Admm<'a, T> {
    fn rho_vector(s: &Scaled<T>, rho: T) -> Vec<T> {
        (0..s.a.m())
            .map(|i| if is_eq_row(s.a.l[i], s.a.u[i]) { rho * T::lit(1e3) } else { rho })
            .collect()
    }

    fn factor(s: &Scaled<T>, rho: &[T], sigma: T) -> Result<Cholesky<T>, LinalgError> {
        let n = s.a.n;
        let mut k = s.p.clone();
        for i in 0..n {
            k[(i, i)] += sigma;
        }
        for (r, ri) in rho.iter().enumerate() {
            let row = s.a.row(r);
            for i in 0..n {
                let ai = row[i];
                if ai == T::zero() {
                    continue;
                }
                let w = *ri * ai;
                for j in i..n {
                    k[(i, j)] += w * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                k[(i, j)] = k[(j, i)];
            }
        }
        Cholesky::factor(&k)
    }

    fn new(s: &'a Scaled<T>, opts: &'a SolverOptions<T>, warm: Option<(Vec<T>, Vec<T>)>) -> Result<Self, LinalgError> {
        let rho = Self::rho_vector(s, opts.rho);
        let chol = Self::factor(s, &rho, opts.sigma)?;
        let n = s.a.n;
        let m = s.a.m();
        let (x, y) = warm.unwrap_or_else(|| (vec![T::zero(); n], vec![T::zero(); m]));
        let mut z = vec![T::zero(); m];
        s.a.mul(&x, &mut z);
        for i in 0..m {
            z[i] = z[i].max(s.a.l[i]).min(s.a.u[i]);
        }
        Ok(Self { s, opts, rho, rho_base: opts.rho, chol, x, z, y })
    }

    /// One ADMM step; returns the dual increment.
    fn step(&mut self, buf_n: &mut [T], buf_m: &mut [T], dy: &mut [T]) {
        let s = self.s;
        let (n, m) = (s.a.n, s.a.m());
        let (alpha, sigma) = (self.opts.alpha, self.opts.sigma);
        for i in 0..m {
            buf_m[i] = self.rho[i] * self.z[i] - self.y[i];
        }
        s.a.tr_mul(buf_m, buf_n);
        for j in 0..n {
            buf_n[j] += sigma * self.x[j] - s.q[j];
        }
        let xt = self.chol.solve(buf_n);
        s.a.mul(&xt, buf_m);
        for j in 0..n {
            self.x[j] = alpha * xt[j] + (T::one() - alpha) * self.x[j];
        }
        for i in 0..m {
            let zh = alpha * buf_m[i] + (T::one() - alpha) * self.z[i];
            let zn = (zh + self.y[i] / self.rho[i]).max(s.a.l[i]).min(s.a.u[i]);
            let yn = self.y[i] + self.rho[i] * (zh - zn);
            dy[i] = yn - self.y[i];
            self.y[i] = yn;
            self.z[i] = zn;
        }
    }

    /// Unscaled residuals and their normalizers.
    fn residuals(&self) -> (T, T, T, T) {
        let s = self.s;
        let (n, m) = (s.a.n, s.a.m());
        let mut ax = vec![T::zero(); m];
        s.a.mul(&self.x, &mut ax);
        let (mut prim, mut np) = (T::zero(), T::zero());
        for i in 0..m {
            let inv = T::one() / s.e[i];
            prim = prim.max(((ax[i] - self.z[i]) * inv).abs());
            np = np.max((ax[i] * inv).abs()).max((self.z[i] * inv).abs());
        }
        let px = s.p.mul_vec(&self.x);
        let mut aty = vec![T::zero(); n];
        s.a.tr_mul(&self.y, &mut aty);
        let (mut dual, mut nd) = (T::zero(), T::zero());
        for j in 0..n {
            let inv = T::one() / (s.c * s.d[j]);
            dual = dual.max(((px[j] + s.q[j] + aty[j]) * inv).abs());
            nd = nd.max((px[j] * inv).abs()).max((aty[j] * inv).abs()).max((s.q[j] * inv).abs());
        }
        (prim, np, dual, nd)
    }

    fn certificate(&self, dy: &[T], eps: T) -> bool {
        let s = self.s;
        let m = s.a.m();
        let mut proj = dy.to_vec();
        for i in 0..m {
            if s.a.u[i] == T::infinity() {
                proj[i] = proj[i].min(T::zero());
            }
            if s.a.l[i] == T::neg_infinity() {
                proj[i] = proj[i].max(T::zero());
            }
        }
        let mut norm = T::zero();
        for i in 0..m {
            norm = norm.max((s.e[i] * proj[i]).abs());
        }
        if norm <= T::min_positive_value() * T::lit(1e10) {
            return false;
        }
        let mut aty = vec![T::zero(); s.a.n];
        s.a.tr_mul(&proj, &mut aty);
        let lhs = aty.iter().zip(&s.d).fold(T::zero(), |acc, (v, d)| acc.max((*v / *d).abs()));
        let mut support = T::zero();
        for i in 0..m {
            if proj[i] > T::zero() {
                support += s.a.u[i] * proj[i];
            } else if proj[i] < T::zero() {
                support += s.a.l[i] * proj[i];
            }
        }
        lhs <= eps * norm && support < -eps * norm
    }

    fn update_rho(&mut self, prim: T, np: T, dual: T, nd: T) -> Result<bool, LinalgError> {
        let tiny = T::lit(1e-30);
        let rp = prim / (np + tiny);
        let rd = dual / (nd + tiny);
        if rd <= tiny {
            return Ok(false);
        }
        let ratio = (rp / rd).sqrt();
        if !(ratio > T::lit(5.0) || ratio < T::lit(0.2)) || !ratio.is_finite() {
            return Ok(false);
        }
        let new = (self.rho_base * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
        if new == self.rho_base {
            return Ok(false);
        }
        let old_rho = self.rho.clone();
        self.rho_base = new;
        self.rho = Self::rho_vector(self.s, new);
        match Self::factor(self.s, &self.rho, self.opts.sigma) {
            Ok(c) => {
                self.chol = c;
                Ok(true)
            }
            Err(e) => {
                self.rho = old_rho;
                Err(e)
            }
        }
    }
}

/// Candidate solution in original variables with full multipliers (internal
/// row order).
struct Candidate<T: Scalar> {
    x: Vec<T>,
    y: Vec<T>,
}

struct Quality<T: Scalar> {
    prim: T,
    dual: T,
    comp: T,
    prim_tol: T,
    dual_tol: T,
    /// `max(1, ‖y‖∞)`: complementarity is `|y|·slack`, so its tolerance
    /// scales with the multipliers.
    y_scale: T,
}

impl<T: Scalar> Quality<T> {
    fn ok(&self) -> bool {
        self.prim <= self.prim_tol && self.dual <= self.dual_tol && self.comp <= self.dual_tol.max(self.prim_tol) * self.y_scale
    }
}

fn assess<T: Scalar>(prob: &QpProblem<T>, st: &Stacked<T>, cand: &Candidate<T>, opts: &SolverOptions<T>) -> Quality<T> {
    let (n, m) = (st.n, st.m());
    let mut ax = vec![T::zero(); m];
    st.mul(&cand.x, &mut ax);
    let (mut prim, mut np, mut comp) = (T::zero(), T::zero(), T::zero());
    for i in 0..m {
        let v = (st.l[i] - ax[i]).max(ax[i] - st.u[i]).max(T::zero());
        prim = prim.max(v);
        np = np.max(ax[i].abs());
        let y = cand.y[i];
        let slack = if y > T::zero() {
            (st.u[i] - ax[i]).abs()
        } else if y < T::zero() {
            (ax[i] - st.l[i]).abs()
        } else {
            T::zero()
        };
        if y != T::zero() {
            comp = comp.max(y.abs() * slack);
        }
    }
    let qx = prob.q.mul_vec(&cand.x);
    let mut aty = vec![T::zero(); n];
    st.tr_mul(&cand.y, &mut aty);
    let (mut dual, mut nd) = (T::zero(), T::zero());
    for j in 0..n {
        dual = dual.max((qx[j] + prob.c[j] + aty[j]).abs());
        nd = nd.max(qx[j].abs()).max(aty[j].abs()).max(prob.c[j].abs());
    }
    Quality {
        prim,
        dual,
        comp,
        prim_tol: opts.eps_abs + opts.eps_rel * np,
        dual_tol: opts.eps_abs + opts.eps_rel * nd,
        y_scale: norm_inf(&cand.y).max(T::one()),
    }
}

/// Solves the equality-constrained KKT system on the active set guessed
/// from the current iterate.
fn guess_active<T: Scalar>(admm: &Admm<'_, T>) -> Vec<(usize, i8)> {
    let s = admm.s;
    // +1 upper, -1 lower, 2 equality
    let mut act = Vec::new();
    for i in 0..s.a.m() {
        let (l, u, z, y) = (s.a.l[i], s.a.u[i], admm.z[i], admm.y[i]);
        if is_eq_row(l, u) {
            act.push((i, 2));
        } else if z - l < -y {
            act.push((i, -1));
        } else if u - z < y {
            act.push((i, 1));
        }
    }
    act
}

/// Keeps equality rows, then adds inequality rows by decreasing multiplier
/// size while they stay linearly independent.
fn independent_subset<T: Scalar>(admm: &Admm<'_, T>, act: &[(usize, i8)]) -> Vec<(usize, i8)> {
    let s = admm.s;
    let n = s.a.n;
    let mut order: Vec<(usize, i8)> = act.to_vec();
    order.sort_by(|a, b| {
        let ka = if a.1 == 2 { T::infinity() } else { admm.y[a.0].abs() };
        let kb = if b.1 == 2 { T::infinity() } else { admm.y[b.0].abs() };
        kb.partial_cmp(&ka).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
    });
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut out = Vec::new();
    for (i, side) in order {
        let row = s.a.row(i);
        let mut v = row.to_vec();
        for b in &basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * *y);
        }
        let nv = dot(&v, &v).sqrt();
        let nr = dot(row, row).sqrt();
        if nv > T::lit(1e-9).max(T::epsilon() * T::lit(1e3)) * nr {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
            out.push((i, side));
        } else if side == 2 {
            // dependent equality rows stay in; regularization absorbs them
            out.push((i, side));
        }
        if basis.len() == n {
            break;
        }
    }
    out.sort_unstable();
    out
}

enum Polished<T: Scalar> {
    Done(Candidate<T>),
    /// Positions in the active list whose multiplier has the wrong sign,
    /// with the size of the wrong-signed multiplier.
    WrongSign(Vec<(usize, T)>),
    Failed,
}

fn polish<T: Scalar>(admm: &Admm<'_, T>, opts: &SolverOptions<T>, act: &[(usize, i8)]) -> Polished<T> {
    let s = admm.s;
    let (n, m) = (s.a.n, s.a.m());
    let k = act.len();
    if k > 4 * n + 64 {
        return Polished::Failed;
    }
    let dim = n + k;
    let delta = opts.polish_delta;
    let mut kreg = Matrix::zeros(dim, dim);
    let mut kex = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kreg[(i, j)] = s.p[(i, j)];
            kex[(i, j)] = s.p[(i, j)];
        }
        kreg[(i, i)] += delta;
    }
    let mut rhs = vec![T::zero(); dim];
    for j in 0..n {
        rhs[j] = -s.q[j];
    }
    for (r, &(i, side)) in act.iter().enumerate() {
        let row = s.a.row(i);
        for j in 0..n {
            kreg[(n + r, j)] = row[j];
            kreg[(j, n + r)] = row[j];
            kex[(n + r, j)] = row[j];
            kex[(j, n + r)] = row[j];
        }
        kreg[(n + r, n + r)] = -delta;
        rhs[n + r] = if side == -1 { s.a.l[i] } else { s.a.u[i] };
    }
    let Ok(lu) = Lu::factor(&kreg) else {
        return Polished::Failed;
    };
    let mut sol = lu.solve(&rhs);
    for _ in 0..opts.polish_refine_iters {
        let kx = kex.mul_vec(&sol);
        let res: Vec<T> = rhs.iter().zip(&kx).map(|(a, b)| *a - *b).collect();
        if norm_inf(&res) <= T::epsilon() * (T::one() + norm_inf(&rhs)) {
            break;
        }
        let corr = lu.solve(&res);
        sol.iter_mut().zip(&corr).for_each(|(a, b)| *a += *b);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Polished::Failed;
    }
    let mut y = vec![T::zero(); m];
    let mut wrong = Vec::new();
    let sign_tol = opts.eps_abs.sqrt();
    for (r, &(i, side)) in act.iter().enumerate() {
        let mut v = sol[n + r];
        // multiplier sign must match the bound it sits on
        if side == 1 && v < T::zero() || side == -1 && v > T::zero() {
            if v.abs() > sign_tol {
                wrong.push((r, v.abs()));
            }
            v = T::zero();
        }
        y[i] = v;
    }
    if !wrong.is_empty() {
        return Polished::WrongSign(wrong);
    }
    let x: Vec<T> = (0..n).map(|j| sol[j] * s.d[j]).collect();
    let y: Vec<T> = (0..m).map(|i| y[i] * s.e[i] / s.c).collect();
    Polished::Done(Candidate { x, y })
}

/// Polishes, dropping rows with wrong-sign multipliers between attempts.
fn polish_refined<T: Scalar>(prob: &QpProblem<T>, st: &Stacked<T>, admm: &Admm<'_, T>, opts: &SolverOptions<T>, act: &[(usize, i8)]) -> Option<Candidate<T>> {
    let mut act = act.to_vec();
    for _ in 0..8 {
        match polish(admm, opts, &act) {
            Polished::Done(c) => return assess(prob, st, &c, opts).ok().then_some(c),
            Polished::Failed => return None,
            Polished::WrongSign(wrong) => {
                let mut keep = vec![true; act.len()];
                wrong.iter().for_each(|&(r, _)| keep[r] = false);
                let mut it = keep.iter();
                act.retain(|_| *it.next().expect("same length"));
            }
        }
    }
    None
}

/// Most violated stacked row at `x`, relative to the row norm, if any row
/// exceeds the primal tolerance.
fn most_violated<T: Scalar>(st: &Stacked<T>, x: &[T], prim_tol: T, skip: &[(usize, i8)]) -> Option<(usize, i8)> {
    let mut best: Option<(usize, i8, T)> = None;
    for i in 0..st.m() {
        if skip.iter().any(|a| a.0 == i) {
            continue;
        }
        let ax = dot(st.row(i), x);
        let (v, side) = if ax > st.u[i] { (ax - st.u[i], 1) } else { (st.l[i] - ax, -1) };
        if v <= prim_tol {
            continue;
        }
        let rel = v / norm2(st.row(i)).max(T::min_positive_value());
        if best.is_none_or(|b| rel > b.2) {
            best = Some((i, side, rel));
        }
    }
    best.map(|b| (b.0, b.1))
}

/// Primal active-set iterations from a linearly independent start: drop
/// the most wrong-signed multiplier, else add the most violated row.
fn polish_active_set<T: Scalar>(prob: &QpProblem<T>, st: &Stacked<T>, admm: &Admm<'_, T>, opts: &SolverOptions<T>, start: &[(usize, i8)]) -> Option<Candidate<T>> {
    let mut act = start.to_vec();
    for _ in 0..(4 * st.n + 32) {
        match polish(admm, opts, &act) {
            Polished::Failed => return None,
            Polished::WrongSign(wrong) => {
                let worst = wrong.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))?.0;
                act.remove(worst);
            }
            Polished::Done(c) => {
                let q = assess(prob, st, &c, opts);
                if q.ok() {
                    return Some(c);
                }
                let (i, side) = most_violated(st, &c.x, q.prim_tol, &act)?;
                let side = if is_eq_row(st.l[i], st.u[i]) { 2 } else { side };
                let pos = act.partition_point(|a| a.0 < i);
                act.insert(pos, (i, side));
            }
        }
    }
    None
}

/// Polishes on the guessed active set, then runs active-set iterations from
/// an independent subset of it.
fn try_polish<T: Scalar>(prob: &QpProblem<T>, st: &Stacked<T>, admm: &Admm<'_, T>, opts: &SolverOptions<T>) -> Option<Candidate<T>> {
    let act = guess_active(admm);
    if let Some(c) = polish_refined(prob, st, admm, opts, &act) {
        return Some(c);
    }
    let sub = independent_subset(admm, &act);
    polish_active_set(prob, st, admm, opts, &sub)
}

fn unscaled<T: Scalar>(admm: &Admm<'_, T>) -> Candidate<T> {
    let s = admm.s;
    // a one-sided row only admits multipliers of its bound's sign
    let sign_fixed = |i: usize, y: T| {
        let y = if s.a.u[i] == T::infinity() { y.min(T::zero()) } else { y };
        if s.a.l[i] == T::neg_infinity() {
            y.max(T::zero())
        } else {
            y
        }
    };
    Candidate {
        x: admm.x.iter().zip(&s.d).map(|(x, d)| *x * *d).collect(),
        y: admm.y.iter().zip(&s.e).enumerate().map(|(i, (y, e))| sign_fixed(i, *y) * *e / s.c).collect(),
    }
}

fn finish<T: Scalar>(
    prob: &QpProblem<T>,
    st: &Stacked<T>,
    cand: Candidate<T>,
    status: SolveStatus,
    iterations: usize,
    polished: bool,
    trace: Vec<TraceRow>,
    opts: &SolverOptions<T>,
) -> SolveResult<T> {
    let q = assess(prob, st, &cand, opts);
    let mut y_eq = vec![T::zero(); prob.a_eq.rows()];
    let mut y_in = vec![T::zero(); prob.a_in.rows()];
    let mut y_box = vec![T::zero(); prob.n()];
    for (i, k) in st.kind.iter().enumerate() {
        match *k {
            RowKind::Eq(r) => y_eq[r] = cand.y[i],
            RowKind::In(r) => y_in[r] = cand.y[i],
            RowKind::Box(r) => y_box[r] = cand.y[i],
        }
    }
    SolveResult {
        objective: prob.objective(&cand.x),
        x: cand.x,
        status,
        iterations,
        primal_residual: q.prim,
        dual_residual: q.dual,
        complementarity: q.comp,
        y_eq,
        y_in,
        y_box,
        polished,
        trace,
    }
}

fn infeasible_result<T: Scalar>(prob: &QpProblem<T>) -> SolveResult<T> {
    let n = prob.n();
    SolveResult {
        x: vec![T::nan(); n],
        objective: T::nan(),
        status: SolveStatus::Infeasible,
        iterations: 0,
        primal_residual: T::infinity(),
        dual_residual: T::nan(),
        complementarity: T::nan(),
        y_eq: vec![T::zero(); prob.a_eq.rows()],
        y_in: vec![T::zero(); prob.a_in.rows()],
        y_box: vec![T::zero(); n],
        polished: false,
        trace: Vec::new(),
    }
}

/// Solves one problem from a cold start.
pub fn solve<T: Scalar, P: AsRef<QpProblem<T>>>(prob: P, opts: &SolverOptions<T>) -> Result<SolveResult<T>, QpError> {
    solve_warm(prob.as_ref(), opts, None)
}

/// Solves one problem, optionally starting from a previous solution.
pub fn solve_warm<T: Scalar>(prob: &QpProblem<T>, opts: &SolverOptions<T>, warm: Option<&WarmStart<T>>) -> Result<SolveResult<T>, QpError> {
    prob.validate()?;
    if opts.row_generation && prob.a_in.rows() > opts.row_generation_min_rows.max(4 * prob.n()) {
        return solve_working_set(prob, opts, warm);
    }
    solve_direct(prob, opts, warm)
}

/// Row `i` of `G x ≤ h` exceeds its bound by more than the primal tolerance.
fn row_violation<T: Scalar>(prob: &QpProblem<T>, i: usize, x: &[T], opts: &SolverOptions<T>) -> Option<T> {
    let ax = dot(prob.a_in.row(i), x);
    let h = prob.h_in[i];
    let v = ax - h;
    let tol = opts.eps_abs + opts.eps_rel * ax.abs().max(h.abs());
    (v > tol).then(|| v / norm2(prob.a_in.row(i)).max(T::min_positive_value()))
}

/// Outer loop over a working set of inequality rows. A relaxation whose
/// optimum satisfies every omitted row is optimal for the full problem, and
/// an infeasible relaxation proves the full problem infeasible.
fn solve_working_set<T: Scalar>(prob: &QpProblem<T>, opts: &SolverOptions<T>, warm: Option<&WarmStart<T>>) -> Result<SolveResult<T>, QpError> {
    let n = prob.n();
    let m_in = prob.a_in.rows();
    let batch = (2 * n).max(16);
    let mut in_set = vec![false; m_in];
    let mut work: Vec<usize> = Vec::new();
    if let Some(w) = warm {
        if let Some((_, yi, _)) = &w.y {
            if yi.len() == m_in {
                work.extend((0..m_in).filter(|&i| yi[i] != T::zero()));
            }
        }
    }
    for &i in &work {
        in_set[i] = true;
    }
    let mut inner_warm: Option<WarmStart<T>> = warm.map(|w| WarmStart { x: w.x.clone(), y: None });
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    loop {
        work.sort_unstable();
        let mut sub = prob.clone();
        sub.a_in = Matrix::zeros(0, n);
        sub.h_in = Vec::with_capacity(work.len());
        for &i in &work {
            sub.a_in.push_row(prob.a_in.row(i));
            sub.h_in.push(prob.h_in[i]);
        }
        let r = solve_direct(&sub, opts, inner_warm.as_ref())?;
        iterations += r.iterations;
        trace.extend(r.trace.iter().copied());
        let mut y_in = vec![T::zero(); m_in];
        for (k, &i) in work.iter().enumerate() {
            y_in[i] = r.y_in[k];
        }
        let mut violated: Vec<(usize, T)> = if r.status == SolveStatus::Infeasible {
            Vec::new()
        } else {
            (0..m_in).filter(|&i| !in_set[i]).filter_map(|i| row_violation(prob, i, &r.x, opts).map(|v| (i, v))).collect()
        };
        if violated.is_empty() || r.status == SolveStatus::Infeasible {
            let prim = (0..m_in)
                .map(|i| (dot(prob.a_in.row(i), &r.x) - prob.h_in[i]).max(T::zero()))
                .fold(r.primal_residual, |a, b| a.max(b));
            return Ok(SolveResult {
                primal_residual: if r.status == SolveStatus::Infeasible { r.primal_residual } else { prim },
                y_in,
                iterations,
                trace,
                ..r
            });
        }
        violated.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        for &(i, _) in violated.iter().take(batch) {
            in_set[i] = true;
            work.push(i);
        }
        inner_warm = Some(WarmStart { x: r.x.clone(), y: None });
    }
}

fn solve_direct<T: Scalar>(prob: &QpProblem<T>, opts: &SolverOptions<T>, warm: Option<&WarmStart<T>>) -> Result<SolveResult<T>, QpError> {
    let n = prob.n();
    if n == 0 {
        return Err(QpError::Dimension { what: "decision vector", expected: 1, got: 0 });
    }
    let st = match presolve(prob, opts.presolve_dedup, opts.eps_abs) {
        Presolved::Ready(st) => st,
        Presolved::Infeasible => return Ok(infeasible_result(prob)),
    };
    let scaled = equilibrate(prob, &st, opts.scaling_iters);
    let m = st.m();
    let warm_scaled = warm.and_then(|w| {
        if w.x.len() != n || w.x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x: Vec<T> = w.x.iter().zip(&scaled.d).map(|(x, d)| *x / *d).collect();
        let mut y = vec![T::zero(); m];
        if let Some((ye, yi, yb)) = &w.y {
            if ye.len() == prob.a_eq.rows() && yi.len() == prob.a_in.rows() && yb.len() == n {
                for (i, k) in st.kind.iter().enumerate() {
                    let v = match *k {
                        RowKind::Eq(r) => ye[r],
                        RowKind::In(r) => yi[r],
                        RowKind::Box(r) => yb[r],
                    };
                    y[i] = scaled.c * v / scaled.e[i];
                }
            }
        }
        Some((x, y))
    });
    let mut admm = Admm::new(&scaled, opts, warm_scaled)?;
    let mut trace = Vec::new();
    let (mut bn, mut bm, mut dy) = (vec![T::zero(); n], vec![T::zero(); m], vec![T::zero(); m]);
    // polish is attempted whenever ADMM reaches the next looser tier
    let tiers: Vec<T> = [1e3, 1e2, 1e1, 1.0].iter().map(|f| T::lit(*f)).collect();
    let mut tier = 0usize;
    let check_every = opts.check_every.max(1);
    let mut best_fallback: Option<(Candidate<T>, bool)> = None;
    for it in 1..=opts.max_iter {
        admm.step(&mut bn, &mut bm, &mut dy);
        if it % check_every != 0 && it != opts.max_iter {
            continue;
        }
        let (prim, np, dual, nd) = admm.residuals();
        if !(prim.is_finite() && dual.is_finite()) {
            break;
        }
        if opts.trace {
            trace.push(TraceRow { iteration: it, primal_residual: prim.as_f64(), dual_residual: dual.as_f64(), rho: admm.rho_base.as_f64() });
        }
        while tier < tiers.len() {
            let f = tiers[tier];
            let pt = (opts.eps_abs + opts.eps_rel * np) * f;
            let dt = (opts.eps_abs + opts.eps_rel * nd) * f;
            if !(prim <= pt && dual <= dt) {
                break;
            }
            tier += 1;
            if opts.polish {
                if let Some(c) = try_polish(prob, &st, &admm, opts) {
                    return Ok(finish(prob, &st, c, SolveStatus::Optimal, it, true, trace, opts));
                }
            }
            if tier == tiers.len() {
                let c = unscaled(&admm);
                if assess(prob, &st, &c, opts).ok() {
                    return Ok(finish(prob, &st, c, SolveStatus::Optimal, it, false, trace, opts));
                }
                best_fallback = Some((c, false));
            }
        }
        if admm.certificate(&dy, opts.eps_prim_inf) {
            let c = unscaled(&admm);
            return Ok(finish(prob, &st, c, SolveStatus::Infeasible, it, false, trace, opts));
        }
        if opts.adaptive_rho && it % (check_every * 5) == 0 {
            admm.update_rho(prim, np, dual, nd)?;
        }
    }
    let iterations = opts.max_iter;
    if opts.polish {
        if let Some(c) = try_polish(prob, &st, &admm, opts) {
            return Ok(finish(prob, &st, c, SolveStatus::Optimal, iterations, true, trace, opts));
        }
    }
    if admm.certificate(&dy, opts.eps_prim_inf * T::lit(10.0)) {
        let c = unscaled(&admm);
        return Ok(finish(prob, &st, c, SolveStatus::Infeasible, iterations, false, trace, opts));
    }
    let (c, polished) = best_fallback.unwrap_or_else(|| (unscaled(&admm), false));
    Ok(finish(prob, &st, c, SolveStatus::IterLimit, iterations, polished, trace, opts))
}

/// Solves problems in order, warm-starting each from its predecessor. An
/// exact repeat of the previous problem reuses its result.
pub fn solve_sequence<T: Scalar, P: AsRef<QpProblem<T>>>(programs: &[P], opts: &SolverOptions<T>) -> Result<Vec<SolveResult<T>>, QpError> {
    let mut out: Vec<SolveResult<T>> = Vec::with_capacity(programs.len());
    for (i, p) in programs.iter().enumerate() {
        let p = p.as_ref();
        if i > 0 {
            let prev = programs[i - 1].as_ref();
            if prev == p {
                let r = out[i - 1].clone();
                out.push(r);
                continue;
            }
            let last = &out[i - 1];
            if last.is_optimal() && prev.n() == p.n() {
                let warm = WarmStart::from_result(last);
                out.push(solve_warm(p, opts, Some(&warm))?);
                continue;
            }
        }
        out.push(solve_warm(p, opts, None)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_dim(q: f64, c: f64) -> QpProblem {
        let mut p = QpProblem::new(1);
        p.q[(0, 0)] = q;
        p.c[0] = c;
        p
    }

    #[test]
    fn square_above_one() {
        let mut p = one_dim(2.0, 0.0);
        p.a_in = Matrix::from_rows(&[vec![-1.0]]);
        p.h_in = vec![-1.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.y_in[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn empty_region_is_infeasible() {
        let mut p = one_dim(0.0, 1.0);
        p.a_in = Matrix::from_rows(&[vec![1.0], vec![-1.0]]);
        p.h_in = vec![0.0, -1.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        let mut p = one_dim(0.0, 1.0);
        p.lower = vec![1.0];
        p.upper = vec![0.0];
        assert_eq!(solve(&p, &SolverOptions::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn infeasible_through_equalities() {
        let mut p = QpProblem::new(2);
        p.a_eq = Matrix::from_rows(&[vec![1.0, 1.0]]);
        p.b_eq = vec![3.0];
        p.upper = vec![1.0, 1.0];
        p.lower = vec![0.0, 0.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_and_bounds() {
        // min x0² + x1² s.t. x0 + x1 = 2, x1 <= 0.5
        let mut p = QpProblem::new(2);
        p.q = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        p.a_eq = Matrix::from_rows(&[vec![1.0, 1.0]]);
        p.b_eq = vec![2.0];
        p.upper = vec![f64::INFINITY, 0.5];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[1], 0.5, epsilon = 1e-9);
        // stationarity: 2x0 + nu = 0, 2x1 + nu + y1 = 0
        assert_abs_diff_eq!(r.y_eq[0], -3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(r.y_box[1], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn lp_vertex() {
        // min -x0 - x1 s.t. x0 + 2x1 <= 4, 3x0 + x1 <= 6, x >= 0
        let mut p = QpProblem::new(2);
        p.c = vec![-1.0, -1.0];
        p.a_in = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]);
        p.h_in = vec![4.0, 6.0];
        p.lower = vec![0.0, 0.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 1.6, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[1], 1.2, epsilon = 1e-9);
        assert!(r.dual_residual <= 1e-9);
    }

    #[test]
    fn duplicates_are_harmless() {
        let mut p = one_dim(2.0, -10.0);
        p.a_in = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
        p.h_in = vec![2.0, 2.0, 2.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(r.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.y_in.iter().sum::<f64>(), 6.0, epsilon = 1e-8);
    }

    #[test]
    fn sequence_repeat_and_empty() {
        let mut p = one_dim(2.0, 0.0);
        p.a_in = Matrix::from_rows(&[vec![-1.0]]);
        p.h_in = vec![-1.0];
        let rs = solve_sequence(&[p.clone(), p.clone()], &SolverOptions::default()).unwrap();
        assert_eq!(rs[0], rs[1]);
        let none: Vec<QpProblem> = Vec::new();
        assert!(solve_sequence(&none, &SolverOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn rejects_indefinite_objective() {
        let p = one_dim(-1.0, 0.0);
        assert!(matches!(solve(&p, &SolverOptions::default()), Err(QpError::NotPsd)));
    }

    #[test]
    fn f32_solve() {
        let mut p: QpProblem<f32> = QpProblem::new(1);
        p.q[(0, 0)] = 2.0;
        p.a_in = Matrix::from_rows(&[vec![-1.0f32]]);
        p.h_in = vec![-1.0];
        let r = solve(&p, &SolverOptions::default()).unwrap();
        assert!(r.is_optimal());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn trace_is_recorded() {
        let mut p = one_dim(2.0, 0.0);
        p.a_in = Matrix::from_rows(&[vec![-1.0]]);
        p.h_in = vec![-1.0];
        let opts = SolverOptions { trace: true, ..SolverOptions::default() };
        let r = solve(&p, &opts).unwrap();
        assert!(!r.trace.is_empty());
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,primal_residual,dual_residual,rho"));
    }
}
