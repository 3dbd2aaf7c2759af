//! Data-based deterministic approximation: one block of affine rows per
//! data point, stacked under a fixed convex quadratic objective.

use std::fmt::Display;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dims, UncertaintyPoint};
use crate::linalg::{is_psd, Matrix};
use crate::qpsolver::{solve_sequence, QpError, QpProblem, SolveResult, SolveStatus, SolverOptions};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Error)]
pub enum DdaError {
    #[error("data point {point} has dims {got:?}, template expects {expected:?}")]
    Dims { point: usize, expected: Dims, got: Dims },
    #[error("generator returned {got_rows}x{got_cols} rows with {got_rhs} right-hand sides for point {point}; expected {m}x{n}")]
    GeneratorShape { point: usize, m: usize, n: usize, got_rows: usize, got_cols: usize, got_rhs: usize },
    #[error("generator produced a non-finite value for point {0}")]
    GeneratorNonFinite(usize),
    #[error("template: {0}")]
    Template(String),
    #[error("objective matrix is not positive semidefinite")]
    NotPsd,
    #[error("re-solve without point {point} ended with status {status:?}")]
    Resolve { point: usize, status: SolveStatus },
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `G x ≤ h` rows produced for one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRows<T: Scalar = f64> {
    pub g: Matrix<T>,
    pub h: Vec<T>,
}

/// Pure map from a data point to its `m` affine rows in `n` variables.
pub trait ConstraintGenerator<T: Scalar>: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn dims(&self) -> Dims;
    fn rows(&self, point: &UncertaintyPoint<T>) -> AffineRows<T>;
}

/// Generator backed by a closure.
pub struct FnGenerator<F> {
    n: usize,
    m: usize,
    dims: Dims,
    f: F,
}

impl<F> FnGenerator<F> {
    pub fn new(n: usize, m: usize, dims: Dims, f: F) -> Self {
        Self { n, m, dims, f }
    }
}

impl<T: Scalar, F> ConstraintGenerator<T> for FnGenerator<F>
where
    F: Fn(&UncertaintyPoint<T>) -> AffineRows<T> + Send + Sync,
{
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn dims(&self) -> Dims {
        self.dims
    }
    fn rows(&self, point: &UncertaintyPoint<T>) -> AffineRows<T> {
        (self.f)(point)
    }
}

/// `½xᵀQx + cᵀx + c0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Objective<T: Scalar = f64> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub c0: T,
}

impl<T: Scalar> Objective<T> {
    pub fn linear(c: Vec<T>) -> Self {
        let n = c.len();
        Self { q: Matrix::zeros(n, n), c, c0: T::zero() }
    }
}

/// Data-independent rows: `E x = b` and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BaseConstraints<T: Scalar = f64> {
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> BaseConstraints<T> {
    pub fn free(n: usize) -> Self {
        Self { a_eq: Matrix::zeros(0, n), b_eq: Vec::new(), lower: vec![T::neg_infinity(); n], upper: vec![T::infinity(); n] }
    }

    /// Equality rows plus one row per finite bound.
    pub fn row_count(&self) -> usize {
        self.a_eq.rows()
            + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }
}

#[derive(Clone)]
pub struct ProblemTemplate<T: Scalar = f64> {
    pub objective: Objective<T>,
    pub generator: Arc<dyn ConstraintGenerator<T>>,
    pub base: BaseConstraints<T>,
}

impl<T: Scalar> std::fmt::Debug for ProblemTemplate<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemTemplate")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("objective", &self.objective)
            .field("base", &self.base)
            .finish()
    }
}

impl<T: Scalar> ProblemTemplate<T> {
    pub fn new(objective: Objective<T>, generator: Arc<dyn ConstraintGenerator<T>>, base: BaseConstraints<T>) -> Result<Self, DdaError> {
        let n = generator.n();
        let bad = |what: &str| Err(DdaError::Template(format!("{what} does not match n = {n}")));
        if objective.q.rows() != n || objective.q.cols() != n || objective.c.len() != n {
            return bad("objective");
        }
        if base.a_eq.cols() != n || base.lower.len() != n || base.upper.len() != n {
            return bad("base constraints");
        }
        if base.a_eq.rows() != base.b_eq.len() {
            return Err(DdaError::Template("equality rows and right-hand side differ in length".into()));
        }
        if !is_psd(&objective.q, T::lit(1e-8)) {
            return Err(DdaError::NotPsd);
        }
        Ok(Self { objective, generator, base })
    }

    pub fn n(&self) -> usize {
        self.generator.n()
    }

    pub fn m(&self) -> usize {
        self.generator.m()
    }

    /// Same constraints under another objective.
    pub fn with_objective(&self, objective: Objective<T>) -> Result<Self, DdaError> {
        Self::new(objective, self.generator.clone(), self.base.clone())
    }
}

/// Origin of one constraint row of an assembled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    Equality { row: usize },
    Generated { point: usize, row: usize },
    Lower { var: usize },
    Upper { var: usize },
}

/// D-DA instance for a concrete point multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledProgram<T: Scalar = f64> {
    pub problem: QpProblem<T>,
    /// Equality rows, then generated rows, then finite bounds.
    pub provenance: Vec<RowSource>,
    pub points: usize,
    pub m: usize,
}

impl<T: Scalar> AsRef<QpProblem<T>> for AssembledProgram<T> {
    fn as_ref(&self) -> &QpProblem<T> {
        &self.problem
    }
}

impl<T: Scalar> AssembledProgram<T> {
    pub fn generated_rows(&self) -> usize {
        self.points * self.m
    }

    pub fn base_rows(&self) -> usize {
        self.provenance.len() - self.generated_rows()
    }

    pub fn row_count(&self) -> usize {
        self.provenance.len()
    }

    /// Generated row index (into `problem.a_in`) of row `row` of point `point`.
    pub fn generated_index(&self, point: usize, row: usize) -> usize {
        point * self.m + row
    }

    /// Same program without the listed generated rows.
    pub fn without_generated(&self, drop: &[usize]) -> QpProblem<T> {
        let mut p = self.problem.clone();
        let n = p.n();
        let mut a = Matrix::zeros(0, n);
        let mut h = Vec::new();
        for i in 0..self.problem.a_in.rows() {
            if !drop.contains(&i) {
                a.push_row(self.problem.a_in.row(i));
                h.push(self.problem.h_in[i]);
            }
        }
        p.a_in = a;
        p.h_in = h;
        p
    }
}

/// Stacks the template's rows for every point, in data order.
pub fn assemble<T: Scalar>(tmpl: &ProblemTemplate<T>, data: &[UncertaintyPoint<T>]) -> Result<AssembledProgram<T>, DdaError> {
    let (n, m) = (tmpl.n(), tmpl.m());
    let dims = tmpl.generator.dims();
    let mut problem = QpProblem::new(n);
    problem.q = tmpl.objective.q.clone();
    problem.c = tmpl.objective.c.clone();
    problem.c0 = tmpl.objective.c0;
    problem.a_eq = tmpl.base.a_eq.clone();
    problem.b_eq = tmpl.base.b_eq.clone();
    problem.lower = tmpl.base.lower.clone();
    problem.upper = tmpl.base.upper.clone();
    let blocks = data
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            if p.dims() != dims {
                return Err(DdaError::Dims { point: k, expected: dims, got: p.dims() });
            }
            let rows = tmpl.generator.rows(p);
            if rows.g.rows() != m || rows.g.cols() != n || rows.h.len() != m {
                return Err(DdaError::GeneratorShape {
                    point: k,
                    m,
                    n,
                    got_rows: rows.g.rows(),
                    got_cols: rows.g.cols(),
                    got_rhs: rows.h.len(),
                });
            }
            if rows.g.as_slice().iter().chain(&rows.h).any(|v| !v.is_finite()) {
                return Err(DdaError::GeneratorNonFinite(k));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut flat = Vec::with_capacity(data.len() * m * n);
    let mut h = Vec::with_capacity(data.len() * m);
    for b in &blocks {
        flat.extend_from_slice(b.g.as_slice());
        h.extend_from_slice(&b.h);
    }
    problem.a_in = Matrix::from_row_major(data.len() * m, n, flat).expect("consistent sizes");
    problem.h_in = h;
    let mut provenance: Vec<RowSource> = (0..problem.a_eq.rows()).map(|row| RowSource::Equality { row }).collect();
    for point in 0..data.len() {
        provenance.extend((0..m).map(|row| RowSource::Generated { point, row }));
    }
    for var in 0..n {
        if problem.lower[var].is_finite() {
            provenance.push(RowSource::Lower { var });
        }
        if problem.upper[var].is_finite() {
            provenance.push(RowSource::Upper { var });
        }
    }
    Ok(AssembledProgram { problem, provenance, points: data.len(), m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeasibilityCheck<T: Scalar = f64> {
    pub feasible: bool,
    pub worst_violation: T,
    pub worst_row: Option<RowSource>,
}

/// Largest row violation of `x`; feasible iff it is at most `tol`.
pub fn check_feasible<T: Scalar>(prog: &AssembledProgram<T>, x: &[T], tol: T) -> FeasibilityCheck<T> {
    let p = &prog.problem;
    let mut worst = T::zero();
    let mut worst_row = None;
    let mut note = |v: T, src: RowSource| {
        if v > worst || v.is_nan() {
            worst = if v.is_nan() { T::infinity() } else { v };
            worst_row = Some(src);
        }
    };
    for row in 0..p.a_eq.rows() {
        note((dot(p.a_eq.row(row), x) - p.b_eq[row]).abs(), RowSource::Equality { row });
    }
    for i in 0..p.a_in.rows() {
        note(dot(p.a_in.row(i), x) - p.h_in[i], RowSource::Generated { point: i / prog.m.max(1), row: i % prog.m.max(1) });
    }
    for var in 0..p.n() {
        note(p.lower[var] - x[var], RowSource::Lower { var });
        note(x[var] - p.upper[var], RowSource::Upper { var });
    }
    FeasibilityCheck { feasible: worst <= tol, worst_violation: worst, worst_row }
}

/// Leave-one-out analysis of which points shape the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Points (positions in the input) whose removal changes the optimal value.
    pub boundary_points: Vec<usize>,
    /// Generated rows with zero slack at the optimum.
    pub active_rows: Vec<usize>,
    /// Points contributing at least one active row.
    pub active_points: Vec<usize>,
    /// Boundary constraints as `(point, row within point)`.
    pub boundary_constraints: Vec<(usize, usize)>,
    pub b_z: usize,
    pub b_c: usize,
    pub objective: f64,
}

/// Relative objective change that counts as "the optimum moved".
pub const OBJECTIVE_CHANGE_TOL: f64 = 1e-7;

fn changed<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs().as_f64() > OBJECTIVE_CHANGE_TOL * b.abs().as_f64().max(1.0)
}

fn resolve_all<T: Scalar>(problems: &[QpProblem<T>], opts: &SolverOptions<T>) -> Result<Vec<SolveResult<T>>, DdaError> {
    let chunks: Vec<Vec<SolveResult<T>>> = problems
        .par_chunks(4)
        .map(|c| solve_sequence(c, opts))
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Active-row screen followed by leave-one-out re-solves.
pub fn find_boundary_points<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    data: &[UncertaintyPoint<T>],
    optimum: &SolveResult<T>,
    tol: T,
    opts: &SolverOptions<T>,
) -> Result<BoundaryReport, DdaError> {
    let prog = assemble(tmpl, data)?;
    let p = &prog.problem;
    let m = prog.m;
    let active_rows: Vec<usize> = (0..p.a_in.rows())
        .filter(|&i| (dot(p.a_in.row(i), &optimum.x) - p.h_in[i]).abs() <= tol * (T::one() + p.h_in[i].abs()))
        .collect();
    let mut active_points: Vec<usize> = active_rows.iter().map(|i| i / m).collect();
    active_points.dedup();
    let loo: Vec<QpProblem<T>> = active_points
        .iter()
        .map(|&k| prog.without_generated(&(k * m..(k + 1) * m).collect::<Vec<_>>()))
        .collect();
    let results = resolve_all(&loo, opts)?;
    let mut boundary_points = Vec::new();
    for (&k, r) in active_points.iter().zip(&results) {
        if r.status != SolveStatus::Optimal {
            return Err(DdaError::Resolve { point: k, status: r.status });
        }
        if changed(r.objective, optimum.objective) {
            boundary_points.push(k);
        }
    }
    let per_point: Vec<Vec<usize>> = boundary_points
        .iter()
        .map(|&k| active_rows.iter().copied().filter(|i| i / m == k).collect())
        .collect();
    let single: Vec<QpProblem<T>> = per_point.iter().flatten().map(|&i| prog.without_generated(&[i])).collect();
    let single_res = resolve_all(&single, opts)?;
    let mut boundary_constraints = Vec::new();
    let mut idx = 0;
    for (k, rows) in boundary_points.iter().zip(&per_point) {
        let mut own = Vec::new();
        for &i in rows {
            let r = &single_res[idx];
            idx += 1;
            if r.status != SolveStatus::Optimal {
                return Err(DdaError::Resolve { point: *k, status: r.status });
            }
            if changed(r.objective, optimum.objective) {
                own.push((*k, i % m));
            }
        }
        if own.is_empty() {
            // only jointly binding: every active row of the point counts
            own = rows.iter().map(|i| (*k, i % m)).collect();
        }
        boundary_constraints.extend(own);
    }
    Ok(BoundaryReport {
        b_z: boundary_points.len(),
        b_c: boundary_constraints.len(),
        boundary_points,
        active_rows,
        active_points,
        boundary_constraints,
        objective: optimum.objective.as_f64(),
    })
}

fn term<T: Scalar + Display>(coef: T, var: &str, first: bool) -> String {
    let sign = if coef < T::zero() { "-" } else { "+" };
    let mag = coef.abs();
    if first && sign == "+" {
        format!("{mag} {var}")
    } else {
        format!("{sign} {mag} {var}")
    }
}

fn linear_expr<T: Scalar>(row: &[T]) -> String {
    let mut parts = Vec::new();
    for (j, v) in row.iter().enumerate() {
        if *v != T::zero() {
            parts.push(term(*v, &format!("x{j}"), parts.is_empty()));
        }
    }
    if parts.is_empty() {
        "0 x0".to_string()
    } else {
        parts.join(" ")
    }
}

/// Writes the program in CPLEX-style LP text. Row names encode provenance:
/// `e<i>` equality, `g<point>_<row>` generated. The objective constant is
/// emitted as a comment.
pub fn write_lp<T: Scalar, W: Write>(prog: &AssembledProgram<T>, mut w: W) -> Result<(), DdaError> {
    let p = &prog.problem;
    let n = p.n();
    writeln!(w, "\\ contour-opt D-DA: n = {n}, points = {}, rows per point = {}", prog.points, prog.m)?;
    writeln!(w, "\\ objective constant: {}", p.c0)?;
    writeln!(w, "Minimize")?;
    let mut obj = linear_expr(&p.c);
    let mut quad = Vec::new();
    for i in 0..n {
        for j in i..n {
            let v = if i == j { p.q[(i, i)] } else { p.q[(i, j)] + p.q[(j, i)] };
            if v != T::zero() {
                let var = if i == j { format!("x{i} ^ 2") } else { format!("x{i} * x{j}") };
                quad.push(term(v, &var, quad.is_empty()));
            }
        }
    }
    if !quad.is_empty() {
        obj = format!("{obj} + [ {} ] / 2", quad.join(" "));
    }
    writeln!(w, " obj: {obj}")?;
    writeln!(w, "Subject To")?;
    for i in 0..p.a_eq.rows() {
        writeln!(w, " e{i}: {} = {}", linear_expr(p.a_eq.row(i)), p.b_eq[i])?;
    }
    for i in 0..p.a_in.rows() {
        writeln!(w, " g{}_{}: {} <= {}", i / prog.m.max(1), i % prog.m.max(1), linear_expr(p.a_in.row(i)), p.h_in[i])?;
    }
    writeln!(w, "Bounds")?;
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(w, " x{j} free")?,
            (true, true) => writeln!(w, " {lo} <= x{j} <= {hi}")?,
            (true, false) => writeln!(w, " x{j} >= {lo}")?,
            (false, true) => writeln!(w, " -inf <= x{j} <= {hi}")?,
        }
    }
    writeln!(w, "End")?;
    Ok(())
}
