//! DC optimal power flow under renewable uncertainty with affine generator
//! recourse, expressed as a data-driven program and run through the full
//! reduction chain.
//!
//! Conventions:
//! - Net injection at every bus is `A p + C pᴿ + d`, so `d` is the negated
//!   bus demand.
//! - A data point `ξ` is the MW deviation of the renewables from forecast.
//!   Generators absorb the total deviation `s = eᵀξ` in proportion to `λ`,
//!   so the real-time dispatch is `p − sλ`.
//! - Deviations are centered by their sample mean before use, and the mean
//!   is added to the forecast.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataSet, DatasetError, Dims, UncertaintyPoint};
use crate::dda::{assemble, AffineRows, BaseConstraints, ConstraintGenerator, DdaError, Objective, ProblemTemplate};
use crate::density::{select_bandwidth, BandwidthSelection, DensityError};
use crate::linalg::{Lu, Matrix};
use crate::qpsolver::{solve, QpError, SolveResult, SolveStatus, SolverOptions};
use crate::reduction::{reduce, EtaSpec, Reduction, ReductionConfig, ReductionError, ReductionReport};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("case file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("case JSON is invalid at `{path}`: {message}")]
    Json { path: String, message: String },
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("reduced susceptance matrix is singular: {0}")]
    Singular(String),
    #[error("data has dims (r1 = {}, r2 = {}); the case needs r1 = 0, r2 = {expected}", .got.r1, .got.r2)]
    Dims { expected: usize, got: Dims },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: StageKind,
        #[source]
        source: Box<OpfError>,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Dda(#[from] DdaError),
    #[error(transparent)]
    Solver(#[from] QpError),
}

impl OpfError {
    fn at(self, stage: StageKind) -> Self {
        OpfError::Stage { stage, source: Box::new(self) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    #[serde(default)]
    pub demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub susceptance_pu: f64,
    pub limit_mw: f64,
}

/// Quadratic cost `c2·p² + c1·p + c0` in $/h with `p` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: u32,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Renewable {
    pub bus: u32,
    pub forecast_mw: f64,
}

/// Network, cost and forecast data of one study case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub reference_bus: u32,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub renewables: Vec<Renewable>,
}

const CASE6: &str = include_str!("../data/case6.json");
const CASE39: &str = include_str!("../data/case39.json");
const CASE6_DATA: &str = include_str!("../data/case6_deviations.csv");

impl GridCase {
    /// Parses and validates a case; JSON errors carry the failing path.
    pub fn from_json_str(text: &str) -> Result<Self, OpfError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let case: GridCase = serde_path_to_error::deserialize(de).map_err(|e| OpfError::Json {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: &Path) -> Result<Self, OpfError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => OpfError::NotFound(path.to_path_buf()),
            _ => OpfError::Io(e),
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    /// Six buses, three generators, two renewables.
    pub fn six_bus() -> Self {
        Self::from_json_str(CASE6).expect("bundled case is valid")
    }

    /// Thirty-nine buses, ten generators, two renewables.
    pub fn thirty_nine_bus() -> Self {
        Self::from_json_str(CASE39).expect("bundled case is valid")
    }

    /// Looks up a bundled case by name.
    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "case6" => Some(Self::six_bus()),
            "case39" => Some(Self::thirty_nine_bus()),
            _ => None,
        }
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn reference_index(&self) -> usize {
        self.bus_index(self.reference_bus).expect("validated")
    }

    /// Checks ids, limits, costs and connectivity.
    pub fn validate(&self) -> Result<(), OpfError> {
        let bad = |m: String| Err(OpfError::Invalid(m));
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return bad("no buses".into());
        }
        if self.generators.is_empty() {
            return bad("no generators".into());
        }
        for (i, b) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|o| o.id == b.id) {
                return bad(format!("duplicate bus id {}", b.id));
            }
            if !b.demand_mw.is_finite() {
                return bad(format!("bus {}: demand must be finite", b.id));
            }
        }
        let known = |id: u32, what: String| {
            if self.bus_index(id).is_some() {
                Ok(())
            } else {
                Err(OpfError::Invalid(format!("{what} refers to unknown bus {id}")))
            }
        };
        known(self.reference_bus, "reference_bus".into())?;
        for (k, br) in self.branches.iter().enumerate() {
            known(br.from, format!("branches[{k}].from"))?;
            known(br.to, format!("branches[{k}].to"))?;
            if br.from == br.to {
                return bad(format!("branches[{k}] is a self-loop"));
            }
            if !(br.susceptance_pu.is_finite() && br.susceptance_pu != 0.0) {
                return bad(format!("branches[{k}]: susceptance must be finite and nonzero"));
            }
            if !(br.limit_mw.is_finite() && br.limit_mw > 0.0) {
                return bad(format!("branches[{k}]: limit must be finite and positive"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            known(g.bus, format!("generators[{k}].bus"))?;
            let finite = [g.p_min_mw, g.p_max_mw, g.c2, g.c1, g.c0].iter().all(|v| v.is_finite());
            if !finite || g.p_min_mw > g.p_max_mw {
                return bad(format!("generators[{k}]: need finite values with p_min_mw <= p_max_mw"));
            }
            if g.c2 < 0.0 {
                return bad(format!("generators[{k}]: c2 must be nonnegative"));
            }
        }
        for (k, r) in self.renewables.iter().enumerate() {
            known(r.bus, format!("renewables[{k}].bus"))?;
            if !r.forecast_mw.is_finite() {
                return bad(format!("renewables[{k}]: forecast must be finite"));
            }
        }
        if let Some(orphan) = self.unreachable_bus() {
            return Err(OpfError::Singular(format!("bus {orphan} is not connected to the reference bus")));
        }
        Ok(())
    }

    fn unreachable_bus(&self) -> Option<u32> {
        let nb = self.buses.len();
        let mut adj = vec![Vec::new(); nb];
        for br in &self.branches {
            let (i, j) = (self.bus_index(br.from)?, self.bus_index(br.to)?);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; nb];
        let mut stack = vec![self.bus_index(self.reference_bus)?];
        while let Some(i) = stack.pop() {
            if !std::mem::replace(&mut seen[i], true) {
                stack.extend(adj[i].iter().copied());
            }
        }
        seen.iter().position(|s| !s).map(|i| self.buses[i].id)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Decision variables: generation, non-reference angles, participation.
    pub fn variable_count(&self) -> usize {
        2 * self.generators.len() + self.buses.len() - 1
    }

    /// Generated rows per data point: two per branch and two per generator.
    pub fn rows_per_point(&self) -> usize {
        2 * self.branches.len() + 2 * self.generators.len()
    }

    pub fn uncertainty_dims(&self) -> Dims {
        Dims::continuous(self.renewables.len())
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.demand_mw).sum()
    }
}

/// Bundled 1000-point deviation sample for the six-bus case.
pub fn six_bus_deviations() -> DataSet<f64> {
    crate::dataset::read_dataset(CASE6_DATA.as_bytes(), Dims::continuous(2), crate::dataset::DataFormat::Csv { header: true })
        .expect("bundled data is valid")
}

/// Incidence, Laplacian and bordered-inverse matrices of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct DcMatrices<T: Scalar = f64> {
    /// Bus × generator incidence.
    pub a: Matrix<T>,
    /// Susceptance Laplacian in MW/rad.
    pub b: Matrix<T>,
    /// Bus × renewable incidence.
    pub c: Matrix<T>,
    /// `B` without the reference row and column.
    pub b_hat: Matrix<T>,
    /// `B̂⁻¹` bordered by a zero reference row and column.
    pub b_breve: Matrix<T>,
    pub reference: usize,
    /// Bus indices other than the reference, ascending.
    pub non_reference: Vec<usize>,
}

pub fn build_matrices<T: Scalar>(case: &GridCase) -> Result<DcMatrices<T>, OpfError> {
    case.validate()?;
    let nb = case.bus_count();
    let g = case.generators.len();
    let r = case.renewables.len();
    let idx = |id: u32| case.bus_index(id).expect("validated");
    let mut a = Matrix::zeros(nb, g);
    for (k, gen) in case.generators.iter().enumerate() {
        a[(idx(gen.bus), k)] = T::one();
    }
    let mut c = Matrix::zeros(nb, r);
    for (k, ren) in case.renewables.iter().enumerate() {
        c[(idx(ren.bus), k)] = T::one();
    }
    let mut b = Matrix::zeros(nb, nb);
    for br in &case.branches {
        let (i, j) = (idx(br.from), idx(br.to));
        let y = T::lit(br.susceptance_pu * case.base_mva);
        b[(i, j)] -= y;
        b[(j, i)] -= y;
        b[(i, i)] += y;
        b[(j, j)] += y;
    }
    let reference = case.reference_index();
    let non_reference: Vec<usize> = (0..nb).filter(|&i| i != reference).collect();
    let mut b_hat = Matrix::zeros(nb - 1, nb - 1);
    for (p, &i) in non_reference.iter().enumerate() {
        for (q, &j) in non_reference.iter().enumerate() {
            b_hat[(p, q)] = b[(i, j)];
        }
    }
    let mut b_breve = Matrix::zeros(nb, nb);
    if nb > 1 {
        let lu = Lu::factor(&b_hat).map_err(|e| OpfError::Singular(e.to_string()))?;
        if lu.pivot_ratio() < T::epsilon() * T::lit(1e3) {
            return Err(OpfError::Singular(format!("pivot ratio {}", lu.pivot_ratio())));
        }
        let inv = lu.inverse();
        for (p, &i) in non_reference.iter().enumerate() {
            for (q, &j) in non_reference.iter().enumerate() {
                b_breve[(i, j)] = inv[(p, q)];
            }
        }
    }
    Ok(DcMatrices { a, b, c, b_hat, b_breve, reference, non_reference })
}

/// How the deviation variance in the objective is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// One variance of `eᵀξ` over the whole centered dataset, used by every
    /// stage. Stages then differ only in their constraints, so their optima
    /// are ordered by set inclusion.
    #[default]
    Shared,
    /// Weighted variance over each stage's own points, with SDS weights on
    /// the thinned stage.
    PerStage,
}

/// Weighted variance of the totals `eᵀξ`.
pub fn weighted_total_variance<T: Scalar>(points: &[UncertaintyPoint<T>], weights: &[usize]) -> f64 {
    assert_eq!(points.len(), weights.len());
    let total_w: f64 = weights.iter().map(|&w| w as f64).sum();
    if total_w == 0.0 {
        return 0.0;
    }
    let sums: Vec<f64> = points.iter().map(|p| p.real_sum().as_f64()).collect();
    let mean = sums.iter().zip(weights).map(|(s, &w)| s * w as f64).sum::<f64>() / total_w;
    sums.iter().zip(weights).map(|(s, &w)| w as f64 * (s - mean) * (s - mean)).sum::<f64>() / total_w
}

/// Positions of the variable blocks in `x = (p, θ_non-ref, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub generators: usize,
    pub buses: usize,
}

impl VarLayout {
    pub fn p(&self, i: usize) -> usize {
        i
    }

    /// Column of the angle at non-reference position `k`.
    pub fn theta(&self, k: usize) -> usize {
        self.generators + k
    }

    pub fn lambda(&self, i: usize) -> usize {
        self.generators + self.buses - 1 + i
    }

    pub fn n(&self) -> usize {
        2 * self.generators + self.buses - 1
    }
}

#[derive(Debug, Clone)]
struct BranchData<T: Scalar> {
    from: usize,
    to: usize,
    /// Susceptance in MW/rad.
    y: T,
    limit: T,
}

/// Per-point branch and generator rows.
struct OpfRows<T: Scalar> {
    layout: VarLayout,
    /// Non-reference position of each bus; `None` for the reference.
    theta_col: Vec<Option<usize>>,
    branches: Vec<BranchData<T>>,
    p_min: Vec<T>,
    p_max: Vec<T>,
    /// `B̆A`.
    k: Matrix<T>,
    /// `B̆C`.
    w: Matrix<T>,
    r: usize,
}

impl<T: Scalar> ConstraintGenerator<T> for OpfRows<T> {
    fn n(&self) -> usize {
        self.layout.n()
    }

    fn m(&self) -> usize {
        2 * self.branches.len() + 2 * self.layout.generators
    }

    fn dims(&self) -> Dims {
        Dims::continuous(self.r)
    }

    fn rows(&self, point: &UncertaintyPoint<T>) -> AffineRows<T> {
        let xi = &point.real_part;
        let s = point.real_sum();
        let wxi = self.w.mul_vec(xi);
        let n = self.layout.n();
        let g = self.layout.generators;
        let mut rows = Matrix::zeros(0, n);
        let mut h = Vec::with_capacity(self.m());
        let mut row = vec![T::zero(); n];
        for br in &self.branches {
            row.iter_mut().for_each(|v| *v = T::zero());
            if let Some(k) = self.theta_col[br.from] {
                row[self.layout.theta(k)] += br.y;
            }
            if let Some(k) = self.theta_col[br.to] {
                row[self.layout.theta(k)] -= br.y;
            }
            for i in 0..g {
                row[self.layout.lambda(i)] = -br.y * s * (self.k[(br.from, i)] - self.k[(br.to, i)]);
            }
            let shift = br.y * (wxi[br.from] - wxi[br.to]);
            rows.push_row(&row);
            h.push(br.limit - shift);
            let neg: Vec<T> = row.iter().map(|v| -*v).collect();
            rows.push_row(&neg);
            h.push(br.limit + shift);
        }
        for i in 0..g {
            row.iter_mut().for_each(|v| *v = T::zero());
            row[self.layout.p(i)] = T::one();
            row[self.layout.lambda(i)] = -s;
            rows.push_row(&row);
            h.push(self.p_max[i]);
            row[self.layout.p(i)] = -T::one();
            row[self.layout.lambda(i)] = s;
            rows.push_row(&row);
            h.push(-self.p_min[i]);
        }
        AffineRows { g: rows, h }
    }
}

/// Dispatch decision with the full angle vector (reference angle 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfDecision {
    pub p_g: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Dispatch after a deviation is realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTimeState {
    pub p_g: Vec<f64>,
    pub theta: Vec<f64>,
    /// Flow on each branch, positive from `from` to `to`.
    pub flows: Vec<f64>,
}

/// Worst constraint violation of a decision over a set of deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub worst_violation: f64,
    pub worst_point: Option<usize>,
    /// Points with any violation above the tolerance.
    pub violating_points: usize,
    pub checked: usize,
}

/// A case bound to matrices and a deviation center.
#[derive(Debug, Clone)]
pub struct OpfModel<T: Scalar = f64> {
    pub case: GridCase,
    pub matrices: DcMatrices<T>,
    /// Mean deviation added to the forecasts.
    pub center: Vec<T>,
    pub layout: VarLayout,
    k: Matrix<T>,
    w: Matrix<T>,
}

impl<T: Scalar> OpfModel<T> {
    pub fn new(case: &GridCase, center: Vec<T>) -> Result<Self, OpfError> {
        let matrices = build_matrices::<T>(case)?;
        if center.len() != case.renewables.len() {
            return Err(OpfError::Dims { expected: case.renewables.len(), got: Dims::continuous(center.len()) });
        }
        let k = matrices.b_breve.matmul(&matrices.a);
        let w = matrices.b_breve.matmul(&matrices.c);
        let layout = VarLayout { generators: case.generators.len(), buses: case.bus_count() };
        Ok(Self { case: case.clone(), matrices, center, layout, k, w })
    }

    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn m(&self) -> usize {
        self.case.rows_per_point()
    }

    /// Forecasts plus the deviation center.
    pub fn effective_forecast(&self) -> Vec<T> {
        self.case.renewables.iter().zip(&self.center).map(|(r, c)| T::lit(r.forecast_mw) + *c).collect()
    }

    /// `d = −demand`.
    pub fn injection_offset(&self) -> Vec<T> {
        self.case.buses.iter().map(|b| T::lit(-b.demand_mw)).collect()
    }

    fn theta_col(&self) -> Vec<Option<usize>> {
        let mut col = vec![None; self.layout.buses];
        for (k, &i) in self.matrices.non_reference.iter().enumerate() {
            col[i] = Some(k);
        }
        col
    }

    /// Quadratic cost plus `V·Σ c2 λ²`.
    pub fn objective(&self, variance: T) -> Objective<T> {
        let n = self.n();
        let mut q = Matrix::zeros(n, n);
        let mut c = vec![T::zero(); n];
        let mut c0 = T::zero();
        for (i, g) in self.case.generators.iter().enumerate() {
            let c2 = T::lit(g.c2);
            q[(self.layout.p(i), self.layout.p(i))] = T::lit(2.0) * c2;
            q[(self.layout.lambda(i), self.layout.lambda(i))] = T::lit(2.0) * c2 * variance;
            c[self.layout.p(i)] = T::lit(g.c1);
            c0 += T::lit(g.c0);
        }
        Objective { q, c, c0 }
    }

    /// Nominal power flow, `Σλ = 1`, generation and participation bounds.
    pub fn base_constraints(&self) -> BaseConstraints<T> {
        let n = self.n();
        let nb = self.layout.buses;
        let g = self.layout.generators;
        let cpr = self.matrices.c.mul_vec(&self.effective_forecast());
        let d = self.injection_offset();
        let mut a_eq = Matrix::zeros(0, n);
        let mut b_eq = Vec::with_capacity(nb + 1);
        for i in 0..nb {
            let mut row = vec![T::zero(); n];
            for (k, &j) in self.matrices.non_reference.iter().enumerate() {
                row[self.layout.theta(k)] = self.matrices.b[(i, j)];
            }
            for gi in 0..g {
                row[self.layout.p(gi)] = -self.matrices.a[(i, gi)];
            }
            a_eq.push_row(&row);
            b_eq.push(cpr[i] + d[i]);
        }
        let mut row = vec![T::zero(); n];
        for gi in 0..g {
            row[self.layout.lambda(gi)] = T::one();
        }
        a_eq.push_row(&row);
        b_eq.push(T::one());
        let mut lower = vec![T::neg_infinity(); n];
        let mut upper = vec![T::infinity(); n];
        for (i, gen) in self.case.generators.iter().enumerate() {
            lower[self.layout.p(i)] = T::lit(gen.p_min_mw);
            upper[self.layout.p(i)] = T::lit(gen.p_max_mw);
            lower[self.layout.lambda(i)] = T::zero();
            upper[self.layout.lambda(i)] = T::one();
        }
        BaseConstraints { a_eq, b_eq, lower, upper }
    }

    /// Program template for centered deviations.
    pub fn template(&self, variance: T) -> Result<ProblemTemplate<T>, OpfError> {
        let idx = |id: u32| self.case.bus_index(id).expect("validated");
        let rows = OpfRows {
            layout: self.layout,
            theta_col: self.theta_col(),
            branches: self
                .case
                .branches
                .iter()
                .map(|b| BranchData {
                    from: idx(b.from),
                    to: idx(b.to),
                    y: T::lit(b.susceptance_pu * self.case.base_mva),
                    limit: T::lit(b.limit_mw),
                })
                .collect(),
            p_min: self.case.generators.iter().map(|g| T::lit(g.p_min_mw)).collect(),
            p_max: self.case.generators.iter().map(|g| T::lit(g.p_max_mw)).collect(),
            k: self.k.clone(),
            w: self.w.clone(),
            r: self.case.renewables.len(),
        };
        Ok(ProblemTemplate::new(self.objective(variance), Arc::new(rows), self.base_constraints())?)
    }

    pub fn decision(&self, x: &[T]) -> OpfDecision {
        let g = self.layout.generators;
        let mut theta = vec![0.0; self.layout.buses];
        for (k, &i) in self.matrices.non_reference.iter().enumerate() {
            theta[i] = x[self.layout.theta(k)].as_f64();
        }
        OpfDecision {
            p_g: (0..g).map(|i| x[self.layout.p(i)].as_f64()).collect(),
            theta,
            lambda: (0..g).map(|i| x[self.layout.lambda(i)].as_f64()).collect(),
        }
    }

    /// `‖Bθ − A p − C pᴿ − d‖∞` at the forecast.
    pub fn balance_residual(&self, dec: &OpfDecision) -> f64 {
        let theta: Vec<T> = dec.theta.iter().map(|v| T::lit(*v)).collect();
        let p: Vec<T> = dec.p_g.iter().map(|v| T::lit(*v)).collect();
        let bt = self.matrices.b.mul_vec(&theta);
        let ap = self.matrices.a.mul_vec(&p);
        let cpr = self.matrices.c.mul_vec(&self.effective_forecast());
        let d = self.injection_offset();
        (0..self.layout.buses).map(|i| (bt[i] - ap[i] - cpr[i] - d[i]).abs().as_f64()).fold(0.0, f64::max)
    }

    /// Dispatch, angles and flows once the centered deviation `xi` occurs.
    pub fn realtime(&self, dec: &OpfDecision, xi: &[T]) -> RealTimeState {
        let s: f64 = xi.iter().map(|v| v.as_f64()).sum();
        let p_g: Vec<f64> = dec.p_g.iter().zip(&dec.lambda).map(|(p, l)| p - s * l).collect();
        let lam: Vec<T> = dec.lambda.iter().map(|v| T::lit(*v)).collect();
        let kl = self.k.mul_vec(&lam);
        let wxi = self.w.mul_vec(xi);
        let theta: Vec<f64> =
            (0..self.layout.buses).map(|i| dec.theta[i] - s * kl[i].as_f64() + wxi[i].as_f64()).collect();
        let flows = self
            .case
            .branches
            .iter()
            .map(|b| {
                let (i, j) = (self.case.bus_index(b.from).expect("validated"), self.case.bus_index(b.to).expect("validated"));
                b.susceptance_pu * self.case.base_mva * (theta[i] - theta[j])
            })
            .collect();
        RealTimeState { p_g, theta, flows }
    }

    /// `‖Bθ̂ − A p̂ − C(pᴿ + ξ) − d‖∞` after the deviation `xi`.
    pub fn realtime_balance_residual(&self, dec: &OpfDecision, xi: &[T]) -> f64 {
        let rt = self.realtime(dec, xi);
        let theta: Vec<T> = rt.theta.iter().map(|v| T::lit(*v)).collect();
        let p: Vec<T> = rt.p_g.iter().map(|v| T::lit(*v)).collect();
        let bt = self.matrices.b.mul_vec(&theta);
        let ap = self.matrices.a.mul_vec(&p);
        let ren: Vec<T> = self.effective_forecast().iter().zip(xi).map(|(f, x)| *f + *x).collect();
        let cr = self.matrices.c.mul_vec(&ren);
        let d = self.injection_offset();
        (0..self.layout.buses).map(|i| (bt[i] - ap[i] - cr[i] - d[i]).abs().as_f64()).fold(0.0, f64::max)
    }

    /// Largest generator or line limit violation over `points`.
    pub fn replay(&self, dec: &OpfDecision, points: &[UncertaintyPoint<T>], tol: f64) -> ReplayCheck {
        let mut out = ReplayCheck { worst_violation: 0.0, worst_point: None, violating_points: 0, checked: points.len() };
        for (k, pt) in points.iter().enumerate() {
            let rt = self.realtime(dec, &pt.real_part);
            let mut v: f64 = 0.0;
            for (p, g) in rt.p_g.iter().zip(&self.case.generators) {
                v = v.max(p - g.p_max_mw).max(g.p_min_mw - p);
            }
            for (f, b) in rt.flows.iter().zip(&self.case.branches) {
                v = v.max(f.abs() - b.limit_mw);
            }
            if v > tol {
                out.violating_points += 1;
            }
            if v > out.worst_violation {
                out.worst_violation = v;
                out.worst_point = Some(k);
            }
        }
        out
    }
}

/// Bandwidth source for the α-process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaChoice {
    Fixed(f64),
    /// Smoothest candidate of the grid.
    Auto { grid: Vec<f64> },
}

/// SDS radius source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaChoice {
    /// `η = ζ`.
    MatchZeta,
    Fixed(f64),
    /// No thinning stage.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// All α-filtered points.
    DAlpha,
    /// The uniform `z`-subsample.
    DAlphaZ,
    /// The SDS survivors.
    DAlphaEta,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageKind::DAlpha => "d_alpha",
            StageKind::DAlphaZ => "d_alpha_z",
            StageKind::DAlphaEta => "d_alpha_eta",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T: Scalar = f64> {
    pub alpha: f64,
    pub rho: f64,
    pub zeta: ZetaChoice,
    pub eta: EtaChoice,
    /// `None` uses the number of decision variables.
    pub b_bar: Option<usize>,
    pub seed: u64,
    pub variance: VarianceMode,
    pub solver: SolverOptions<T>,
    /// Record wall time per stage.
    pub timing: bool,
    /// Absolute tolerance of the replay check, in MW.
    pub replay_tol: f64,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            rho: 0.9,
            zeta: ZetaChoice::Fixed(1.0),
            eta: EtaChoice::MatchZeta,
            b_bar: None,
            seed: 0,
            variance: VarianceMode::Shared,
            solver: SolverOptions::default(),
            timing: true,
            replay_tol: 1e-4,
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: StageKind,
    pub points: usize,
    pub generated_rows: usize,
    pub base_rows: usize,
    pub total_rows: usize,
    pub variance: f64,
    pub objective: f64,
    /// `100·(obj(D_α) − obj)/|obj(D_α)|`; absent for the reference stage.
    pub gap_pct: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
    pub balance_residual: f64,
    /// Replay over the stage's own points.
    pub replay: ReplayCheck,
    /// Replay over every α-filtered point.
    pub replay_d_alpha: ReplayCheck,
    pub decision: OpfDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub case: String,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub center: Vec<f64>,
    pub variance_mode: VarianceMode,
    /// Variance over the whole centered dataset.
    pub variance_full: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth: Option<BandwidthSelection<f64>>,
    pub reduction: ReductionReport,
    pub stages: Vec<StageReport>,
}

impl PipelineReport {
    pub fn stage(&self, kind: StageKind) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Results table: one line per stage.
    pub fn write_table_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["stage", "points", "generated_rows", "base_rows", "total_rows", "wall_time_s", "objective", "gap_pct", "status"])?;
        for s in &self.stages {
            out.write_record([
                s.stage.to_string(),
                s.points.to_string(),
                s.generated_rows.to_string(),
                s.base_rows.to_string(),
                s.total_rows.to_string(),
                s.wall_time_s.map_or(String::new(), |t| format!("{t:.6}")),
                format!("{}", s.objective),
                s.gap_pct.map_or(String::new(), |g| format!("{g}")),
                format!("{:?}", s.status),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Report plus the raw artifacts behind it.
#[derive(Debug, Clone)]
pub struct PipelineOutcome<T: Scalar = f64> {
    pub report: PipelineReport,
    pub model: OpfModel<T>,
    /// Centered deviations.
    pub centered: DataSet<T>,
    pub reduction: Reduction<T>,
    /// Solver output per stage, aligned with `report.stages`.
    pub results: Vec<SolveResult<T>>,
}

fn bandwidth_f64<T: Scalar>(b: &BandwidthSelection<T>) -> BandwidthSelection<f64> {
    BandwidthSelection {
        zeta: b.zeta.as_f64(),
        candidates: b.candidates.iter().map(|v| v.as_f64()).collect(),
        roughness: b.roughness.clone(),
        neighbours: b.neighbours,
    }
}

struct StageInput<T: Scalar> {
    kind: StageKind,
    points: Vec<UncertaintyPoint<T>>,
    weights: Vec<usize>,
}

/// `D → D_α → D_α^z → D_α^η`, then one program per set.
pub fn run_pipeline<T: Scalar>(case: &GridCase, data: &DataSet<T>, cfg: &PipelineConfig<T>) -> Result<PipelineOutcome<T>, OpfError> {
    let expected = case.uncertainty_dims();
    if data.dims() != expected {
        return Err(OpfError::Dims { expected: expected.r2, got: data.dims() });
    }
    let center = data.real_mean();
    let centered = data.shifted(&center);
    let model = OpfModel::new(case, center.clone())?;

    let (zeta, bandwidth) = match &cfg.zeta {
        ZetaChoice::Fixed(z) => (T::lit(*z), None),
        ZetaChoice::Auto { grid } => {
            let grid: Vec<T> = grid.iter().map(|v| T::lit(*v)).collect();
            let sel = select_bandwidth(&centered, &grid)?;
            (sel.zeta, Some(bandwidth_f64(&sel)))
        }
    };
    let eta = match cfg.eta {
        EtaChoice::MatchZeta => Some(EtaSpec::Uniform(zeta)),
        EtaChoice::Fixed(v) => Some(EtaSpec::Uniform(T::lit(v))),
        EtaChoice::Skip => None,
    };
    let rcfg = ReductionConfig {
        alpha: cfg.alpha,
        zeta,
        rho: cfg.rho,
        b_bar: cfg.b_bar.unwrap_or(model.n()),
        eta,
        seed: cfg.seed,
    };
    let reduction = reduce(&centered, &rcfg)?;

    let pts = |idx: &[usize]| idx.iter().map(|&i| centered.points()[i].clone()).collect::<Vec<_>>();
    let mut stages = vec![
        StageInput { kind: StageKind::DAlpha, points: pts(reduction.alpha_indices()), weights: vec![1; reduction.alpha_indices().len()] },
        StageInput { kind: StageKind::DAlphaZ, points: pts(reduction.z_indices()), weights: vec![1; reduction.z_indices().len()] },
    ];
    if reduction.sds.is_some() {
        let (idx, w) = reduction.final_points();
        stages.push(StageInput { kind: StageKind::DAlphaEta, points: pts(idx), weights: w.to_vec() });
    }

    let variance_full = weighted_total_variance(centered.points(), &vec![1; centered.len()]);
    let alpha_points = &stages[0].points;
    let solved: Vec<(StageReport, SolveResult<T>)> = stages
        .par_iter()
        .map(|st| {
            let variance = match cfg.variance {
                VarianceMode::Shared => variance_full,
                VarianceMode::PerStage => weighted_total_variance(&st.points, &st.weights),
            };
            run_stage(&model, st, variance, alpha_points, cfg).map_err(|e| e.at(st.kind))
        })
        .collect::<Result<_, _>>()?;

    let reference = solved[0].0.objective;
    let mut reports = Vec::with_capacity(solved.len());
    let mut results = Vec::with_capacity(solved.len());
    for (mut rep, res) in solved {
        if rep.stage != StageKind::DAlpha {
            rep.gap_pct = Some(100.0 * (reference - rep.objective) / reference.abs().max(f64::MIN_POSITIVE));
        }
        reports.push(rep);
        results.push(res);
    }
    let report = PipelineReport {
        case: case.name.clone(),
        n: model.n(),
        m: model.m(),
        r: case.renewables.len(),
        center: center.iter().map(|v| v.as_f64()).collect(),
        variance_mode: cfg.variance,
        variance_full,
        bandwidth,
        reduction: reduction.report.clone(),
        stages: reports,
    };
    Ok(PipelineOutcome { report, model, centered, reduction, results })
}

fn run_stage<T: Scalar>(
    model: &OpfModel<T>,
    st: &StageInput<T>,
    variance: f64,
    alpha_points: &[UncertaintyPoint<T>],
    cfg: &PipelineConfig<T>,
) -> Result<(StageReport, SolveResult<T>), OpfError> {
    let started = Instant::now();
    let tmpl = model.template(T::lit(variance))?;
    let prog = assemble(&tmpl, &st.points)?;
    let res = solve(&prog, &cfg.solver)?;
    let elapsed = started.elapsed().as_secs_f64();
    if res.status == SolveStatus::Infeasible {
        return Err(OpfError::Config("program is infeasible: line or generator limits cannot cover the data".into()));
    }
    let decision = model.decision(&res.x);
    let report = StageReport {
        stage: st.kind,
        points: st.points.len(),
        generated_rows: prog.generated_rows(),
        base_rows: prog.base_rows(),
        total_rows: prog.row_count(),
        variance,
        objective: res.objective.as_f64(),
        gap_pct: None,
        status: res.status,
        iterations: res.iterations,
        wall_time_s: cfg.timing.then_some(elapsed),
        balance_residual: model.balance_residual(&decision),
        replay: model.replay(&decision, &st.points, cfg.replay_tol),
        replay_d_alpha: model.replay(&decision, alpha_points, cfg.replay_tol),
        decision,
    };
    Ok((report, res))
}
