//! Empirical checks of the reduction guarantees: the subsample success
//! bound, the thinning accuracy bound via the implicit map, the scaling of
//! the thinned set size, the monotonicity of the thinning success rate, and
//! the comparison against the scenario approach.
//!
//! The probability-contour feasible set has no closed form. Every "equals
//! the true optimum" check compares against the program built on the whole
//! α-filtered set, which is the stand-in used throughout.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataSet, DatasetError, UncertaintyPoint};
use crate::dda::{assemble, find_boundary_points, AssembledProgram, BoundaryReport, DdaError, ProblemTemplate};
use crate::density::{alpha_process, estimate_density, DensityError};
use crate::linalg::{condition_number, LinalgError, Lu, Matrix};
use crate::qpsolver::{solve, QpError, SolveResult, SolverOptions};
use crate::reduction::{deficit, sample_sorted, sds, varrho_lower_bound, EtaSpec, ReductionError, SdsResult};
use crate::scalar::{dot, norm2, Scalar};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Domain(String),
    #[error("implicit map needs B_c = n: found {b_c} boundary constraints for n = {n}")]
    BoundaryCount { b_c: usize, n: usize },
    #[error("boundary-constraint Jacobian is singular (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("Newton iteration on the boundary system did not converge (residual {residual:e})")]
    Newton { residual: f64 },
    #[error("reference solve ended with status {0:?}")]
    Reference(crate::qpsolver::SolveStatus),
    #[error(transparent)]
    Dda(#[from] DdaError),
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// RNG for one trial: the experiment seed with the trial index as stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `sqrt(p(1 − p)/trials)`.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).max(0.0).sqrt()
}

/// True when two optimal values agree to `tol` relative to `max(1, |reference|)`.
pub fn same_optimum(value: f64, reference: f64, tol: f64) -> bool {
    (value - reference).abs() <= tol * reference.abs().max(1.0)
}

fn solve_points<T: Scalar>(tmpl: &ProblemTemplate<T>, pts: &[UncertaintyPoint<T>], opts: &SolverOptions<T>) -> Result<SolveResult<T>, AnalysisError> {
    let prog = assemble(tmpl, pts)?;
    Ok(solve(&prog, opts)?)
}

fn reference_solve<T: Scalar>(tmpl: &ProblemTemplate<T>, pts: &[UncertaintyPoint<T>], opts: &SolverOptions<T>) -> Result<SolveResult<T>, AnalysisError> {
    let r = solve_points(tmpl, pts, opts)?;
    if !r.is_optimal() {
        return Err(AnalysisError::Reference(r.status));
    }
    Ok(r)
}

/// SDS that treats a zero radius as "keep everything".
fn thin<T: Scalar>(ds: &DataSet<T>, eta: T, seed: u64) -> Result<SdsResult<T>, ReductionError> {
    if eta == T::zero() {
        Ok(SdsResult::identity(ds.len(), EtaSpec::Uniform(eta)))
    } else {
        sds(ds, EtaSpec::Uniform(eta), seed)
    }
}

/// Outcome of a repeated success/failure experiment against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundExperiment {
    pub trials: usize,
    pub seed: u64,
    /// Sample size the trials used, when the experiment has one.
    pub z: Option<usize>,
    pub successes: usize,
    /// Trials whose solve did not reach optimality; excluded from `observed`.
    pub solver_failures: usize,
    /// Success frequency over the trials that solved.
    pub observed: f64,
    /// Binomial standard deviation of the frequency at the bound.
    pub sigma: f64,
    pub bound: f64,
    /// `observed ≥ bound − 3σ`.
    pub verdict: bool,
    /// Boundary points exceed `B̄` or are replicated fewer than `⌊αD⌋`
    /// times, so the bound is not guaranteed.
    pub assumption_violated: bool,
}

impl BoundExperiment {
    pub fn from_counts(trials: usize, seed: u64, z: Option<usize>, successes: usize, solver_failures: usize, bound: f64, assumption_violated: bool) -> Self {
        let solved = trials - solver_failures;
        let observed = if solved == 0 { 0.0 } else { successes as f64 / solved as f64 };
        let sigma = binomial_sigma(bound.clamp(0.0, 1.0), solved);
        Self {
            trials,
            seed,
            z,
            successes,
            solver_failures,
            observed,
            sigma,
            bound,
            verdict: observed >= bound - 3.0 * sigma,
            assumption_violated,
        }
    }
}

/// Inputs of the subsample success experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct VarrhoConfig {
    /// Boundary-point bound `B̄` fed to the lower bound.
    pub b_bar: usize,
    pub alpha: f64,
    /// Size of the unfiltered dataset.
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    /// Relative tolerance for "same optimum".
    pub tol: f64,
}

/// Assumption check shared by every sample size: boundary points of the
/// underlying set of `D_α`, and their multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCheck {
    /// Source indices (into `D_α`) of one representative per boundary point.
    pub boundary_points: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub required_multiplicity: u64,
    pub b_bar: usize,
    pub violated: bool,
}

fn planted_check<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    d_alpha: &DataSet<T>,
    cfg: &VarrhoConfig,
    opts: &SolverOptions<T>,
) -> Result<PlantedCheck, AnalysisError> {
    let under = d_alpha.underlying_indices();
    let pts = d_alpha.subset(&under)?;
    let opt = reference_solve(tmpl, pts.points(), opts)?;
    let report = find_boundary_points(tmpl, pts.points(), &opt, T::lit(1e-6), opts)?;
    let boundary_points: Vec<usize> = report.boundary_points.iter().map(|&k| under[k]).collect();
    let multiplicities: Vec<usize> = boundary_points
        .iter()
        .map(|&j| d_alpha.points().iter().filter(|p| **p == d_alpha.points()[j]).count())
        .collect();
    let required = deficit(cfg.alpha, cfg.d);
    let violated = boundary_points.len() > cfg.b_bar || multiplicities.iter().any(|&m| (m as u64) < required);
    Ok(PlantedCheck { boundary_points, multiplicities, required_multiplicity: required, b_bar: cfg.b_bar, violated })
}

/// Frequency with which a uniform `z`-subsample of `D_α` reproduces the
/// optimum of the program on all of `D_α`, against `ϱ̲(z)`. One entry per
/// sample size.
pub fn verify_varrho<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    d_alpha: &DataSet<T>,
    zs: &[usize],
    cfg: &VarrhoConfig,
    opts: &SolverOptions<T>,
) -> Result<(PlantedCheck, Vec<BoundExperiment>), AnalysisError> {
    if cfg.trials == 0 {
        return Err(AnalysisError::Domain("trials must be at least 1".into()));
    }
    let check = planted_check(tmpl, d_alpha, cfg, opts)?;
    let reference = reference_solve(tmpl, d_alpha.points(), opts)?.objective.as_f64();
    let pool: Vec<usize> = (0..d_alpha.len()).collect();
    let mut out = Vec::with_capacity(zs.len());
    for (zi, &z) in zs.iter().enumerate() {
        let bound = varrho_lower_bound(z, cfg.b_bar, cfg.alpha, cfg.d, d_alpha.len())?;
        let stream_base = (zi as u64) << 32;
        let outcomes: Vec<Option<bool>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(cfg.seed, stream_base + t as u64);
                let idx = sample_sorted(&mut rng, &pool, z);
                let pts: Vec<UncertaintyPoint<T>> = idx.iter().map(|&i| d_alpha.points()[i].clone()).collect();
                let r = solve_points(tmpl, &pts, opts)?;
                Ok(r.is_optimal().then(|| same_optimum(r.objective.as_f64(), reference, cfg.tol)))
            })
            .collect::<Result<_, AnalysisError>>()?;
        let failures = outcomes.iter().filter(|o| o.is_none()).count();
        let successes = outcomes.iter().filter(|o| **o == Some(true)).count();
        out.push(BoundExperiment::from_counts(cfg.trials, cfg.seed, Some(z), successes, failures, bound, check.violated));
    }
    Ok((check, out))
}

/// Finite-difference scheme for the implicit-map Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteDifference {
    Forward,
    Central,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiOptions {
    /// Step relative to the largest boundary coordinate magnitude.
    pub delta_rel: f64,
    pub scheme: FiniteDifference,
    /// Also estimate the second-order term.
    pub second_order: bool,
    /// Step of the second-difference stencil, relative as above.
    pub hessian_delta_rel: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Jacobians with a larger condition number are treated as singular.
    pub max_condition: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            delta_rel: 1e-5,
            scheme: FiniteDifference::Central,
            second_order: false,
            hessian_delta_rel: 1e-3,
            newton_tol: 1e-12,
            newton_max_iter: 20,
            max_condition: 1e12,
        }
    }
}

/// Boundary system `g̃(x, ξ̃) = 0` with one real-coordinate block per
/// boundary constraint.
struct BoundarySystem<'a, T: Scalar> {
    tmpl: &'a ProblemTemplate<T>,
    /// `(point, row within point)`.
    constraints: Vec<(UncertaintyPoint<T>, usize)>,
}

impl<T: Scalar> BoundarySystem<'_, T> {
    fn r(&self) -> usize {
        self.tmpl.generator.dims().r2
    }

    fn xi(&self) -> Vec<T> {
        self.constraints.iter().flat_map(|(p, _)| p.real_part.iter().copied()).collect()
    }

    /// Rows and right-hand sides of the system at stacked reals `xi`.
    fn linearize(&self, xi: &[T]) -> (Matrix<T>, Vec<T>) {
        let r = self.r();
        let n = self.tmpl.n();
        let mut jac = Matrix::zeros(0, n);
        let mut rhs = Vec::with_capacity(self.constraints.len());
        for (i, (p, row)) in self.constraints.iter().enumerate() {
            let q = UncertaintyPoint { integer_part: p.integer_part.clone(), real_part: xi[i * r..(i + 1) * r].to_vec() };
            let rows = self.tmpl.generator.rows(&q);
            jac.push_row(rows.g.row(*row));
            rhs.push(rows.h[*row]);
        }
        (jac, rhs)
    }

    /// Newton from `x0` on `g̃(·, xi) = 0`.
    fn solve(&self, xi: &[T], x0: &[T], opts: &PhiOptions) -> Result<Vec<T>, AnalysisError> {
        let mut x = x0.to_vec();
        let mut residual = f64::INFINITY;
        for _ in 0..opts.newton_max_iter.max(1) {
            let (jac, rhs) = self.linearize(xi);
            let g: Vec<T> = (0..jac.rows()).map(|i| dot(jac.row(i), &x) - rhs[i]).collect();
            residual = g.iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
            let scale = rhs.iter().map(|v| v.abs().as_f64()).fold(1.0, f64::max);
            if residual <= opts.newton_tol * scale {
                return Ok(x);
            }
            let step = Lu::factor(&jac)?.solve(&g);
            for (xi, s) in x.iter_mut().zip(step) {
                *xi -= s;
            }
        }
        Err(AnalysisError::Newton { residual })
    }
}

/// Jacobian `H` of the implicit map `x = h(ξ̃)` at the boundary points, by
/// finite differences with step `delta`. Columns follow the boundary
/// constraints in order, `r` real coordinates each.
pub fn implicit_jacobian<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    data: &[UncertaintyPoint<T>],
    constraints: &[(usize, usize)],
    x_star: &[T],
    delta: T,
    scheme: FiniteDifference,
    opts: &PhiOptions,
) -> Result<Matrix<T>, AnalysisError> {
    let sys = system(tmpl, data, constraints)?;
    jacobian_of(&sys, x_star, delta, scheme, opts)
}

fn system<'a, T: Scalar>(
    tmpl: &'a ProblemTemplate<T>,
    data: &[UncertaintyPoint<T>],
    constraints: &[(usize, usize)],
) -> Result<BoundarySystem<'a, T>, AnalysisError> {
    let n = tmpl.n();
    if constraints.len() != n {
        return Err(AnalysisError::BoundaryCount { b_c: constraints.len(), n });
    }
    let mut cs = Vec::with_capacity(n);
    for &(k, row) in constraints {
        let p = data.get(k).ok_or_else(|| AnalysisError::Domain(format!("boundary point {k} is out of range")))?;
        if row >= tmpl.m() {
            return Err(AnalysisError::Domain(format!("boundary row {row} is out of range")));
        }
        cs.push((p.clone(), row));
    }
    Ok(BoundarySystem { tmpl, constraints: cs })
}

fn jacobian_of<T: Scalar>(sys: &BoundarySystem<'_, T>, x_star: &[T], delta: T, scheme: FiniteDifference, opts: &PhiOptions) -> Result<Matrix<T>, AnalysisError> {
    let n = sys.tmpl.n();
    let xi0 = sys.xi();
    let cols = xi0.len();
    let base = match scheme {
        FiniteDifference::Forward => Some(sys.solve(&xi0, x_star, opts)?),
        FiniteDifference::Central => None,
    };
    let mut h = Matrix::zeros(n, cols);
    for c in 0..cols {
        let mut plus = xi0.clone();
        plus[c] += delta;
        let xp = sys.solve(&plus, x_star, opts)?;
        let (xm, width) = match &base {
            Some(b) => (b.clone(), delta),
            None => {
                let mut minus = xi0.clone();
                minus[c] -= delta;
                (sys.solve(&minus, x_star, opts)?, delta + delta)
            }
        };
        for i in 0..n {
            h[(i, c)] = (xp[i] - xm[i]) / width;
        }
    }
    Ok(h)
}

/// Norm bound of the second-derivative tensor: the root sum of squared
/// Frobenius norms of its `n` slices, which dominates the induced norm.
fn hessian_norm<T: Scalar>(sys: &BoundarySystem<'_, T>, x_star: &[T], delta: T, opts: &PhiOptions) -> Result<f64, AnalysisError> {
    let xi0 = sys.xi();
    let cols = xi0.len();
    let mut total = 0.0;
    for a in 0..cols {
        for b in a..cols {
            let at = |sa: T, sb: T| {
                let mut v = xi0.clone();
                v[a] += sa;
                v[b] += sb;
                sys.solve(&v, x_star, opts)
            };
            let (pp, pm, mp, mm) = (at(delta, delta)?, at(delta, -delta)?, at(-delta, delta)?, at(-delta, -delta)?);
            let four = T::lit(4.0) * delta * delta;
            let sq: f64 = (0..x_star.len())
                .map(|i| ((pp[i] - pm[i] - mp[i] + mm[i]) / four).as_f64().powi(2))
                .sum();
            total += if a == b { sq } else { 2.0 * sq };
        }
    }
    Ok(total.sqrt())
}

/// Quantities behind the thinning accuracy bound at one optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub n: usize,
    pub b_c: usize,
    /// Real coordinates per boundary constraint.
    pub r: usize,
    /// 1-norm condition number of the boundary-constraint Jacobian in `x`.
    pub condition: f64,
    pub delta: f64,
    /// `n × (r·B_c)` implicit-map Jacobian, row-major.
    pub jacobian: Vec<Vec<f64>>,
    pub h_norm: f64,
    pub h_prime_norm: Option<f64>,
    pub x_norm: f64,
}

impl PhiEstimate {
    /// Bound for one radius on continuous data:
    /// `1 − (2√n‖H‖η + 2n‖H′‖η²)/‖x*‖`, the second term only when estimated.
    pub fn lower_bound(&self, eta: f64) -> f64 {
        let n = self.n as f64;
        let first = 2.0 * n.sqrt() * self.h_norm * eta;
        let second = self.h_prime_norm.map_or(0.0, |h2| 4.0 * n / 2.0 * h2 * eta * eta);
        1.0 - (first + second) / self.x_norm
    }

    /// Bound with one radius per boundary constraint (mixed data):
    /// `1 − (‖H‖η̂ + ½‖H′‖η̂²)/‖x*‖` with `η̂ = 2·sqrt(Σ ηᵢ²)`.
    pub fn lower_bound_mixed(&self, etas: &[f64]) -> f64 {
        let eta_hat = 2.0 * etas.iter().map(|e| e * e).sum::<f64>().sqrt();
        let second = self.h_prime_norm.map_or(0.0, |h2| 0.5 * h2 * eta_hat * eta_hat);
        1.0 - (self.h_norm * eta_hat + second) / self.x_norm
    }
}

/// Implicit-map estimate at the optimum of the program on `data`. Refuses
/// unless there are exactly `n` boundary constraints with an invertible
/// Jacobian in `x`.
pub fn estimate_phi_bound<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    data: &[UncertaintyPoint<T>],
    optimum: &SolveResult<T>,
    boundary: &BoundaryReport,
    opts: &PhiOptions,
) -> Result<PhiEstimate, AnalysisError> {
    let sys = system(tmpl, data, &boundary.boundary_constraints)?;
    let xi0 = sys.xi();
    let (jac_x, _) = sys.linearize(&xi0);
    let condition = match condition_number(&jac_x) {
        Ok(c) => c.as_f64(),
        Err(_) => f64::INFINITY,
    };
    if !(condition <= opts.max_condition) {
        return Err(AnalysisError::Singular { condition });
    }
    let scale = xi0.iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let delta = T::lit(opts.delta_rel * scale);
    let x_star = sys.solve(&xi0, &optimum.x, opts)?;
    let h = jacobian_of(&sys, &x_star, delta, opts.scheme, opts)?;
    let h_prime_norm = if opts.second_order {
        Some(hessian_norm(&sys, &x_star, T::lit(opts.hessian_delta_rel * scale), opts)?)
    } else {
        None
    };
    Ok(PhiEstimate {
        n: tmpl.n(),
        b_c: boundary.b_c,
        r: sys.r(),
        condition,
        delta: delta.as_f64(),
        jacobian: (0..h.rows()).map(|i| h.row(i).iter().map(|v| v.as_f64()).collect()).collect(),
        h_norm: h.spectral_norm().as_f64(),
        h_prime_norm,
        x_norm: norm2(&optimum.x).as_f64(),
    })
}

/// `1 − ‖x_η − x_z‖/‖x_z‖`.
pub fn measured_phi<T: Scalar>(x_eta: &[T], x_z: &[T]) -> f64 {
    let diff: Vec<T> = x_eta.iter().zip(x_z).map(|(a, b)| *a - *b).collect();
    1.0 - norm2(&diff).as_f64() / norm2(x_z).as_f64()
}

/// Bound and measurement at one thinning radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub eta: f64,
    pub z_eta: usize,
    pub lower_bound: f64,
    pub measured: f64,
    pub holds: bool,
}

/// Thins `data` with each radius, re-solves and compares the measured
/// accuracy with the first-order bound (second order when estimated).
pub fn phi_sweep<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    data: &DataSet<T>,
    optimum: &SolveResult<T>,
    estimate: &PhiEstimate,
    etas: &[f64],
    seed: u64,
    tol: f64,
    opts: &SolverOptions<T>,
) -> Result<Vec<PhiPoint>, AnalysisError> {
    etas.iter()
        .map(|&eta| {
            let thinned = thin(data, T::lit(eta), seed)?;
            let pts = thinned.survivors(data)?;
            let r = reference_solve(tmpl, pts.points(), opts)?;
            let measured = measured_phi(&r.x, &optimum.x);
            let lower_bound = estimate.lower_bound(eta);
            Ok(PhiPoint { eta, z_eta: thinned.z_eta, lower_bound, measured, holds: measured >= lower_bound - tol })
        })
        .collect()
}

/// Success rate of the thinned program at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaPoint {
    pub eta: f64,
    pub successes: usize,
    pub omega: f64,
    pub sigma: f64,
    pub mean_z_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    pub trials: usize,
    pub seed: u64,
    /// Subsample size drawn before thinning; `None` thins all of `D_α`.
    pub z: Option<usize>,
    pub reference_objective: f64,
    pub points: Vec<OmegaPoint>,
    /// Adjacent radius pairs `(i, i+1)` whose rate rises by more than 3σ.
    pub violations: Vec<(usize, usize)>,
    pub solver_failures: usize,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaConfig {
    /// Increasing radii.
    pub etas: Vec<f64>,
    pub z: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

/// Per trial: draw the subsample, thin it at every radius with one shared
/// SDS seed, and test whether the thinned optimum equals the optimum on all
/// of `D_α`.
pub fn verify_omega_monotone<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    d_alpha: &DataSet<T>,
    cfg: &OmegaConfig,
    opts: &SolverOptions<T>,
) -> Result<OmegaReport, AnalysisError> {
    if cfg.trials == 0 || cfg.etas.is_empty() {
        return Err(AnalysisError::Domain("need at least one trial and one radius".into()));
    }
    if cfg.etas.windows(2).any(|w| w[0] >= w[1]) || cfg.etas.iter().any(|e| !(*e >= 0.0)) {
        return Err(AnalysisError::Domain("radii must be nonnegative and strictly increasing".into()));
    }
    let reference = reference_solve(tmpl, d_alpha.points(), opts)?.objective.as_f64();
    let pool: Vec<usize> = (0..d_alpha.len()).collect();
    let per_trial: Vec<Vec<Option<(bool, usize)>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let sample = match cfg.z {
                Some(z) => d_alpha.subset(&sample_sorted(&mut rng, &pool, z.min(pool.len())))?,
                None => d_alpha.clone(),
            };
            let sds_seed = rng.next_u64();
            cfg.etas
                .iter()
                .map(|&eta| {
                    let th = thin(&sample, T::lit(eta), sds_seed)?;
                    let r = solve_points(tmpl, th.survivors(&sample)?.points(), opts)?;
                    Ok(r.is_optimal().then(|| (same_optimum(r.objective.as_f64(), reference, cfg.tol), th.z_eta)))
                })
                .collect::<Result<Vec<_>, AnalysisError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut solver_failures = 0;
    let points: Vec<OmegaPoint> = cfg
        .etas
        .iter()
        .enumerate()
        .map(|(e, &eta)| {
            let col: Vec<(bool, usize)> = per_trial.iter().filter_map(|t| t[e]).collect();
            solver_failures += cfg.trials - col.len();
            let successes = col.iter().filter(|c| c.0).count();
            let omega = if col.is_empty() { 0.0 } else { successes as f64 / col.len() as f64 };
            let mean_z_eta = col.iter().map(|c| c.1 as f64).sum::<f64>() / col.len().max(1) as f64;
            OmegaPoint { eta, successes, omega, sigma: binomial_sigma(omega, col.len()), mean_z_eta }
        })
        .collect();
    let violations: Vec<(usize, usize)> = (1..points.len())
        .filter(|&i| {
            let (a, b) = (&points[i - 1], &points[i]);
            b.omega - a.omega > 3.0 * (a.sigma.powi(2) + b.sigma.powi(2)).sqrt()
        })
        .map(|i| (i - 1, i))
        .collect();
    Ok(OmegaReport {
        trials: cfg.trials,
        seed: cfg.seed,
        z: cfg.z,
        reference_objective: reference,
        monotone: violations.is_empty(),
        points,
        violations,
        solver_failures,
    })
}

/// Mean and worst thinned-set size over seeds at each radius, and the
/// least-squares slope of `ln z̄_η` against `ln(1/η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub etas: Vec<f64>,
    pub mean_z_eta: Vec<f64>,
    pub max_z_eta: Vec<usize>,
    pub seeds: usize,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line `y = slope·x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn z_eta_scaling<T: Scalar>(data: &DataSet<T>, etas: &[f64], seeds: usize, seed: u64) -> Result<ScalingReport, AnalysisError> {
    if etas.len() < 2 || seeds == 0 || etas.iter().any(|e| !(*e > 0.0)) {
        return Err(AnalysisError::Domain("need at least two positive radii and one seed".into()));
    }
    let sizes: Vec<Vec<usize>> = etas
        .par_iter()
        .enumerate()
        .map(|(e, &eta)| {
            (0..seeds)
                .map(|s| Ok(thin(data, T::lit(eta), trial_rng(seed, ((e as u64) << 32) + s as u64).next_u64())?.z_eta))
                .collect::<Result<Vec<_>, AnalysisError>>()
        })
        .collect::<Result<_, _>>()?;
    let mean_z_eta: Vec<f64> = sizes.iter().map(|v| v.iter().sum::<usize>() as f64 / seeds as f64).collect();
    let max_z_eta: Vec<usize> = sizes.iter().map(|v| *v.iter().max().expect("seeds >= 1")).collect();
    let lx: Vec<f64> = etas.iter().map(|e| (1.0 / e).ln()).collect();
    let ly: Vec<f64> = mean_z_eta.iter().map(|z| z.ln()).collect();
    let (slope, intercept) = fit_line(&lx, &ly);
    Ok(ScalingReport { etas: etas.to_vec(), mean_z_eta, max_z_eta, seeds, slope, intercept })
}

/// Membership tally of random probes in two feasible sets `X(A)` and `X(B)`.
/// Only the data-generated rows are probed; base rows are common to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetComparison {
    pub probes: usize,
    pub both: usize,
    pub only_a: usize,
    pub only_b: usize,
    pub neither: usize,
}

impl SetComparison {
    /// No probe lies in `X(A)` outside `X(B)`.
    pub fn a_within_b(&self) -> bool {
        self.only_a == 0
    }

    pub fn identical(&self) -> bool {
        self.only_a == 0 && self.only_b == 0
    }
}

/// True when `x` satisfies every generated row of `prog` to `tol`.
pub fn satisfies_generated<T: Scalar>(prog: &AssembledProgram<T>, x: &[T], tol: T) -> bool {
    let p = &prog.problem;
    (0..p.a_in.rows()).all(|i| dot(p.a_in.row(i), x) - p.h_in[i] <= tol * (T::one() + p.h_in[i].abs()))
}

/// Uniform probe in the box `[lower, upper]`.
pub fn box_probe<T: Scalar, R: Rng + ?Sized>(rng: &mut R, lower: &[T], upper: &[T]) -> Vec<T> {
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| *l + (*u - *l) * T::lit(rng.random::<f64>()))
        .collect()
}

pub fn compare_feasible_sets<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    a: &[UncertaintyPoint<T>],
    b: &[UncertaintyPoint<T>],
    probes: &[Vec<T>],
    tol: T,
) -> Result<SetComparison, AnalysisError> {
    let (pa, pb) = (assemble(tmpl, a)?, assemble(tmpl, b)?);
    let mut out = SetComparison { probes: probes.len(), both: 0, only_a: 0, only_b: 0, neither: 0 };
    for x in probes {
        match (satisfies_generated(&pa, x, tol), satisfies_generated(&pb, x, tol)) {
            (true, true) => out.both += 1,
            (true, false) => out.only_a += 1,
            (false, true) => out.only_b += 1,
            (false, false) => out.neither += 1,
        }
    }
    Ok(out)
}

/// `⌈e(n − ln ε)/(β(e − 1))⌉`, the scenario sample size for confidence
/// level `ε` and violation level `β`.
pub fn scenario_sample_size(n: usize, epsilon: f64, beta: f64) -> Result<u64, AnalysisError> {
    if !(epsilon > 0.0 && epsilon < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(AnalysisError::Domain(format!("need epsilon, beta in (0, 1), got {epsilon}, {beta}")));
    }
    let e = std::f64::consts::E;
    Ok((e * (n as f64 - epsilon.ln()) / (beta * (e - 1.0))).ceil() as u64)
}

/// Draws the sampler produces; one trial stream per call site.
pub type Sampler<'a, T> = dyn Fn(&mut ChaCha8Rng) -> UncertaintyPoint<T> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T: Scalar = f64> {
    /// Scenario count `N`.
    pub n_samples: usize,
    pub alpha: f64,
    /// Vicinity radius for the dense-pool density estimate.
    pub zeta: T,
    pub pool_size: usize,
    pub trials: usize,
    pub probes: usize,
    pub probe_lower: Vec<T>,
    pub probe_upper: Vec<T>,
    pub seed: u64,
    pub tol: T,
    /// `(ε, β)` for the sample-size header, if wanted.
    pub header: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub n_samples: usize,
    pub inv_alpha: f64,
    pub pool_size: usize,
    pub pool_d_alpha: usize,
    pub trials: usize,
    pub probes: usize,
    /// Trials with no probe in the contour proxy outside the scenario set.
    pub inclusion_frequency: f64,
    /// Trials with inclusion and at least one probe only in the scenario set.
    pub strict_inclusion_frequency: f64,
    /// Trials with at least one probe in exactly one of the two sets.
    pub differs_frequency: f64,
    /// `strict_inclusion_frequency` when `N ≤ 1/α`, else `differs_frequency`.
    pub claim_frequency: f64,
    pub scenario_sample_size: Option<u64>,
}

/// Scenario feasible set from `N` iid draws against the contour proxy built
/// from a dense pool filtered at level `α`.
pub fn compare_scenario_method<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    sampler: &Sampler<'_, T>,
    cfg: &ScenarioConfig<T>,
) -> Result<ScenarioReport, AnalysisError> {
    if cfg.trials == 0 || cfg.n_samples == 0 || cfg.pool_size == 0 {
        return Err(AnalysisError::Domain("trials, N and pool size must be positive".into()));
    }
    if cfg.probe_lower.len() != tmpl.n() || cfg.probe_upper.len() != tmpl.n() {
        return Err(AnalysisError::Domain("probe box must have n coordinates".into()));
    }
    let mut pool_rng = trial_rng(cfg.seed, u64::MAX);
    let pool = DataSet::new(tmpl.generator.dims(), (0..cfg.pool_size).map(|_| sampler(&mut pool_rng)).collect())?;
    let de = estimate_density(&pool, cfg.zeta)?;
    let kept = alpha_process(&pool, &de, cfg.alpha)?;
    let proxy = kept.kept(&pool)?;
    let proxy_prog = assemble(tmpl, proxy.points())?;
    let tallies: Vec<(bool, bool, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let scen: Vec<UncertaintyPoint<T>> = (0..cfg.n_samples).map(|_| sampler(&mut rng)).collect();
            let sp = assemble(tmpl, &scen)?;
            let (mut only_p, mut only_s) = (false, false);
            for _ in 0..cfg.probes {
                let x = box_probe(&mut rng, &cfg.probe_lower, &cfg.probe_upper);
                match (satisfies_generated(&proxy_prog, &x, cfg.tol), satisfies_generated(&sp, &x, cfg.tol)) {
                    (true, false) => only_p = true,
                    (false, true) => only_s = true,
                    _ => {}
                }
            }
            Ok((!only_p, !only_p && only_s, only_p || only_s))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let freq = |f: &dyn Fn(&(bool, bool, bool)) -> bool| tallies.iter().filter(|t| f(t)).count() as f64 / cfg.trials as f64;
    let inclusion_frequency = freq(&|t| t.0);
    let strict_inclusion_frequency = freq(&|t| t.1);
    let differs_frequency = freq(&|t| t.2);
    let inv_alpha = if cfg.alpha > 0.0 { 1.0 / cfg.alpha } else { f64::INFINITY };
    let scenario_sample_size = cfg.header.map(|(e, b)| scenario_sample_size(tmpl.n(), e, b)).transpose()?;
    Ok(ScenarioReport {
        n_samples: cfg.n_samples,
        inv_alpha,
        pool_size: cfg.pool_size,
        pool_d_alpha: kept.d_alpha,
        trials: cfg.trials,
        probes: cfg.probes,
        inclusion_frequency,
        strict_inclusion_frequency,
        differs_frequency,
        claim_frequency: if cfg.n_samples as f64 <= inv_alpha { strict_inclusion_frequency } else { differs_frequency },
        scenario_sample_size,
    })
}

/// Monte Carlo estimate of a violation probability with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub draws: usize,
    pub violations: usize,
    pub probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MonteCarloEstimate {
    pub fn from_counts(draws: usize, violations: usize) -> Self {
        let n = draws as f64;
        let p = violations as f64 / n;
        let z = 1.959_963_984_540_054_f64;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        let ci_low = if violations == 0 { 0.0 } else { (center - half).max(0.0) };
        let ci_high = if violations == draws { 1.0 } else { (center + half).min(1.0) };
        Self { draws, violations, probability: p, ci_low, ci_high }
    }
}

/// `P[g(x, ξ) ≰ 0]` over the sampler, which decides chance-constraint
/// membership of `x` at level `β` by comparison with the interval.
pub fn cc_violation_probability<T: Scalar>(
    tmpl: &ProblemTemplate<T>,
    x: &[T],
    sampler: &Sampler<'_, T>,
    draws: usize,
    seed: u64,
    tol: T,
) -> Result<MonteCarloEstimate, AnalysisError> {
    if draws == 0 || x.len() != tmpl.n() {
        return Err(AnalysisError::Domain("need draws >= 1 and x of length n".into()));
    }
    const CHUNK: usize = 4096;
    let chunks = draws.div_ceil(CHUNK);
    let violations: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(seed, c as u64);
            let count = CHUNK.min(draws - c * CHUNK);
            (0..count)
                .filter(|_| {
                    let rows = tmpl.generator.rows(&sampler(&mut rng));
                    (0..rows.g.rows()).any(|i| dot(rows.g.row(i), x) - rows.h[i] > tol * (T::one() + rows.h[i].abs()))
                })
                .count()
        })
        .sum();
    Ok(MonteCarloEstimate::from_counts(draws, violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{planted_threshold_data, threshold_lp, tilted_halfplane_lp, tilted_row, two_threshold_lp, ray_halfplane_lp};
    use crate::synth;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    #[test]
    fn scenario_sample_size_matches_hand_value() {
        // e/(e−1) = 1.58197670686932...; (2 + ln 100)/0.05 = 132.103403...
        // product 208.98..., ceiling 209.
        let hand = (1.581_976_706_869_326_f64 * (2.0 + 100f64.ln()) / 0.05).ceil() as u64;
        assert_eq!(hand, 209);
        assert_eq!(scenario_sample_size(2, 0.01, 0.05).unwrap(), hand);
        assert!(scenario_sample_size(2, 0.0, 0.05).is_err());
    }

    #[test]
    fn bound_experiment_verdict_uses_three_sigma() {
        let e = BoundExperiment::from_counts(100, 0, None, 80, 0, 0.9, false);
        assert_relative_eq!(e.sigma, 0.03, epsilon = 1e-12);
        assert!(!e.verdict);
        let ok = BoundExperiment::from_counts(100, 0, None, 82, 0, 0.9, false);
        assert!(ok.verdict);
        let failed = BoundExperiment::from_counts(10, 0, None, 5, 5, 0.5, false);
        assert_eq!(failed.observed, 1.0);
    }

    #[test]
    fn varrho_full_sample_always_succeeds() {
        let data = planted_threshold_data(60, 6, 1);
        let cfg = VarrhoConfig { b_bar: 1, alpha: 0.05, d: 120, trials: 20, seed: 3, tol: 1e-6 };
        let (check, exps) = verify_varrho(&threshold_lp(), &data, &[60], &cfg, &opts()).unwrap();
        assert!(!check.violated);
        assert_eq!(check.multiplicities, vec![6]);
        assert_eq!(exps[0].observed, 1.0);
        assert_eq!(exps[0].bound, 1.0);
        assert!(exps[0].verdict);
    }

    #[test]
    fn varrho_flags_too_small_b_bar() {
        let data = crate::instances::planted_two_threshold_data(100, 10, 2);
        let cfg = VarrhoConfig { b_bar: 1, alpha: 0.05, d: 200, trials: 10, seed: 3, tol: 1e-6 };
        let (check, _) = verify_varrho(&two_threshold_lp(), &data, &[50], &cfg, &opts()).unwrap();
        assert_eq!(check.boundary_points.len(), 2);
        assert!(check.violated);
    }

    fn line_data(a: [f64; 2], b: [f64; 2]) -> Vec<UncertaintyPoint<f64>> {
        vec![UncertaintyPoint::continuous(a.to_vec()), UncertaintyPoint::continuous(b.to_vec())]
    }

    /// Crossing of the two tilted lines and its derivative in `(a₁, a₂, b₁, b₂)`,
    /// from `x = M⁻¹v`, `∂x = M⁻¹(∂v − ∂M x)`.
    fn analytic(a: [f64; 2], b: [f64; 2]) -> ([f64; 2], [[f64; 4]; 2]) {
        let m = [[1.0 + a[0], 1.0 - a[0]], [1.0 + b[0], 1.0 - b[0]]];
        let v = [1.0 + a[1], 1.0 + b[1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let x = [inv[0][0] * v[0] + inv[0][1] * v[1], inv[1][0] * v[0] + inv[1][1] * v[1]];
        // derivative of row i of (v − M x) w.r.t. each parameter
        let dr = [[-(x[0] - x[1]), 1.0, 0.0, 0.0], [0.0, 0.0, -(x[0] - x[1]), 1.0]];
        let mut h = [[0.0; 4]; 2];
        for c in 0..4 {
            for i in 0..2 {
                h[i][c] = inv[i][0] * dr[0][c] + inv[i][1] * dr[1][c];
            }
        }
        (x, h)
    }

    #[test]
    fn implicit_jacobian_matches_line_intersection() {
        let (a, b) = ([0.3, 0.1], [-0.4, -0.05]);
        let data = line_data(a, b);
        let tmpl = tilted_halfplane_lp::<f64>();
        let (x, h_true) = analytic(a, b);
        let popts = PhiOptions::default();
        let h = implicit_jacobian(&tmpl, &data, &[(0, 0), (1, 0)], &x, 1e-5, FiniteDifference::Central, &popts).unwrap();
        for i in 0..2 {
            for c in 0..4 {
                assert!((h[(i, c)] - h_true[i][c]).abs() < 1e-4, "H[{i},{c}] = {} vs {}", h[(i, c)], h_true[i][c]);
            }
        }
    }

    #[test]
    fn finite_difference_orders() {
        let (a, b) = ([0.3, 0.1], [-0.4, -0.05]);
        let data = line_data(a, b);
        let tmpl = tilted_halfplane_lp::<f64>();
        let (x, h_true) = analytic(a, b);
        let popts = PhiOptions::default();
        let err = |delta: f64, scheme| {
            let h = implicit_jacobian(&tmpl, &data, &[(0, 0), (1, 0)], &x, delta, scheme, &popts).unwrap();
            (0..2).flat_map(|i| (0..4).map(move |c| (i, c))).map(|(i, c)| (h[(i, c)] - h_true[i][c]).abs()).fold(0.0, f64::max)
        };
        let fwd = [err(1e-2, FiniteDifference::Forward), err(5e-3, FiniteDifference::Forward), err(2.5e-3, FiniteDifference::Forward)];
        let cen = [err(1e-2, FiniteDifference::Central), err(5e-3, FiniteDifference::Central), err(2.5e-3, FiniteDifference::Central)];
        for w in fwd.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.7..2.3).contains(&ratio), "forward ratio {ratio}");
        }
        for w in cen.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.4..4.6).contains(&ratio), "central ratio {ratio}");
        }
    }

    #[test]
    fn phi_refuses_wrong_boundary_count_and_singular_system() {
        let tmpl = tilted_halfplane_lp::<f64>();
        let data = line_data([0.3, 0.1], [0.3, 0.2]);
        let popts = PhiOptions::default();
        let err = implicit_jacobian(&tmpl, &data, &[(0, 0)], &[0.0, 0.0], 1e-5, FiniteDifference::Central, &popts).unwrap_err();
        assert!(matches!(err, AnalysisError::BoundaryCount { b_c: 1, n: 2 }));
        // parallel lines
        let report = BoundaryReport {
            boundary_points: vec![0, 1],
            active_rows: vec![0, 1],
            active_points: vec![0, 1],
            boundary_constraints: vec![(0, 0), (1, 0)],
            b_z: 2,
            b_c: 2,
            objective: 0.0,
        };
        let fake = solve_points(&tmpl, &data[..1], &opts()).unwrap();
        let err = estimate_phi_bound(&tmpl, &data, &fake, &report, &popts).unwrap_err();
        assert!(matches!(err, AnalysisError::Singular { .. }), "{err:?}");
    }

    fn phi_instance(seed: u64) -> (DataSet<f64>, SolveResult<f64>, BoundaryReport) {
        let ds = synth::gaussian(200, &[0.0, 0.0], &Matrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 0.1]]), seed);
        let tmpl = tilted_halfplane_lp::<f64>();
        let opt = reference_solve(&tmpl, ds.points(), &opts()).unwrap();
        let rep = find_boundary_points(&tmpl, ds.points(), &opt, 1e-6, &opts()).unwrap();
        (ds, opt, rep)
    }

    #[test]
    fn phi_is_one_without_thinning() {
        let (ds, opt, rep) = phi_instance(5);
        let tmpl = tilted_halfplane_lp::<f64>();
        let est = estimate_phi_bound(&tmpl, ds.points(), &opt, &rep, &PhiOptions::default()).unwrap();
        assert_eq!(est.lower_bound(0.0), 1.0);
        let pts = phi_sweep(&tmpl, &ds, &opt, &est, &[0.0], 1, 1e-9, &opts()).unwrap();
        assert_relative_eq!(pts[0].measured, 1.0, epsilon = 1e-6);
        assert_eq!(pts[0].z_eta, 200);
    }

    #[test]
    fn phi_bound_uses_estimated_jacobian() {
        let (ds, opt, rep) = phi_instance(6);
        assert_eq!(rep.b_c, 2);
        let tmpl = tilted_halfplane_lp::<f64>();
        let popts = PhiOptions { second_order: true, ..PhiOptions::default() };
        let est = estimate_phi_bound(&tmpl, ds.points(), &opt, &rep, &popts).unwrap();
        let (k0, k1) = (rep.boundary_constraints[0].0, rep.boundary_constraints[1].0);
        let a = [ds.points()[k0].real_part[0], ds.points()[k0].real_part[1]];
        let b = [ds.points()[k1].real_part[0], ds.points()[k1].real_part[1]];
        let (x, h) = analytic(a, b);
        assert_relative_eq!(opt.x[0], x[0], epsilon = 1e-5);
        let hm = Matrix::from_rows(&[h[0].to_vec(), h[1].to_vec()]);
        assert_relative_eq!(est.h_norm, hm.spectral_norm(), epsilon = 1e-4);
        let eta = 0.01;
        let first = 1.0 - 2.0 * 2f64.sqrt() * est.h_norm * eta / est.x_norm;
        assert!(est.lower_bound(eta) <= first);
        assert_relative_eq!(est.lower_bound_mixed(&[eta, eta]), 1.0 - (est.h_norm * 2.0 * (2.0 * eta * eta).sqrt() + 0.5 * est.h_prime_norm.unwrap() * 8.0 * eta * eta) / est.x_norm, epsilon = 1e-12);
        let (row, rhs) = tilted_row(&a);
        assert_relative_eq!(dot(&row, &opt.x), rhs, epsilon = 1e-6);
    }

    #[test]
    fn omega_is_one_on_integer_data() {
        let rows: Vec<Vec<i64>> = (0..80).map(|i| vec![i % 7, (i * 3) % 5]).collect();
        let ds = DataSet::<f64>::from_integers(rows).unwrap();
        let gen = crate::dda::FnGenerator::new(2, 2, ds.dims(), |p: &UncertaintyPoint<f64>| crate::dda::AffineRows {
            g: Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]),
            h: vec![-(p.integer_part[0] as f64), -(p.integer_part[1] as f64)],
        });
        let tmpl = ProblemTemplate::new(crate::dda::Objective::linear(vec![1.0, 2.0]), std::sync::Arc::new(gen), crate::dda::BaseConstraints::free(2)).unwrap();
        let cfg = OmegaConfig { etas: vec![0.1, 0.5, 3.0], z: None, trials: 5, seed: 9, tol: 1e-9 };
        let rep = verify_omega_monotone(&tmpl, &ds, &cfg, &opts()).unwrap();
        assert!(rep.points.iter().all(|p| p.omega == 1.0 && p.mean_z_eta == 35.0));
        assert!(rep.monotone);
    }

    #[test]
    fn omega_single_radius_is_monotone() {
        let ds = planted_threshold_data(40, 4, 3);
        let cfg = OmegaConfig { etas: vec![0.5], z: Some(20), trials: 8, seed: 1, tol: 1e-6 };
        let rep = verify_omega_monotone(&threshold_lp(), &ds, &cfg, &opts()).unwrap();
        assert!(rep.monotone && rep.violations.is_empty());
        let bad = OmegaConfig { etas: vec![0.5, 0.1], ..cfg };
        assert!(verify_omega_monotone(&threshold_lp(), &ds, &bad, &opts()).is_err());
    }

    #[test]
    fn scaling_fit_recovers_exact_power_law() {
        let x = [1.0, 2.0, 3.0];
        let y = [5.0, 7.0, 9.0];
        let (s, c) = fit_line(&x, &y);
        assert_relative_eq!(s, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_scenario_contains_contour_proxy() {
        let sampler = |rng: &mut ChaCha8Rng| {
            let n = rand_distr::Normal::new(0.0, 0.1).unwrap();
            use rand_distr::Distribution;
            UncertaintyPoint::continuous(vec![1.0 + n.sample(rng), 1.0 + n.sample(rng)])
        };
        let cfg = ScenarioConfig {
            n_samples: 1,
            alpha: 0.05,
            zeta: 0.05,
            pool_size: 2000,
            trials: 40,
            probes: 400,
            probe_lower: vec![-2.0, -2.0],
            probe_upper: vec![2.0, 2.0],
            seed: 4,
            tol: 1e-9,
            header: Some((0.01, 0.05)),
        };
        let rep = compare_scenario_method(&ray_halfplane_lp(), &sampler, &cfg).unwrap();
        assert_eq!(rep.scenario_sample_size, Some(209));
        assert!(rep.inclusion_frequency >= 0.8, "{rep:?}");
        assert!(rep.claim_frequency >= 0.8, "{rep:?}");
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let e = MonteCarloEstimate::from_counts(1000, 50);
        assert!(e.ci_low < 0.05 && e.ci_high > 0.05);
        let z = MonteCarloEstimate::from_counts(100, 0);
        assert_eq!(z.ci_low, 0.0);
        assert!(z.ci_high > 0.0 && z.ci_high < 0.05);
    }

    #[test]
    fn cc_probability_of_threshold() {
        // x ≥ ξ with ξ ~ U[0, 9] mostly, 10 with prob 0.1: P[ξ > 8.1] = 0.9·0.1 + 0.1 = 0.19
        let sampler = |rng: &mut ChaCha8Rng| {
            let v = if rng.random::<f64>() < 0.1 { 10.0 } else { rng.random_range(0.0..9.0) };
            UncertaintyPoint::continuous(vec![v])
        };
        let est = cc_violation_probability(&threshold_lp(), &[8.1], &sampler, 100_000, 2, 0.0).unwrap();
        assert!(est.ci_low - 0.005 < 0.19 && 0.19 < est.ci_high + 0.005, "{est:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn frequencies_lie_in_unit_interval(trials in 1usize..500, s in 0usize..500, f in 0usize..500, bound in 0.0f64..1.0) {
            let s = s.min(trials);
            let f = f.min(trials - s);
            let e = BoundExperiment::from_counts(trials, 0, None, s, f, bound, false);
            prop_assert!((0.0..=1.0).contains(&e.observed));
            prop_assert!(e.sigma >= 0.0 && e.sigma <= 0.5);
            prop_assert_eq!(e.verdict, e.observed >= bound - 3.0 * e.sigma);
        }

        #[test]
        fn probes_in_smaller_data_set_program_lie_in_larger(seed in 0u64..1000) {
            let ds = synth::standard_normal(60, 2, seed);
            let sub: Vec<usize> = (0..60).step_by(3).collect();
            let small = ds.subset(&sub).unwrap();
            let mut rng = trial_rng(seed, 0);
            let probes: Vec<Vec<f64>> = (0..200).map(|_| box_probe(&mut rng, &[-2.0, -2.0], &[2.0, 2.0])).collect();
            let tmpl = tilted_halfplane_lp::<f64>();
            // fewer points, larger feasible set
            let cmp = compare_feasible_sets(&tmpl, ds.points(), small.points(), &probes, 1e-12).unwrap();
            prop_assert!(cmp.a_within_b());
            prop_assert_eq!(cmp.probes, 200);
        }
    }
}
