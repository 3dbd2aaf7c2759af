//! Hypergeometric sample sizing and strategic data selection (SDS).

use std::collections::BTreeMap;

use kdtree::KdTree;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataSet, DatasetError};
use crate::density::{alpha_process, estimate_density, AlphaFilterResult, DensityError};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("target probability {rho} is unreachable: the bound at z = D_alpha is {best}")]
    Infeasible { rho: f64, best: f64 },
    #[error("SDS radius must be finite and positive, got {0}")]
    BadRadius(f64),
    #[error("operation needs {what}")]
    WrongDims { what: &'static str },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Multiplicity deficit `⌊α·D⌋`, tolerant of decimal inputs such as
/// `0.29 * 100` landing just below an integer.
pub fn deficit(alpha: f64, d: usize) -> u64 {
    let x = alpha * d as f64;
    (x + 1e-9 * x.max(1.0)).floor().max(0.0) as u64
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn check_bound_domain(z: usize, b_bar: usize, alpha: f64, d: usize, d_alpha: usize) -> Result<(), ReductionError> {
    if z == 0 || z > d_alpha {
        return Err(ReductionError::Domain(format!("need 1 <= z <= D_alpha, got z = {z}, D_alpha = {d_alpha}")));
    }
    if b_bar == 0 {
        return Err(ReductionError::Domain("B_bar must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(ReductionError::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if d_alpha > d {
        return Err(ReductionError::Domain(format!("D_alpha = {d_alpha} exceeds D = {d}")));
    }
    if deficit(alpha, d) as usize > d_alpha {
        return Err(ReductionError::Domain(format!("alpha*D = {} exceeds D_alpha = {d_alpha}", alpha * d as f64)));
    }
    Ok(())
}

/// Exact, unclamped inclusion-exclusion sum for the success-probability
/// lower bound.
pub fn varrho_lower_bound_exact(z: usize, b_bar: usize, alpha: f64, d: usize, d_alpha: usize) -> Result<BigRational, ReductionError> {
    check_bound_domain(z, b_bar, alpha, d, d_alpha)?;
    let m = deficit(alpha, d);
    let (z, da) = (z as u64, d_alpha as u64);
    let denom = binomial(da, z);
    let mut sum = BigInt::from(denom.clone());
    let mut choose_b = BigUint::one();
    for k in 1..=b_bar as u64 {
        choose_b = choose_b * (b_bar as u64 - k + 1) / k;
        let Some(rest) = da.checked_sub(k * m) else { break };
        let term = BigInt::from(&choose_b * binomial(rest, z));
        if term.is_zero() {
            break;
        }
        if k % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
    }
    Ok(BigRational::new(sum, BigInt::from(denom)))
}

/// Lower bound `ϱ̲(z)` on the probability that a uniform `z`-subsample of
/// `D_α` reproduces the optimum, clamped to `[0, 1]`.
pub fn varrho_lower_bound(z: usize, b_bar: usize, alpha: f64, d: usize, d_alpha: usize) -> Result<f64, ReductionError> {
    let exact = varrho_lower_bound_exact(z, b_bar, alpha, d, d_alpha)?;
    let v = exact.to_f64().unwrap_or(0.0);
    Ok(v.clamp(0.0, 1.0))
}

/// Sample-size decision and the inputs it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub rho: f64,
    pub b_bar: usize,
    pub alpha: f64,
    pub d: usize,
    pub d_alpha: usize,
    pub z: usize,
    /// Bound value at the chosen `z`.
    pub bound: f64,
}

/// Smallest `z` with `ϱ̲(z) ≥ ρ`, by binary search on the monotone bound.
pub fn plan_sample_size(rho: f64, b_bar: usize, alpha: f64, d: usize, d_alpha: usize) -> Result<SamplingPlan, ReductionError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(ReductionError::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    if d_alpha == 0 {
        return Err(ReductionError::Domain("D_alpha is zero: the alpha-process kept no points".into()));
    }
    let best = varrho_lower_bound(d_alpha, b_bar, alpha, d, d_alpha)?;
    if best < rho {
        return Err(ReductionError::Infeasible { rho, best });
    }
    let (mut lo, mut hi) = (1usize, d_alpha);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if varrho_lower_bound(mid, b_bar, alpha, d, d_alpha)? >= rho {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let bound = varrho_lower_bound(lo, b_bar, alpha, d, d_alpha)?;
    Ok(SamplingPlan { rho, b_bar, alpha, d, d_alpha, z: lo, bound })
}

/// Uniform sample of `plan.z` kept points without replacement. Returns
/// source-dataset indices in ascending order.
pub fn draw_subsample<T: Scalar>(filtered: &AlphaFilterResult<T>, plan: &SamplingPlan, seed: u64) -> Result<Vec<usize>, ReductionError> {
    let n = filtered.kept_indices.len();
    if plan.z > n {
        return Err(ReductionError::Domain(format!("z = {} exceeds D_alpha = {n}", plan.z)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_sorted(&mut rng, &filtered.kept_indices, plan.z))
}

/// `k` distinct entries of `pool`, kept in pool order.
pub fn sample_sorted<R: rand::Rng + ?Sized>(rng: &mut R, pool: &[usize], k: usize) -> Vec<usize> {
    let mut pos = rand::seq::index::sample(rng, pool.len(), k).into_vec();
    pos.sort_unstable();
    pos.into_iter().map(|p| pool[p]).collect()
}

/// Radius given to one integer-part group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GroupRadius<T: Scalar = f64> {
    pub integer_part: Vec<i64>,
    pub eta: T,
}

/// SDS radius: one value, or per-group values with a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case")]
pub enum EtaSpec<T: Scalar = f64> {
    Uniform(T),
    PerGroup { default: T, groups: Vec<GroupRadius<T>> },
}

impl<T: Scalar> EtaSpec<T> {
    pub fn radius_for(&self, integer_part: &[i64]) -> T {
        match self {
            EtaSpec::Uniform(e) => *e,
            EtaSpec::PerGroup { default, groups } => groups
                .iter()
                .find(|g| g.integer_part == integer_part)
                .map_or(*default, |g| g.eta),
        }
    }

    /// True when every radius is exactly zero, i.e. thinning is a no-op.
    pub fn is_zero(&self) -> bool {
        self.radii().iter().all(|r| *r == T::zero())
    }

    pub fn cast<U: Scalar>(&self) -> EtaSpec<U> {
        let c = |v: T| U::lit(v.as_f64());
        match self {
            EtaSpec::Uniform(e) => EtaSpec::Uniform(c(*e)),
            EtaSpec::PerGroup { default, groups } => EtaSpec::PerGroup {
                default: c(*default),
                groups: groups.iter().map(|g| GroupRadius { integer_part: g.integer_part.clone(), eta: c(g.eta) }).collect(),
            },
        }
    }

    fn radii(&self) -> Vec<T> {
        match self {
            EtaSpec::Uniform(e) => vec![*e],
            EtaSpec::PerGroup { default, groups } => std::iter::once(*default).chain(groups.iter().map(|g| g.eta)).collect(),
        }
    }
}

/// Outcome of strategic data selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SdsResult<T: Scalar = f64> {
    /// Survivor positions in the input, in selection order.
    pub selected: Vec<usize>,
    /// Input points represented by each survivor (itself included).
    pub weights: Vec<usize>,
    pub z_eta: usize,
    pub eta: EtaSpec<T>,
    pub input_size: usize,
    /// True when a single survivor represents the whole input.
    pub saturated: bool,
}

impl<T: Scalar> SdsResult<T> {
    /// Keeps every input point with unit weight.
    pub fn identity(input_size: usize, eta: EtaSpec<T>) -> Self {
        Self {
            selected: (0..input_size).collect(),
            weights: vec![1; input_size],
            z_eta: input_size,
            eta,
            input_size,
            saturated: input_size == 1,
        }
    }

    pub fn survivors(&self, input: &DataSet<T>) -> Result<DataSet<T>, DatasetError> {
        input.subset(&self.selected)
    }
}

/// Greedy randomized `2η`-separated thinning of one group. Returns
/// `(survivor local indices, weights)`.
fn greedy_group<T: Scalar>(reals: &[&[T]], eta: T, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = reals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let dim = reals.first().map_or(0, |r| r.len());
    if dim == 0 {
        return (vec![order[0]], vec![n]);
    }
    let mut all: KdTree<T, usize, &[T]> = KdTree::with_capacity(dim, 16);
    for (i, r) in reals.iter().enumerate() {
        all.add(*r, i).expect("finite point");
    }
    let mut survivors_tree: KdTree<T, usize, &[T]> = KdTree::with_capacity(dim, 16);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut survivors: Vec<usize> = Vec::new();
    let sep2 = T::lit(4.0) * eta * eta;
    let eta2 = eta * eta;
    for &i in &order {
        if owner[i].is_some() {
            continue;
        }
        let blocked = survivors_tree
            .within(reals[i], sep2, &squared_distance::<T>)
            .expect("finite point")
            .iter()
            .any(|(d, _)| *d < sep2);
        if blocked {
            continue;
        }
        let slot = survivors.len();
        survivors.push(i);
        survivors_tree.add(reals[i], slot).expect("finite point");
        owner[i] = Some(slot);
        for (_, &q) in all.within(reals[i], eta2, &squared_distance::<T>).expect("finite point") {
            if owner[q].is_none() {
                owner[q] = Some(slot);
            }
        }
    }
    // points blocked by a survivor but outside every η-ball join their nearest survivor
    for i in 0..n {
        if owner[i].is_some() {
            continue;
        }
        let mut best = (T::infinity(), usize::MAX);
        for (slot, &s) in survivors.iter().enumerate() {
            let d = squared_distance(reals[i], reals[s]);
            if d < best.0 {
                best = (d, slot);
            }
        }
        owner[i] = Some(best.1);
    }
    let mut weights = vec![0usize; survivors.len()];
    for o in owner {
        weights[o.expect("assigned")] += 1;
    }
    (survivors, weights)
}

fn check_eta<T: Scalar>(eta: T) -> Result<(), ReductionError> {
    if eta.is_finite() && eta > T::zero() {
        Ok(())
    } else {
        Err(ReductionError::BadRadius(eta.as_f64()))
    }
}

fn run_groups<T: Scalar>(points: &DataSet<T>, eta: EtaSpec<T>, seed: u64) -> Result<SdsResult<T>, ReductionError> {
    for e in eta.radii() {
        check_eta(e)?;
    }
    let mut groups: BTreeMap<&[i64], Vec<usize>> = BTreeMap::new();
    for (i, p) in points.points().iter().enumerate() {
        groups.entry(&p.integer_part).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::new();
    let mut weights = Vec::new();
    for (key, members) in groups {
        let reals: Vec<&[T]> = members.iter().map(|&i| points.points()[i].real_part.as_slice()).collect();
        let (s, w) = greedy_group(&reals, eta.radius_for(key), &mut rng);
        selected.extend(s.into_iter().map(|l| members[l]));
        weights.extend(w);
    }
    let z_eta = selected.len();
    Ok(SdsResult { selected, weights, z_eta, eta, input_size: points.len(), saturated: z_eta == 1 })
}

/// Strategic data selection on continuous data.
pub fn sds_continuous<T: Scalar>(points: &DataSet<T>, eta: T, seed: u64) -> Result<SdsResult<T>, ReductionError> {
    if points.dims().r1 != 0 {
        return Err(ReductionError::WrongDims { what: "purely continuous data (r1 = 0)" });
    }
    run_groups(points, EtaSpec::Uniform(eta), seed)
}

/// Strategic data selection on mixed-integer data: one continuous pass per
/// integer-part group, groups visited in lexicographic order.
pub fn sds_mixed<T: Scalar>(points: &DataSet<T>, eta: EtaSpec<T>, seed: u64) -> Result<SdsResult<T>, ReductionError> {
    if points.dims().r1 == 0 {
        return Err(ReductionError::WrongDims { what: "at least one integer coordinate (r1 >= 1)" });
    }
    run_groups(points, eta, seed)
}

/// Dispatches on the dataset's dimensions.
pub fn sds<T: Scalar>(points: &DataSet<T>, eta: EtaSpec<T>, seed: u64) -> Result<SdsResult<T>, ReductionError> {
    run_groups(points, eta, seed)
}

/// Provenance of one reduction chain `D → D_α → D_α^z → D_α^η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub seed: u64,
    pub alpha: f64,
    pub zeta: f64,
    pub rho: f64,
    pub b_bar: usize,
    pub d: usize,
    pub d_alpha: usize,
    pub z: usize,
    /// SDS radius; `None` when the thinning stage was skipped.
    pub eta: Option<EtaSpec<f64>>,
    pub z_eta: usize,
    /// Weight of each final point, aligned with `indices`.
    pub weights: Vec<usize>,
    /// Final points as indices into the source dataset.
    pub indices: Vec<usize>,
    /// The `z`-subsample as indices into the source dataset.
    pub z_indices: Vec<usize>,
    /// Bound value at the chosen `z`.
    pub varrho_bound: f64,
}

/// Seed for a numbered sub-stage, decorrelated from the parent seed.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut x = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Parameters of the chain `D → D_α → D_α^z → D_α^η`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig<T: Scalar = f64> {
    pub alpha: f64,
    pub zeta: T,
    pub rho: f64,
    /// Boundary-point bound `B̄`.
    pub b_bar: usize,
    /// `None` skips thinning; a zero radius keeps every sampled point.
    pub eta: Option<EtaSpec<T>>,
    pub seed: u64,
}

/// Every intermediate set of one reduction chain.
#[derive(Debug, Clone)]
pub struct Reduction<T: Scalar = f64> {
    pub filtered: AlphaFilterResult<T>,
    pub plan: SamplingPlan,
    pub sds: Option<SdsResult<T>>,
    pub report: ReductionReport,
}

impl<T: Scalar> Reduction<T> {
    /// Source indices of `D_α`.
    pub fn alpha_indices(&self) -> &[usize] {
        &self.filtered.kept_indices
    }

    /// Source indices of `D_α^z`.
    pub fn z_indices(&self) -> &[usize] {
        &self.report.z_indices
    }

    /// Source indices and weights of the final set.
    pub fn final_points(&self) -> (&[usize], &[usize]) {
        (&self.report.indices, &self.report.weights)
    }
}

/// Runs density estimation, the α-process, sample sizing, the uniform draw
/// and (optionally) SDS. The draw uses `derive_seed(seed, 1)` and SDS uses
/// `derive_seed(seed, 2)`.
pub fn reduce<T: Scalar>(ds: &DataSet<T>, cfg: &ReductionConfig<T>) -> Result<Reduction<T>, ReductionError> {
    let de = estimate_density(ds, cfg.zeta)?;
    let filtered = alpha_process(ds, &de, cfg.alpha)?;
    let plan = plan_sample_size(cfg.rho, cfg.b_bar, cfg.alpha, filtered.d, filtered.d_alpha)?;
    let z_indices = draw_subsample(&filtered, &plan, derive_seed(cfg.seed, 1))?;
    let sds = match &cfg.eta {
        None => None,
        Some(eta) => {
            let sampled = ds.subset(&z_indices)?;
            Some(if eta.is_zero() {
                SdsResult::identity(sampled.len(), eta.clone())
            } else {
                sds(&sampled, eta.clone(), derive_seed(cfg.seed, 2))?
            })
        }
    };
    let (indices, weights, z_eta) = match &sds {
        None => (z_indices.clone(), vec![1; z_indices.len()], z_indices.len()),
        Some(r) => (r.selected.iter().map(|&l| z_indices[l]).collect(), r.weights.clone(), r.z_eta),
    };
    let report = ReductionReport {
        seed: cfg.seed,
        alpha: cfg.alpha,
        zeta: cfg.zeta.as_f64(),
        rho: cfg.rho,
        b_bar: cfg.b_bar,
        d: filtered.d,
        d_alpha: filtered.d_alpha,
        z: plan.z,
        eta: cfg.eta.as_ref().map(|e| e.cast()),
        z_eta,
        weights,
        indices,
        z_indices,
        varrho_bound: plan.bound,
    };
    Ok(Reduction { filtered, plan, sds, report })
}
