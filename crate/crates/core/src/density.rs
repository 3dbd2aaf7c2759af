//! Vicinity-count probability estimates, bandwidth selection and the
//! α-process filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataSet, DatasetError, VicinityIndex};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("bandwidth must be finite and positive, got {0}")]
    BadBandwidth(f64),
    #[error("bandwidth grid is empty")]
    EmptyGrid,
    #[error("alpha must lie in [0, 1), got {0}")]
    BadAlpha(f64),
    #[error("beta must lie in (0, 1), got {0}")]
    BadBeta(f64),
    #[error("density estimate has {got} points but the dataset has {expected}")]
    Mismatch { expected: usize, got: usize },
}

/// Per-point vicinity counts `D_j^ζ` and probabilities `D_j^ζ / D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DensityEstimate<T: Scalar = f64> {
    pub counts: Vec<usize>,
    pub probabilities: Vec<T>,
    pub bandwidth: T,
    /// Size of the dataset the counts were taken against.
    pub total: usize,
}

impl<T: Scalar> DensityEstimate<T> {
    /// Keeps the listed entries; counts stay relative to the original total.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            counts: indices.iter().map(|&i| self.counts[i]).collect(),
            probabilities: indices.iter().map(|&i| self.probabilities[i]).collect(),
            bandwidth: self.bandwidth,
            total: self.total,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_probability(&self) -> f64 {
        self.counts.iter().copied().max().unwrap_or(0) as f64 / self.total as f64
    }
}

fn check_bandwidth<T: Scalar>(zeta: T) -> Result<(), DensityError> {
    if zeta.is_finite() && zeta > T::zero() {
        Ok(())
    } else {
        Err(DensityError::BadBandwidth(zeta.as_f64()))
    }
}

fn density_with_index<T: Scalar>(index: &VicinityIndex<'_, T>, zeta: T) -> Result<DensityEstimate<T>, DensityError> {
    check_bandwidth(zeta)?;
    let ds = index.dataset();
    let counts = (0..ds.len())
        .into_par_iter()
        .map(|j| index.vicinity_count(j, zeta))
        .collect::<Result<Vec<_>, _>>()?;
    let d = T::from_usize_lossy(ds.len());
    let probabilities = counts.iter().map(|&c| T::from_usize_lossy(c) / d).collect();
    Ok(DensityEstimate { counts, probabilities, bandwidth: zeta, total: ds.len() })
}

/// Counts every point's `ζ`-vicinity against the full dataset.
pub fn estimate_density<T: Scalar>(ds: &DataSet<T>, zeta: T) -> Result<DensityEstimate<T>, DensityError> {
    density_with_index(&ds.index(), zeta)
}

/// Neighbour count used by the roughness score.
pub fn roughness_neighbours(d: usize) -> usize {
    5usize.max(d.div_ceil(100))
}

/// Bandwidth choice with the roughness of every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BandwidthSelection<T: Scalar = f64> {
    pub zeta: T,
    pub candidates: Vec<T>,
    pub roughness: Vec<f64>,
    pub neighbours: usize,
}

/// Mean squared gap between each point's probability and the mean
/// probability of its `k` nearest neighbours.
pub fn roughness<T: Scalar>(de: &DensityEstimate<T>, neighbours: &[Vec<usize>]) -> f64 {
    let n = de.probabilities.len();
    let mut acc = 0.0;
    let mut used = 0usize;
    for (j, nb) in neighbours.iter().enumerate().take(n) {
        if nb.is_empty() {
            continue;
        }
        let mean = nb.iter().map(|&i| de.probabilities[i].as_f64()).sum::<f64>() / nb.len() as f64;
        let gap = de.probabilities[j].as_f64() - mean;
        acc += gap * gap;
        used += 1;
    }
    if used == 0 {
        0.0
    } else {
        acc / used as f64
    }
}

/// Picks the candidate bandwidth with the smallest roughness; ties go to the
/// smaller bandwidth.
pub fn select_bandwidth<T: Scalar>(ds: &DataSet<T>, grid: &[T]) -> Result<BandwidthSelection<T>, DensityError> {
    if grid.is_empty() {
        return Err(DensityError::EmptyGrid);
    }
    for &z in grid {
        check_bandwidth(z)?;
    }
    let mut candidates = grid.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    candidates.dedup();
    let index = ds.index();
    let k = roughness_neighbours(ds.len());
    let neighbours = (0..ds.len())
        .into_par_iter()
        .map(|j| index.nearest_others(j, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &z in &candidates {
        let de = density_with_index(&index, z)?;
        scores.push(roughness(&de, &neighbours));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(BandwidthSelection { zeta: candidates[best], candidates, roughness: scores, neighbours: k })
}

/// Outcome of the α-process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AlphaFilterResult<T: Scalar = f64> {
    pub alpha: f64,
    pub zeta: T,
    pub d: usize,
    pub d_alpha: usize,
    pub kept_indices: Vec<usize>,
}

impl<T: Scalar> AlphaFilterResult<T> {
    pub fn kept(&self, ds: &DataSet<T>) -> Result<DataSet<T>, DatasetError> {
        ds.subset(&self.kept_indices)
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }
}

/// Keeps, in source order, every point with `D_j^ζ ≥ α·D`.
pub fn alpha_process<T: Scalar>(ds: &DataSet<T>, de: &DensityEstimate<T>, alpha: f64) -> Result<AlphaFilterResult<T>, DensityError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(DensityError::BadAlpha(alpha));
    }
    if de.counts.len() != ds.len() {
        return Err(DensityError::Mismatch { expected: ds.len(), got: de.counts.len() });
    }
    let threshold = alpha * de.total as f64;
    let kept_indices: Vec<usize> = de
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as f64 >= threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(AlphaFilterResult {
        alpha,
        zeta: de.bandwidth,
        d: de.total,
        d_alpha: kept_indices.len(),
        kept_indices,
    })
}

/// Largest probability level `v` whose upper level set holds at least a
/// `1 − β` fraction of the data points.
pub fn calibrate_alpha<T: Scalar>(de: &DensityEstimate<T>, beta: f64) -> Result<f64, DensityError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DensityError::BadBeta(beta));
    }
    if de.counts.is_empty() {
        return Err(DensityError::Dataset(DatasetError::EmptyDataSet));
    }
    let mut counts = de.counts.clone();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let n = counts.len() as f64;
    let need = (1.0 - beta) * n;
    let mut i = 0;
    while i < counts.len() {
        let level = counts[i];
        while i < counts.len() && counts[i] == level {
            i += 1;
        }
        if i as f64 >= need {
            return Ok(level as f64 / de.total as f64);
        }
    }
    Ok(*counts.last().expect("non-empty") as f64 / de.total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dims, UncertaintyPoint};
    use proptest::prelude::*;

    #[test]
    fn identical_points_have_full_mass() {
        let ds = DataSet::from_reals(vec![vec![2.0, 3.0]; 7]).unwrap();
        let de = estimate_density(&ds, 0.01).unwrap();
        assert!(de.probabilities.iter().all(|p| *p == 1.0));
    }

    #[test]
    fn two_far_points() {
        let ds = DataSet::from_reals(vec![vec![0.0], vec![10.0]]).unwrap();
        let de = estimate_density(&ds, 1.0).unwrap();
        assert_eq!(de.probabilities, vec![0.5, 0.5]);
        assert!(matches!(estimate_density(&ds, 0.0), Err(DensityError::BadBandwidth(_))));
    }

    #[test]
    fn discrete_scenario_probability() {
        // 8 scenarios; (1,2) appears 9 times among 100 draws
        let scen = [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0], [2, 1]];
        let mut rows = vec![vec![1i64, 2]; 9];
        for i in 0..91 {
            rows.push(scen[i % scen.len()].to_vec());
        }
        let ds = DataSet::<f64>::from_integers(rows).unwrap();
        let de = estimate_density(&ds, 0.5).unwrap();
        for j in 0..9 {
            assert!((de.probabilities[j] - 0.09).abs() < 1e-15);
        }
    }

    #[test]
    fn bandwidth_forced_and_tied() {
        let ds = DataSet::from_reals((0..30).map(|i| vec![i as f64 * 0.1]).collect()).unwrap();
        assert_eq!(select_bandwidth(&ds, &[0.12]).unwrap().zeta, 0.12);
        assert!(matches!(select_bandwidth::<f64>(&ds, &[]), Err(DensityError::EmptyGrid)));
        // radii below the spacing all give count 1, so the scores tie at zero
        let sel = select_bandwidth(&ds, &[0.05, 0.02]).unwrap();
        assert_eq!(sel.roughness[0], sel.roughness[1]);
        assert_eq!(sel.zeta, 0.02);
    }

    #[test]
    fn alpha_edges() {
        let ds = DataSet::from_reals((0..20).map(|i| vec![(i * i) as f64 * 0.05]).collect()).unwrap();
        let de = estimate_density(&ds, 0.5).unwrap();
        assert_eq!(alpha_process(&ds, &de, 0.0).unwrap().d_alpha, 20);
        let above = de.max_probability() + 1e-9;
        let r = alpha_process(&ds, &de, above).unwrap();
        assert!(r.is_empty());
        assert!(matches!(alpha_process(&ds, &de, 1.0), Err(DensityError::BadAlpha(_))));
    }

    #[test]
    fn calibrate_extremes_and_uniform() {
        let ds = DataSet::from_reals((0..50).map(|i| vec![(i as f64).sqrt()]).collect()).unwrap();
        let de = estimate_density(&ds, 0.4).unwrap();
        let max = de.max_probability();
        let min = *de.counts.iter().min().unwrap() as f64 / 50.0;
        assert_eq!(calibrate_alpha(&de, 1.0 - 1e-12).unwrap(), max);
        assert_eq!(calibrate_alpha(&de, 1e-12).unwrap(), min);
        let flat = DataSet::from_reals((0..10).map(|i| vec![i as f64]).collect()).unwrap();
        let de = estimate_density(&flat, 0.1).unwrap();
        for beta in [0.01, 0.5, 0.99] {
            assert_eq!(calibrate_alpha(&de, beta).unwrap(), 0.1);
        }
        assert!(calibrate_alpha(&de, 0.0).is_err());
    }

    fn arb_cloud() -> impl Strategy<Value = DataSet> {
        proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..150)
            .prop_map(|v| DataSet::from_reals(v.into_iter().map(|(a, b)| vec![a, b]).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn probabilities_consistent(ds in arb_cloud(), zeta in 0.01f64..2.0) {
            let de = estimate_density(&ds, zeta).unwrap();
            for (c, p) in de.counts.iter().zip(&de.probabilities) {
                prop_assert!(*p > 0.0 && *p <= 1.0);
                prop_assert_eq!(*c as f64 / ds.len() as f64, *p);
            }
        }

        #[test]
        fn alpha_monotone(ds in arb_cloud(), zeta in 0.05f64..2.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let de = estimate_density(&ds, zeta).unwrap();
            let k_hi = alpha_process(&ds, &de, hi).unwrap();
            let k_lo = alpha_process(&ds, &de, lo).unwrap();
            prop_assert!(k_hi.kept_indices.iter().all(|i| k_lo.kept_indices.contains(i)));
            for j in 0..ds.len() {
                let kept = k_hi.kept_indices.contains(&j);
                prop_assert_eq!(kept, de.counts[j] as f64 >= hi * ds.len() as f64);
            }
        }

        #[test]
        fn alpha_idempotent(ds in arb_cloud(), zeta in 0.05f64..2.0, a in 0.0f64..0.5) {
            let de = estimate_density(&ds, zeta).unwrap();
            let first = alpha_process(&ds, &de, a).unwrap();
            if first.is_empty() { return Ok(()); }
            let sub = first.kept(&ds).unwrap();
            let sub_de = de.restrict(&first.kept_indices);
            let again = alpha_process(&sub, &sub_de, a).unwrap();
            prop_assert_eq!(again.kept_indices, (0..sub.len()).collect::<Vec<_>>());
        }

        #[test]
        fn calibrate_monotone_in_beta(ds in arb_cloud(), zeta in 0.05f64..2.0, a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let de = estimate_density(&ds, zeta).unwrap();
            let (small, large) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(calibrate_alpha(&de, small).unwrap() <= calibrate_alpha(&de, large).unwrap());
        }

        #[test]
        fn calibrated_level_holds_mass(ds in arb_cloud(), zeta in 0.05f64..2.0, beta in 0.001f64..0.999) {
            let de = estimate_density(&ds, zeta).unwrap();
            let v = calibrate_alpha(&de, beta).unwrap();
            let mass = de.counts.iter().filter(|&&c| c as f64 / ds.len() as f64 >= v).count() as f64;
            prop_assert!(mass >= (1.0 - beta) * ds.len() as f64);
            // any strictly higher observed level fails the mass requirement
            let higher = de.counts.iter().map(|&c| c as f64 / ds.len() as f64).filter(|p| *p > v).fold(f64::INFINITY, f64::min);
            if higher.is_finite() {
                let m = de.counts.iter().filter(|&&c| c as f64 / ds.len() as f64 >= higher).count() as f64;
                prop_assert!(m < (1.0 - beta) * ds.len() as f64);
            }
        }
    }

    #[test]
    fn mixed_points_only_count_their_group() {
        let ds: DataSet = DataSet::new(
            Dims { r1: 1, r2: 1 },
            vec![
                UncertaintyPoint::mixed(vec![0], vec![0.0]),
                UncertaintyPoint::mixed(vec![1], vec![0.0]),
                UncertaintyPoint::mixed(vec![0], vec![0.1]),
                UncertaintyPoint::mixed(vec![0], vec![5.0]),
            ],
        )
        .unwrap();
        let de = estimate_density(&ds, 0.5).unwrap();
        assert_eq!(de.counts, vec![2, 1, 2, 1]);
    }
}
