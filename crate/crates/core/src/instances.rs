//! Small programs with known structure, used by the analysis experiments.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DataSet, Dims, UncertaintyPoint};
use crate::dda::{AffineRows, BaseConstraints, FnGenerator, Objective, ProblemTemplate};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// `min x  s.t.  x ≥ ξ₁`. The optimum is the largest data value.
pub fn threshold_lp<T: Scalar>() -> ProblemTemplate<T> {
    let gen = FnGenerator::new(1, 1, Dims::continuous(1), |p: &UncertaintyPoint<T>| AffineRows {
        g: Matrix::from_rows(&[vec![-T::one()]]),
        h: vec![-p.real_part[0]],
    });
    ProblemTemplate::new(Objective::linear(vec![T::one()]), Arc::new(gen), BaseConstraints::free(1)).expect("valid template")
}

/// `min x₁ + x₂  s.t.  x₁ ≥ ξ₁, x₂ ≥ ξ₂`. Two boundary points in general.
pub fn two_threshold_lp<T: Scalar>() -> ProblemTemplate<T> {
    let gen = FnGenerator::new(2, 2, Dims::continuous(2), |p: &UncertaintyPoint<T>| AffineRows {
        g: Matrix::from_rows(&[vec![-T::one(), T::zero()], vec![T::zero(), -T::one()]]),
        h: vec![-p.real_part[0], -p.real_part[1]],
    });
    ProblemTemplate::new(Objective::linear(vec![T::one(), T::one()]), Arc::new(gen), BaseConstraints::free(2)).expect("valid template")
}

/// Planted 1-D data: `multiplicity` copies of `10` mixed with `size − multiplicity`
/// values uniform on `[0, 9]`, shuffled.
pub fn planted_threshold_data(size: usize, multiplicity: usize, seed: u64) -> DataSet<f64> {
    assert!(multiplicity >= 1 && multiplicity <= size, "need 1 <= multiplicity <= size");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals: Vec<f64> = vec![10.0; multiplicity];
    vals.extend((multiplicity..size).map(|_| rng.random_range(0.0..9.0)));
    vals.shuffle(&mut rng);
    DataSet::from_reals(vals.into_iter().map(|v| vec![v]).collect()).expect("size >= 1")
}

/// Planted 2-D data for [`two_threshold_lp`]: `multiplicity` copies each of
/// `(10, 0)` and `(0, 10)`, the rest uniform on `[0, 9]²`, shuffled.
pub fn planted_two_threshold_data(size: usize, multiplicity: usize, seed: u64) -> DataSet<f64> {
    assert!(2 * multiplicity <= size && multiplicity >= 1, "need 1 <= 2*multiplicity <= size");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![10.0, 0.0]; multiplicity];
    rows.extend(vec![vec![0.0, 10.0]; multiplicity]);
    rows.extend((2 * multiplicity..size).map(|_| vec![rng.random_range(0.0..9.0), rng.random_range(0.0..9.0)]));
    rows.shuffle(&mut rng);
    DataSet::from_reals(rows).expect("size >= 1")
}

/// Row of [`tilted_halfplane_lp`] for one data point:
/// `(1 + ξ₁) x₁ + (1 − ξ₁) x₂ ≤ 1 + ξ₂`.
pub fn tilted_row<T: Scalar>(xi: &[T]) -> (Vec<T>, T) {
    (vec![T::one() + xi[0], T::one() - xi[0]], T::one() + xi[1])
}

/// `max x₁ + x₂` under one tilted half-plane per point, inside a loose box.
/// For data whose tilts `ξ₁` take both signs the optimum is the crossing of
/// two lines, one from each side.
pub fn tilted_halfplane_lp<T: Scalar>() -> ProblemTemplate<T> {
    let gen = FnGenerator::new(2, 1, Dims::continuous(2), |p: &UncertaintyPoint<T>| {
        let (a, b) = tilted_row(&p.real_part);
        AffineRows { g: Matrix::from_rows(&[a]), h: vec![b] }
    });
    let base = BaseConstraints {
        a_eq: Matrix::zeros(0, 2),
        b_eq: Vec::new(),
        lower: vec![T::lit(-100.0); 2],
        upper: vec![T::lit(100.0); 2],
    };
    ProblemTemplate::new(Objective::linear(vec![-T::one(), -T::one()]), Arc::new(gen), base).expect("valid template")
}

/// `ξᵀx ≤ 1` per point, `x` in `[−10, 10]²`, objective `min −x₁ − x₂`.
pub fn ray_halfplane_lp<T: Scalar>() -> ProblemTemplate<T> {
    let gen = FnGenerator::new(2, 1, Dims::continuous(2), |p: &UncertaintyPoint<T>| AffineRows {
        g: Matrix::from_rows(std::slice::from_ref(&p.real_part)),
        h: vec![T::one()],
    });
    let base = BaseConstraints {
        a_eq: Matrix::zeros(0, 2),
        b_eq: Vec::new(),
        lower: vec![T::lit(-10.0); 2],
        upper: vec![T::lit(10.0); 2],
    };
    ProblemTemplate::new(Objective::linear(vec![-T::one(), -T::one()]), Arc::new(gen), base).expect("valid template")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_data_has_requested_multiplicity() {
        let ds = planted_threshold_data(500, 50, 4);
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.points().iter().filter(|p| p.real_part[0] == 10.0).count(), 50);
        assert!(ds.points().iter().all(|p| p.real_part[0] <= 10.0));
        let two = planted_two_threshold_data(300, 40, 4);
        assert_eq!(two.points().iter().filter(|p| p.real_part == [10.0, 0.0]).count(), 40);
        assert_eq!(two.points().iter().filter(|p| p.real_part == [0.0, 10.0]).count(), 40);
    }

    #[test]
    fn templates_have_expected_shapes() {
        let t = tilted_halfplane_lp::<f64>();
        assert_eq!((t.n(), t.m()), (2, 1));
        let rows = t.generator.rows(&UncertaintyPoint::continuous(vec![0.5, -0.25]));
        assert_eq!(rows.g.row(0), &[1.5, 0.5]);
        assert_eq!(rows.h, vec![0.75]);
        assert_eq!(threshold_lp::<f32>().n(), 1);
        assert_eq!(two_threshold_lp::<f64>().m(), 2);
        assert_eq!(ray_halfplane_lp::<f64>().base.upper, vec![10.0, 10.0]);
    }
}
