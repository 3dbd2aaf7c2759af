//! Seeded synthetic datasets for experiments and examples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::dataset::{DataSet, UncertaintyPoint};
use crate::linalg::Matrix;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `d` draws of an `r`-dimensional standard normal vector.
pub fn standard_normal(d: usize, r: usize, seed: u64) -> DataSet<f64> {
    let mut g = rng(seed);
    let n = Normal::new(0.0, 1.0).expect("valid");
    DataSet::from_reals((0..d).map(|_| (0..r).map(|_| n.sample(&mut g)).collect()).collect()).expect("d >= 1")
}

/// Correlated normal draws `mean + L·u` with `L` lower triangular.
pub fn gaussian(d: usize, mean: &[f64], chol: &Matrix<f64>, seed: u64) -> DataSet<f64> {
    let r = mean.len();
    let mut g = rng(seed);
    let n = Normal::new(0.0, 1.0).expect("valid");
    let rows = (0..d)
        .map(|_| {
            let u: Vec<f64> = (0..r).map(|_| n.sample(&mut g)).collect();
            let lu = chol.mul_vec(&u);
            mean.iter().zip(lu).map(|(m, v)| m + v).collect()
        })
        .collect();
    DataSet::from_reals(rows).expect("d >= 1")
}

/// Zero-mean normal draws with per-coordinate `sigmas` and a common
/// pairwise correlation `corr`.
pub fn equicorrelated_normal(d: usize, sigmas: &[f64], corr: f64, seed: u64) -> DataSet<f64> {
    let r = sigmas.len();
    let mut cov = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            cov[(i, j)] = sigmas[i] * sigmas[j] * if i == j { 1.0 } else { corr };
        }
    }
    let l = crate::linalg::Cholesky::factor(&cov).expect("correlation in (-1/(r-1), 1)").lower();
    gaussian(d, &vec![0.0; r], &l, seed)
}

/// Isotropic Gaussian mixture; components are `(weight, mean, std)`.
pub fn gaussian_mixture(d: usize, components: &[(f64, Vec<f64>, f64)], seed: u64) -> DataSet<f64> {
    let mut g = rng(seed);
    let total: f64 = components.iter().map(|c| c.0).sum();
    let n = Normal::new(0.0, 1.0).expect("valid");
    let rows = (0..d)
        .map(|_| {
            let mut pick = g.random::<f64>() * total;
            let mut comp = &components[components.len() - 1];
            for c in components {
                if pick < c.0 {
                    comp = c;
                    break;
                }
                pick -= c.0;
            }
            comp.1.iter().map(|m| m + comp.2 * n.sample(&mut g)).collect()
        })
        .collect();
    DataSet::from_reals(rows).expect("d >= 1")
}

/// Uniform draws in the box `[lower, upper]`.
pub fn uniform_box(d: usize, lower: &[f64], upper: &[f64], seed: u64) -> DataSet<f64> {
    let mut g = rng(seed);
    let rows = (0..d)
        .map(|_| lower.iter().zip(upper).map(|(l, u)| g.random_range(*l..*u)).collect())
        .collect();
    DataSet::from_reals(rows).expect("d >= 1")
}

/// Independent Student-t coordinates, scaled.
pub fn student_t(d: usize, r: usize, dof: f64, scale: f64, seed: u64) -> DataSet<f64> {
    let mut g = rng(seed);
    let t = StudentT::new(dof).expect("dof > 0");
    DataSet::from_reals((0..d).map(|_| (0..r).map(|_| scale * t.sample(&mut g)).collect()).collect()).expect("d >= 1")
}

/// Integer vectors with coordinates uniform in `lo..=hi`.
pub fn integer_uniform(d: usize, r1: usize, lo: i64, hi: i64, seed: u64) -> DataSet<f64> {
    let mut g = rng(seed);
    let pts = (0..d)
        .map(|_| UncertaintyPoint::integer((0..r1).map(|_| g.random_range(lo..=hi)).collect()))
        .collect();
    DataSet::new(crate::dataset::Dims::integer(r1), pts).expect("d >= 1")
}
