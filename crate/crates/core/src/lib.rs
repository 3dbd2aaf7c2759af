//! Probability-contour-constrained optimization from historical data.
//!
//! The chain runs from a raw dataset `D` to a small program:
//! vicinity-count density estimates, the α-process keeping points of
//! estimated probability at least `α`, a uniform subsample of size `z`
//! sized by the success bound, strategic data selection with radius `η`,
//! and one convex program with a block of affine rows per kept point.
//! [`opf`] applies the chain to DC optimal power flow with affine recourse;
//! [`analysis`] checks the guarantees empirically.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `F64` and
//! `F32` aliases name the common instantiations.
//!
//! # Example
//!
//! ```
//! use contour_opt::instances::tilted_halfplane_lp;
//! use contour_opt::{assemble, reduce, solve, synth, EtaSpec, ReductionConfig, SolverOptions};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let data = synth::standard_normal(2000, 2, 7);
//! let cfg = ReductionConfig { alpha: 0.05, zeta: 0.5, rho: 0.9, b_bar: 2, eta: Some(EtaSpec::Uniform(0.2)), seed: 1 };
//! let red = reduce(&data, &cfg)?;
//! let (indices, _weights) = red.final_points();
//! assert!(red.report.z_eta <= red.report.z && red.report.z <= red.report.d_alpha);
//!
//! let kept = data.subset(indices)?;
//! let program = assemble(&tilted_halfplane_lp::<f64>(), kept.points())?;
//! let solution = solve(&program, &SolverOptions::default())?;
//! assert!(solution.is_optimal());
//! # Ok(())
//! # }
//! ```

// index loops mirror the math; `!(x > 0)` also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod dataset;
pub mod dda;
pub mod density;
pub mod instances;
pub mod linalg;
pub mod opf;
pub mod qpsolver;
pub mod reduction;
pub mod scalar;
pub mod synth;

pub use analysis::{AnalysisError, BoundExperiment};
pub use dataset::{DataSet, DatasetError, Dims, UncertaintyPoint};
pub use dda::{assemble, find_boundary_points, BoundaryReport, DdaError, ProblemTemplate};
pub use density::{alpha_process, estimate_density, select_bandwidth, AlphaFilterResult, DensityError};
pub use opf::{run_pipeline, GridCase, OpfError, PipelineConfig, PipelineReport};
pub use qpsolver::{solve, QpError, QpProblem, SolveResult, SolveStatus, SolverOptions};
pub use reduction::{plan_sample_size, reduce, sds, EtaSpec, ReductionConfig, ReductionError, SamplingPlan};
pub use scalar::Scalar;

pub type DataSetF64 = DataSet<f64>;
pub type DataSetF32 = DataSet<f32>;
pub type UncertaintyPointF64 = UncertaintyPoint<f64>;
pub type UncertaintyPointF32 = UncertaintyPoint<f32>;
pub type QpProblemF64 = QpProblem<f64>;
pub type QpProblemF32 = QpProblem<f32>;
pub type SolveResultF64 = SolveResult<f64>;
pub type SolveResultF32 = SolveResult<f32>;
pub type SolverOptionsF64 = SolverOptions<f64>;
pub type SolverOptionsF32 = SolverOptions<f32>;
pub type ProblemTemplateF64 = ProblemTemplate<f64>;
pub type ProblemTemplateF32 = ProblemTemplate<f32>;
pub type PipelineConfigF64 = PipelineConfig<f64>;
pub type PipelineConfigF32 = PipelineConfig<f32>;
