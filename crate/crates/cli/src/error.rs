//! Error classes and their exit codes.

use contour_opt::analysis::AnalysisError;
use contour_opt::dataset::DatasetError;
use contour_opt::density::DensityError;
use contour_opt::opf::OpfError;
use contour_opt::reduction::ReductionError;

/// Exit code 2: bad flags, config, or input files.
pub const EXIT_USAGE: i32 = 2;
/// Exit code 1: a valid request whose computation failed.
pub const EXIT_COMPUTE: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn compute(msg: impl Into<String>) -> Self {
        CliError::Compute(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => m,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) | DatasetError::IndexOutOfRange { .. } => CliError::compute(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Dataset(d) => d.into(),
            DensityError::Mismatch { .. } => CliError::compute(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Dataset(d) => d.into(),
            ReductionError::Density(d) => d.into(),
            ReductionError::Infeasible { .. } => CliError::compute(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<OpfError> for CliError {
    fn from(e: OpfError) -> Self {
        match e {
            OpfError::NotFound(_) | OpfError::Json { .. } | OpfError::Invalid(_) | OpfError::Singular(_) | OpfError::Dims { .. } | OpfError::Config(_) => {
                CliError::usage(e.to_string())
            }
            OpfError::Dataset(d) => d.into(),
            OpfError::Density(d) => d.into(),
            OpfError::Reduction(r) => r.into(),
            _ => CliError::compute(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Domain(_) => CliError::usage(e.to_string()),
            AnalysisError::Dataset(d) => d.into(),
            AnalysisError::Density(d) => d.into(),
            AnalysisError::Reduction(r) => r.into(),
            _ => CliError::compute(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::compute(format!("I/O error: {e}"))
    }
}
