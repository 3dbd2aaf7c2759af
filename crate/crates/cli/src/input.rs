//! Dataset loading with header and column-count detection.

use std::io::{BufRead, BufReader};
use std::path::Path;

use contour_opt::dataset::{load_dataset, DataFormat, DataSet, DatasetError, Dims};

use crate::error::CliError;

/// Shape of a CSV file as read from its first data line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvShape {
    pub header: bool,
    pub columns: usize,
}

/// Header iff any field of the first non-comment line is not a number.
pub fn sniff_csv(path: &Path) -> Result<CsvShape, CliError> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::from(DatasetError::NotFound(path.display().to_string())),
        _ => CliError::from(DatasetError::Io(e)),
    })?;
    let mut lines = BufReader::new(file).lines();
    let first = loop {
        match lines.next() {
            None => return Err(DatasetError::EmptyDataSet.into()),
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    break t.to_string();
                }
            }
        }
    };
    let fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let header = fields.iter().any(|f| f.parse::<f64>().is_err());
    Ok(CsvShape { header, columns: fields.len() })
}

/// Loads a dataset whose first `integer_cols` columns are integer-valued.
/// JSON files take their width from the first row.
pub fn load(path: &Path, integer_cols: usize) -> Result<DataSet<f64>, CliError> {
    let (format, columns) = match DataFormat::from_path(path, false) {
        DataFormat::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::from(DatasetError::NotFound(path.display().to_string())),
                _ => CliError::from(DatasetError::Io(e)),
            })?;
            let rows: Vec<Vec<serde_json::Value>> = serde_json::from_str(&text).map_err(DatasetError::Json)?;
            let width = rows.first().map_or(0, Vec::len);
            (DataFormat::Json, width)
        }
        DataFormat::Csv { .. } => {
            let shape = sniff_csv(path)?;
            (DataFormat::Csv { header: shape.header }, shape.columns)
        }
    };
    if columns == 0 {
        return Err(DatasetError::EmptyDataSet.into());
    }
    if integer_cols > columns {
        return Err(CliError::usage(format!("--integer-cols {integer_cols} exceeds the {columns} columns of {}", path.display())));
    }
    let dims = Dims { r1: integer_cols, r2: columns - integer_cols };
    Ok(load_dataset(path, dims, format)?)
}
