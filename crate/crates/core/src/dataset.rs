//! Mixed-integer sample multisets and exact vicinity queries.
//!
//! A point carries `r1` integer coordinates followed by `r2` real ones. Two
//! points are neighbours only when their integer parts are identical; the
//! Euclidean norm then applies to the real parts. For purely continuous data
//! (`r1 = 0`) this is an ordinary radius query.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use kdtree::KdTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset not found: {0}")]
    NotFound(String),
    #[error("dataset is empty")]
    EmptyDataSet,
    #[error("row {row}: non-finite value in column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("row {row}: cannot parse column {column} ({value:?}): {reason}")]
    Parse { row: usize, column: usize, value: String, reason: String },
    #[error("row {row}: expected {expected} columns, found {got}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("point index {index} out of range for dataset of size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension must be at least one (r1 = {r1}, r2 = {r2})")]
    ZeroDimension { r1: usize, r2: usize },
    #[error("radius must be finite and non-negative, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON dataset: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid CSV dataset: {0}")]
    Csv(#[from] csv::Error),
}

/// Integer and real coordinate counts `(r1, r2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub r1: usize,
    pub r2: usize,
}

impl Dims {
    pub const fn continuous(r2: usize) -> Self {
        Self { r1: 0, r2 }
    }

    pub const fn integer(r1: usize) -> Self {
        Self { r1, r2: 0 }
    }

    pub const fn total(&self) -> usize {
        self.r1 + self.r2
    }
}

/// One realization `ξ = (integer part, real part)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UncertaintyPoint<T: Scalar = f64> {
    pub integer_part: Vec<i64>,
    pub real_part: Vec<T>,
}

impl<T: Scalar> UncertaintyPoint<T> {
    pub fn continuous(real_part: Vec<T>) -> Self {
        Self { integer_part: Vec::new(), real_part }
    }

    pub fn integer(integer_part: Vec<i64>) -> Self {
        Self { integer_part, real_part: Vec::new() }
    }

    pub fn mixed(integer_part: Vec<i64>, real_part: Vec<T>) -> Self {
        Self { integer_part, real_part }
    }

    pub fn dims(&self) -> Dims {
        Dims { r1: self.integer_part.len(), r2: self.real_part.len() }
    }

    /// Distance used by every vicinity test: `None` when the integer parts
    /// differ, the Euclidean distance of the real parts otherwise.
    pub fn distance(&self, other: &Self) -> Option<T> {
        (self.integer_part == other.integer_part)
            .then(|| squared_distance(&self.real_part, &other.real_part).sqrt())
    }

    /// Whether `other` lies in the closed `radius`-ball around `self`.
    pub fn within(&self, other: &Self, radius: T) -> bool {
        self.integer_part == other.integer_part
            && squared_distance(&self.real_part, &other.real_part) <= radius * radius
    }

    /// Sum of all real coordinates, `eᵀξ`.
    pub fn real_sum(&self) -> T {
        self.real_part.iter().copied().sum()
    }

    /// All coordinates as one real vector (integer part first).
    pub fn flat(&self) -> Vec<T> {
        self.integer_part
            .iter()
            .map(|v| T::lit(*v as f64))
            .chain(self.real_part.iter().copied())
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> UncertaintyPoint<U> {
        UncertaintyPoint {
            integer_part: self.integer_part.clone(),
            real_part: self.real_part.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Finite multiset of uncertainty samples sharing one [`Dims`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct DataSet<T: Scalar = f64> {
    dims: Dims,
    points: Vec<UncertaintyPoint<T>>,
}

impl<T: Scalar> DataSet<T> {
    pub fn new(dims: Dims, points: Vec<UncertaintyPoint<T>>) -> Result<Self, DatasetError> {
        if dims.total() == 0 {
            return Err(DatasetError::ZeroDimension { r1: dims.r1, r2: dims.r2 });
        }
        if points.is_empty() {
            return Err(DatasetError::EmptyDataSet);
        }
        for (row, p) in points.iter().enumerate() {
            if p.dims() != dims {
                return Err(DatasetError::DimensionMismatch {
                    row: row + 1,
                    expected: dims.total(),
                    got: p.dims().total(),
                });
            }
            if let Some(column) = p.real_part.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row: row + 1, column: dims.r1 + column + 1 });
            }
        }
        Ok(Self { dims, points })
    }

    pub fn from_reals(rows: Vec<Vec<T>>) -> Result<Self, DatasetError> {
        let r2 = rows.first().map_or(0, Vec::len);
        Self::new(Dims::continuous(r2), rows.into_iter().map(UncertaintyPoint::continuous).collect())
    }

    pub fn from_integers(rows: Vec<Vec<i64>>) -> Result<Self, DatasetError> {
        let r1 = rows.first().map_or(0, Vec::len);
        Self::new(Dims::integer(r1), rows.into_iter().map(UncertaintyPoint::integer).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn points(&self) -> &[UncertaintyPoint<T>] {
        &self.points
    }

    pub fn point(&self, j: usize) -> Result<&UncertaintyPoint<T>, DatasetError> {
        self.points.get(j).ok_or(DatasetError::IndexOutOfRange { index: j, len: self.len() })
    }

    /// Sub-multiset in the given order. Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let points = indices
            .iter()
            .map(|&i| self.point(i).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.dims, points)
    }

    /// Mean of the real parts over all points.
    pub fn real_mean(&self) -> Vec<T> {
        let mut mean = vec![T::zero(); self.dims.r2];
        for p in &self.points {
            for (m, v) in mean.iter_mut().zip(&p.real_part) {
                *m += *v;
            }
        }
        let d = T::from_usize_lossy(self.len());
        mean.iter_mut().for_each(|m| *m /= d);
        mean
    }

    /// Real parts shifted by `-offset`.
    pub fn shifted(&self, offset: &[T]) -> Self {
        assert_eq!(offset.len(), self.dims.r2);
        let points = self
            .points
            .iter()
            .map(|p| UncertaintyPoint {
                integer_part: p.integer_part.clone(),
                real_part: p.real_part.iter().zip(offset).map(|(v, o)| *v - *o).collect(),
            })
            .collect();
        Self { dims: self.dims, points }
    }

    /// Largest pairwise distance among points sharing an integer part.
    pub fn diameter(&self) -> T {
        let mut best = T::zero();
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                if let Some(d) = a.distance(b) {
                    best = best.max(d);
                }
            }
        }
        best
    }

    /// Underlying set: first occurrence of every distinct point, in order.
    pub fn underlying_indices(&self) -> Vec<usize> {
        let mut seen: Vec<&UncertaintyPoint<T>> = Vec::new();
        let mut out = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if !seen.contains(&p) {
                seen.push(p);
                out.push(i);
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> DataSet<U> {
        DataSet { dims: self.dims, points: self.points.iter().map(UncertaintyPoint::cast).collect() }
    }

    /// Builds a [`VicinityIndex`] over this dataset.
    pub fn index(&self) -> VicinityIndex<'_, T> {
        VicinityIndex::build(self)
    }
}

/// `D_j^ζ`: number of points (including `j` itself) within `radius` of point `j`.
pub fn vicinity_count<T: Scalar>(ds: &DataSet<T>, j: usize, radius: T) -> Result<usize, DatasetError> {
    ds.index().vicinity_count(j, radius)
}

struct Group<T: Scalar> {
    members: Vec<usize>,
    tree: Option<KdTree<T, usize, Vec<T>>>,
}

/// Exact fixed-radius neighbour index: one k-d tree over the real parts of
/// each integer-part group.
pub struct VicinityIndex<'a, T: Scalar = f64> {
    ds: &'a DataSet<T>,
    groups: BTreeMap<Vec<i64>, Group<T>>,
}

impl<'a, T: Scalar> VicinityIndex<'a, T> {
    pub fn build(ds: &'a DataSet<T>) -> Self {
        let mut groups: BTreeMap<Vec<i64>, Group<T>> = BTreeMap::new();
        let r2 = ds.dims().r2;
        for (i, p) in ds.points().iter().enumerate() {
            let g = groups.entry(p.integer_part.clone()).or_insert_with(|| Group {
                members: Vec::new(),
                tree: (r2 > 0).then(|| KdTree::with_capacity(r2, 16)),
            });
            g.members.push(i);
            if let Some(tree) = g.tree.as_mut() {
                tree.add(p.real_part.clone(), i).expect("validated finite point of correct dimension");
            }
        }
        Self { ds, groups }
    }

    pub fn dataset(&self) -> &'a DataSet<T> {
        self.ds
    }

    /// Number of distinct integer parts.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    fn check_radius(radius: T) -> Result<(), DatasetError> {
        if radius.is_finite() && radius >= T::zero() {
            Ok(())
        } else {
            Err(DatasetError::BadRadius(radius.as_f64()))
        }
    }

    /// Indices of all points within the closed `radius`-ball of `p`, ascending.
    pub fn query(&self, p: &UncertaintyPoint<T>, radius: T) -> Result<Vec<usize>, DatasetError> {
        Self::check_radius(radius)?;
        let Some(g) = self.groups.get(&p.integer_part) else {
            return Ok(Vec::new());
        };
        let mut out = match &g.tree {
            None => g.members.clone(),
            Some(tree) => tree
                .within(&p.real_part, radius * radius, &squared_distance::<T>)
                .map_err(|_| DatasetError::NonFinite { row: 0, column: 0 })?
                .into_iter()
                .map(|(_, i)| *i)
                .collect(),
        };
        out.sort_unstable();
        Ok(out)
    }

    pub fn count(&self, p: &UncertaintyPoint<T>, radius: T) -> Result<usize, DatasetError> {
        Self::check_radius(radius)?;
        let Some(g) = self.groups.get(&p.integer_part) else {
            return Ok(0);
        };
        Ok(match &g.tree {
            None => g.members.len(),
            Some(tree) => tree
                .within_count(&p.real_part, radius * radius, &squared_distance::<T>)
                .map_err(|_| DatasetError::NonFinite { row: 0, column: 0 })?,
        })
    }

    pub fn vicinity_count(&self, j: usize, radius: T) -> Result<usize, DatasetError> {
        let p = self.ds.point(j)?;
        self.count(p, radius)
    }

    /// The `k` nearest other points of point `j` within its group (ties
    /// broken by index), nearest first.
    pub fn nearest_others(&self, j: usize, k: usize) -> Result<Vec<usize>, DatasetError> {
        let p = self.ds.point(j)?;
        let g = &self.groups[&p.integer_part];
        let mut cand: Vec<(T, usize)> = match &g.tree {
            None => g.members.iter().map(|&i| (T::zero(), i)).collect(),
            Some(tree) => {
                // over-fetch so that exact-distance ties are resolved by index
                let want = (k + 1).min(g.members.len());
                let near = tree
                    .nearest(&p.real_part, want, &squared_distance::<T>)
                    .map_err(|_| DatasetError::NonFinite { row: 0, column: 0 })?;
                let cutoff = near.last().map_or(T::zero(), |(d, _)| *d);
                tree.within(&p.real_part, cutoff, &squared_distance::<T>)
                    .map_err(|_| DatasetError::NonFinite { row: 0, column: 0 })?
                    .into_iter()
                    .map(|(d, i)| (d, *i))
                    .collect()
            }
        };
        cand.retain(|(_, i)| *i != j);
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        Ok(cand.into_iter().take(k).map(|(_, i)| i).collect())
    }
}

/// File format for [`load_dataset`] / [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Comma-separated rows; `header` skips the first line.
    Csv { header: bool },
    /// A JSON array of rows, each an array of numbers.
    Json,
}

impl DataFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path, header: bool) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DataFormat::Json,
            _ => DataFormat::Csv { header },
        }
    }
}

fn parse_row<T: Scalar>(row: usize, fields: &[String], dims: Dims) -> Result<UncertaintyPoint<T>, DatasetError> {
    if fields.len() != dims.total() {
        return Err(DatasetError::DimensionMismatch { row, expected: dims.total(), got: fields.len() });
    }
    let mut integer_part = Vec::with_capacity(dims.r1);
    for (c, f) in fields[..dims.r1].iter().enumerate() {
        let v = f.trim();
        let parsed = v.parse::<i64>().or_else(|e| {
            // accept "3.0" style integers, reject genuine fractions
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(x as i64),
                Ok(x) if !x.is_finite() => Err(DatasetError::NonFinite { row, column: c + 1 }),
                _ => Err(DatasetError::Parse {
                    row,
                    column: c + 1,
                    value: v.to_string(),
                    reason: e.to_string(),
                }),
            }
        })?;
        integer_part.push(parsed);
    }
    let mut real_part = Vec::with_capacity(dims.r2);
    for (c, f) in fields[dims.r1..].iter().enumerate() {
        let column = dims.r1 + c + 1;
        let v = f.trim();
        let x: f64 = v.parse().map_err(|e: std::num::ParseFloatError| DatasetError::Parse {
            row,
            column,
            value: v.to_string(),
            reason: e.to_string(),
        })?;
        if !x.is_finite() {
            return Err(DatasetError::NonFinite { row, column });
        }
        real_part.push(T::lit(x));
    }
    Ok(UncertaintyPoint { integer_part, real_part })
}

/// Reads a dataset from any reader. Row numbers in errors are 1-based data
/// rows (the header line is not counted).
pub fn read_dataset<T: Scalar, R: Read>(reader: R, dims: Dims, format: DataFormat) -> Result<DataSet<T>, DatasetError> {
    if dims.total() == 0 {
        return Err(DatasetError::ZeroDimension { r1: dims.r1, r2: dims.r2 });
    }
    let mut points = Vec::new();
    match format {
        DataFormat::Csv { header } => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(header)
                .flexible(true)
                .trim(csv::Trim::All)
                .comment(Some(b'#'))
                .from_reader(reader);
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                let fields: Vec<String> = rec.iter().map(str::to_string).collect();
                points.push(parse_row(i + 1, &fields, dims)?);
            }
        }
        DataFormat::Json => {
            let rows: Vec<Vec<serde_json::Value>> = serde_json::from_reader(BufReader::new(reader))?;
            for (i, row) in rows.iter().enumerate() {
                let fields: Vec<String> = row
                    .iter()
                    .map(|v| match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                points.push(parse_row(i + 1, &fields, dims)?);
            }
        }
    }
    DataSet::new(dims, points)
}

/// Loads a dataset whose rows hold `r1` integer columns then `r2` real columns.
pub fn load_dataset<T: Scalar>(path: &Path, dims: Dims, format: DataFormat) -> Result<DataSet<T>, DatasetError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::NotFound(path.display().to_string()),
        _ => DatasetError::Io(e),
    })?;
    read_dataset(file, dims, format)
}

/// Writes a dataset; reals use the shortest representation that round-trips.
pub fn write_dataset<T: Scalar, W: Write>(ds: &DataSet<T>, mut w: W, format: DataFormat) -> Result<(), DatasetError> {
    let dims = ds.dims();
    match format {
        DataFormat::Csv { header } => {
            if header {
                let names: Vec<String> = (0..dims.r1)
                    .map(|i| format!("z{}", i + 1))
                    .chain((0..dims.r2).map(|i| format!("x{}", i + 1)))
                    .collect();
                writeln!(w, "{}", names.join(","))?;
            }
            for p in ds.points() {
                let cols: Vec<String> = p
                    .integer_part
                    .iter()
                    .map(i64::to_string)
                    .chain(p.real_part.iter().map(|v| v.to_string()))
                    .collect();
                writeln!(w, "{}", cols.join(","))?;
            }
        }
        DataFormat::Json => {
            write!(w, "[")?;
            for (i, p) in ds.points().iter().enumerate() {
                if i > 0 {
                    write!(w, ",")?;
                }
                let cols: Vec<String> = p
                    .integer_part
                    .iter()
                    .map(i64::to_string)
                    .chain(p.real_part.iter().map(|v| v.to_string()))
                    .collect();
                write!(w, "[{}]", cols.join(","))?;
            }
            writeln!(w, "]")?;
        }
    }
    Ok(())
}

pub fn save_dataset<T: Scalar>(ds: &DataSet<T>, path: &Path, format: DataFormat) -> Result<(), DatasetError> {
    let file = File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(ds, &mut w, format)?;
    w.flush()?;
    Ok(())
}

/// Counts non-empty, non-comment lines; handy for sizing CSV inputs.
pub fn count_rows<R: Read>(reader: R) -> std::io::Result<usize> {
    let mut n = 0;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> DataSet {
        DataSet::from_reals(xs.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    fn brute_count<T: Scalar>(ds: &DataSet<T>, j: usize, r: T) -> usize {
        let p = &ds.points()[j];
        ds.points().iter().filter(|q| p.within(q, r)).count()
    }

    #[test]
    fn thousand_row_two_column_csv() {
        let mut text = String::new();
        for i in 0..1000 {
            text.push_str(&format!("{},{}\n", i as f64 * 0.5, -(i as f64)));
        }
        let ds: DataSet = read_dataset(text.as_bytes(), Dims::continuous(2), DataFormat::Csv { header: false }).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.dims(), Dims { r1: 0, r2: 2 });
    }

    #[test]
    fn empty_file_is_rejected() {
        let r = read_dataset::<f64, _>("".as_bytes(), Dims::continuous(2), DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::EmptyDataSet)));
        let r = read_dataset::<f64, _>("[]".as_bytes(), Dims::continuous(2), DataFormat::Json);
        assert!(matches!(r, Err(DatasetError::EmptyDataSet)));
    }

    #[test]
    fn nan_row_reports_row_number() {
        let text = "1,2\n3,NaN\n";
        let r = read_dataset::<f64, _>(text.as_bytes(), Dims::continuous(2), DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::NonFinite { row: 2, column: 2 })), "{r:?}");
        let r = read_dataset::<f64, _>("x,y\n1,inf\n".as_bytes(), Dims::continuous(2), DataFormat::Csv { header: true });
        assert!(matches!(r, Err(DatasetError::NonFinite { row: 1, .. })), "{r:?}");
    }

    #[test]
    fn parse_and_dimension_errors() {
        let r = read_dataset::<f64, _>("1,2\n3\n".as_bytes(), Dims::continuous(2), DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::DimensionMismatch { row: 2, expected: 2, got: 1 })));
        let r = read_dataset::<f64, _>("1.5,2\n".as_bytes(), Dims { r1: 1, r2: 1 }, DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::Parse { row: 1, column: 1, .. })));
        let r = read_dataset::<f64, _>("1,abc\n".as_bytes(), Dims::continuous(2), DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::Parse { row: 1, column: 2, .. })));
    }

    #[test]
    fn json_mixed_rows() {
        let ds: DataSet = read_dataset("[[1, 0.5], [2, -1.25], [1, 3]]".as_bytes(), Dims { r1: 1, r2: 1 }, DataFormat::Json).unwrap();
        assert_eq!(ds.points()[1], UncertaintyPoint::mixed(vec![2], vec![-1.25]));
    }

    #[test]
    fn missing_file() {
        let r = load_dataset::<f64>(Path::new("/nonexistent/d.csv"), Dims::continuous(2), DataFormat::Csv { header: false });
        assert!(matches!(r, Err(DatasetError::NotFound(_))));
    }

    #[test]
    fn vicinity_radius_zero_and_diameter() {
        let ds = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let idx = ds.index();
        for j in 0..5 {
            assert_eq!(idx.vicinity_count(j, 0.0).unwrap(), 1);
            assert_eq!(idx.vicinity_count(j, ds.diameter()).unwrap(), 5);
        }
    }

    #[test]
    fn vicinity_on_a_line() {
        // exhaustive pairwise check: |x - 2| <= 1.5 holds for 1, 2, 3
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let oracle = xs.iter().filter(|x| (*x - 2.0f64).abs() <= 1.5).count();
        assert_eq!(oracle, 3);
        let ds = line(&xs);
        assert_eq!(vicinity_count(&ds, 2, 1.5).unwrap(), 3);
        assert!(matches!(vicinity_count(&ds, 5, 1.0), Err(DatasetError::IndexOutOfRange { index: 5, len: 5 })));
    }

    #[test]
    fn ties_at_exact_radius_are_included() {
        let ds = line(&[0.0, 0.5, 1.0]);
        assert_eq!(vicinity_count(&ds, 0, 0.5).unwrap(), 2);
        assert_eq!(vicinity_count(&ds, 1, 0.5).unwrap(), 3);
    }

    #[test]
    fn mixed_points_group_by_integer_part() {
        let ds: DataSet = DataSet::new(
            Dims { r1: 1, r2: 1 },
            vec![
                UncertaintyPoint::mixed(vec![0], vec![0.0]),
                UncertaintyPoint::mixed(vec![1], vec![0.0]),
                UncertaintyPoint::mixed(vec![0], vec![0.2]),
            ],
        )
        .unwrap();
        assert_eq!(vicinity_count(&ds, 0, 10.0).unwrap(), 2);
        assert_eq!(vicinity_count(&ds, 1, 10.0).unwrap(), 1);
        assert_eq!(ds.index().group_count(), 2);
    }

    #[test]
    fn pure_integer_counts_copies() {
        let ds = DataSet::<f64>::from_integers(vec![vec![1, 2], vec![1, 2], vec![2, 2]]).unwrap();
        assert_eq!(vicinity_count(&ds, 0, 0.0).unwrap(), 2);
        assert_eq!(ds.underlying_indices(), vec![0, 2]);
    }

    #[test]
    fn all_identical_points() {
        let ds = DataSet::from_reals(vec![vec![1.0, 1.0]; 100]).unwrap();
        assert_eq!(vicinity_count(&ds, 37, 0.0).unwrap(), 100);
    }

    #[test]
    fn nearest_others_excludes_self() {
        let ds = line(&[0.0, 1.0, 2.0, 3.0, 10.0]);
        assert_eq!(ds.index().nearest_others(2, 2).unwrap(), vec![1, 3]);
        assert_eq!(ds.index().nearest_others(4, 1).unwrap(), vec![3]);
    }

    #[test]
    fn csv_round_trip_f32() {
        let ds: DataSet<f32> = DataSet::from_reals(vec![vec![0.1, 1e-7], vec![3.25, -2.0]]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf, DataFormat::Csv { header: true }).unwrap();
        let back: DataSet<f32> = read_dataset(buf.as_slice(), ds.dims(), DataFormat::Csv { header: true }).unwrap();
        assert_eq!(back, ds);
    }

    fn arb_dataset() -> impl Strategy<Value = DataSet> {
        (1usize..3, 0usize..3).prop_flat_map(|(r2, r1)| {
            let point = (
                proptest::collection::vec(0i64..3, r1),
                proptest::collection::vec(-5.0f64..5.0, r2),
            )
                .prop_map(|(i, r)| UncertaintyPoint::mixed(i, r));
            proptest::collection::vec(point, 1..120)
                .prop_map(move |pts| DataSet::new(Dims { r1, r2 }, pts).unwrap())
        })
    }

    proptest! {
        #[test]
        fn indexed_counts_match_brute_force(ds in arb_dataset(), r in 0.0f64..4.0) {
            let idx = ds.index();
            let mut total = 0usize;
            for j in 0..ds.len() {
                let c = idx.vicinity_count(j, r).unwrap();
                prop_assert_eq!(c, brute_count(&ds, j, r));
                prop_assert!(c >= 1);
                total += c;
            }
            // symmetric relation: ordered-pair count equals twice the unordered count plus D
            let mut pairs = 0usize;
            for a in 0..ds.len() {
                for b in a + 1..ds.len() {
                    if ds.points()[a].within(&ds.points()[b], r) {
                        prop_assert!(ds.points()[b].within(&ds.points()[a], r));
                        pairs += 1;
                    }
                }
            }
            prop_assert_eq!(total, 2 * pairs + ds.len());
        }

        #[test]
        fn counts_monotone_in_radius(ds in arb_dataset(), r in 0.0f64..3.0, dr in 0.0f64..2.0) {
            let idx = ds.index();
            for j in 0..ds.len() {
                prop_assert!(idx.vicinity_count(j, r).unwrap() <= idx.vicinity_count(j, r + dr).unwrap());
            }
        }

        #[test]
        fn save_load_round_trip(ds in arb_dataset(), json in any::<bool>()) {
            let fmt = if json { DataFormat::Json } else { DataFormat::Csv { header: true } };
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf, fmt).unwrap();
            let back: DataSet = read_dataset(buf.as_slice(), ds.dims(), fmt).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
