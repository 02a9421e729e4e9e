//! Training data, per-feature quantile partitions and joint cell counts.
//!
//! Bins are 1-based: interval `k` of a partition is `(z[k-1], z[k]]`, with the
//! sample minimum `z[0]` assigned to bin 1.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Immutable n x d table of numeric predictors with an optional response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Array2<f64>,
    response: Option<Response>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub name: String,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Array2<f64>, response: Option<Response>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidDataset("need at least one predictor".into()));
        }
        if columns.len() != d {
            return Err(Error::InvalidDataset(format!("{} column names for {d} predictors", columns.len())));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate column name {c:?}")));
            }
        }
        if let Some(r) = &response {
            if r.values.len() != n {
                return Err(Error::InvalidDataset(format!("response has {} values for {n} rows", r.values.len())));
            }
            if seen.contains(r.name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate column name {:?}", r.name)));
            }
            if let Some(i) = r.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i + 1, column: r.name.clone() });
            }
        }
        for ((i, j), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1, column: columns[j].clone() });
            }
        }
        Ok(Dataset { columns, values, response })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn response(&self) -> Option<&Response> {
        self.response.as_ref()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub(crate) fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.d() {
            Err(Error::FeatureOutOfRange { index: j, d: self.d() })
        } else {
            Ok(())
        }
    }

    /// Validates an ordered, duplicate-free feature subset.
    pub(crate) fn check_subset(&self, features: &[usize]) -> Result<()> {
        if features.is_empty() {
            return Err(Error::InvalidFeatureSet("feature set is empty".into()));
        }
        if features.len() > self.d() {
            return Err(Error::InvalidFeatureSet(format!(
                "{} features requested but the data has {}",
                features.len(),
                self.d()
            )));
        }
        let mut seen = HashSet::new();
        for &j in features {
            self.check_feature(j)?;
            if !seen.insert(j) {
                return Err(Error::InvalidFeatureSet(format!("feature {j} repeated")));
            }
        }
        Ok(())
    }

    /// Writes the dataset (predictors then response) as comma-separated text.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        if let Some(r) = &self.response {
            header.push(&r.name);
        }
        wr.write_record(&header)?;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            if let Some(r) = &self.response {
                rec.push(format!("{:.16e}", r.values[i]));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Column to hold out as the response instead of treating it as a predictor.
    pub response: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',', has_header: true, response: None }
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

pub fn read_csv<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names: Vec<String> =
        if options.has_header { rdr.headers()?.iter().map(str::to_owned).collect() } else { Vec::new() };

    let mut cells: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if names.is_empty() {
            names = (1..=rec.len()).map(|j| format!("x{j}")).collect();
        }
        if rec.len() != names.len() {
            return Err(Error::Csv(format!("row {} has {} fields, expected {}", i + 1, rec.len(), names.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::BadCell {
                row: i + 1,
                column: names[j].clone(),
                value: field.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1, column: names[j].clone() });
            }
            cells.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no data rows".into()));
    }

    let width = names.len();
    let all = Array2::from_shape_vec((n, width), cells).expect("row widths checked above");
    let (columns, values, response) = match &options.response {
        None => (names, all, None),
        Some(rname) => {
            let r = names
                .iter()
                .position(|c| c == rname)
                .ok_or_else(|| Error::InvalidDataset(format!("no response column {rname:?}")))?;
            let keep: Vec<usize> = (0..width).filter(|&j| j != r).collect();
            let values = all.select(ndarray::Axis(1), &keep);
            let columns = keep.iter().map(|&j| names[j].clone()).collect();
            let response = Response { name: rname.clone(), values: all.column(r).to_vec() };
            (columns, values, Some(response))
        }
    };
    Dataset::new(columns, values, response)
}

/// Quantile breakpoints of one feature's sample and the per-interval counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePartition {
    feature: usize,
    breakpoints: Vec<f64>,
    counts: Vec<usize>,
}

impl QuantilePartition {
    /// Builds the partition from raw breakpoints (strictly increasing, at least two).
    /// Counts are filled from `sample`.
    pub fn from_breakpoints(feature: usize, breakpoints: Vec<f64>, sample: ArrayView1<'_, f64>) -> Result<Self> {
        if breakpoints.len() < 2
            || breakpoints.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidDataset("breakpoints must be strictly increasing".into()));
        }
        let mut p = QuantilePartition { feature, counts: vec![0; breakpoints.len() - 1], breakpoints };
        for &x in sample {
            let k = p.locate(x);
            p.counts[k - 1] += 1;
        }
        Ok(p)
    }

    pub fn feature(&self) -> usize {
        self.feature
    }

    /// Number of intervals after merging duplicate quantiles.
    pub fn k(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// `z[0..=K]`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `counts[k - 1]` is the number of sample values in interval `k`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Index `k` in `1..=K` with `x` in `(z[k-1], z[k]]`. Values at or below
    /// `z[0]` go to bin 1 and values above `z[K]` to bin K.
    pub fn locate(&self, x: f64) -> usize {
        let z = &self.breakpoints;
        let last = z.len() - 1;
        if x <= z[0] {
            return 1;
        }
        if x > z[last] {
            return last;
        }
        // first breakpoint >= x; x > z[0] so this is at least 1
        z.partition_point(|&b| b < x)
    }
}

/// Partitions feature `j` at the `ceil(k n / K)`-th order statistics, merging
/// repeated breakpoints.
pub fn build_quantile_partition(data: &Dataset, j: usize, k: usize) -> Result<QuantilePartition> {
    data.check_feature(j)?;
    if k < 1 {
        return Err(Error::InvalidIntervalCount(k));
    }
    let mut sorted = data.column(j).to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateFeature(data.columns()[j].clone()));
    }
    let mut z = Vec::with_capacity(k + 1);
    z.push(sorted[0]);
    for q in 1..=k {
        let pos = (q * n).div_ceil(k);
        let v = sorted[pos - 1];
        if v > *z.last().unwrap() {
            z.push(v);
        }
    }
    QuantilePartition::from_breakpoints(j, z, data.column(j))
}

pub fn locate_bin(p: &QuantilePartition, x: f64) -> usize {
    p.locate(x)
}

/// Row-major strides for a lattice with the given extents.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Dense counts over the cells of a product of quantile partitions.
///
/// Cell indices are 1-based per axis, matching [`QuantilePartition::locate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    shape: Vec<usize>,
    counts: Vec<usize>,
    /// Flat (0-based) cell of each data row.
    row_cells: Vec<usize>,
}

impl CellCounts {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    /// Count at a 1-based cell index; zero for out-of-range indices.
    pub fn get(&self, cell: &[usize]) -> usize {
        match self.flat_index(cell) {
            Some(f) => self.counts[f],
            None => 0,
        }
    }

    pub fn flat(&self) -> &[usize] {
        &self.counts
    }

    pub fn row_cells(&self) -> &[usize] {
        &self.row_cells
    }

    pub fn flat_index(&self, cell: &[usize]) -> Option<usize> {
        if cell.len() != self.shape.len() {
            return None;
        }
        let st = strides(&self.shape);
        let mut f = 0;
        for ((&k, &ext), &s) in cell.iter().zip(&self.shape).zip(&st) {
            if k == 0 || k > ext {
                return None;
            }
            f += (k - 1) * s;
        }
        Some(f)
    }

    /// 1-based cell index of a flat position.
    pub fn cell_index(&self, mut flat: usize) -> Vec<usize> {
        let st = strides(&self.shape);
        st.iter()
            .map(|&s| {
                let k = flat / s;
                flat %= s;
                k + 1
            })
            .collect()
    }

    /// Nonzero cells as (1-based index, count), in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (Vec<usize>, usize)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(f, &c)| (self.cell_index(f), c))
    }

    /// Sums counts over every axis not listed in `keep` (axis positions, ascending).
    pub fn marginal(&self, keep: &[usize]) -> CellCounts {
        let shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let out_st = strides(&shape);
        let mut counts = vec![0; shape.iter().product()];
        let map = |flat: usize| -> usize {
            let idx = self.cell_index(flat);
            keep.iter().zip(&out_st).map(|(&a, &s)| (idx[a] - 1) * s).sum()
        };
        for (f, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                counts[map(f)] += c;
            }
        }
        let row_cells = self.row_cells.iter().map(|&f| map(f)).collect();
        CellCounts { shape, counts, row_cells }
    }
}

/// Counts data rows per cell of the product of `partitions`.
pub fn joint_cell_counts(data: &Dataset, partitions: &[&QuantilePartition]) -> CellCounts {
    let shape: Vec<usize> = partitions.iter().map(|p| p.k()).collect();
    let st = strides(&shape);
    let mut counts = vec![0; shape.iter().product::<usize>().max(1)];
    let row_cells: Vec<usize> = data
        .values()
        .rows()
        .into_iter()
        .map(|row| partitions.iter().zip(&st).map(|(p, &s)| (p.locate(row[p.feature()]) - 1) * s).sum())
        .collect();
    for &f in &row_cells {
        counts[f] += 1;
    }
    CellCounts { shape, counts, row_cells }
}
