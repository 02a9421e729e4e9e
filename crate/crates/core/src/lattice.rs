//! Shared machinery for corner lattices: batched corner predictions,
//! nearest-nonempty imputation and axis-wise prefix sums.

use ndarray::Array2;

use crate::data::{strides, CellCounts, Dataset, QuantilePartition};
use crate::error::Result;
use crate::predictor::{predict_checked, Predictor};

/// Iterates multi-indices of a row-major lattice in flat order.
pub(crate) fn indices(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = shape.iter().product();
    let st = strides(shape);
    (0..total).map(move |mut f| {
        st.iter()
            .map(|&s| {
                let i = f / s;
                f %= s;
                i
            })
            .collect()
    })
}

pub(crate) fn flat_of(idx: &[usize], st: &[usize]) -> usize {
    idx.iter().zip(st).map(|(i, s)| i * s).sum()
}

/// Corner-lattice extents (`K + 1` per axis) for a list of partitions.
pub(crate) fn corner_shape(partitions: &[&QuantilePartition]) -> Vec<usize> {
    partitions.iter().map(|p| p.k() + 1).collect()
}

/// Model outputs at the `2^|J|` corners of each observation's own cell.
///
/// Rows are laid out cell by cell in flat cell order; inside a cell, one block
/// per corner selection `s` (first axis is the most significant bit, bit set =
/// upper breakpoint), each block holding the cell's residents in dataset order.
/// All rows go to the model in a single call.
pub(crate) struct CornerEvaluations {
    /// Flat cell -> data rows resident there, in dataset order.
    pub members: Vec<Vec<usize>>,
    /// Flat cell -> offset of its first block in `predictions`.
    pub offsets: Vec<usize>,
    pub predictions: Vec<f64>,
    pub n_corners: usize,
}

impl CornerEvaluations {
    /// Prediction for the `pos`-th resident of `cell` at corner selection `s`.
    pub fn at(&self, cell: usize, s: usize, pos: usize) -> f64 {
        let m = self.members[cell].len();
        self.predictions[self.offsets[cell] + s * m + pos]
    }

    /// The `2^|J|` corner values of one resident, indexed by `s`.
    pub fn corners(&self, cell: usize, pos: usize) -> Vec<f64> {
        (0..self.n_corners).map(|s| self.at(cell, s, pos)).collect()
    }
}

pub(crate) fn evaluate_corners<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    partitions: &[&QuantilePartition],
    counts: &CellCounts,
) -> Result<CornerEvaluations> {
    let dims = partitions.len();
    let n_corners = 1usize << dims;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); counts.n_cells()];
    for (i, &c) in counts.row_cells().iter().enumerate() {
        members[c].push(i);
    }

    let d = data.d();
    let total = n_corners * data.n();
    let mut rows = Array2::<f64>::zeros((total, d));
    let mut offsets = Vec::with_capacity(members.len());
    let mut r = 0;
    for (cell, res) in members.iter().enumerate() {
        offsets.push(r);
        if res.is_empty() {
            continue;
        }
        let idx = counts.cell_index(cell);
        for s in 0..n_corners {
            for &i in res {
                let mut row = rows.row_mut(r);
                row.assign(&data.values().row(i));
                for (a, p) in partitions.iter().enumerate() {
                    let bit = (s >> (dims - 1 - a)) & 1;
                    row[p.feature()] = p.breakpoints()[idx[a] - 1 + bit];
                }
                r += 1;
            }
        }
    }
    debug_assert_eq!(r, total);
    let predictions = predict_checked(model, rows.view())?;
    Ok(CornerEvaluations { members, offsets, predictions, n_corners })
}

/// `|J|`-order difference of corner values indexed by corner selection,
/// taken one axis at a time starting from the first.
pub(crate) fn nested_difference(mut v: Vec<f64>) -> f64 {
    while v.len() > 1 {
        let half = v.len() / 2;
        for t in 0..half {
            v[t] = v[half + t] - v[t];
        }
        v.truncate(half);
    }
    v[0]
}

/// Replaces each `None` with the value of the nearest `Some` cell by
/// Euclidean distance in index space, ties going to the lexicographically
/// smallest index. Returns the completed grid and, per cell, the flat index
/// of the cell that supplied an imputed value.
///
/// Panics if every cell is empty.
pub(crate) fn impute_nearest(shape: &[usize], values: &[Option<f64>]) -> (Vec<f64>, Vec<Option<usize>>) {
    let st = strides(shape);
    let unflat = |mut f: usize| -> Vec<usize> {
        st.iter()
            .map(|&s| {
                let i = f / s;
                f %= s;
                i
            })
            .collect()
    };
    let filled: Vec<(usize, Vec<usize>)> =
        values.iter().enumerate().filter(|(_, v)| v.is_some()).map(|(f, _)| (f, unflat(f))).collect();
    assert!(!filled.is_empty(), "cannot impute a grid with no nonempty cells");

    let mut out = Vec::with_capacity(values.len());
    let mut provenance = vec![None; values.len()];
    for (f, v) in values.iter().enumerate() {
        match v {
            Some(x) => out.push(*x),
            None => {
                let here = unflat(f);
                let mut best = (usize::MAX, usize::MAX);
                for (g, idx) in &filled {
                    let d2: usize = idx
                        .iter()
                        .zip(&here)
                        .map(|(&a, &b)| {
                            let t = a.abs_diff(b);
                            t * t
                        })
                        .sum();
                    // flat order is lexicographic order of the index
                    if (d2, *g) < best {
                        best = (d2, *g);
                    }
                }
                provenance[f] = Some(best.1);
                out.push(values[best.1].unwrap());
            }
        }
    }
    (out, provenance)
}

/// Cumulative sum along every axis of a row-major lattice, in axis order.
pub(crate) fn prefix_sum_all_axes(shape: &[usize], values: &mut [f64]) {
    let st = strides(shape);
    for a in 0..shape.len() {
        for idx in indices(shape) {
            if idx[a] == 0 {
                continue;
            }
            let f = flat_of(&idx, &st);
            values[f] += values[f - st[a]];
        }
    }
}

/// Places per-cell values at the upper corner of each cell on a lattice
/// with one extra index per axis; the base faces stay zero.
pub(crate) fn cells_to_corners(cell_shape: &[usize], cells: &[f64]) -> Vec<f64> {
    let corner_shape: Vec<usize> = cell_shape.iter().map(|k| k + 1).collect();
    let cst = strides(&corner_shape);
    let mut out = vec![0.0; corner_shape.iter().product()];
    for (f, idx) in indices(cell_shape).enumerate() {
        let up: Vec<usize> = idx.iter().map(|i| i + 1).collect();
        out[flat_of(&up, &cst)] = cells[f];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_difference_matches_inclusion_exclusion() {
        // g = x*y*z at corners of [1,2]x[3,5]x[0,4]
        let lo = [1.0, 3.0, 0.0];
        let hi = [2.0, 5.0, 4.0];
        let vals: Vec<f64> =
            (0..8).map(|s| (0..3).map(|a| if (s >> (2 - a)) & 1 == 1 { hi[a] } else { lo[a] }).product()).collect();
        let ie: f64 = (0..8usize)
            .map(|s| {
                let ones = s.count_ones() as i32;
                let sign = if (3 - ones) % 2 == 0 { 1.0 } else { -1.0 };
                sign * vals[s]
            })
            .sum();
        assert_eq!(nested_difference(vals), ie);
        assert_eq!(ie, 1.0 * 2.0 * 4.0);
    }

    #[test]
    fn imputation_prefers_closer_then_lexicographic() {
        // 3 x 2 cells; only (1,2) and (3,1) filled (1-based)
        let shape = [3, 2];
        let mut v = vec![None; 6];
        v[1] = Some(10.0); // (1,2)
        v[4] = Some(20.0); // (3,1)
        let (out, prov) = impute_nearest(&shape, &v);
        assert_eq!(out[0], 10.0);
        assert_eq!(prov[0], Some(1));

        // (1,1) empty with (1,2) and (2,1) equidistant
        let mut v = vec![None; 4];
        v[1] = Some(1.0); // (1,2)
        v[2] = Some(2.0); // (2,1)
        v[3] = Some(3.0);
        let (out, prov) = impute_nearest(&[2, 2], &v);
        assert_eq!(out[0], 1.0);
        assert_eq!(prov[0], Some(1));
    }

    #[test]
    fn prefix_sum_recovers_product_of_counts() {
        let cells = vec![1.0; 6];
        let mut corners = cells_to_corners(&[2, 3], &cells);
        prefix_sum_all_axes(&[3, 4], &mut corners);
        // corner (k,m) counts the k*m unit cells below it
        for k in 0..3 {
            for m in 0..4 {
                assert_eq!(corners[k * 4 + m], (k * m) as f64);
            }
        }
    }
}
