//! Second-order (pairwise interaction) accumulated local effects.
//!
//! Surfaces live on the `(K_j + 1) x (K_l + 1)` corner lattice. Cell `(k, m)`
//! (1-based) spans corners `k-1..=k` and `m-1..=m`; its count and local effect
//! are stored at 0-based position `(k - 1, m - 1)` of the cell arrays.

use ndarray::{Array2, ArrayView1};

use crate::data::{build_quantile_partition, joint_cell_counts, Dataset, QuantilePartition};
use crate::error::{Error, Result};
use crate::lattice::{evaluate_corners, impute_nearest};
use crate::predictor::{predict_checked, Predictor};

#[derive(Debug, Clone, PartialEq)]
pub struct EffectSurface {
    pub features: (usize, usize),
    pub breakpoints: (Vec<f64>, Vec<f64>),
    /// Double prefix sum of cell local effects; zero on the base row and column.
    pub uncentered: Array2<f64>,
    /// `uncentered` minus both discrete main effects.
    pub main_removed: Array2<f64>,
    pub centered: Array2<f64>,
    /// The discrete main effects that were removed, on each axis's corners.
    pub main_effects: (Vec<f64>, Vec<f64>),
    /// Data-weighted mean of `main_removed`.
    pub constant: f64,
    pub counts: Array2<usize>,
    /// Averaged local effect per cell after imputation.
    pub local_effects: Array2<f64>,
    /// For each empty cell, the 1-based nonempty cell its local effect came from.
    pub imputed_from: Array2<Option<(usize, usize)>>,
}

impl EffectSurface {
    pub fn empty_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    pub fn empty_mask(&self) -> Array2<bool> {
        self.counts.mapv(|c| c == 0)
    }

    /// Bilinear interpolation of the centered surface, clamped to the data range.
    pub fn evaluate(&self, xj: f64, xl: f64) -> f64 {
        let (zj, zl) = (&self.breakpoints.0, &self.breakpoints.1);
        let (a, ta) = bracket(zj, xj);
        let (b, tb) = bracket(zl, xl);
        let v = &self.centered;
        let lo = v[[a, b]] + tb * (v[[a, b + 1]] - v[[a, b]]);
        let hi = v[[a + 1, b]] + tb * (v[[a + 1, b + 1]] - v[[a + 1, b]]);
        lo + ta * (hi - lo)
    }
}

/// Lower corner index and interpolation weight for `x`, clamped.
fn bracket(z: &[f64], x: f64) -> (usize, f64) {
    let last = z.len() - 1;
    if x <= z[0] {
        return (0, 0.0);
    }
    if x >= z[last] {
        return (last - 1, 1.0);
    }
    let hi = z.partition_point(|&b| b < x);
    let lo = hi - 1;
    (lo, (x - z[lo]) / (z[hi] - z[lo]))
}

/// `[f(k, m) - f(k-1, m)] - [f(k, m-1) - f(k-1, m-1)]` from the four corner values.
pub fn cross_difference(upper_upper: f64, lower_upper: f64, upper_lower: f64, lower_lower: f64) -> f64 {
    (upper_upper - lower_upper) - (upper_lower - lower_lower)
}

/// Second-order finite difference of `model` across the corners of cell
/// `(k, m)` (1-based) with the other predictors taken from `background`.
pub fn second_order_difference<P: Predictor + ?Sized>(
    model: &P,
    partitions: (&QuantilePartition, &QuantilePartition),
    cell: (usize, usize),
    background: ArrayView1<'_, f64>,
) -> Result<f64> {
    let (pj, pl) = partitions;
    let (k, m) = cell;
    if k == 0 || k > pj.k() || m == 0 || m > pl.k() {
        return Err(Error::InvalidFeatureSet(format!("cell ({k}, {m}) outside the grid")));
    }
    let (zj, zl) = (pj.breakpoints(), pl.breakpoints());
    let mut rows = Array2::zeros((4, background.len()));
    for (r, (a, b)) in [(k, m), (k - 1, m), (k, m - 1), (k - 1, m - 1)].into_iter().enumerate() {
        let mut row = rows.row_mut(r);
        row.assign(&background);
        row[pj.feature()] = zj[a];
        row[pl.feature()] = zl[b];
    }
    let f = predict_checked(model, rows.view())?;
    Ok(cross_difference(f[0], f[1], f[2], f[3]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedGrid {
    pub values: Array2<f64>,
    /// 1-based source cell for every imputed entry.
    pub source: Array2<Option<(usize, usize)>>,
}

/// Fills empty cells with the value of the nearest nonempty cell (Euclidean
/// distance between index pairs, ties to the lexicographically smallest
/// index).
pub fn impute_empty_cells(increments: &Array2<Option<f64>>) -> Result<ImputedGrid> {
    let (rows, cols) = increments.dim();
    if increments.iter().all(Option::is_none) {
        return Err(Error::InvalidDataset("every cell is empty".into()));
    }
    let flat: Vec<Option<f64>> = increments.iter().copied().collect();
    let (values, prov) = impute_nearest(&[rows, cols], &flat);
    let values = Array2::from_shape_vec((rows, cols), values).expect("shape preserved");
    let source = Array2::from_shape_vec(
        (rows, cols),
        prov.into_iter().map(|p| p.map(|f| (f / cols + 1, f % cols + 1))).collect(),
    )
    .expect("shape preserved");
    Ok(ImputedGrid { values, source })
}

/// Discrete main effect of `surface` along `axis` (0 for rows, 1 for
/// columns): axis-wise differences averaged over the other axis with weights
/// `n(k, m) / n_axis(k)`, then accumulated. Returns one value per corner on
/// that axis, starting at 0.
pub fn discrete_main_effect(surface: &Array2<f64>, counts: &Array2<usize>, axis: usize) -> Vec<f64> {
    let (kj, kl) = counts.dim();
    let mut out = vec![0.0];
    let mut acc = 0.0;
    match axis {
        0 => {
            for k in 1..=kj {
                let mut sum = 0.0;
                let mut total = 0usize;
                for m in 1..=kl {
                    let c = counts[[k - 1, m - 1]];
                    sum += c as f64 * (surface[[k, m]] - surface[[k - 1, m]]);
                    total += c;
                }
                if total > 0 {
                    acc += sum / total as f64;
                }
                out.push(acc);
            }
        }
        _ => {
            for m in 1..=kl {
                let mut sum = 0.0;
                let mut total = 0usize;
                for k in 1..=kj {
                    let c = counts[[k - 1, m - 1]];
                    sum += c as f64 * (surface[[k, m]] - surface[[k, m - 1]]);
                    total += c;
                }
                if total > 0 {
                    acc += sum / total as f64;
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Data-weighted mean of a surface over the upper corners of its cells.
pub fn weighted_mean(surface: &Array2<f64>, counts: &Array2<usize>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((k, m), &c) in counts.indexed_iter() {
        sum += c as f64 * surface[[k + 1, m + 1]];
        n += c;
    }
    sum / n as f64
}

fn check_pair(data: &Dataset, j: usize, l: usize) -> Result<()> {
    data.check_feature(j)?;
    data.check_feature(l)?;
    if j == l {
        return Err(Error::InvalidFeatureSet("second-order effect needs two distinct features".into()));
    }
    Ok(())
}

/// Per-cell averages of the second-order difference; `None` for empty cells.
fn cell_local_effects<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    pj: &QuantilePartition,
    pl: &QuantilePartition,
) -> Result<(Array2<Option<f64>>, Array2<usize>)> {
    let cells = joint_cell_counts(data, &[pj, pl]);
    let eval = evaluate_corners(model, data, &[pj, pl], &cells)?;
    let shape = (pj.k(), pl.k());
    let mut effects = Array2::from_elem(shape, None);
    let mut counts = Array2::zeros(shape);
    for (flat, members) in eval.members.iter().enumerate() {
        let at = (flat / shape.1, flat % shape.1);
        counts[at] = members.len();
        if members.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for pos in 0..members.len() {
            // corner selections: 0 = (k-1, m-1), 1 = (k-1, m), 2 = (k, m-1), 3 = (k, m)
            sum += cross_difference(
                eval.at(flat, 3, pos),
                eval.at(flat, 1, pos),
                eval.at(flat, 2, pos),
                eval.at(flat, 0, pos),
            );
        }
        effects[at] = Some(sum / members.len() as f64);
    }
    Ok((effects, counts))
}

/// Second-order ALE of features `(j, l)` with `k` requested intervals per axis.
///
/// Issues exactly `4n` prediction rows in one call. Empty cells borrow the
/// averaged local effect of their nearest nonempty cell, which needs no
/// additional model evaluations.
pub fn ale_second<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    j: usize,
    l: usize,
    k: usize,
) -> Result<EffectSurface> {
    check_pair(data, j, l)?;
    let pj = build_quantile_partition(data, j, k)?;
    let pl = build_quantile_partition(data, l, k)?;
    let (raw, counts) = cell_local_effects(model, data, &pj, &pl)?;
    let imputed = impute_empty_cells(&raw)?;

    let (kj, kl) = counts.dim();
    let mut uncentered = Array2::<f64>::zeros((kj + 1, kl + 1));
    for a in 1..=kj {
        for b in 1..=kl {
            uncentered[[a, b]] = imputed.values[[a - 1, b - 1]];
        }
    }
    for a in 1..=kj {
        for b in 0..=kl {
            uncentered[[a, b]] += uncentered[[a - 1, b]];
        }
    }
    for a in 0..=kj {
        for b in 1..=kl {
            uncentered[[a, b]] += uncentered[[a, b - 1]];
        }
    }

    let main_j = discrete_main_effect(&uncentered, &counts, 0);
    let main_l = discrete_main_effect(&uncentered, &counts, 1);
    let mut main_removed = uncentered.clone();
    for ((a, b), v) in main_removed.indexed_iter_mut() {
        *v = *v - main_j[a] - main_l[b];
    }
    let constant = weighted_mean(&main_removed, &counts);
    let centered = main_removed.mapv(|v| v - constant);

    Ok(EffectSurface {
        features: (j, l),
        breakpoints: (pj.breakpoints().to_vec(), pl.breakpoints().to_vec()),
        uncentered,
        main_removed,
        centered,
        main_effects: (main_j, main_l),
        constant,
        counts,
        local_effects: imputed.values,
        imputed_from: imputed.source,
    })
}

/// Unaccumulated local effects divided by the cell side lengths, in units of
/// a mixed second derivative. Empty cells stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEffectSurface {
    pub features: (usize, usize),
    pub breakpoints: (Vec<f64>, Vec<f64>),
    pub values: Array2<Option<f64>>,
    pub counts: Array2<usize>,
}

pub fn local_effect_surface<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    j: usize,
    l: usize,
    k: usize,
) -> Result<LocalEffectSurface> {
    check_pair(data, j, l)?;
    let pj = build_quantile_partition(data, j, k)?;
    let pl = build_quantile_partition(data, l, k)?;
    let (raw, counts) = cell_local_effects(model, data, &pj, &pl)?;
    let (zj, zl) = (pj.breakpoints(), pl.breakpoints());
    let mut values = raw;
    for ((a, b), v) in values.indexed_iter_mut() {
        if let Some(x) = v {
            *x /= (zj[a + 1] - zj[a]) * (zl[b + 1] - zl[b]);
        }
    }
    Ok(LocalEffectSurface { features: (j, l), breakpoints: (zj.to_vec(), zl.to_vec()), values, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{Counted, FnModel};
    use ndarray::array;

    #[test]
    fn cross_difference_of_product_is_area() {
        let (a0, a1, b0, b1) = (0.3, 0.8, -1.0, 2.5);
        let f = |x: f64, y: f64| x * y;
        let d = cross_difference(f(a1, b1), f(a0, b1), f(a1, b0), f(a0, b0));
        assert!((d - (a1 - a0) * (b1 - b0)).abs() < 1e-15);
    }

    #[test]
    fn imputation_examples() {
        let g = array![[None, Some(4.0)], [None, None], [Some(7.0), None]];
        let out = impute_empty_cells(&g).unwrap();
        assert_eq!(out.values[[0, 0]], 4.0);
        assert_eq!(out.source[[0, 0]], Some((1, 2)));
        assert_eq!(out.source[[0, 1]], None);

        let g = array![[None, Some(1.0)], [Some(2.0), Some(3.0)]];
        let out = impute_empty_cells(&g).unwrap();
        assert_eq!(out.values[[0, 0]], 1.0);
        assert_eq!(out.source[[0, 0]], Some((1, 2)));

        let full = array![[Some(1.0), Some(2.0)], [Some(3.0), Some(4.0)]];
        let out = impute_empty_cells(&full).unwrap();
        assert_eq!(out.values, array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(out.source.iter().all(Option::is_none));
    }

    #[test]
    fn rejects_identical_features() {
        let data = Dataset::new(vec!["a".into(), "b".into()], array![[0.0, 1.0], [1.0, 0.0]], None).unwrap();
        let m = FnModel::new("0", |_: &[f64]| 0.0);
        assert!(ale_second(&m, &data, 0, 0, 2).is_err());
    }

    #[test]
    fn four_n_rows() {
        let values = Array2::from_shape_fn((30, 3), |(i, j)| ((i * (j + 3)) % 17) as f64 + 0.1 * j as f64);
        let data = Dataset::new(vec!["a".into(), "b".into(), "c".into()], values, None).unwrap();
        let m = Counted::new(FnModel::new("abc", |x: &[f64]| x[0] * x[1] + x[2]));
        ale_second(&m, &data, 0, 1, 4).unwrap();
        assert_eq!(m.ledger().total(), 120);
    }
}
