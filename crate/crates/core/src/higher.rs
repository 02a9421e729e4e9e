//! Accumulated local effects of arbitrary order.
//!
//! The estimator for a feature set `J` starts from the accumulated `|J|`-order
//! local effects and then, from order `|J| - 1` down to 1, removes every
//! lower-order effect it still contains. Lower-order effects are extracted
//! directly from lattice values: mixed differences along the subset's axes,
//! averaged over the remaining axes with conditional cell weights, then
//! accumulated. For `|J| = 2` this is exactly the main-effect removal of the
//! second-order estimator.

use crate::data::{build_quantile_partition, joint_cell_counts, strides, CellCounts, Dataset, QuantilePartition};
use crate::error::{Error, Result};
use crate::lattice::{
    cells_to_corners, corner_shape, evaluate_corners, flat_of, impute_nearest, indices, nested_difference,
    prefix_sum_all_axes,
};
use crate::predictor::{predict_checked, Predictor};

/// Largest feature-set size accepted unless a caller raises it.
pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Uncentered,
    /// Effects of every order from `level` up to `|J| - 1` have been removed.
    LowerOrdersRemoved {
        level: usize,
    },
    Centered,
}

/// Values of an effect on the corner lattice of the product partition of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectGrid {
    pub features: Vec<usize>,
    pub breakpoints: Vec<Vec<f64>>,
    /// Row-major over corner extents `K_a + 1`.
    pub values: Vec<f64>,
    pub counts: CellCounts,
    pub stage: Stage,
    /// Empty cells whose local effect was borrowed from a neighbour.
    pub imputed_cells: usize,
}

impl EffectGrid {
    pub fn order(&self) -> usize {
        self.features.len()
    }

    pub fn corner_shape(&self) -> Vec<usize> {
        self.breakpoints.iter().map(|z| z.len()).collect()
    }

    /// Value at a corner index (0-based, `0..=K_a` per axis).
    pub fn at(&self, corner: &[usize]) -> f64 {
        let st = strides(&self.corner_shape());
        self.values[flat_of(corner, &st)]
    }

    /// Corner indices paired with their values, in row-major order.
    pub fn corners(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let shape = self.corner_shape();
        let values = &self.values;
        indices_owned(shape).zip(values.iter().copied())
    }

    /// Data-weighted mean over the upper corners of the cells.
    pub fn weighted_mean(&self) -> f64 {
        weighted_mean(&self.corner_shape(), &self.values, &self.counts)
    }

    /// Multilinear interpolation of the values at an arbitrary point, clamped.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let dims = self.order();
        let st = strides(&self.corner_shape());
        let brackets: Vec<(usize, f64)> = self.breakpoints.iter().zip(x).map(|(z, &v)| bracket(z, v)).collect();
        let mut total = 0.0;
        for s in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut f = 0;
            for (a, &(lo, t)) in brackets.iter().enumerate() {
                let bit = (s >> (dims - 1 - a)) & 1;
                w *= if bit == 1 { t } else { 1.0 - t };
                f += (lo + bit) * st[a];
            }
            if w != 0.0 {
                total += w * self.values[f];
            }
        }
        total
    }
}

fn indices_owned(shape: Vec<usize>) -> impl Iterator<Item = Vec<usize>> {
    let total: usize = shape.iter().product();
    let st = strides(&shape);
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

fn bracket(z: &[f64], x: f64) -> (usize, f64) {
    let last = z.len() - 1;
    if x <= z[0] {
        return (0, 0.0);
    }
    if x >= z[last] {
        return (last - 1, 1.0);
    }
    let hi = z.partition_point(|&b| b < x);
    (hi - 1, (x - z[hi - 1]) / (z[hi] - z[hi - 1]))
}

fn weighted_mean(corner_shape: &[usize], values: &[f64], counts: &CellCounts) -> f64 {
    let st = strides(corner_shape);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, &c) in counts.flat().iter().enumerate() {
        let up: Vec<usize> = counts.cell_index(f);
        sum += c as f64 * values[flat_of(&up, &st)];
        n += c;
    }
    sum / n as f64
}

/// Inclusion-exclusion difference of `g` over the `2^|u|` corners of cell
/// `cell` (1-based per axis), with the other coordinates from `background`.
pub fn finite_difference_general<G>(
    g: G,
    partitions: &[&QuantilePartition],
    cell: &[usize],
    background: &[f64],
) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    if partitions.is_empty() || partitions.len() != cell.len() {
        return Err(Error::InvalidFeatureSet("cell index does not match the feature set".into()));
    }
    for (p, &k) in partitions.iter().zip(cell) {
        if k == 0 || k > p.k() {
            return Err(Error::InvalidFeatureSet(format!("cell index {k} outside 1..={}", p.k())));
        }
    }
    let dims = partitions.len();
    let mut row = background.to_vec();
    let corners = (0..(1usize << dims))
        .map(|s| {
            for (a, p) in partitions.iter().enumerate() {
                let bit = (s >> (dims - 1 - a)) & 1;
                row[p.feature()] = p.breakpoints()[cell[a] - 1 + bit];
            }
            g(&row)
        })
        .collect();
    Ok(nested_difference(corners))
}

fn check_order(data: &Dataset, features: &[usize], max_order: usize) -> Result<()> {
    data.check_subset(features)?;
    if features.len() > max_order {
        return Err(Error::InvalidFeatureSet(format!(
            "order {} exceeds the configured maximum {max_order}",
            features.len()
        )));
    }
    Ok(())
}

fn partitions_for(data: &Dataset, features: &[usize], k: usize) -> Result<Vec<QuantilePartition>> {
    features.iter().map(|&j| build_quantile_partition(data, j, k)).collect()
}

/// Accumulated `|J|`-order local effects before any lower-order removal.
/// Issues exactly `2^|J| n` prediction rows in one call.
pub fn ale_general_uncentered<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    features: &[usize],
    k: usize,
) -> Result<EffectGrid> {
    ale_general_uncentered_capped(model, data, features, k, DEFAULT_MAX_ORDER)
}

pub fn ale_general_uncentered_capped<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    features: &[usize],
    k: usize,
    max_order: usize,
) -> Result<EffectGrid> {
    check_order(data, features, max_order)?;
    let parts = partitions_for(data, features, k)?;
    let refs: Vec<&QuantilePartition> = parts.iter().collect();
    let counts = joint_cell_counts(data, &refs);
    let eval = evaluate_corners(model, data, &refs, &counts)?;

    let raw: Vec<Option<f64>> = eval
        .members
        .iter()
        .enumerate()
        .map(|(cell, members)| {
            if members.is_empty() {
                return None;
            }
            let mut sum = 0.0;
            for pos in 0..members.len() {
                sum += nested_difference(eval.corners(cell, pos));
            }
            Some(sum / members.len() as f64)
        })
        .collect();
    let imputed_cells = raw.iter().filter(|v| v.is_none()).count();
    let (cells, _) = impute_nearest(counts.shape(), &raw);

    let shape = corner_shape(&refs);
    let mut values = cells_to_corners(counts.shape(), &cells);
    prefix_sum_all_axes(&shape, &mut values);

    Ok(EffectGrid {
        features: features.to_vec(),
        breakpoints: parts.iter().map(|p| p.breakpoints().to_vec()).collect(),
        values,
        counts,
        stage: Stage::Uncentered,
        imputed_cells,
    })
}

/// Discrete lower-order effect of `grid` on the subset `subset` of its
/// features, returned as a grid over `subset` (in the grid's axis order).
pub fn extract_lower_order(grid: &EffectGrid, subset: &[usize]) -> Result<EffectGrid> {
    let axes = subset_axes(grid, subset)?;
    let cell_shape = grid.counts.shape();
    let corner = grid.corner_shape();
    let cst = strides(&corner);
    let sub_cells: Vec<usize> = axes.iter().map(|&a| cell_shape[a]).collect();
    let sub_st = strides(&sub_cells);
    let dims = axes.len();

    let mut sums = vec![0.0; sub_cells.iter().product()];
    let mut totals = vec![0usize; sums.len()];
    let mut at = vec![0; corner.len()];
    for (f, &c) in grid.counts.flat().iter().enumerate() {
        let cell = grid.counts.cell_index(f);
        let mut corners = Vec::with_capacity(1 << dims);
        for s in 0..(1usize << dims) {
            at.copy_from_slice(&cell);
            for (b, &a) in axes.iter().enumerate() {
                let bit = (s >> (dims - 1 - b)) & 1;
                at[a] = cell[a] - 1 + bit;
            }
            corners.push(grid.values[flat_of(&at, &cst)]);
        }
        let diff = nested_difference(corners);
        let sf: usize = axes.iter().zip(&sub_st).map(|(&a, &s)| (cell[a] - 1) * s).sum();
        sums[sf] += c as f64 * diff;
        totals[sf] += c;
    }
    let raw: Vec<Option<f64>> =
        sums.iter().zip(&totals).map(|(&s, &t)| if t > 0 { Some(s / t as f64) } else { None }).collect();
    let imputed_cells = raw.iter().filter(|v| v.is_none()).count();
    let (cells, _) = impute_nearest(&sub_cells, &raw);
    let sub_corner: Vec<usize> = sub_cells.iter().map(|k| k + 1).collect();
    let mut values = cells_to_corners(&sub_cells, &cells);
    prefix_sum_all_axes(&sub_corner, &mut values);

    Ok(EffectGrid {
        features: axes.iter().map(|&a| grid.features[a]).collect(),
        breakpoints: axes.iter().map(|&a| grid.breakpoints[a].clone()).collect(),
        values,
        counts: grid.counts.marginal(&axes),
        stage: Stage::Uncentered,
        imputed_cells,
    })
}

/// Axis positions of `subset` inside `grid`, ascending. Requires a nonempty
/// proper subset.
fn subset_axes(grid: &EffectGrid, subset: &[usize]) -> Result<Vec<usize>> {
    if subset.is_empty() || subset.len() >= grid.order() {
        return Err(Error::InvalidFeatureSet("subset must be nonempty and proper".into()));
    }
    let mut axes = Vec::with_capacity(subset.len());
    for &j in subset {
        let a = grid
            .features
            .iter()
            .position(|&g| g == j)
            .ok_or_else(|| Error::InvalidFeatureSet(format!("feature {j} is not in the grid")))?;
        if axes.contains(&a) {
            return Err(Error::InvalidFeatureSet(format!("feature {j} repeated")));
        }
        axes.push(a);
    }
    axes.sort_unstable();
    Ok(axes)
}

/// Subsets of `0..n` of size `r`, in lexicographic order.
pub(crate) fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    rec(0, n, r, &mut cur, &mut out);
    out
}

/// Fully centered `|J|`-order ALE. Issues exactly `2^|J| n` prediction rows.
pub fn ale_general<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    features: &[usize],
    k: usize,
) -> Result<EffectGrid> {
    ale_general_capped(model, data, features, k, DEFAULT_MAX_ORDER)
}

pub fn ale_general_capped<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    features: &[usize],
    k: usize,
    max_order: usize,
) -> Result<EffectGrid> {
    let grid = ale_general_uncentered_capped(model, data, features, k, max_order)?;
    Ok(remove_lower_orders(grid))
}

/// Removes all lower-order effects from an uncentered grid, then its
/// data-weighted mean.
pub fn remove_lower_orders(mut grid: EffectGrid) -> EffectGrid {
    let order = grid.order();
    let shape = grid.corner_shape();
    let st = strides(&shape);
    for r in (1..order).rev() {
        let parts: Vec<(Vec<usize>, EffectGrid)> = combinations(order, r)
            .into_iter()
            .map(|axes| {
                let subset: Vec<usize> = axes.iter().map(|&a| grid.features[a]).collect();
                let sub = extract_lower_order(&grid, &subset).expect("axes come from the grid itself");
                (axes, sub)
            })
            .collect();
        for (axes, sub) in &parts {
            let sub_st = strides(&sub.corner_shape());
            for idx in indices(&shape) {
                let sf: usize = axes.iter().zip(&sub_st).map(|(&a, &s)| idx[a] * s).sum();
                grid.values[flat_of(&idx, &st)] -= sub.values[sf];
            }
        }
        grid.stage = Stage::LowerOrdersRemoved { level: r };
    }
    let mean = grid.weighted_mean();
    grid.values.iter_mut().for_each(|v| *v -= mean);
    grid.stage = Stage::Centered;
    grid
}

/// Every lower-order ALE effect of the full feature set together with what
/// they leave unexplained at the corners of the full lattice.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Mean prediction over the data.
    pub mean: f64,
    /// Centered effects for every nonempty proper subset, by increasing order.
    pub components: Vec<EffectGrid>,
    /// `f` at the full-lattice corners minus the mean and all components.
    pub residual: EffectGrid,
}

/// Decomposes `model` over all `d` features with `k` intervals per axis.
/// Costs `n + sum over proper subsets of 2^|v| n + prod (K_a + 1)` rows.
pub fn decomposition_residual<P: Predictor + ?Sized>(model: &P, data: &Dataset, k: usize) -> Result<Decomposition> {
    decomposition_residual_capped(model, data, k, DEFAULT_MAX_ORDER)
}

pub fn decomposition_residual_capped<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    k: usize,
    max_order: usize,
) -> Result<Decomposition> {
    let d = data.d();
    let all: Vec<usize> = (0..d).collect();
    check_order(data, &all, max_order)?;

    let at_data = predict_checked(model, data.values().view())?;
    let mean = at_data.iter().sum::<f64>() / data.n() as f64;

    let mut components = Vec::new();
    for r in 1..d {
        for subset in combinations(d, r) {
            components.push(ale_general_capped(model, data, &subset, k, max_order)?);
        }
    }

    let parts = partitions_for(data, &all, k)?;
    let refs: Vec<&QuantilePartition> = parts.iter().collect();
    let shape = corner_shape(&refs);
    let lattice: Vec<Vec<usize>> = indices(&shape).collect();
    let rows = ndarray::Array2::from_shape_fn((lattice.len(), d), |(r, a)| parts[a].breakpoints()[lattice[r][a]]);
    let at_corners = predict_checked(model, rows.view())?;

    let values = lattice
        .iter()
        .zip(&at_corners)
        .map(|(idx, &f)| {
            let explained: f64 = components
                .iter()
                .map(|c| {
                    let sub: Vec<usize> = c.features.iter().map(|&j| idx[j]).collect();
                    c.at(&sub)
                })
                .sum();
            f - mean - explained
        })
        .collect();
    let residual = EffectGrid {
        features: all,
        breakpoints: parts.iter().map(|p| p.breakpoints().to_vec()).collect(),
        values,
        counts: joint_cell_counts(data, &refs),
        stage: Stage::Centered,
        imputed_cells: 0,
    };
    Ok(Decomposition { mean, components, residual })
}
