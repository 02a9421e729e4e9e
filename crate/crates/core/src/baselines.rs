//! Partial dependence and marginal (M) plot estimators.

use ndarray::Array2;

use crate::data::{build_quantile_partition, Dataset};
use crate::error::{Error, Result};
use crate::lattice::indices;
use crate::predictor::{predict_checked, Predictor};

/// Upper bound on rows sent to the model per call when computing partial
/// dependence. Keeps memory bounded for large grids.
const PD_CHUNK_ROWS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum PdGrid {
    /// Upper quantile breakpoints `z[1..=K]` of each feature.
    Quantile(usize),
    /// Explicit points per feature.
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdEffect {
    pub features: Vec<usize>,
    pub grid: Vec<Vec<f64>>,
    /// Row-major over the grid's Cartesian product.
    pub values: Vec<f64>,
    /// Model rows issued: grid size times n.
    pub evaluations: u64,
}

impl PdEffect {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Mean of `f(x_J = g, x_{i, \J})` over all observations at every grid point `g`.
pub fn pd_effect<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    features: &[usize],
    grid: &PdGrid,
) -> Result<PdEffect> {
    data.check_subset(features)?;
    let grid: Vec<Vec<f64>> = match grid {
        PdGrid::Quantile(k) => features
            .iter()
            .map(|&j| build_quantile_partition(data, j, *k).map(|p| p.breakpoints()[1..].to_vec()))
            .collect::<Result<_>>()?,
        PdGrid::Points(points) => {
            if points.len() != features.len() || points.iter().any(Vec::is_empty) {
                return Err(Error::InvalidFeatureSet("need a nonempty grid for every feature".into()));
            }
            points.clone()
        }
    };
    let shape: Vec<usize> = grid.iter().map(Vec::len).collect();
    let points: Vec<Vec<usize>> = indices(&shape).collect();

    let n = data.n();
    let per_chunk = (PD_CHUNK_ROWS / n).max(1);
    let mut values = Vec::with_capacity(points.len());
    for chunk in points.chunks(per_chunk) {
        let mut rows = Array2::<f64>::zeros((chunk.len() * n, data.d()));
        for (g, idx) in chunk.iter().enumerate() {
            for i in 0..n {
                let mut row = rows.row_mut(g * n + i);
                row.assign(&data.values().row(i));
                for (a, &j) in features.iter().enumerate() {
                    row[j] = grid[a][idx[a]];
                }
            }
        }
        let out = predict_checked(model, rows.view())?;
        for g in 0..chunk.len() {
            values.push(out[g * n..(g + 1) * n].iter().sum::<f64>() / n as f64);
        }
    }
    Ok(PdEffect { features: features.to_vec(), evaluations: (points.len() * n) as u64, grid, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MEffect {
    pub feature: usize,
    /// Upper breakpoints `z[1..=K]`.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Observations in each neighbourhood (quantile bin).
    pub sizes: Vec<usize>,
}

/// Marginal plot: at each upper breakpoint `z[k]`, the mean of
/// `f(z[k], x_{i, \j})` over the observations in bin `k`. Issues `n` rows.
pub fn m_effect<P: Predictor + ?Sized>(model: &P, data: &Dataset, j: usize, k: usize) -> Result<MEffect> {
    let part = build_quantile_partition(data, j, k)?;
    let z = part.breakpoints();
    let bins: Vec<usize> = data.column(j).iter().map(|&x| part.locate(x)).collect();

    let mut rows = data.values().clone();
    for (i, &b) in bins.iter().enumerate() {
        rows[[i, j]] = z[b];
    }
    let out = predict_checked(model, rows.view())?;

    let mut sums = vec![0.0; part.k()];
    for (i, &b) in bins.iter().enumerate() {
        sums[b - 1] += out[i];
    }
    let sizes = part.counts().to_vec();
    let values = sums.iter().zip(&sizes).map(|(s, &c)| s / c as f64).collect();
    Ok(MEffect { feature: j, grid: z[1..].to_vec(), values, sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{Counted, FnModel};

    fn data() -> Dataset {
        let values = Array2::from_shape_fn((200, 2), |(i, j)| {
            let t = i as f64 / 199.0;
            if j == 0 {
                t
            } else {
                (t * 13.0).cos()
            }
        });
        Dataset::new(vec!["x1".into(), "x2".into()], values, None).unwrap()
    }

    #[test]
    fn pd_row_count_is_grid_times_n() {
        let d = data();
        let m = Counted::new(FnModel::new("f", |x: &[f64]| x[0] + x[1]));
        let pd = pd_effect(&m, &d, &[0], &PdGrid::Quantile(50)).unwrap();
        assert_eq!(m.ledger().total(), 10_000);
        assert_eq!(pd.evaluations, 10_000);
        assert_eq!(pd.values.len(), 50);
    }

    #[test]
    fn pd_with_constant_background_is_direct_evaluation() {
        let values = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { i as f64 } else { 2.5 });
        let d = Dataset::new(vec!["a".into(), "b".into()], values, None).unwrap();
        let f = |x: &[f64]| x[0] * x[0] * x[1] - x[1];
        let m = FnModel::new("f", f);
        let grid = vec![vec![-1.0, 0.5, 3.0]];
        let pd = pd_effect(&m, &d, &[0], &PdGrid::Points(grid.clone())).unwrap();
        for (g, v) in grid[0].iter().zip(&pd.values) {
            assert!((v - f(&[*g, 2.5])).abs() < 1e-12);
        }
    }

    #[test]
    fn m_sizes_sum_to_n_and_constant_model_is_flat() {
        let d = data();
        let m = Counted::new(FnModel::new("c", |_: &[f64]| 4.0));
        let me = m_effect(&m, &d, 0, 7).unwrap();
        assert_eq!(me.sizes.iter().sum::<usize>(), 200);
        assert!(me.values.iter().all(|&v| v == 4.0));
        assert_eq!(m.ledger().total(), 200);
    }
}
