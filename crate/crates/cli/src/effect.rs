//! Effect tables on corner lattices, and the ALE / PD / M comparison.

use ale_core::render::{Lattice, Series};
use ale_core::{
    ale_first, ale_general_uncentered_capped, ale_second, build_quantile_partition, joint_cell_counts, m_effect,
    pd_effect, remove_lower_orders, CellCounts, Dataset, ExprModel, PdGrid, Predictor, QuantilePartition,
};
use anyhow::{bail, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ale,
    Pd,
    Mplot,
}

/// Returned for argument combinations that can never work.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerRow {
    /// Breakpoint index per axis, `0..=K`.
    pub index: Vec<usize>,
    pub coordinates: Vec<f64>,
    pub uncentered: f64,
    pub centered: f64,
    /// Observations in the cell whose upper corner this is; 0 on the lower boundary.
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct EffectTable {
    pub method: Method,
    pub features: Vec<String>,
    /// Intervals actually used per axis after merging duplicate breakpoints.
    pub k_per_axis: Vec<usize>,
    pub rows: Vec<CornerRow>,
    /// Cells with no observations whose local effect was borrowed.
    pub imputed_cells: usize,
    pub lattice: Lattice,
}

fn upper_count(counts: &CellCounts, corner: &[usize]) -> usize {
    if corner.contains(&0) {
        0
    } else {
        counts.get(corner)
    }
}

fn corner_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; shape.len()];
            for a in (0..shape.len()).rev() {
                idx[a] = flat % shape[a];
                flat /= shape[a];
            }
            idx
        })
        .collect()
}

/// Data-weighted mean of a grid indexed by cells (values at upper corners).
fn cell_weighted_mean(counts: &CellCounts, value_at: impl Fn(&[usize]) -> f64) -> f64 {
    counts.nonzero().map(|(cell, c)| c as f64 * value_at(&cell)).sum::<f64>() / counts.total() as f64
}

/// Computes `method` for the features `j` (0-based) of `data`.
pub fn compute_effect(
    model: &dyn Predictor,
    data: &Dataset,
    j: &[usize],
    method: Method,
    k: usize,
    max_order: usize,
) -> Result<EffectTable> {
    if j.is_empty() {
        bail!(UsageError("at least one feature is required".into()));
    }
    if method == Method::Mplot && j.len() != 1 {
        bail!(UsageError(format!("mplot handles exactly one feature, got {}", j.len())));
    }
    let parts: Vec<QuantilePartition> =
        j.iter().map(|&f| build_quantile_partition(data, f, k)).collect::<Result<_, _>>()?;
    let refs: Vec<&QuantilePartition> = parts.iter().collect();
    let counts = joint_cell_counts(data, &refs);
    let features: Vec<String> = j.iter().map(|&f| data.columns()[f].clone()).collect();
    let k_per_axis: Vec<usize> = parts.iter().map(QuantilePartition::k).collect();
    let axes: Vec<Vec<f64>> = parts.iter().map(|p| p.breakpoints().to_vec()).collect();
    let corner_shape: Vec<usize> = k_per_axis.iter().map(|k| k + 1).collect();

    let row = |idx: Vec<usize>, unc: f64, cen: f64| CornerRow {
        coordinates: idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect(),
        count: upper_count(&counts, &idx),
        index: idx,
        uncentered: unc,
        centered: cen,
    };

    let (rows, imputed_cells, lattice) = match method {
        Method::Ale => match j.len() {
            1 => {
                let c = ale_first(model, data, j[0], k)?;
                let rows = (0..=c.k()).map(|i| row(vec![i], c.uncentered[i], c.centered[i])).collect();
                (rows, 0, Lattice::from(&c))
            }
            2 => {
                let s = ale_second(model, data, j[0], j[1], k)?;
                let rows = corner_indices(&corner_shape)
                    .into_iter()
                    .map(|i| {
                        let (a, b) = (i[0], i[1]);
                        row(i, s.uncentered[[a, b]], s.centered[[a, b]])
                    })
                    .collect();
                (rows, s.empty_cells(), Lattice::from(&s))
            }
            _ => {
                let raw = ale_general_uncentered_capped(model, data, j, k, max_order)?;
                let centered = remove_lower_orders(raw.clone());
                let rows = corner_indices(&corner_shape)
                    .into_iter()
                    .map(|i| {
                        let (u, c) = (raw.at(&i), centered.at(&i));
                        row(i, u, c)
                    })
                    .collect();
                (rows, centered.imputed_cells, Lattice::from(&centered))
            }
        },
        Method::Pd => {
            let pd = pd_effect(model, data, j, &PdGrid::Quantile(k))?;
            // grid point g (0-based) is the upper breakpoint of cell g + 1
            let shape: Vec<usize> = pd.grid.iter().map(Vec::len).collect();
            let strides: Vec<usize> = (0..shape.len()).map(|a| shape[a + 1..].iter().product()).collect();
            let at = |cell: &[usize]| -> f64 {
                pd.values[cell.iter().zip(&strides).map(|(&c, &s)| (c - 1) * s).sum::<usize>()]
            };
            let mean = cell_weighted_mean(&counts, at);
            let rows: Vec<CornerRow> = corner_indices(&shape)
                .into_iter()
                .map(|g| {
                    let corner: Vec<usize> = g.iter().map(|i| i + 1).collect();
                    let v = at(&corner);
                    row(corner, v, v - mean)
                })
                .collect();
            let lattice = Lattice {
                axes: pd.grid.clone(),
                values: rows.iter().map(|r| r.centered).collect(),
                empty: vec![false; shape.iter().map(|s| s.saturating_sub(1)).product()],
            };
            (rows, 0, lattice)
        }
        Method::Mplot => {
            let m = m_effect(model, data, j[0], k)?;
            let mean = m.values.iter().zip(&m.sizes).map(|(v, &s)| v * s as f64).sum::<f64>() / data.n() as f64;
            let rows: Vec<CornerRow> =
                (0..m.values.len()).map(|g| row(vec![g + 1], m.values[g], m.values[g] - mean)).collect();
            let lattice = Lattice {
                axes: vec![m.grid.clone()],
                values: rows.iter().map(|r| r.centered).collect(),
                empty: vec![false; m.grid.len().saturating_sub(1)],
            };
            (rows, 0, lattice)
        }
    };
    Ok(EffectTable { method, features, k_per_axis, rows, imputed_cells, lattice })
}

/// Conventional sample quantile `sorted[ceil(p n) - 1]`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let i = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[i - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// RMSE of `est` against `truth` over `keep`, after removing the best
/// constant offset (effects are only defined up to a constant).
pub fn aligned_rmse(est: &[f64], truth: &[f64], keep: &[usize]) -> f64 {
    if keep.is_empty() {
        return f64::NAN;
    }
    let d: Vec<f64> = keep.iter().map(|&k| est[k] - truth[k]).collect();
    let c = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|v| (v - c).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodRmse {
    pub ale: f64,
    pub pd: f64,
    pub mplot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ledger {
    pub ale: u64,
    pub pd: u64,
    pub mplot: u64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub feature: String,
    /// Breakpoints `z[0..=K]`; PD and M are defined from `z[1]` on.
    pub grid: Vec<f64>,
    pub counts: Vec<usize>,
    pub ale: Vec<f64>,
    pub pd: Vec<Option<f64>>,
    pub mplot: Vec<Option<f64>>,
    pub truth: Option<Vec<f64>>,
    /// Breakpoint indices inside the central 90% of the feature's sample.
    pub central: Vec<usize>,
    pub rmse: Option<MethodRmse>,
    pub ledger: Ledger,
    pub timing_ms: [f64; 3],
}

/// Runs ALE, PD and M on a shared x-axis. `truth`, when given, is an
/// expression over the data's columns; its effect for feature `j` is taken
/// with the other features at their sample medians, which is exact up to a
/// constant when the truth is additive in `j`.
pub fn compare(model: &dyn Predictor, data: &Dataset, j: usize, k: usize, truth: Option<&str>) -> Result<Comparison> {
    let counted = ale_core::Counted::new(model);
    let ledger = counted.ledger().clone();
    let timed = |f: &mut dyn FnMut() -> Result<EffectTable>| -> Result<(EffectTable, u64, f64)> {
        ledger.reset();
        let t = std::time::Instant::now();
        let table = f()?;
        Ok((table, ledger.total(), t.elapsed().as_secs_f64() * 1e3))
    };
    let (ale, n_ale, t_ale) = timed(&mut || compute_effect(&counted, data, &[j], Method::Ale, k, 1))?;
    let (pd, n_pd, t_pd) = timed(&mut || compute_effect(&counted, data, &[j], Method::Pd, k, 1))?;
    let (m, n_m, t_m) = timed(&mut || compute_effect(&counted, data, &[j], Method::Mplot, k, 1))?;

    let grid: Vec<f64> = ale.rows.iter().map(|r| r.coordinates[0]).collect();
    let counts: Vec<usize> = ale.rows.iter().map(|r| r.count).collect();
    let ale_v: Vec<f64> = ale.rows.iter().map(|r| r.centered).collect();
    let shift = |t: &EffectTable| -> Vec<Option<f64>> {
        let mut v = vec![None; grid.len()];
        for r in &t.rows {
            v[r.index[0]] = Some(r.centered);
        }
        v
    };
    let (pd_v, m_v) = (shift(&pd), shift(&m));

    let mut sorted = data.column(j).to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&sorted, 0.05), quantile(&sorted, 0.95));
    let central: Vec<usize> = (1..grid.len()).filter(|&i| grid[i] >= lo && grid[i] <= hi).collect();

    let truth_v = match truth {
        None => None,
        Some(src) => {
            let expr = ExprModel::parse_with_names(src, data.columns())?;
            if expr.expr().arity() > data.d() {
                bail!("truth expression uses x{} but the data has {} columns", expr.expr().arity(), data.d());
            }
            let base: Vec<f64> = (0..data.d())
                .map(|c| {
                    let mut s = data.column(c).to_vec();
                    s.sort_by(f64::total_cmp);
                    median(&s)
                })
                .collect();
            let mut raw = Vec::with_capacity(grid.len());
            for &z in &grid {
                let mut row = base.clone();
                row[j] = z;
                raw.push(expr.eval_row(&row).map_err(|e| anyhow::anyhow!("evaluating truth at {z}: {e:?}"))?);
            }
            let mean = (1..grid.len()).map(|i| counts[i] as f64 * raw[i]).sum::<f64>() / data.n() as f64;
            Some(raw.into_iter().map(|v| v - mean).collect::<Vec<f64>>())
        }
    };
    let rmse = truth_v.as_ref().map(|t| {
        let fill = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap_or(f64::NAN)).collect::<Vec<f64>>();
        MethodRmse {
            ale: aligned_rmse(&ale_v, t, &central),
            pd: aligned_rmse(&fill(&pd_v), t, &central),
            mplot: aligned_rmse(&fill(&m_v), t, &central),
        }
    });
    Ok(Comparison {
        feature: data.columns()[j].clone(),
        grid,
        counts,
        ale: ale_v,
        pd: pd_v,
        mplot: m_v,
        truth: truth_v,
        central,
        rmse,
        ledger: Ledger { ale: n_ale, pd: n_pd, mplot: n_m },
        timing_ms: [t_ale, t_pd, t_m],
    })
}

impl Comparison {
    pub fn series(&self) -> Vec<Series> {
        let some = |v: &[Option<f64>]| -> (Vec<f64>, Vec<f64>) {
            self.grid.iter().zip(v).filter_map(|(&x, y)| y.map(|y| (x, y))).unzip()
        };
        let (px, py) = some(&self.pd);
        let (mx, my) = some(&self.mplot);
        let mut out = vec![
            Series { label: "ALE".into(), xs: self.grid.clone(), ys: self.ale.clone() },
            Series { label: "PD".into(), xs: px, ys: py },
            Series { label: "M".into(), xs: mx, ys: my },
        ];
        if let Some(t) = &self.truth {
            out.push(Series { label: "truth".into(), xs: self.grid.clone(), ys: t.clone() });
        }
        out
    }
}
