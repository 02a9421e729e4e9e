//! First-order (main effect) accumulated local effects.

use crate::data::{build_quantile_partition, joint_cell_counts, Dataset};
use crate::error::Result;
use crate::lattice::evaluate_corners;
use crate::predictor::Predictor;

/// Main effect of one feature on the corners `z[0..=K]` of its partition.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurve {
    pub feature: usize,
    pub breakpoints: Vec<f64>,
    /// Accumulated effect, zero at `z[0]`.
    pub uncentered: Vec<f64>,
    /// `uncentered - constant`.
    pub centered: Vec<f64>,
    /// Observations per interval; `counts[k - 1]` belongs to `(z[k-1], z[k]]`.
    pub counts: Vec<usize>,
    /// Data-weighted mean of the uncentered effect.
    pub constant: f64,
}

impl EffectCurve {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Piecewise-linear interpolation of the centered values, clamped to the
    /// end values outside `[z[0], z[K]]`.
    pub fn evaluate(&self, x: f64) -> f64 {
        interpolate(&self.breakpoints, &self.centered, x)
    }
}

pub fn evaluate_curve(curve: &EffectCurve, x: f64) -> f64 {
    curve.evaluate(x)
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&b| b < x);
    if xs[hi] == x {
        return ys[hi];
    }
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Accumulated local effect of feature `j` with `k` requested intervals.
///
/// Issues exactly `2n` prediction rows in one call.
pub fn ale_first<P: Predictor + ?Sized>(model: &P, data: &Dataset, j: usize, k: usize) -> Result<EffectCurve> {
    let part = build_quantile_partition(data, j, k)?;
    let cells = joint_cell_counts(data, &[&part]);
    let eval = evaluate_corners(model, data, &[&part], &cells)?;

    let mut uncentered = Vec::with_capacity(part.k() + 1);
    uncentered.push(0.0);
    let mut acc = 0.0;
    for (bin, members) in eval.members.iter().enumerate() {
        let mut sum = 0.0;
        for pos in 0..members.len() {
            sum += eval.at(bin, 1, pos) - eval.at(bin, 0, pos);
        }
        acc += sum / members.len() as f64;
        uncentered.push(acc);
    }

    let n = data.n() as f64;
    let counts = part.counts().to_vec();
    let constant = counts.iter().zip(&uncentered[1..]).map(|(&c, &f)| c as f64 * f).sum::<f64>() / n;
    let centered = uncentered.iter().map(|f| f - constant).collect();
    Ok(EffectCurve { feature: j, breakpoints: part.breakpoints().to_vec(), uncentered, centered, counts, constant })
}
