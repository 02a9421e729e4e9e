//! Accumulated local effects (ALE) for black-box supervised learning models,
//! with partial dependence and marginal plots as baselines.
//!
//! Every estimator talks to the model only through [`Predictor`], a batch
//! interface from predictor rows to predictions. Wrap a model in
//! [`Counted`] to record how many rows each estimator requested: ALE of a
//! feature set `J` costs `2^|J| n` rows whatever the grid resolution, partial
//! dependence costs `K^|J| n`.
//!
//! ```
//! use ale_core::{ale_first, Counted, ExprModel, Family, GeneratorSpec, generate_synthetic};
//!
//! let data = generate_synthetic(&GeneratorSpec { family: Family::example1(), n: 200, seed: 1 }).unwrap();
//! let model = Counted::new(ExprModel::parse("x1 + x2^2").unwrap());
//! let curve = ale_first(&model, &data, 0, 20).unwrap();
//! assert_eq!(model.ledger().total(), 400);
//! assert_eq!(curve.centered.len(), curve.k() + 1);
//! ```

pub mod baselines;
pub mod bridge;
pub mod data;
pub mod error;
pub mod first;
pub mod higher;
mod lattice;
pub mod models;
pub mod predictor;
pub mod render;
pub mod second;

pub use baselines::{m_effect, pd_effect, MEffect, PdEffect, PdGrid};
pub use bridge::{external_predict, serve_lines, BridgeConfig, ExternalModel, Transport};
pub use data::{
    build_quantile_partition, joint_cell_counts, load_csv, locate_bin, read_csv, CellCounts, CsvOptions, Dataset,
    QuantilePartition, Response,
};
pub use error::{Error, Result};
pub use first::{ale_first, evaluate_curve, EffectCurve};
pub use higher::{
    ale_general, ale_general_capped, ale_general_uncentered, ale_general_uncentered_capped, decomposition_residual,
    extract_lower_order, finite_difference_general, remove_lower_orders, Decomposition, EffectGrid, Stage,
    DEFAULT_MAX_ORDER,
};
pub use models::{
    fit_regression_tree, generate_synthetic, parse_expression, ExprModel, Family, GeneratorSpec, TreeModel, TreeParams,
    RNG_ALGORITHM,
};
pub use predictor::{Counted, EvalLedger, FnModel, Predictor};
pub use render::{render_output, render_svg, Labels, Lattice, PlotKind};
pub use second::{
    ale_second, cross_difference, discrete_main_effect, impute_empty_cells, local_effect_surface,
    second_order_difference, EffectSurface, LocalEffectSurface,
};

/// Default intervals per axis by effect order.
pub fn default_intervals(order: usize) -> usize {
    match order {
        1 => 100,
        2 => 40,
        _ => 10,
    }
}
