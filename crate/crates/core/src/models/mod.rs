//! Built-in model sources: analytic expressions, regression trees and the
//! synthetic data generators used to exercise them.

pub mod expr;
pub mod generate;
pub mod tree;

pub use expr::{parse_expression, ExprModel};
pub use generate::{generate_synthetic, Family, GeneratorSpec, RNG_ALGORITHM};
pub use tree::{fit_regression_tree, Node, TreeModel, TreeParams};
