//! Least-squares regression trees grown best-first under a leaf budget.

use ndarray::ArrayView2;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

impl TreeModel {
    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("tree needs at least one node".into()));
        }
        for n in &nodes {
            if let Node::Split { left, right, .. } = n {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(Error::Config("split refers to a missing node".into()));
                }
            }
        }
        Ok(TreeModel { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Index of the leaf node that `row` falls into.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }
}

impl Predictor for TreeModel {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if let Some(f) = self.max_feature() {
            if f >= rows.ncols() {
                return Err(Error::Predict {
                    row: 0,
                    message: format!("tree splits on column {} of {}", f + 1, rows.ncols()),
                });
            }
        }
        let mut buf = vec![0.0; rows.ncols()];
        Ok(rows
            .rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, &v)| *b = v);
                self.predict_row(&buf)
            })
            .collect())
    }

    fn label(&self) -> String {
        format!("tree:{}-leaves", self.leaf_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_leaves: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_leaves: 100, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn mean(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
}

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    let m = mean(y, rows);
    rows.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

/// Best split of `rows`: largest squared-error reduction, ties to the lowest
/// feature and then the lowest threshold.
fn best_split(x: ArrayView2<'_, f64>, y: &[f64], rows: &[usize], min_leaf: usize) -> Option<Candidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let first = y[rows[0]];
    if rows.iter().all(|&i| y[i] == first) {
        return None;
    }
    // gain = parent SSE - children SSE = L^2 n / (p (n - p)), with L the sum of
    // deviations from the parent mean on the left; no cancellation against a
    // large base term
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let tol = 1e-12 * sse(y, rows);
    let mut best: Option<Candidate> = None;
    let mut order = rows.to_vec();
    for f in 0..x.ncols() {
        order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
        let mut left = 0.0;
        for p in 1..n {
            left += y[order[p - 1]] - mean;
            let (lo, hi) = (x[[order[p - 1], f]], x[[order[p], f]]);
            if p < min_leaf || n - p < min_leaf || lo == hi {
                continue;
            }
            let gain = left * left * n as f64 / (p as f64 * (n - p) as f64);
            if gain > tol && best.is_none_or(|b| gain > b.gain) {
                best = Some(Candidate { feature: f, threshold: lo + (hi - lo) / 2.0, gain });
            }
        }
    }
    best
}

/// Grows a regression tree on the dataset's response, always splitting the
/// leaf with the largest available error reduction, until `max_leaves` is
/// reached or no split helps. Thresholds sit midway between consecutive
/// distinct values.
pub fn fit_regression_tree(data: &Dataset, params: TreeParams) -> Result<TreeModel> {
    let y =
        &data.response().ok_or_else(|| Error::InvalidDataset("tree fitting needs a response column".into()))?.values;
    if params.max_leaves < 1 || params.min_leaf < 1 {
        return Err(Error::Config("max_leaves and min_leaf must be at least 1".into()));
    }
    if data.n() < 2 * params.min_leaf {
        return Err(Error::Config(format!("{} rows cannot satisfy min_leaf = {}", data.n(), params.min_leaf)));
    }
    let x = data.values().view();

    let all: Vec<usize> = (0..data.n()).collect();
    let mut nodes = vec![Node::Leaf { value: mean(y, &all), size: all.len() }];
    // (node id, rows, best split)
    let mut open: Vec<(usize, Vec<usize>, Option<Candidate>)> = Vec::new();
    let first = best_split(x, y, &all, params.min_leaf);
    open.push((0, all, first));
    let mut leaves = 1;

    while leaves < params.max_leaves {
        let pick = open.iter().enumerate().filter_map(|(i, (id, _, c))| c.map(|c| (i, *id, c.gain))).fold(
            None::<(usize, usize, f64)>,
            |acc, cur| match acc {
                Some(a) if a.2 > cur.2 || (a.2 == cur.2 && a.1 < cur.1) => Some(a),
                _ => Some(cur),
            },
        );
        let Some((slot, _, _)) = pick else { break };
        let (id, rows, cand) = open.swap_remove(slot);
        let cand = cand.expect("picked candidates have a split");
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x[[i, cand.feature]] < cand.threshold);

        let left = nodes.len();
        nodes.push(Node::Leaf { value: mean(y, &l_rows), size: l_rows.len() });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: mean(y, &r_rows), size: r_rows.len() });
        nodes[id] = Node::Split { feature: cand.feature, threshold: cand.threshold, left, right };
        leaves += 1;

        let lc = best_split(x, y, &l_rows, params.min_leaf);
        let rc = best_split(x, y, &r_rows, params.min_leaf);
        open.push((left, l_rows, lc));
        open.push((right, r_rows, rc));
    }
    TreeModel::from_nodes(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Response;
    use ndarray::{array, Array2};

    fn dataset(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        let n = x.len();
        Dataset::new(
            vec!["x1".into()],
            Array2::from_shape_vec((n, 1), x).unwrap(),
            Some(Response { name: "y".into(), values: y }),
        )
        .unwrap()
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let d = dataset(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 6.0]);
        let t = fit_regression_tree(&d, TreeParams { max_leaves: 1, min_leaf: 1 }).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(array![[10.0], [-3.0]].view()).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn step_function_split_at_gap() {
        let x = vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let t = fit_regression_tree(&dataset(x, y), TreeParams { max_leaves: 2, min_leaf: 1 }).unwrap();
        match &t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            n => panic!("root is {n:?}"),
        }
        assert_eq!(t.predict(array![[0.2], [0.9]].view()).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let d = dataset(vec![0.0, 1.0, 2.0], vec![5.0; 3]);
        let t = fit_regression_tree(&d, TreeParams { max_leaves: 10, min_leaf: 1 }).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn min_leaf_respected_and_validated() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = dataset(x.clone(), x);
        let t = fit_regression_tree(&d, TreeParams { max_leaves: 10, min_leaf: 3 }).unwrap();
        for n in t.nodes() {
            if let Node::Leaf { size, .. } = n {
                assert!(*size >= 3);
            }
        }
        assert!(fit_regression_tree(&d, TreeParams { max_leaves: 2, min_leaf: 6 }).is_err());
    }

    #[test]
    fn explicit_stump() {
        let t = TreeModel::from_nodes(vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { value: 0.0, size: 1 },
            Node::Leaf { value: 1.0, size: 1 },
        ])
        .unwrap();
        assert_eq!(t.predict(array![[0.2], [0.9]].view()).unwrap(), vec![0.0, 1.0]);
    }
}
