//! The batch-prediction contract every estimator talks to, plus an
//! evaluation ledger for counting model rows.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// A fitted black-box model: maps an m x d matrix of predictor rows to m
/// predictions. Implementations must be deterministic.
pub trait Predictor: Send + Sync {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>>;

    fn label(&self) -> String;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (**self).predict(rows)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (**self).predict(rows)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

/// Shared counter of predicted rows. Clones refer to the same total.
#[derive(Debug, Clone, Default)]
pub struct EvalLedger(Arc<AtomicU64>);

impl EvalLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn record(&self, rows: usize) {
        self.0.fetch_add(rows as u64, Ordering::SeqCst);
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::SeqCst);
    }
}

/// Wraps a predictor and records every requested row in a ledger.
pub struct Counted<P> {
    inner: P,
    ledger: EvalLedger,
}

impl<P: Predictor> Counted<P> {
    pub fn new(inner: P) -> Self {
        Counted { inner, ledger: EvalLedger::new() }
    }

    pub fn with_ledger(inner: P, ledger: EvalLedger) -> Self {
        Counted { inner, ledger }
    }

    pub fn ledger(&self) -> &EvalLedger {
        &self.ledger
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Predictor> Predictor for Counted<P> {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.ledger.record(rows.nrows());
        self.inner.predict(rows)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Any `Fn(&[f64]) -> f64` as a model. Handy for analytic test functions.
pub struct FnModel<F> {
    f: F,
    label: String,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(label: impl Into<String>, f: F) -> Self {
        FnModel { f, label: label.into() }
    }
}

impl<F> Predictor for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; rows.ncols()];
        rows.rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, &v)| *b = v);
                let y = (self.f)(&buf);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Predict { row: i, message: "non-finite prediction".into() })
                }
            })
            .collect()
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Calls `model` and checks the output length.
pub(crate) fn predict_checked<P: Predictor + ?Sized>(model: &P, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let out = model.predict(rows)?;
    if out.len() != rows.nrows() {
        return Err(Error::PredictionCount { expected: rows.nrows(), got: out.len() });
    }
    Ok(out)
}
