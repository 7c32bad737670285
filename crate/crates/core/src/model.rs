//! Black-box models and ordered, optionally parallel, batch evaluation.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model expects {expected} inputs, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("model returned a non-finite value at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("input outside the model domain: {0}")]
    Domain(String),
    #[error("evaluation {index} failed: {source}")]
    AtRow {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },
}

/// A scalar-valued function of a fixed number of real inputs.
pub trait Model: Sync {
    fn n_inputs(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError>;

    /// Checks arity and finiteness around [`Model::evaluate`].
    fn call(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_inputs() {
            return Err(ModelError::ArityMismatch {
                expected: self.n_inputs(),
                found: x.len(),
            });
        }
        let y = self.evaluate(x)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ModelError::NonFinite(x.to_vec()))
        }
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).evaluate(x)
    }
}

impl<M: Model + ?Sized + Send> Model for Box<M> {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).evaluate(x)
    }
}

/// Wraps a plain closure as a [`Model`].
pub struct FnModel<F> {
    n_inputs: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(n_inputs: usize, f: F) -> Self {
        Self { n_inputs, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok((self.f)(x))
    }
}

/// Where batches of evaluations run. With one thread everything happens on the
/// caller's thread; otherwise a dedicated pool is used. Results always come
/// back in input order, so outputs do not depend on the thread count.
#[derive(Clone, Default)]
pub struct EvalContext {
    pool: Option<Arc<ThreadPool>>,
}

impl std::fmt::Debug for EvalContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EvalContext {{ threads: {} }}", self.threads())
    }
}

impl EvalContext {
    pub fn serial() -> Self {
        Self { pool: None }
    }

    pub fn with_threads(threads: usize) -> Self {
        if threads <= 1 {
            return Self::serial();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Self {
            pool: Some(Arc::new(pool)),
        }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Applies `f` to every item, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }

    /// Evaluates `model` on every row. The first failing row (in input order)
    /// is reported with its index.
    pub fn evaluate<M: Model + ?Sized>(&self, model: &M, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        self.map(rows, |x| model.call(x))
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map_err(|e| ModelError::AtRow {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}
