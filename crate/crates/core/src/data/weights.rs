use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-class loss weights `w_c = N / (C * n_c)` from training-split counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights {
            weights: vec![1.0; classes],
        }
    }

    pub fn as_scalars<T: Scalar>(&self) -> Vec<T> {
        self.weights.iter().map(|&w| T::lit(w)).collect()
    }
}

pub fn compute_class_weights(train_counts: &[usize]) -> Result<ClassWeights> {
    if train_counts.is_empty() {
        return Err(Error::Config("no classes to weight".into()));
    }
    if let Some(c) = train_counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {c} has no training samples; cannot weight it"
        )));
    }
    let total: usize = train_counts.iter().sum();
    let c = train_counts.len() as f64;
    Ok(ClassWeights {
        weights: train_counts
            .iter()
            .map(|&n| total as f64 / (c * n as f64))
            .collect(),
    })
}
