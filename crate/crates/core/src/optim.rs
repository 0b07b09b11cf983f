//! Adagrad with per-parameter squared-gradient accumulators.

use crate::scalar::Scalar;

pub const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adagrad<T> {
    pub eps: T,
}

impl<T: Scalar> Default for Adagrad<T> {
    fn default() -> Self {
        Adagrad {
            eps: T::lit(ADAGRAD_EPS),
        }
    }
}

impl<T: Scalar> Adagrad<T> {
    /// `acc += g^2; param -= lr * g / (sqrt(acc) + eps)`, elementwise.
    pub fn step(&self, param: &mut [T], grad: &[T], accum: &mut [T], lr: T) {
        assert_eq!(param.len(), grad.len());
        assert_eq!(param.len(), accum.len());
        for ((p, &g), a) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
            if g == T::zero() {
                continue;
            }
            *a += g * g;
            *p -= lr * g / (a.sqrt() + self.eps);
        }
    }
}

/// Accumulators for every entity-table row and every relation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub entities: Vec<Vec<T>>,
    pub relations: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn zeros(
        entity_shapes: impl IntoIterator<Item = usize>,
        relations: usize,
        dim: usize,
    ) -> Self {
        OptimizerState {
            entities: entity_shapes
                .into_iter()
                .map(|n| vec![T::zero(); n])
                .collect(),
            relations: vec![vec![T::zero(); dim]; relations],
        }
    }
}
