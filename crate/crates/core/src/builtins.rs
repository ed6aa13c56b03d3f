//! Small reference systems with closed-form slow manifolds and conjugacies.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::flow::{SlowFastField, SystemSpec};

/// `x' = 1`, `ε y' = −y + ε x`; slow manifold `y = ε x − ε²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Decoupled;

impl SlowFastField for Decoupled {
    fn n_slow(&self) -> usize {
        1
    }
    fn n_fast(&self) -> usize {
        1
    }
    fn slow(&self, _x: &[f64], _y: &[f64], _eps: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn fast(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]) {
        out[0] = -y[0] + eps * x[0];
    }
    fn jacobian_blocks(&self, _x: &[f64], _y: &[f64], eps: f64, jac: &mut [f64]) {
        jac.copy_from_slice(&[0.0, 0.0, eps, -1.0]);
    }
}

pub fn decoupled(eps: f64) -> SystemSpec {
    SystemSpec::new(Arc::new(Decoupled), eps)
}

/// Exact slow manifold of [`Decoupled`].
pub fn decoupled_graph(x: f64, eps: f64) -> f64 {
    eps * x - eps * eps
}

/// Scalar `y' = −y + y²` with no slow variable; the origin is a point manifold and
/// `y ↦ y / (1 − y)` linearizes the flow.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarQuadratic;

impl SlowFastField for ScalarQuadratic {
    fn n_slow(&self) -> usize {
        0
    }
    fn n_fast(&self) -> usize {
        1
    }
    fn slow(&self, _x: &[f64], _y: &[f64], _eps: f64, _out: &mut [f64]) {}
    fn fast(&self, _x: &[f64], y: &[f64], _eps: f64, out: &mut [f64]) {
        out[0] = -y[0] + y[0] * y[0];
    }
    fn jacobian_blocks(&self, _x: &[f64], y: &[f64], _eps: f64, jac: &mut [f64]) {
        jac[0] = -1.0 + 2.0 * y[0];
    }
}

pub fn scalar_quadratic() -> SystemSpec {
    SystemSpec::new(Arc::new(ScalarQuadratic), 0.0)
}

/// Closed-form linearizing coordinate of [`ScalarQuadratic`].
pub fn scalar_conjugacy(y: f64) -> f64 {
    y / (1.0 - y)
}

pub fn scalar_conjugacy_inverse(v: f64) -> f64 {
    v / (1.0 + v)
}

/// Constant-coefficient `z' = A z`, all coordinates fast.
#[derive(Debug, Clone)]
pub struct Linear {
    pub a: DMatrix<f64>,
}

impl SlowFastField for Linear {
    fn n_slow(&self) -> usize {
        0
    }
    fn n_fast(&self) -> usize {
        self.a.nrows()
    }
    fn slow(&self, _x: &[f64], _y: &[f64], _eps: f64, _out: &mut [f64]) {}
    fn fast(&self, _x: &[f64], y: &[f64], _eps: f64, out: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.a[(i, j)] * y[j]).sum();
        }
    }
    fn jacobian_blocks(&self, _x: &[f64], _y: &[f64], _eps: f64, jac: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            for j in 0..n {
                jac[i * n + j] = self.a[(i, j)];
            }
        }
    }
}

pub fn linear(a: DMatrix<f64>) -> SystemSpec {
    SystemSpec::new(Arc::new(Linear { a }), 0.0)
}
