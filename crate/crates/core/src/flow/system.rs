use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

/// Topology of a slow coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Line,
    /// Period 2π.
    Circle,
}

/// A slow-fast field `x' = f(x, y, eps)`, `eps y' = g(x, y, eps)`.
///
/// Implementors supply values and exact Jacobians; [`SystemSpec`] assembles
/// the fast-time vector field `(eps f, g)` from them.
pub trait SlowFastField: Send + Sync {
    fn n_slow(&self) -> usize;
    fn n_fast(&self) -> usize;
    fn topology(&self) -> Vec<Topology> {
        vec![Topology::Line; self.n_slow()]
    }
    fn slow(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]);
    fn fast(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]);
    /// Writes `[[D1f, D2f], [D1g, D2g]]` row-major into `jac` (n x n, unscaled by eps).
    fn jacobian_blocks(&self, x: &[f64], y: &[f64], eps: f64, jac: &mut [f64]);
}

/// A slow-fast system at a fixed `eps`, viewed as a fast-time flow on the full state `(x, y)`.
#[derive(Clone)]
pub struct SystemSpec {
    field: Arc<dyn SlowFastField>,
    eps: f64,
    topology: Vec<Topology>,
    n_slow: usize,
    n_fast: usize,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("n_slow", &self.n_slow)
            .field("n_fast", &self.n_fast)
            .field("eps", &self.eps)
            .field("topology", &self.topology)
            .finish()
    }
}

impl SystemSpec {
    pub fn new(field: Arc<dyn SlowFastField>, eps: f64) -> Self {
        let topology = field.topology();
        let n_slow = field.n_slow();
        let n_fast = field.n_fast();
        assert_eq!(topology.len(), n_slow, "one topology entry per slow coordinate");
        Self { field, eps, topology, n_slow, n_fast }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn n_slow(&self) -> usize {
        self.n_slow
    }
    pub fn n_fast(&self) -> usize {
        self.n_fast
    }
    pub fn dim(&self) -> usize {
        self.n_slow + self.n_fast
    }
    pub fn topology(&self) -> &[Topology] {
        &self.topology
    }
    pub fn field(&self) -> &Arc<dyn SlowFastField> {
        &self.field
    }

    /// Fast-time vector field `(eps f, g)`.
    pub fn rhs(&self, z: &[f64], out: &mut [f64]) {
        let (x, y) = z.split_at(self.n_slow);
        let (of, og) = out.split_at_mut(self.n_slow);
        self.field.slow(x, y, self.eps, of);
        for v in of.iter_mut() {
            *v *= self.eps;
        }
        self.field.fast(x, y, self.eps, og);
    }

    /// Slow field `f(x, y, eps)` in slow-time units.
    pub fn slow_field(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.field.slow(x, y, self.eps, out);
    }

    pub fn fast_field(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.field.fast(x, y, self.eps, out);
    }

    /// Jacobian of the fast-time field, row-major n x n.
    pub fn jacobian(&self, z: &[f64], jac: &mut [f64]) {
        let n = self.dim();
        let (x, y) = z.split_at(self.n_slow);
        self.field.jacobian_blocks(x, y, self.eps, jac);
        for r in 0..self.n_slow {
            for v in &mut jac[r * n..(r + 1) * n] {
                *v *= self.eps;
            }
        }
    }

    pub fn jacobian_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut buf = vec![0.0; n * n];
        self.jacobian(z, &mut buf);
        DMatrix::from_row_slice(n, n, &buf)
    }

    /// `D2g` at `(x, y)`, n_fast x n_fast.
    pub fn fast_jacobian(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut buf = vec![0.0; n * n];
        self.field.jacobian_blocks(x, y, self.eps, &mut buf);
        DMatrix::from_fn(self.n_fast, self.n_fast, |i, j| buf[(self.n_slow + i) * n + self.n_slow + j])
    }

    /// Blocks `(D1f, D2f, D1g, D2g)` unscaled.
    pub fn jacobian_blocks(&self, x: &[f64], y: &[f64]) -> [DMatrix<f64>; 4] {
        let n = self.dim();
        let (ns, nf) = (self.n_slow, self.n_fast);
        let mut buf = vec![0.0; n * n];
        self.field.jacobian_blocks(x, y, self.eps, &mut buf);
        let block = |r0: usize, c0: usize, r: usize, c: usize| DMatrix::from_fn(r, c, |i, j| buf[(r0 + i) * n + c0 + j]);
        [block(0, 0, ns, ns), block(0, ns, ns, nf), block(ns, 0, nf, ns), block(ns, ns, nf, nf)]
    }

    /// Wrapped difference `a - b` of slow coordinates (circle axes mapped to (-π, π]).
    pub fn slow_diff(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for i in 0..self.n_slow {
            let d = a[i] - b[i];
            out[i] = match self.topology[i] {
                Topology::Line => d,
                Topology::Circle => wrap_pi(d),
            };
        }
    }

    /// Distance between full states with circle axes taken modulo 2π.
    pub fn state_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let mut d = a[i] - b[i];
            if i < self.n_slow && self.topology[i] == Topology::Circle {
                d = wrap_pi(d);
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Largest relative deviation between the supplied Jacobian and central differences.
    pub fn jacobian_fd_error(&self, z: &[f64]) -> f64 {
        let n = self.dim();
        let jac = self.jacobian_matrix(z);
        let mut worst: f64 = 0.0;
        let mut zp = z.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        let scale = jac.amax().max(1.0);
        for j in 0..n {
            let h = 1e-6 * z[j].abs().max(1.0);
            zp[j] = z[j] + h;
            self.rhs(&zp, &mut fp);
            zp[j] = z[j] - h;
            self.rhs(&zp, &mut fm);
            zp[j] = z[j];
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((fd - jac[(i, j)]).abs() / scale);
            }
        }
        worst
    }
}

/// Maps an angle difference into (-π, π].
pub fn wrap_pi(d: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = d.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    r
}

/// Maps an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}
