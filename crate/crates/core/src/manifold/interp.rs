//! Tensor-product interpolation: trigonometric on periodic axes, not-a-knot cubic
//! splines on line axes.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::manifold::grid::{Axis, Grid};

/// Cardinal weights for one axis.
#[derive(Debug, Clone)]
enum AxisBasis {
    Fourier { n: usize, lo: f64, scale: f64, cos_half: Vec<f64>, sin_half: Vec<f64> },
    Spline { n: usize, lo: f64, h: f64, moments: DMatrix<f64> },
    Lagrange { nodes: Vec<f64> },
}

impl AxisBasis {
    fn new(axis: &Axis) -> Self {
        let n = axis.n;
        if axis.periodic {
            let half: Vec<f64> = (0..n).map(|j| PI * j as f64 / n as f64).collect();
            return AxisBasis::Fourier {
                n,
                lo: axis.lo,
                scale: 2.0 * PI / (axis.hi - axis.lo),
                cos_half: half.iter().map(|b| b.cos()).collect(),
                sin_half: half.iter().map(|b| b.sin()).collect(),
            };
        }
        if n <= 4 {
            return AxisBasis::Lagrange { nodes: axis.nodes() };
        }
        let h = axis.spacing();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = -2.0;
        a[(0, 2)] = 1.0;
        a[(n - 1, n - 3)] = 1.0;
        a[(n - 1, n - 2)] = -2.0;
        a[(n - 1, n - 1)] = 1.0;
        let c = 6.0 / (h * h);
        for i in 1..n - 1 {
            a[(i, i - 1)] = 1.0;
            a[(i, i)] = 4.0;
            a[(i, i + 1)] = 1.0;
            b[(i, i - 1)] = c;
            b[(i, i)] = -2.0 * c;
            b[(i, i + 1)] = c;
        }
        let moments = a.lu().solve(&b).expect("not-a-knot system is nonsingular");
        AxisBasis::Spline { n, lo: axis.lo, h, moments }
    }

    fn len(&self) -> usize {
        match self {
            AxisBasis::Fourier { n, .. } | AxisBasis::Spline { n, .. } => *n,
            AxisBasis::Lagrange { nodes } => nodes.len(),
        }
    }

    /// Weights and derivative weights at `x`.
    fn weights(&self, x: f64, w: &mut [f64], dw: &mut [f64]) {
        match self {
            AxisBasis::Fourier { n, lo, scale, cos_half, sin_half } => {
                let n = *n;
                let nf = n as f64;
                let u = (x - lo) * scale;
                let a = 0.5 * u;
                let (sa, ca) = a.sin_cos();
                let (sn, cn) = (0.5 * nf * u).sin_cos();
                let even = n % 2 == 0;
                for j in 0..n {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let s = sa * cos_half[j] - ca * sin_half[j];
                    let c = ca * cos_half[j] + sa * sin_half[j];
                    if s.abs() < 0.05 {
                        let d = u - 2.0 * PI * j as f64 / nf;
                        let (v, dv) = fourier_series(n, d);
                        w[j] = v;
                        dw[j] = dv * scale;
                        continue;
                    }
                    let snj = sign * sn;
                    let cnj = sign * cn;
                    if even {
                        w[j] = snj * c / (nf * s);
                        dw[j] = (0.5 * cnj * c / s - snj / (2.0 * nf * s * s)) * scale;
                    } else {
                        w[j] = snj / (nf * s);
                        dw[j] = (0.5 * cnj / s - snj * c / (2.0 * nf * s * s)) * scale;
                    }
                }
            }
            AxisBasis::Spline { n, lo, h, moments } => {
                let n = *n;
                let h = *h;
                let t = (x - lo) / h;
                let i = (t.floor() as i64).clamp(0, n as i64 - 2) as usize;
                let bb = t - i as f64;
                let aa = 1.0 - bb;
                let ca = (aa * aa * aa - aa) * h * h / 6.0;
                let cb = (bb * bb * bb - bb) * h * h / 6.0;
                let da = -(3.0 * aa * aa - 1.0) * h / 6.0;
                let db = (3.0 * bb * bb - 1.0) * h / 6.0;
                for j in 0..n {
                    w[j] = ca * moments[(i, j)] + cb * moments[(i + 1, j)];
                    dw[j] = da * moments[(i, j)] + db * moments[(i + 1, j)];
                }
                w[i] += aa;
                w[i + 1] += bb;
                dw[i] -= 1.0 / h;
                dw[i + 1] += 1.0 / h;
            }
            AxisBasis::Lagrange { nodes } => {
                let n = nodes.len();
                for j in 0..n {
                    let mut p = 1.0;
                    let mut dp = 0.0;
                    for m in 0..n {
                        if m == j {
                            continue;
                        }
                        let den = nodes[j] - nodes[m];
                        dp = dp * (x - nodes[m]) / den + p / den;
                        p *= (x - nodes[m]) / den;
                    }
                    w[j] = p;
                    dw[j] = dp;
                }
            }
        }
    }
}

/// Periodic cardinal function and its derivative by direct summation (stable near nodes).
fn fourier_series(n: usize, d: f64) -> (f64, f64) {
    let nf = n as f64;
    let mut v = 1.0;
    let mut dv = 0.0;
    let kmax = if n % 2 == 0 { n / 2 - 1 } else { (n - 1) / 2 };
    for k in 1..=kmax {
        let kf = k as f64;
        let (s, c) = (kf * d).sin_cos();
        v += 2.0 * c;
        dv -= 2.0 * kf * s;
    }
    if n % 2 == 0 {
        let h = 0.5 * nf;
        let (s, c) = (h * d).sin_cos();
        v += c;
        dv -= h * s;
    }
    (v / nf, dv / nf)
}

/// Interpolant of `ncomp`-vector nodal data on a tensor grid.
#[derive(Debug, Clone)]
pub struct TensorInterp {
    grid: Grid,
    bases: Vec<AxisBasis>,
    ncomp: usize,
    /// Node-major: `data[node * ncomp + c]`.
    data: Vec<f64>,
}

impl TensorInterp {
    pub fn new(grid: Grid, ncomp: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len() * ncomp, "nodal data has the wrong length");
        let bases = grid.axes().iter().map(AxisBasis::new).collect();
        Self { grid, bases, ncomp, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn node_value(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    /// Replaces the nodal data, keeping the precomputed bases.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { data, ..self.clone() }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp * (1 + self.grid.dims())];
        self.eval_into(x, &mut out, false);
        out.truncate(self.ncomp);
        out
    }

    /// Value followed by the gradient: `out[0..ncomp]` is the value and
    /// `out[(1 + a) * ncomp + c]` is `∂_a` of component `c`.
    pub fn eval_with_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp * (1 + self.grid.dims())];
        self.eval_into(x, &mut out, true);
        out
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64], gradient: bool) {
        let d = self.grid.dims();
        let nc = self.ncomp;
        if d == 0 {
            out[..nc].copy_from_slice(&self.data);
            for v in &mut out[nc..] {
                *v = 0.0;
            }
            return;
        }
        let mut ws: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(d);
        for (k, b) in self.bases.iter().enumerate() {
            let n = b.len();
            let mut w = vec![0.0; n];
            let mut dw = vec![0.0; n];
            b.weights(x[k], &mut w, &mut dw);
            ws.push((w, dw));
        }
        // tensors[t] holds a partial contraction; tag 0 = undifferentiated, tag a+1 = ∂_a applied
        let mut tensors: Vec<(usize, Vec<f64>)> = vec![(0, self.data.clone())];
        for k in (0..d).rev() {
            let n = self.bases[k].len();
            let (w, dw) = &ws[k];
            let mut next = Vec::with_capacity(tensors.len() + 1);
            for (tag, t) in &tensors {
                let outer = t.len() / (n * nc);
                let contract = |weights: &[f64]| {
                    let mut r = vec![0.0; outer * nc];
                    for o in 0..outer {
                        let base = o * n * nc;
                        let dst = &mut r[o * nc..(o + 1) * nc];
                        for j in 0..n {
                            let wj = weights[j];
                            if wj == 0.0 {
                                continue;
                            }
                            let src = &t[base + j * nc..base + (j + 1) * nc];
                            for c in 0..nc {
                                dst[c] += wj * src[c];
                            }
                        }
                    }
                    r
                };
                next.push((*tag, contract(w)));
                if gradient && *tag == 0 {
                    next.push((k + 1, contract(dw)));
                }
            }
            tensors = next;
        }
        for (tag, t) in tensors {
            out[tag * nc..(tag + 1) * nc].copy_from_slice(&t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(axis: Axis) -> Grid {
        Grid::new(vec![axis]).unwrap()
    }

    #[test]
    fn fourier_reproduces_trig_polynomials() {
        for n in [8usize, 9] {
            let g = grid1(Axis::circle(n));
            let f = |x: f64| 0.3 + x.sin() - 0.2 * (3.0 * x).cos();
            let df = |x: f64| x.cos() + 0.6 * (3.0 * x).sin();
            let data = g.nodes().iter().map(|x| f(x[0])).collect();
            let it = TensorInterp::new(g, 1, data);
            for k in 0..200 {
                let x = -1.0 + 0.047 * k as f64;
                let v = it.eval_with_gradient(&[x]);
                assert!((v[0] - f(x)).abs() < 1e-13, "n={n} x={x}");
                assert!((v[1] - df(x)).abs() < 1e-12, "n={n} x={x} {} {}", v[1], df(x));
            }
            // near a node the series branch takes over
            let x = 2.0 * PI / n as f64 + 1e-9;
            let v = it.eval_with_gradient(&[x]);
            assert!((v[1] - df(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn spline_reproduces_cubics_and_extrapolates() {
        let g = grid1(Axis::line(-1.0, 2.0, 9));
        let f = |x: f64| 1.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        let df = |x: f64| -1.0 + x - 0.75 * x * x;
        let data = g.nodes().iter().map(|x| f(x[0])).collect();
        let it = TensorInterp::new(g, 1, data);
        for k in 0..50 {
            let x = -1.3 + 0.07 * k as f64;
            let v = it.eval_with_gradient(&[x]);
            assert!((v[0] - f(x)).abs() < 1e-12);
            assert!((v[1] - df(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn nodal_values_are_reproduced() {
        let g = Grid::new(vec![Axis::circle(6), Axis::line(0.0, 1.0, 7)]).unwrap();
        let data: Vec<f64> = (0..g.len() * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let it = TensorInterp::new(g.clone(), 2, data.clone());
        for i in 0..g.len() {
            let v = it.eval(&g.node(i));
            assert!((v[0] - data[2 * i]).abs() < 1e-13);
            assert!((v[1] - data[2 * i + 1]).abs() < 1e-13);
        }
    }

    #[test]
    fn tensor_gradient_matches_product_rule() {
        let g = Grid::new(vec![Axis::circle(10), Axis::line(-1.0, 1.0, 6)]).unwrap();
        let f = |x: &[f64]| x[0].sin() * (1.0 + x[1] * x[1]);
        let data = g.nodes().iter().map(|x| f(x)).collect();
        let it = TensorInterp::new(g, 1, data);
        let x = [0.77, 0.31];
        let v = it.eval_with_gradient(&x);
        assert!((v[0] - f(&x)).abs() < 1e-12);
        assert!((v[1] - x[0].cos() * (1.0 + x[1] * x[1])).abs() < 1e-11);
        assert!((v[2] - x[0].sin() * 2.0 * x[1]).abs() < 1e-11);
    }
}
