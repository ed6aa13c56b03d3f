use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow_rhs, flow_with_tangent, SystemSpec, Tolerances};
use crate::manifold::grid::Grid;
use crate::manifold::interp::TensorInterp;
use crate::numerics::norm;

/// A slow manifold stored as the graph `y = F(x)` over a slow-coordinate grid.
#[derive(Debug, Clone)]
pub struct GraphManifold {
    interp: TensorInterp,
    n_slow: usize,
    n_fast: usize,
    eps: f64,
    defect: f64,
    history: Vec<f64>,
}

impl GraphManifold {
    /// Wraps nodal values `F(node)` (node-major, `n_fast` per node). The defect is
    /// measured against `system` (taken at `eps`).
    pub fn from_nodal(system: &SystemSpec, grid: Grid, eps: f64, values: Vec<f64>) -> Self {
        let interp = TensorInterp::new(grid, system.n_fast(), values);
        let mut m = Self { interp, n_slow: system.n_slow(), n_fast: system.n_fast(), eps, defect: f64::NAN, history: Vec::new() };
        m.defect = max_of(&m.nodal_defect(&system.with_eps(eps)));
        m
    }

    pub fn grid(&self) -> &Grid {
        self.interp.grid()
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
    /// Largest nodal invariance defect recorded at construction.
    pub fn defect(&self) -> f64 {
        self.defect
    }
    /// Nodal defect after each sweep (empty for graphs not produced by sweeps).
    pub fn defect_history(&self) -> &[f64] {
        &self.history
    }
    pub fn sweeps(&self) -> usize {
        self.history.len()
    }
    pub fn nodal_values(&self) -> &[f64] {
        self.interp.data()
    }
    pub fn node_value(&self, node: usize) -> &[f64] {
        self.interp.node_value(node)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.interp.eval(x)
    }

    /// `(F(x), DF(x))` with `DF` of shape n_fast x n_slow.
    pub fn eval_with_gradient(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let v = self.interp.eval_with_gradient(x);
        let nf = self.n_fast;
        let df = DMatrix::from_fn(nf, self.n_slow, |i, a| v[(1 + a) * nf + i]);
        (v[..nf].to_vec(), df)
    }

    /// The manifold point `(x, F(x))`.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        z.extend(self.eval(x));
        z
    }

    /// Columns `[e_a; DF e_a]` spanning the tangent space at `x` (n x n_slow).
    pub fn tangent_basis(&self, x: &[f64]) -> DMatrix<f64> {
        let (_, df) = self.eval_with_gradient(x);
        let mut t = DMatrix::zeros(self.dim(), self.n_slow);
        for a in 0..self.n_slow {
            t[(a, a)] = 1.0;
            for i in 0..self.n_fast {
                t[(self.n_slow + i, a)] = df[(i, a)];
            }
        }
        t
    }

    /// Vertical distance `‖y − F(x)‖` of a full state from the graph.
    pub fn graph_distance(&self, z: &[f64]) -> f64 {
        let f = self.eval(&z[..self.n_slow]);
        f.iter().zip(&z[self.n_slow..]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Invariance residual `‖g(x,F) − ε DF f(x,F)‖` at `x`.
    pub fn defect_at(&self, system: &SystemSpec, x: &[f64]) -> f64 {
        let (f, df) = self.eval_with_gradient(x);
        let mut sf = vec![0.0; self.n_slow];
        let mut gf = vec![0.0; self.n_fast];
        system.slow_field(x, &f, &mut sf);
        system.fast_field(x, &f, &mut gf);
        let r = DVector::from_vec(gf) - system.eps() * &df * DVector::from_vec(sf);
        r.norm()
    }

    pub fn nodal_defect(&self, system: &SystemSpec) -> Vec<f64> {
        (0..self.grid().len()).map(|i| self.defect_at(system, &self.grid().node(i))).collect()
    }

    /// Largest `‖DF‖` over the nodes (Lipschitz estimate of the graph).
    pub fn lipschitz(&self) -> f64 {
        (0..self.grid().len())
            .map(|i| {
                let (_, df) = self.eval_with_gradient(&self.grid().node(i));
                if df.is_empty() {
                    0.0
                } else {
                    df.clone().singular_values().max()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Fast-time slow field restricted to the graph: `ε f(x, F(x))`.
    pub fn restricted_field(&self, system: &SystemSpec, x: &[f64], out: &mut [f64]) {
        let f = self.eval(x);
        system.slow_field(x, &f, out);
        for v in out.iter_mut() {
            *v *= system.eps();
        }
    }

    /// Flows the base point along the graph for fast time `t` (either sign).
    /// Fails with [`Error::DomainExit`] if the orbit leaves a line axis of the grid.
    pub fn slow_flow(&self, system: &SystemSpec, x0: &[f64], t: f64, tol: &Tolerances) -> Result<Vec<f64>> {
        if self.n_slow == 0 || t == 0.0 || system.eps() == 0.0 {
            return Ok(x0.to_vec());
        }
        let x = flow_rhs(|x, out| self.restricted_field(system, x, out), x0, t, tol)?;
        self.check_domain(&x)?;
        Ok(x)
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        let slack = 1e-9 * self.grid().min_spacing().max(1.0);
        match self.grid().outside(x, slack) {
            Some((axis, value)) => Err(Error::DomainExit { axis, value }),
            None => Ok(()),
        }
    }

    /// Largest real part and smallest real part of the eigenvalues of `D2g` over the nodes.
    pub fn fast_spectrum_bounds(&self, system: &SystemSpec) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.grid().len() {
            let x = self.grid().node(i);
            let a = system.fast_jacobian(&x, self.node_value(i));
            for ev in a.complex_eigenvalues().iter() {
                lo = lo.min(ev.re);
                hi = hi.max(ev.re);
            }
        }
        (lo, hi)
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn newton_fast(system: &SystemSpec, x: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
    let nf = system.n_fast();
    let mut y = seed.to_vec();
    let mut g = vec![0.0; nf];
    system.fast_field(x, &y, &mut g);
    let mut res = norm(&g);
    for _ in 0..60 {
        if res <= 1e-13 {
            return Ok(y);
        }
        let jac = system.fast_jacobian(x, &y);
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&g))
            .ok_or_else(|| Error::NewtonFailed { context: format!("critical manifold at {x:?}: singular D2g"), residual: res })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
            system.fast_field(x, &trial, &mut g);
            let r = norm(&g);
            if r < res || r <= 1e-13 {
                y = trial;
                res = r;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= 1e-12 {
        Ok(y)
    } else {
        Err(Error::NewtonFailed { context: format!("critical manifold at {x:?}"), residual: res })
    }
}

/// Critical manifold `g(x, F0(x), 0) = 0` by Newton, swept across the grid from a zero seed.
pub fn critical_manifold(system: &SystemSpec, grid: Grid) -> Result<GraphManifold> {
    let seed = vec![0.0; system.n_fast()];
    critical_manifold_from(system, grid, &seed)
}

/// As [`critical_manifold`] with an explicit seed for the first node; later nodes are seeded
/// from an already solved neighbour.
pub fn critical_manifold_from(system: &SystemSpec, grid: Grid, seed: &[f64]) -> Result<GraphManifold> {
    let sys0 = system.with_eps(0.0);
    let nf = system.n_fast();
    let mut values = vec![0.0; grid.len() * nf];
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        let s = match idx.iter().rposition(|&j| j > 0) {
            None => seed.to_vec(),
            Some(k) => {
                let mut prev = idx.clone();
                prev[k] -= 1;
                let p = grid.flat_index(&prev);
                values[p * nf..(p + 1) * nf].to_vec()
            }
        };
        let y = newton_fast(&sys0, &grid.node(i), &s)?;
        values[i * nf..(i + 1) * nf].copy_from_slice(&y);
    }
    Ok(GraphManifold::from_nodal(&sys0, grid, 0.0, values))
}

/// Controls for [`slow_manifold_graph_with`].
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub max_sweeps: usize,
    pub defect_tol: f64,
    /// Flow time of one graph transform; defaults to `5 / |r_max|`.
    pub transform_time: Option<f64>,
    pub tol: Tolerances,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { max_sweeps: 8, defect_tol: 1e-10, transform_time: None, tol: Tolerances::tight() }
    }
}

/// Slow manifold at `eps`, starting from `seed`.
pub fn slow_manifold_graph(system: &SystemSpec, eps: f64, seed: &GraphManifold, max_sweeps: usize, defect_tol: f64) -> Result<GraphManifold> {
    slow_manifold_graph_with(system, eps, seed, &SweepOptions { max_sweeps, defect_tol, ..SweepOptions::default() })
}

/// Graph-transform sweeps: each node value of the next graph is the image under `Φ^T` of the
/// point of the current graph that lands over that node.
pub fn slow_manifold_graph_with(system: &SystemSpec, eps: f64, seed: &GraphManifold, opts: &SweepOptions) -> Result<GraphManifold> {
    let sys = system.with_eps(eps);
    let grid = seed.grid().clone();
    let mut current = GraphManifold::from_nodal(&sys, grid.clone(), eps, seed.nodal_values().to_vec());
    if current.defect <= opts.defect_tol {
        return Ok(current);
    }
    let (_, r_max) = current.fast_spectrum_bounds(&sys);
    if !(r_max < 0.0) {
        return Err(Error::InvalidInput(format!("fast spectrum is not attracting (r_max = {r_max})")));
    }
    let t = opts.transform_time.unwrap_or(5.0 / r_max.abs());
    let ns = sys.n_slow();
    let nf = sys.n_fast();
    let nodes = grid.nodes();
    let mut preimages: Vec<Vec<f64>> = nodes
        .iter()
        .map(|x| {
            let mut f = vec![0.0; ns];
            current.restricted_field(&sys, x, &mut f);
            x.iter().zip(&f).map(|(a, b)| a - t * b).collect()
        })
        .collect();
    let mut history = Vec::new();
    let mut best = current.defect;
    for sweep in 1..=opts.max_sweeps {
        let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = nodes
            .par_iter()
            .zip(preimages.par_iter())
            .map(|(x, xi0)| transform_node(&sys, &current, x, xi0, t, &opts.tol))
            .collect();
        let mut values = Vec::with_capacity(nodes.len() * nf);
        for (i, r) in results.into_iter().enumerate() {
            let (xi, y) = r?;
            preimages[i] = xi;
            values.extend(y);
        }
        let mut next = GraphManifold::from_nodal(&sys, grid.clone(), eps, values);
        history.push(next.defect);
        if !next.defect.is_finite() || next.defect > 1e3 * best.max(1e-300) {
            return Err(Error::SweepDiverged { sweep, defect: next.defect });
        }
        best = best.min(next.defect);
        next.history = history.clone();
        current = next;
        if current.defect <= opts.defect_tol {
            break;
        }
    }
    Ok(current)
}

/// Finds the preimage `ξ` with `π_x Φ^T(ξ, F(ξ)) = x` and returns `(ξ, π_y Φ^T(ξ, F(ξ)))`.
fn transform_node(sys: &SystemSpec, graph: &GraphManifold, x: &[f64], xi0: &[f64], t: f64, tol: &Tolerances) -> Result<(Vec<f64>, Vec<f64>)> {
    let ns = sys.n_slow();
    let mut xi = xi0.to_vec();
    let mut last_res = f64::INFINITY;
    let mut diff = vec![0.0; ns];
    for _ in 0..40 {
        let z0 = graph.lift(&xi);
        let tangent = graph.tangent_basis(&xi);
        let jet = flow_with_tangent(sys, &z0, &tangent, t, tol)?;
        sys.slow_diff(&jet.state[..ns], x, &mut diff);
        let res = norm(&diff);
        let top = jet.tangent.rows(0, ns).into_owned();
        let bottom = jet.tangent.rows(ns, sys.n_fast()).into_owned();
        let step = if ns == 0 {
            DVector::zeros(0)
        } else {
            top.lu().solve(&DVector::from_column_slice(&diff)).ok_or_else(|| Error::NewtonFailed { context: "graph transform preimage".into(), residual: res })?
        };
        if res <= 1e-13 * (1.0 + norm(x)) || (res >= 0.5 * last_res && res <= 1e-11) {
            let y = DVector::from_column_slice(&jet.state[ns..]) - bottom * &step;
            return Ok((xi, y.as_slice().to_vec()));
        }
        last_res = res;
        for a in 0..ns {
            xi[a] -= step[a];
        }
    }
    Err(Error::NewtonFailed { context: format!("graph transform preimage for node {x:?}"), residual: last_res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::decoupled;
    use crate::manifold::grid::Axis;

    #[test]
    fn decoupled_critical_manifold_is_zero() {
        let sys = decoupled(0.1);
        let m = critical_manifold(&sys, Grid::new(vec![Axis::line(-1.0, 1.0, 9)]).unwrap()).unwrap();
        assert!(m.nodal_values().iter().all(|v| v.abs() < 1e-14));
        assert_eq!(m.eps(), 0.0);
    }

    #[test]
    fn eps_zero_returns_seed() {
        let sys = decoupled(0.0);
        let grid = Grid::new(vec![Axis::line(-1.0, 1.0, 9)]).unwrap();
        let seed = critical_manifold(&sys, grid).unwrap();
        let m = slow_manifold_graph(&sys, 0.0, &seed, 8, 1e-12).unwrap();
        assert_eq!(m.nodal_values(), seed.nodal_values());
        assert_eq!(m.sweeps(), 0);
    }
}
