use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow_with_tangent, flow_with_variational, SystemSpec, Tolerances};
use crate::manifold::graph::GraphManifold;
use crate::manifold::grid::Grid;
use crate::manifold::interp::TensorInterp;
use crate::numerics::{lowdin, orthonormalize, subspace_distance};

/// Largest admissible subspace angle between neighbouring nodes.
pub const MAX_ADJACENT_DEGREES: f64 = 15.0;

/// Orthonormal frames of the stable bundle over a grid.
///
/// Each frame is stored through its slope `A` over the fast coordinates
/// (`span [A; I]`), which is interpolated and then orthonormalized symmetrically,
/// so the fast block of every frame is symmetric positive definite.
#[derive(Debug, Clone)]
pub struct StableFrameField {
    slopes: TensorInterp,
    n_slow: usize,
    k: usize,
    iterations: Vec<usize>,
    last_change: f64,
    max_adjacent_degrees: f64,
}

/// `[A; I]` orthonormalized.
pub fn frame_from_slope(slope: &DMatrix<f64>, n_slow: usize, k: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n_slow + k, k);
    w.view_mut((0, 0), (n_slow, k)).copy_from(slope);
    for i in 0..k {
        w[(n_slow + i, i)] = 1.0;
    }
    lowdin(&w)
}

/// Slope of a frame over the fast coordinates; `None` when the fast block is singular.
pub fn slope_from_frame(w: &DMatrix<f64>, n_slow: usize) -> Option<DMatrix<f64>> {
    let k = w.ncols();
    let top = w.rows(0, n_slow).into_owned();
    let bottom = w.rows(n_slow, k).into_owned();
    let inv = bottom.try_inverse()?;
    Some(top * inv)
}

impl StableFrameField {
    /// Builds the field from per-node bases (any basis of each fiber direction space).
    pub fn from_node_frames(grid: Grid, n_slow: usize, frames: &[DMatrix<f64>]) -> Result<Self> {
        let k = frames.first().map(|f| f.ncols()).unwrap_or(0);
        let mut data = Vec::with_capacity(frames.len() * n_slow * k);
        for (i, f) in frames.iter().enumerate() {
            let s = slope_from_frame(f, n_slow).ok_or_else(|| Error::InvalidInput(format!("frame at node {i} is tangent to the slow directions")))?;
            for r in 0..n_slow {
                for c in 0..k {
                    data.push(s[(r, c)]);
                }
            }
        }
        let slopes = TensorInterp::new(grid, n_slow * k, data);
        let mut field = Self { slopes, n_slow, k, iterations: vec![0; frames.len()], last_change: 0.0, max_adjacent_degrees: 0.0 };
        field.max_adjacent_degrees = field.check_continuity()?;
        Ok(field)
    }

    /// The fast coordinate axes at every node (exact for `eps = 0`).
    pub fn vertical(grid: Grid, n_slow: usize, n_fast: usize) -> Self {
        let data = vec![0.0; grid.len() * n_slow * n_fast];
        let n = grid.len();
        Self { slopes: TensorInterp::new(grid, n_slow * n_fast, data), n_slow, k: n_fast, iterations: vec![0; n], last_change: 0.0, max_adjacent_degrees: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        self.slopes.grid()
    }
    pub fn n_slow(&self) -> usize {
        self.n_slow
    }
    /// Fiber dimension.
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn dim(&self) -> usize {
        self.n_slow + self.k
    }
    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }
    /// Largest subspace change in the final subspace iteration over all nodes.
    pub fn last_change(&self) -> f64 {
        self.last_change
    }
    pub fn max_adjacent_degrees(&self) -> f64 {
        self.max_adjacent_degrees
    }

    pub fn slope_at(&self, x: &[f64]) -> DMatrix<f64> {
        let v = self.slopes.eval(x);
        DMatrix::from_row_slice(self.n_slow, self.k, &v)
    }

    /// Orthonormal frame (n x k) at slow coordinates `x`.
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        frame_from_slope(&self.slope_at(x), self.n_slow, self.k)
    }

    pub fn at_node(&self, node: usize) -> DMatrix<f64> {
        let v = self.slopes.node_value(node);
        frame_from_slope(&DMatrix::from_row_slice(self.n_slow, self.k, v), self.n_slow, self.k)
    }

    /// Derivative of the frame along `dir` in slow coordinates (central differences).
    pub fn derivative(&self, x: &[f64], dir: &[f64]) -> DMatrix<f64> {
        let dn = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if dn == 0.0 || self.n_slow == 0 {
            return DMatrix::zeros(self.dim(), self.k);
        }
        let h = 1e-5 / dn;
        let xp: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
        (self.at(&xp) - self.at(&xm)) / (2.0 * h)
    }

    fn check_continuity(&self) -> Result<f64> {
        let grid = self.grid();
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            let fi = self.at_node(i);
            for j in grid.neighbours(i) {
                if j <= i {
                    continue;
                }
                let s = subspace_distance(&fi, &self.at_node(j)).min(1.0);
                let deg = s.asin().to_degrees();
                if deg >= MAX_ADJACENT_DEGREES {
                    return Err(Error::FrameDiscontinuity { a: i, b: j, degrees: deg });
                }
                worst = worst.max(deg);
            }
        }
        Ok(worst)
    }

    /// Flows the manifold point over `x` for time `t` with the frame as tangent block.
    /// Returns the end state and the compressed map `E(x_t)ᵀ DΦ^t E(x)`.
    pub fn transfer(&self, system: &SystemSpec, manifold: &GraphManifold, x: &[f64], t: f64, tol: &Tolerances) -> Result<Transfer> {
        let z0 = manifold.lift(x);
        let e0 = self.at(x);
        if t == 0.0 {
            return Ok(Transfer { state: z0, compressed: DMatrix::identity(self.k, self.k), image: e0 });
        }
        let jet = flow_with_tangent(system, &z0, &e0, t, tol)?;
        let e1 = self.at(&jet.state[..self.n_slow]);
        Ok(Transfer { compressed: e1.transpose() * &jet.tangent, state: jet.state, image: jet.tangent })
    }
}

/// Result of [`StableFrameField::transfer`].
#[derive(Debug, Clone)]
pub struct Transfer {
    pub state: Vec<f64>,
    /// `E(x_t)ᵀ DΦ^t E(x)`, k x k.
    pub compressed: DMatrix<f64>,
    /// `DΦ^t E(x)`, n x k.
    pub image: DMatrix<f64>,
}

/// Controls for [`stable_bundle_with`].
#[derive(Debug, Clone)]
pub struct FrameOptions {
    pub max_iters: usize,
    pub angle_tol: f64,
    pub tol: Tolerances,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { max_iters: 12, angle_tol: 1e-8, tol: Tolerances::tight() }
    }
}

/// Stable bundle by backward subspace iteration. `t_iter = 0` returns the vertical seed.
pub fn stable_bundle(system: &SystemSpec, manifold: &GraphManifold, t_iter: f64, n_steps: usize) -> Result<StableFrameField> {
    stable_bundle_with(system, manifold, t_iter, n_steps, &FrameOptions::default())
}

pub fn stable_bundle_with(system: &SystemSpec, manifold: &GraphManifold, t_iter: f64, n_steps: usize, opts: &FrameOptions) -> Result<StableFrameField> {
    let grid = manifold.grid().clone();
    let (ns, nf) = (system.n_slow(), system.n_fast());
    if t_iter == 0.0 || opts.max_iters == 0 || ns == 0 {
        return Ok(StableFrameField::vertical(grid, ns, nf));
    }
    let n_steps = n_steps.max(1);
    let results: Vec<Result<(DMatrix<f64>, usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| node_frame(system, &manifold.lift(&grid.node(i)), t_iter, n_steps, opts).map_err(|e| match e {
            Error::FrameNotConverged { angle, .. } => Error::FrameNotConverged { node: i, angle },
            other => other,
        }))
        .collect();
    let mut frames = Vec::with_capacity(grid.len());
    let mut iterations = Vec::with_capacity(grid.len());
    let mut last_change: f64 = 0.0;
    for r in results {
        let (f, it, ch) = r?;
        frames.push(f);
        iterations.push(it);
        last_change = last_change.max(ch);
    }
    let mut field = StableFrameField::from_node_frames(grid, ns, &frames)?;
    field.iterations = iterations;
    field.last_change = last_change;
    Ok(field)
}

fn node_frame(system: &SystemSpec, z0: &[f64], t_iter: f64, n_steps: usize, opts: &FrameOptions) -> Result<(DMatrix<f64>, usize, f64)> {
    let (ns, k) = (system.n_slow(), system.n_fast());
    let n = ns + k;
    let dt = t_iter / n_steps as f64;
    let mut mats: Vec<DMatrix<f64>> = Vec::new();
    let mut z = z0.to_vec();
    let mut prev: Option<DMatrix<f64>> = None;
    let mut change = f64::INFINITY;
    let mut seed = DMatrix::zeros(n, k);
    for i in 0..k {
        seed[(ns + i, i)] = 1.0;
    }
    for iter in 1..=opts.max_iters.max(2) {
        for _ in 0..n_steps {
            let jet = flow_with_variational(system, &z, dt, &opts.tol)?;
            mats.push(jet.tangent);
            z = jet.state;
        }
        let mut x = seed.clone();
        for m in mats.iter().rev() {
            let y = m.clone().lu().solve(&x).ok_or_else(|| Error::FrameNotConverged { node: 0, angle: f64::NAN })?;
            x = orthonormalize(&y);
        }
        if let Some(p) = &prev {
            change = subspace_distance(p, &x);
            if change < opts.angle_tol {
                return Ok((x, iter, change));
            }
        }
        prev = Some(x);
    }
    Err(Error::FrameNotConverged { node: 0, angle: change })
}
