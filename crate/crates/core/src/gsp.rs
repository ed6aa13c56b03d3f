//! Fenichel coordinates and the normal form that is linear in the fast variables.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow, SystemSpec};
use crate::foliation::FiberProjection;
use crate::linearization::ConjugacyMap;
use crate::manifold::{Grid, TensorInterp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFormKind {
    Fenichel,
    Linear,
}

impl NormalFormKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fenichel => "fenichel",
            Self::Linear => "linear",
        }
    }
}

/// Coordinate change into the normal form.
#[derive(Debug, Clone)]
pub enum NormalCoordinates {
    /// Fiber-preserving straightening `(P^s(z), E(P^s z)ᵀ(z − lift P^s z))`.
    Fenichel(Arc<FiberProjection>),
    Linear(Arc<ConjugacyMap>),
}

impl NormalCoordinates {
    pub fn projection(&self) -> &FiberProjection {
        match self {
            Self::Fenichel(fp) => fp,
            Self::Linear(map) => map.projection(),
        }
    }

    /// `(x̃, ỹ)` of a state in the stable set.
    pub fn apply(&self, point: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Fenichel(fp) => fenichel_coordinates(fp, point),
            Self::Linear(map) => {
                let v = map.evaluate(point)?;
                Ok((v.base, v.fiber))
            }
        }
    }
}

pub const DEFAULT_TRANSFORM_HORIZON: f64 = 400.0;

pub fn fenichel_coordinates(fp: &FiberProjection, point: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    fp.fiber_coordinate(point, DEFAULT_TRANSFORM_HORIZON)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormResidual {
    pub fast_sup: f64,
    pub fast_mean: f64,
    pub slow_sup: f64,
    pub slow_mean: f64,
    pub evaluations: usize,
}

/// `x̃' = ε h(x̃)`, `ỹ' = A(x̃) ỹ` in fast time, with `h` and `A` tabulated on the grid.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub kind: NormalFormKind,
    /// `false` when a linear form was requested without certified rates.
    pub certified: bool,
    pub eps: f64,
    n_slow: usize,
    k: usize,
    h: TensorInterp,
    a: TensorInterp,
    a_raw: TensorInterp,
    coords: NormalCoordinates,
    pub stats: Option<NormalFormResidual>,
}

impl NormalForm {
    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }
    pub fn n_slow(&self) -> usize {
        self.n_slow
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn coordinates(&self) -> &NormalCoordinates {
        &self.coords
    }

    /// Reduced slow field in slow-time units.
    pub fn h(&self, x: &[f64]) -> Vec<f64> {
        if self.n_slow == 0 {
            return Vec::new();
        }
        self.h.eval(x)
    }
    pub fn h_node(&self, node: usize) -> &[f64] {
        self.h.node_value(node)
    }

    /// Fast generator in the transported frame.
    pub fn a(&self, x: &[f64]) -> DMatrix<f64> {
        self.matrix(&self.a, x)
    }
    pub fn a_node(&self, node: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k, self.k, self.a.node_value(node))
    }

    /// Generator of the compressed variational flow in the raw frame field
    /// (adds the frame's own rotation).
    pub fn a_raw(&self, x: &[f64]) -> DMatrix<f64> {
        self.matrix(&self.a_raw, x)
    }
    pub fn a_raw_node(&self, node: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k, self.k, self.a_raw.node_value(node))
    }

    fn matrix(&self, table: &TensorInterp, x: &[f64]) -> DMatrix<f64> {
        let v = if self.n_slow == 0 { table.node_value(0).to_vec() } else { table.eval(x) };
        DMatrix::from_row_slice(self.k, self.k, &v)
    }
}

fn tabulate(fp: &FiberProjection) -> (TensorInterp, TensorInterp, TensorInterp) {
    let (system, manifold, frames) = (fp.system(), fp.manifold(), fp.frames());
    let ns = fp.n_slow();
    let grid = manifold.grid().clone();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.node(node);
            let z = manifold.lift(&x);
            let mut h = vec![0.0; ns];
            system.slow_field(&x, &z[ns..], &mut h);
            let e = frames.at_node(node);
            let a = e.transpose() * system.jacobian_matrix(&z) * &e;
            let mut xdot = vec![0.0; ns];
            manifold.restricted_field(system, &x, &mut xdot);
            let de = frames.derivative(&x, &xdot);
            let a_raw = &a + de.transpose() * &e;
            let flat = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
            (h, flat(&a), flat(&a_raw))
        })
        .collect();
    let (mut h, mut a, mut a_raw) = (Vec::new(), Vec::new(), Vec::new());
    for (hh, aa, rr) in rows {
        h.extend(hh);
        a.extend(aa);
        a_raw.extend(rr);
    }
    let k = fp.k();
    (TensorInterp::new(grid.clone(), ns, h), TensorInterp::new(grid.clone(), k * k, a), TensorInterp::new(grid, k * k, a_raw))
}

/// Normal form in Fenichel coordinates; `A` is tabulated for reference only.
pub fn fenichel_normal_form(fp: Arc<FiberProjection>) -> NormalForm {
    let (h, a, a_raw) = tabulate(&fp);
    NormalForm { kind: NormalFormKind::Fenichel, certified: false, eps: fp.system().eps(), n_slow: fp.n_slow(), k: fp.k(), h, a, a_raw, coords: NormalCoordinates::Fenichel(fp), stats: None }
}

/// Linear normal form over the conjugacy. Falls back to the Fenichel kind when the
/// conjugacy is not certified.
pub fn linear_normal_form(conj: Arc<ConjugacyMap>) -> NormalForm {
    let fp = conj.projection_arc().clone();
    if !conj.certified() {
        return fenichel_normal_form(fp);
    }
    let (h, a, a_raw) = tabulate(&fp);
    NormalForm { kind: NormalFormKind::Linear, certified: true, eps: fp.system().eps(), n_slow: fp.n_slow(), k: fp.k(), h, a, a_raw, coords: NormalCoordinates::Linear(conj), stats: None }
}

/// Options for [`normal_form_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualOptions {
    /// Evaluation times per orbit, spread over `[3 step, horizon]`.
    pub times: usize,
    /// Finite-difference step.
    pub step: f64,
    /// Lower bound on `‖ỹ‖` in the relative fast residual.
    pub floor: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { times: 8, step: 0.05, floor: 1e-6 }
    }
}

/// Defects `‖ỹ' − A_raw(x̃) ỹ‖ / max(‖ỹ‖, floor)` and `‖x̃' − ε h(x̃)‖` along true orbits,
/// derivatives by sixth-order central differences.
pub fn normal_form_residual(system: &SystemSpec, nf: &NormalForm, samples: &[Vec<f64>], horizon: f64, opts: &ResidualOptions) -> Result<NormalFormResidual> {
    if opts.times == 0 || !(horizon > 3.0 * opts.step) {
        return Err(Error::InvalidInput("residual horizon too short for the stencil".into()));
    }
    let tol = nf.coords.projection().tol;
    let ns = nf.n_slow;
    let hstep = opts.step;
    let times: Vec<f64> = if opts.times == 1 {
        vec![horizon]
    } else {
        (0..opts.times).map(|i| 3.0 * hstep + (horizon - 3.0 * hstep) * i as f64 / (opts.times - 1) as f64).collect()
    };
    let per: Vec<Result<Vec<(f64, f64)>>> = samples
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(times.len());
            for &t in &times {
                let mut pts = Vec::with_capacity(7);
                for s in [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
                    let z = flow(system, x, t + s * hstep, &tol)?;
                    pts.push(nf.coords.apply(&z)?);
                }
                let (xc, yc) = &pts[3];
                let stencil = |vals: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
                    let v: Vec<Vec<f64>> = (0..7).map(vals).collect();
                    (0..v[0].len()).map(|i| (-v[0][i] + 9.0 * v[1][i] - 45.0 * v[2][i] + 45.0 * v[4][i] - 9.0 * v[5][i] + v[6][i]) / (60.0 * hstep)).collect()
                };
                let ydot = stencil(&|j| pts[j].1.clone());
                let xdot = stencil(&|j| {
                    let mut d = vec![0.0; ns];
                    system.slow_diff(&pts[j].0, xc, &mut d);
                    d
                });
                let y = DVector::from_column_slice(yc);
                let pred = nf.a_raw(xc) * &y;
                let fast: f64 = ydot.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / y.norm().max(opts.floor);
                let h = nf.h(xc);
                let slow: f64 = xdot.iter().zip(&h).map(|(a, b)| (a - nf.eps * b) * (a - nf.eps * b)).sum::<f64>().sqrt();
                out.push((fast, slow));
            }
            Ok(out)
        })
        .collect();
    let all: Vec<(f64, f64)> = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let n = all.len().max(1) as f64;
    Ok(NormalFormResidual {
        fast_sup: all.iter().map(|p| p.0).fold(0.0, f64::max),
        fast_mean: all.iter().map(|p| p.0).sum::<f64>() / n,
        slow_sup: all.iter().map(|p| p.1).fold(0.0, f64::max),
        slow_mean: all.iter().map(|p| p.1).sum::<f64>() / n,
        evaluations: all.len(),
    })
}
