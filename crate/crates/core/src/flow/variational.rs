use nalgebra::DMatrix;

use crate::error::Result;
use crate::flow::integrate::{flow_fixed, flow_rhs, integrate_rhs, Tolerances, Trajectory};
use crate::flow::system::SystemSpec;

/// State and variational matrix after flowing for `t`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub t: f64,
    pub state: Vec<f64>,
    /// `DΦ^t` applied to the initial tangent block (n x p).
    pub tangent: DMatrix<f64>,
}

/// Right-hand side of the base orbit joined with `p` tangent columns (column-major after the state).
pub struct VariationalRhs<'a> {
    system: &'a SystemSpec,
    p: usize,
    jac: Vec<f64>,
}

impl<'a> VariationalRhs<'a> {
    pub fn new(system: &'a SystemSpec, p: usize) -> Self {
        let n = system.dim();
        Self { system, p, jac: vec![0.0; n * n] }
    }

    pub fn eval(&mut self, z: &[f64], out: &mut [f64]) {
        let n = self.system.dim();
        self.system.rhs(&z[..n], &mut out[..n]);
        self.system.jacobian(&z[..n], &mut self.jac);
        for j in 0..self.p {
            let col = &z[n + j * n..n + (j + 1) * n];
            let dst = &mut out[n + j * n..n + (j + 1) * n];
            for r in 0..n {
                let row = &self.jac[r * n..(r + 1) * n];
                let mut s = 0.0;
                for c in 0..n {
                    s += row[c] * col[c];
                }
                dst[r] = s;
            }
        }
    }
}

pub(crate) fn pack(state: &[f64], tangent: &DMatrix<f64>) -> Vec<f64> {
    let mut z = Vec::with_capacity(state.len() * (1 + tangent.ncols()));
    z.extend_from_slice(state);
    z.extend_from_slice(tangent.as_slice());
    z
}

pub(crate) fn unpack(z: &[f64], n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let p = z.len() / n - 1;
    (z[..n].to_vec(), DMatrix::from_column_slice(n, p, &z[n..]))
}

/// Flows `state` with the tangent block `tangent0` (n x p) for time `t`.
pub fn flow_with_tangent(system: &SystemSpec, state: &[f64], tangent0: &DMatrix<f64>, t: f64, tol: &Tolerances) -> Result<Jet> {
    let n = system.dim();
    let z0 = pack(state, tangent0);
    let mut rhs = VariationalRhs::new(system, tangent0.ncols());
    let z = flow_rhs(|z, out| rhs.eval(z, out), &z0, t, tol)?;
    let (state, tangent) = unpack(&z, n);
    Ok(Jet { t, state, tangent })
}

/// Fixed-step counterpart of [`flow_with_tangent`].
pub fn flow_with_tangent_fixed(system: &SystemSpec, state: &[f64], tangent0: &DMatrix<f64>, t: f64, steps: usize) -> Jet {
    let n = system.dim();
    let z0 = pack(state, tangent0);
    let mut rhs = VariationalRhs::new(system, tangent0.ncols());
    let z = flow_fixed(|z, out| rhs.eval(z, out), &z0, t, steps);
    let (state, tangent) = unpack(&z, n);
    Jet { t, state, tangent }
}

/// `Φ^t(state)` together with the full variational matrix `DΦ^t(state)`.
pub fn flow_with_variational(system: &SystemSpec, state: &[f64], t: f64, tol: &Tolerances) -> Result<Jet> {
    let n = system.dim();
    flow_with_tangent(system, state, &DMatrix::identity(n, n), t, tol)
}

/// Stored joint trajectory of the orbit and its tangent block.
pub fn integrate_with_tangent(system: &SystemSpec, state: &[f64], tangent0: &DMatrix<f64>, t0: f64, t1: f64, tol: &Tolerances) -> Result<Trajectory> {
    let z0 = pack(state, tangent0);
    let mut rhs = VariationalRhs::new(system, tangent0.ncols());
    integrate_rhs(|z, out| rhs.eval(z, out), &z0, t0, t1, tol)
}
