//! Slow-fast fields whose components are expressions in the language of [`crate::expr`].

use naim_core::flow::{SlowFastField, Topology};
use thiserror::Error;

use crate::expr::{parse, Expr, ParseError, Program, Scope};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("component {component}: {source}")]
    Parse { component: String, source: ParseError },
    #[error("variable name '{0}' is used twice")]
    DuplicateName(String),
    #[error("'{0}' is reserved")]
    ReservedName(String),
    #[error("{what}: expected {expected} expressions, got {found}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("a field needs at least one fast variable")]
    NoFast,
}

/// Compiled field `x' = f(x, y, eps)`, `eps y' = g(x, y, eps)` with derivative trees for
/// the full Jacobian. Evaluation slots are slow variables, fast variables, then `eps`.
#[derive(Debug, Clone)]
pub struct FieldExpr {
    scope: Scope,
    topology: Vec<Topology>,
    n_slow: usize,
    n_fast: usize,
    exprs: Vec<Expr>,
    derivatives: Vec<Expr>,
    programs: Vec<Program>,
    jacobian: Vec<Program>,
}

impl FieldExpr {
    /// `slow` pairs each slow name with its topology; `f` and `g` hold one expression per
    /// slow and fast variable respectively.
    pub fn parse(slow: &[(String, Topology)], fast: &[String], f: &[String], g: &[String]) -> Result<Self, FieldError> {
        if fast.is_empty() {
            return Err(FieldError::NoFast);
        }
        if f.len() != slow.len() {
            return Err(FieldError::Count { what: "slow field", expected: slow.len(), found: f.len() });
        }
        if g.len() != fast.len() {
            return Err(FieldError::Count { what: "fast field", expected: fast.len(), found: g.len() });
        }
        let mut names: Vec<String> = slow.iter().map(|(n, _)| n.clone()).chain(fast.iter().cloned()).collect();
        for (i, n) in names.iter().enumerate() {
            if n == "eps" || n == "pi" || crate::expr::Func::ALL.iter().any(|f| f.name() == n) {
                return Err(FieldError::ReservedName(n.clone()));
            }
            if names[..i].contains(n) {
                return Err(FieldError::DuplicateName(n.clone()));
            }
        }
        names.push("eps".into());
        let scope = Scope::new(names);
        let n = slow.len() + fast.len();
        let mut exprs = Vec::with_capacity(n);
        for (i, text) in f.iter().chain(g).enumerate() {
            let e = parse(text, &scope).map_err(|source| FieldError::Parse { component: component_name(&scope, slow.len(), i), source })?;
            exprs.push(e);
        }
        let derivatives: Vec<Expr> = exprs.iter().flat_map(|e| (0..n).map(move |j| e.derivative(j))).collect();
        Ok(Self {
            topology: slow.iter().map(|(_, t)| *t).collect(),
            n_slow: slow.len(),
            n_fast: fast.len(),
            programs: exprs.iter().map(Program::compile).collect(),
            jacobian: derivatives.iter().map(Program::compile).collect(),
            scope,
            exprs,
            derivatives,
        })
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }
    /// Component `i` (slow components first).
    pub fn expr(&self, i: usize) -> &Expr {
        &self.exprs[i]
    }
    /// `∂ component_i / ∂ variable_j`.
    pub fn derivative(&self, i: usize, j: usize) -> &Expr {
        &self.derivatives[i * (self.n_slow + self.n_fast) + j]
    }

    fn slots(&self, x: &[f64], y: &[f64], eps: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.scope.len());
        v.extend_from_slice(x);
        v.extend_from_slice(y);
        v.push(eps);
        v
    }
}

fn component_name(scope: &Scope, n_slow: usize, i: usize) -> String {
    if i < n_slow {
        format!("f[{}] ({}')", i, scope.name(i))
    } else {
        format!("g[{}] ({}')", i - n_slow, scope.name(i))
    }
}

impl SlowFastField for FieldExpr {
    fn n_slow(&self) -> usize {
        self.n_slow
    }
    fn n_fast(&self) -> usize {
        self.n_fast
    }
    fn topology(&self) -> Vec<Topology> {
        self.topology.clone()
    }
    fn slow(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]) {
        let v = self.slots(x, y, eps);
        for (o, p) in out.iter_mut().zip(&self.programs[..self.n_slow]) {
            *o = p.eval(&v);
        }
    }
    fn fast(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]) {
        let v = self.slots(x, y, eps);
        for (o, p) in out.iter_mut().zip(&self.programs[self.n_slow..]) {
            *o = p.eval(&v);
        }
    }
    fn jacobian_blocks(&self, x: &[f64], y: &[f64], eps: f64, jac: &mut [f64]) {
        let v = self.slots(x, y, eps);
        for (o, p) in jac.iter_mut().zip(&self.jacobian) {
            *o = p.eval(&v);
        }
    }
}
