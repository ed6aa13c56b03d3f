use crate::error::{Error, Result};

/// One uniform axis of a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Periodic axes hold `n` nodes on `[lo, hi)` with period `hi - lo`.
    pub periodic: bool,
}

impl Axis {
    pub fn line(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n, periodic: false }
    }

    /// A full circle `[0, 2π)`.
    pub fn circle(n: usize) -> Self {
        Self { lo: 0.0, hi: 2.0 * std::f64::consts::PI, n, periodic: true }
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.n as f64
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    pub fn period(&self) -> Option<f64> {
        self.periodic.then(|| self.hi - self.lo)
    }

    /// Whether `x` lies in the closed axis range (always true for periodic axes).
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        self.periodic || (x >= self.lo - slack && x <= self.hi + slack)
    }

    fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidInput(format!("axis range [{}, {}] is empty", self.lo, self.hi)));
        }
        let min = if self.periodic { 3 } else { 2 };
        if self.n < min {
            return Err(Error::InvalidInput(format!("axis needs at least {min} nodes, got {}", self.n)));
        }
        Ok(())
    }
}

/// Tensor grid over the slow coordinates; the last axis varies fastest.
/// A grid with no axes has exactly one node (a point manifold).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn point() -> Self {
        Self { axes: Vec::new() }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.n;
            flat /= a.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (k, a) in self.axes.iter().enumerate() {
            flat = flat * a.n + idx[k];
        }
        flat
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&j, a)| a.node(j)).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Flat indices of the grid neighbours of `flat` (one step along each axis, both ways).
    pub fn neighbours(&self, flat: usize) -> Vec<usize> {
        let idx = self.multi_index(flat);
        let mut out = Vec::new();
        for (k, a) in self.axes.iter().enumerate() {
            for step in [-1i64, 1] {
                let j = idx[k] as i64 + step;
                let j = if a.periodic {
                    j.rem_euclid(a.n as i64)
                } else if j < 0 || j >= a.n as i64 {
                    continue;
                } else {
                    j
                };
                let mut nb = idx.clone();
                nb[k] = j as usize;
                out.push(self.flat_index(&nb));
            }
        }
        out
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).fold(f64::INFINITY, f64::min)
    }

    /// First axis on which `x` falls outside the (non-periodic) domain.
    pub fn outside(&self, x: &[f64], slack: f64) -> Option<(usize, f64)> {
        self.axes.iter().enumerate().find(|(k, a)| !a.contains(x[*k], slack)).map(|(k, _)| (k, x[k]))
    }

    /// A grid over the same box with `factor` times as many intervals per axis.
    pub fn refined(&self, factor: usize) -> Self {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let n = if a.periodic { a.n * factor } else { (a.n - 1) * factor + 1 };
                Axis { n, ..a.clone() }
            })
            .collect();
        Self { axes }
    }
}
