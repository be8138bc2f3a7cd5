//! Uniform state and time grids.

use crate::error::{Error, Result};

/// Uniform grid of `nodes` points covering `[lo, hi]`, endpoints included.
///
/// Each node `x_i` owns the cell `[x_i - h/2, x_i + h/2]`; densities are
/// piecewise constant on cells and quadrature is the midpoint rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateGrid {
    lo: f64,
    hi: f64,
    nodes: usize,
}

impl StateGrid {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "state grid bounds must be finite with lo < hi (got [{lo}, {hi}])"
            )));
        }
        if nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "state grid needs at least 2 nodes (got {nodes})"
            )));
        }
        Ok(Self { lo, hi, nodes })
    }

    /// `[-6, 6]` with 241 nodes, `h = 0.05`.
    pub fn reference() -> Self {
        Self {
            lo: -6.0,
            hi: 6.0,
            nodes: 241,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.nodes).map(move |i| self.lo + i as f64 * h)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.nodes().collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }

    /// Linear interpolation of a nodal field at `x`, constant beyond the ends.
    /// The flag reports whether `x` fell outside the grid.
    pub fn interpolate(&self, field: &[f64], x: f64) -> (f64, bool) {
        debug_assert_eq!(field.len(), self.nodes);
        if x <= self.lo {
            return (field[0], x < self.lo);
        }
        if x >= self.hi {
            return (field[self.nodes - 1], x > self.hi);
        }
        let s = (x - self.lo) / self.spacing();
        let i = (s.floor() as usize).min(self.nodes - 2);
        let frac = s - i as f64;
        ((1.0 - frac) * field[i] + frac * field[i + 1], false)
    }
}

/// Uniform time grid on `[0, T]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite (got {horizon})"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.steps as f64
    }

    /// Index of the interval `[t_n, t_{n+1})` containing `t`, clamped to the last interval.
    pub fn interval_of(&self, t: f64) -> usize {
        let n = (t / self.dt() + 1e-9).floor();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.steps - 1)
        }
    }
}

/// State grid paired with a time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grids {
    pub state: StateGrid,
    pub time: TimeGrid,
}

impl Grids {
    pub fn new(state: StateGrid, time: TimeGrid) -> Self {
        Self { state, time }
    }
}

/// Major control at time index `n` for a piecewise-constant path with one value
/// per interval. The terminal index reuses the last interval's value.
pub fn control_at(u0: &[f64], n: usize) -> f64 {
    u0[n.min(u0.len() - 1)]
}
