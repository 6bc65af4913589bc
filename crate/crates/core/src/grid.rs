//! Periodic 1-D spatial grids and nodal functions on them.

use crate::error::{Error, Result};

/// Periodic grid with `nodes` points over one period; spacing h = period / nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    period: f64,
    nodes: usize,
}

impl Grid1D {
    pub fn new(period: f64, nodes: usize) -> Result<Self> {
        if period <= 0.0 {
            return Err(Error::NonpositiveParameter {
                what: "period",
                value: period,
            });
        }
        if nodes < 4 {
            return Err(Error::InvalidParameter {
                what: "nodes",
                why: format!("need at least 4 nodes, got {nodes}"),
            });
        }
        Ok(Grid1D { period, nodes })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.nodes as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.period * i as f64 / self.nodes as f64
    }

    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.nodes as isize) as usize
    }
}

/// Nodal values of a function on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::InvalidParameter {
                what: "values",
                why: format!("{} values for {} nodes", values.len(), grid.nodes()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "values",
                why: "non-finite nodal value".into(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn sample<F: Fn(f64) -> f64>(grid: Grid1D, f: F) -> Result<Self> {
        let values = (0..grid.nodes()).map(|i| f(grid.node(i))).collect();
        GridFunction::new(grid, values)
    }

    pub fn constant(grid: Grid1D, value: f64) -> Self {
        GridFunction {
            grid,
            values: vec![value; grid.nodes()],
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: isize) -> f64 {
        self.values[self.grid.wrap(i)]
    }

    /// Periodic linear interpolation at an arbitrary point.
    pub fn eval_periodic(&self, x: f64) -> f64 {
        let h = self.grid.spacing();
        let m = self.grid.nodes() as isize;
        let s = x / h;
        let i = s.floor();
        let w = s - i;
        let i = i as isize;
        let a = self.values[(i.rem_euclid(m)) as usize];
        let b = self.values[((i + 1).rem_euclid(m)) as usize];
        a + w * (b - a)
    }

    /// Discrete Lipschitz constant max |u_{i+1} - u_i| / h with periodic wrap.
    pub fn discrete_lipschitz(&self) -> f64 {
        let h = self.grid.spacing();
        let m = self.grid.nodes();
        let mut best = 0.0f64;
        for i in 0..m {
            let d = (self.values[(i + 1) % m] - self.values[i]).abs();
            best = best.max(d);
        }
        best / h
    }

    /// Cyclic shift: output node i holds the input value at node i + j.
    pub fn rotate(&self, j: isize) -> GridFunction {
        let m = self.grid.nodes();
        let values = (0..m)
            .map(|i| self.values[self.grid.wrap(i as isize + j)])
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// max over nodes of (self - other): signed one-sided distance.
    pub fn max_difference(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn shifted(&self, k: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| v + k).collect(),
        }
    }
}
