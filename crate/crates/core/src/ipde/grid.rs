use std::io::Write;
use std::sync::Arc;

use crate::error::{config, Result};

/// How values outside `[-L, L]` are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// The function vanishes outside the domain.
    ZeroExtension,
    /// The node values repeat with period `n_x * h_x`.
    Periodic,
}

/// Uniform grid on `[-L, L]` with an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    n_x: usize,
    boundary: BoundaryRule,
}

impl Grid {
    pub fn new(half_width: f64, n_x: usize, boundary: BoundaryRule) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return config(format!(
                "domain half-width must be positive, got {half_width}"
            ));
        }
        if n_x < 3 || n_x.is_multiple_of(2) {
            return config(format!("n_x must be odd and at least 3, got {n_x}"));
        }
        Ok(Self {
            half_width,
            n_x,
            boundary,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_x
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn boundary(&self) -> BoundaryRule {
        self.boundary
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_x - 1) as f64
    }

    pub fn center(&self) -> usize {
        self.n_x / 2
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.node(i)).collect()
    }

    /// Period of the periodic extension, `n_x * h_x`.
    pub fn period(&self) -> f64 {
        self.n_x as f64 * self.spacing()
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.half_width
    }

    /// Node value at a possibly out-of-range index, using the boundary rule.
    pub fn extended(&self, values: &[f64], i: isize) -> f64 {
        let n = self.n_x as isize;
        match self.boundary {
            BoundaryRule::Periodic => values[i.rem_euclid(n) as usize],
            BoundaryRule::ZeroExtension if (0..n).contains(&i) => values[i as usize],
            BoundaryRule::ZeroExtension => 0.0,
        }
    }

    /// Piecewise-linear interpolation of node values, with the boundary rule outside `[-L, L]`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let h = self.spacing();
        let s = (x + self.half_width) / h;
        let i = s.floor();
        let theta = s - i;
        let i = i as isize;
        let lo = self.extended(values, i);
        if theta == 0.0 {
            lo
        } else {
            (1.0 - theta) * lo + theta * self.extended(values, i + 1)
        }
    }

    /// Centered differences, one-sided at the ends under zero extension.
    pub fn gradient(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n_x;
        let h = self.spacing();
        (0..n)
            .map(|i| match self.boundary {
                BoundaryRule::Periodic => {
                    (values[(i + 1) % n] - values[(i + n - 1) % n]) / (2.0 * h)
                }
                BoundaryRule::ZeroExtension if i == 0 => (values[1] - values[0]) / h,
                BoundaryRule::ZeroExtension if i == n - 1 => (values[n - 1] - values[n - 2]) / h,
                BoundaryRule::ZeroExtension => (values[i + 1] - values[i - 1]) / (2.0 * h),
            })
            .collect()
    }

    /// Grid inner product `h * sum a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.spacing() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: self.nodes().into_iter().map(f).collect(),
        }
    }
}

/// Values of a function at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return config(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return config(format!("non-finite value at node {i}"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn interpolate(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }
}

/// A grid function for every node of a time grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    times: Arc<Vec<f64>>,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: Grid, times: Arc<Vec<f64>>) -> Self {
        let data = vec![0.0; grid.len() * times.len()];
        Self { grid, times, data }
    }

    pub fn constant(grid: Grid, times: Arc<Vec<f64>>, c: f64) -> Self {
        let data = vec![c; grid.len() * times.len()];
        Self { grid, times, data }
    }

    /// Samples `f(t, x)` at every space-time node.
    pub fn from_fn(grid: Grid, times: Arc<Vec<f64>>, f: impl Fn(f64, f64) -> f64) -> Self {
        let nodes = grid.nodes();
        let data = times
            .iter()
            .flat_map(|&t| nodes.iter().map(move |&x| (t, x)))
            .map(|(t, x)| f(t, x))
            .collect();
        Self { grid, times, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn times(&self) -> &Arc<Vec<f64>> {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.slice(k).to_vec(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            times: Arc::clone(&self.times),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two fields on the same grids.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_layout(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            grid: self.grid,
            times: Arc::clone(&self.times),
            data,
        })
    }

    pub fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.times != other.times {
            return config("fields live on different space or time grids");
        }
        Ok(())
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Writes `t,x,value` rows in time-major order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "x", "value"])?;
        let nodes = self.grid.nodes();
        for (k, t) in self.times.iter().enumerate() {
            for (x, v) in nodes.iter().zip(self.slice(k)) {
                wtr.write_record([t.to_string(), x.to_string(), v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 4, BoundaryRule::Periodic).is_err());
        assert!(Grid::new(1.0, 1, BoundaryRule::Periodic).is_err());
        assert!(Grid::new(0.0, 5, BoundaryRule::Periodic).is_err());
        let g = Grid::new(2.0, 5, BoundaryRule::ZeroExtension).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.node(g.center()), 0.0);
        assert_eq!(g.nodes(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_linear_between() {
        let g = Grid::new(2.0, 5, BoundaryRule::ZeroExtension).unwrap();
        let v = [1.0, 2.0, 4.0, 8.0, 16.0];
        for i in 0..5 {
            assert_eq!(g.interpolate(&v, g.node(i)), v[i]);
        }
        assert_eq!(g.interpolate(&v, 0.5), 6.0);
        assert_eq!(g.interpolate(&v, 2.5), 8.0);
        assert_eq!(g.interpolate(&v, -3.5), 0.0);
        let p = Grid::new(2.0, 5, BoundaryRule::Periodic).unwrap();
        // one period is 5 units
        assert_eq!(p.interpolate(&v, 0.5 + 5.0), 6.0);
        assert_eq!(p.interpolate(&v, 2.5), 8.5);
    }

    #[test]
    fn gradient_of_linear_function() {
        let g = Grid::new(1.0, 9, BoundaryRule::ZeroExtension).unwrap();
        let u = g.sample(|x| 3.0 * x - 1.0);
        for d in g.gradient(&u.values) {
            assert!((d - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn field_slices_and_csv() {
        let g = Grid::new(1.0, 3, BoundaryRule::Periodic).unwrap();
        let f = SpaceTimeField::from_fn(g, Arc::new(vec![0.0, 0.5]), |t, x| t + x);
        assert_eq!(f.slice(1), &[-0.5, 0.5, 1.5]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().nth(4).unwrap(), "0.5,-1,-0.5");
    }

    #[test]
    fn grid_function_rejects_wrong_length() {
        let g = Grid::new(1.0, 3, BoundaryRule::Periodic).unwrap();
        assert!(GridFunction::new(g, vec![0.0; 4]).is_err());
        assert!(GridFunction::new(g, vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
