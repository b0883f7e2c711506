use crate::error::{invalid, Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// The box `[-L, L]^d` with time horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    dim: usize,
    half_width: f64,
    horizon: f64,
}

impl Domain {
    pub fn new(dim: usize, half_width: f64, horizon: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return invalid(format!("dimension must be in 1..={MAX_DIM}, got {dim}"));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return invalid(format!("half width must be positive, got {half_width}"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("time horizon must be positive, got {horizon}"));
        }
        Ok(Self { dim, half_width, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|c| c.abs() <= self.half_width)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.dim, self.half_width, horizon)
    }
}

/// Uniform cell-centered grid on a [`Domain`], plus a time step.
///
/// Cells are numbered with the first axis varying slowest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    domain: Domain,
    n: usize,
    dt: f64,
}

impl Grid {
    pub fn new(domain: Domain, n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return invalid(format!("need at least 2 cells per axis, got {n}"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let steps = domain.horizon() / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return invalid(format!(
                "time step {dt} does not divide the horizon {}",
                domain.horizon()
            ));
        }
        Ok(Self { domain, n, dt })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn h(&self) -> f64 {
        2.0 * self.domain.half_width / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    pub fn steps(&self) -> usize {
        (self.domain.horizon / self.dt).round() as usize
    }

    /// Time nodes `0, dt, …, T`.
    pub fn times(&self) -> Vec<f64> {
        let m = self.steps();
        (0..=m).map(|k| k as f64 * self.domain.horizon / m as f64).collect()
    }

    pub fn multi_index(&self, mut i: usize) -> [usize; MAX_DIM] {
        let d = self.dim();
        let mut idx = [0; MAX_DIM];
        for k in (0..d).rev() {
            idx[k] = i % self.n;
            i /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        -self.domain.half_width + (k as f64 + 0.5) * self.h()
    }

    pub fn center(&self, i: usize, out: &mut [f64]) {
        let idx = self.multi_index(i);
        for (k, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.coordinate(idx[k]);
        }
    }

    /// Same domain and horizon with `n` cells per axis and step `dt`.
    pub fn refined(&self, n: usize, dt: f64) -> Result<Self> {
        Self::new(self.domain, n, dt)
    }
}

/// Cell averages of a density at a single time.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    grid: Grid,
    t: f64,
    values: Vec<f64>,
}

impl GriddedDensity {
    pub fn new(grid: Grid, t: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return invalid(format!("expected {} values, got {}", grid.cells(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "gridded density", time: t });
        }
        Ok(Self { grid, t, values })
    }

    /// Unchecked constructor for values produced by the crate's own solvers.
    pub(crate) fn from_values(grid: Grid, t: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        Self { grid, t, values }
    }

    pub fn zeros(grid: Grid, t: f64) -> Self {
        Self { grid, t, values: vec![0.0; grid.cells()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `h^d Σ u_i`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * crate::par::sum(&self.values)
    }

    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        self.grid.cell_volume() * crate::par::sum(&abs)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `h^d Σ |u_i - v_i|`.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let diff: Vec<f64> =
            self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.grid.cell_volume() * crate::par::sum(&diff))
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, t: self.t, values })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid.n != other.grid.n || self.grid.domain != other.grid.domain {
            return invalid("densities live on different grids");
        }
        Ok(())
    }

    /// Multilinear interpolation between cell centers; zero outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for_each_corner(&self.grid, x, |cell, w| {
            if let Some(i) = cell {
                acc += w * self.values[i];
            }
        });
        acc
    }
}

/// Visits the `2^d` cells surrounding `x` with their multilinear weights.
///
/// `cell` is `None` for stencil entries that fall outside the grid. The
/// weights always sum to one, which is what makes cloud-in-cell deposition
/// mass-exact.
pub(crate) fn for_each_corner(grid: &Grid, x: &[f64], mut visit: impl FnMut(Option<usize>, f64)) {
    let d = grid.dim();
    let h = grid.h();
    let l = grid.domain().half_width();
    let n = grid.n() as i64;
    let mut base = [0i64; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for k in 0..d {
        let s = (x[k] + l) / h - 0.5;
        let fl = s.floor();
        base[k] = fl as i64;
        frac[k] = s - fl;
    }
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0usize;
        let mut inside = true;
        for k in 0..d {
            let up = (corner >> (d - 1 - k)) & 1 == 1;
            let idx = base[k] + up as i64;
            w *= if up { frac[k] } else { 1.0 - frac[k] };
            if idx < 0 || idx >= n {
                inside = false;
            } else {
                flat = flat * grid.n() + idx as usize;
            }
        }
        visit(if inside { Some(flat) } else { None }, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::new(Domain::new(2, 1.0, 1.0).unwrap(), 8, 0.125).unwrap()
    }

    #[test]
    fn domain_rejects_bad_parameters() {
        assert!(Domain::new(0, 1.0, 1.0).is_err());
        assert!(Domain::new(4, 1.0, 1.0).is_err());
        assert!(Domain::new(2, 0.0, 1.0).is_err());
        assert!(Domain::new(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn grid_rejects_non_dividing_step() {
        let d = Domain::new(1, 1.0, 1.0).unwrap();
        assert!(Grid::new(d, 4, 0.3).is_err());
        assert!(Grid::new(d, 1, 0.5).is_err());
        assert!(Grid::new(d, 4, 0.1).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = grid2();
        for i in 0..g.cells() {
            let idx = g.multi_index(i);
            assert_eq!(g.flat_index(&idx[..2]), i);
        }
        let mut p = [0.0; 2];
        g.center(0, &mut p);
        assert_eq!(p, [-0.875, -0.875]);
    }

    #[test]
    fn interpolation_reproduces_linear_functions_inside() {
        let g = grid2();
        let mut vals = vec![0.0; g.cells()];
        let mut p = [0.0; 2];
        for (i, v) in vals.iter_mut().enumerate() {
            g.center(i, &mut p);
            *v = 1.0 + 2.0 * p[0] - p[1];
        }
        let u = GriddedDensity::new(g, 0.0, vals).unwrap();
        let x = [0.31, -0.42];
        assert!((u.interpolate(&x) - (1.0 + 0.62 + 0.42)).abs() < 1e-12);
        assert_eq!(u.interpolate(&[5.0, 0.0]), 0.0);
    }

    #[test]
    fn corner_weights_sum_to_one() {
        let g = grid2();
        for x in [[0.0, 0.0], [0.99, -0.99], [-1.2, 0.3], [0.123, 0.456]] {
            let mut s = 0.0;
            for_each_corner(&g, &x, |_, w| s += w);
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = grid2();
        let mut v = vec![0.0; g.cells()];
        v[3] = f64::NAN;
        assert!(GriddedDensity::new(g, 0.0, v).is_err());
    }
}
