//! Solutions built from the flow: the backward-characteristics
//! representation formula and the particle pushforward.

use crate::error::{invalid, Error, Result};
use crate::fields::{for_each_corner, Grid, GriddedDensity, ScalarField, VectorField, MAX_DIM};
use crate::flow::{characteristic, FlowOptions, JACOBIAN_FLOOR};

/// Initial datum, either analytic or on a grid (interpolated multilinearly).
#[derive(Debug, Clone)]
pub enum InitialData {
    Field(ScalarField),
    Gridded(GriddedDensity),
}

impl InitialData {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialData::Field(f) => f.eval(0.0, x),
            InitialData::Gridded(g) => g.interpolate(x),
        }
    }

    /// Cell-center samples on `grid`.
    pub fn sample(&self, grid: &Grid) -> GriddedDensity {
        match self {
            InitialData::Field(f) => f.sample(grid, 0.0),
            InitialData::Gridded(g) if g.grid().n() == grid.n() && g.grid().domain() == grid.domain() => {
                g.clone().with_time(0.0)
            }
            InitialData::Gridded(_) => {
                let d = grid.dim();
                let values = crate::par::map(grid.cells(), |i| {
                    let mut p = [0.0; MAX_DIM];
                    grid.center(i, &mut p[..d]);
                    self.eval(&p[..d])
                });
                GriddedDensity::from_values(*grid, 0.0, values)
            }
        }
    }
}

impl From<ScalarField> for InitialData {
    fn from(f: ScalarField) -> Self {
        InitialData::Field(f)
    }
}

impl From<GriddedDensity> for InitialData {
    fn from(g: GriddedDensity) -> Self {
        InitialData::Gridded(g)
    }
}

/// Bookkeeping that accompanies a Lagrangian solution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LagrangianAudit {
    /// Characteristics that left the box at some node.
    pub exited: usize,
    /// Mass deposited outside the grid (pushforward only).
    pub outflow_mass: f64,
}

/// `u(t, x) = u₀(y) / JX(t, y) · exp(∫₀ᵗ c(τ, X(τ, y)) dτ)` with
/// `y = X⁻¹(t, ·)(x)`, evaluated at every cell center.
///
/// The backward characteristic from `(t, x)` accumulates `-log JX(t, y)` and
/// `-∫c`, so both factors come from the same trajectory as `y`.
pub fn solve_representation(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    t: f64,
    grid: &Grid,
    opts: &FlowOptions,
) -> Result<(GriddedDensity, LagrangianAudit)> {
    if b.dim() != grid.dim() {
        return invalid("field and grid dimensions differ");
    }
    let b = b.resolved_for(grid);
    let d = grid.dim();
    let cells = crate::par::try_map(grid.cells(), |i| {
        let mut x = [0.0; MAX_DIM];
        grid.center(i, &mut x[..d]);
        let end = characteristic(&b, Some(c), i, &x[..d], t, 0.0, opts, None)?;
        let jac = (-end.state[d]).exp();
        if jac < JACOBIAN_FLOOR {
            return Err(Error::JacobianFloor { seed: i, jacobian: jac, floor: JACOBIAN_FLOOR });
        }
        let value = u0.eval(&end.state[..d]) * (end.state[d] - end.state[d + 1]).exp();
        Ok((value, end.exited))
    })?;
    let exited = cells.iter().filter(|c| c.1).count();
    let values = cells.into_iter().map(|c| c.0).collect();
    let density = GriddedDensity::new(*grid, t, values)?;
    Ok((density, LagrangianAudit { exited, outflow_mass: 0.0 }))
}

/// Representation solutions at each of `times`.
pub fn representation_series(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    times: &[f64],
    grid: &Grid,
    opts: &FlowOptions,
) -> Result<Vec<GriddedDensity>> {
    times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                Ok(u0.sample(grid))
            } else {
                solve_representation(u0, b, c, t, grid, opts).map(|s| s.0)
            }
        })
        .collect()
}

/// Particles on a stratified `k^d` lattice inside each cell.
struct Particles {
    dim: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

fn seed_particles(u0: &InitialData, grid: &Grid, per_axis: usize) -> Particles {
    let d = grid.dim();
    let per_cell = per_axis.pow(d as u32);
    let h = grid.h();
    let w0 = grid.cell_volume() / per_cell as f64;
    let data = crate::par::map(grid.cells() * per_cell, |p| {
        let (cell, mut sub) = (p / per_cell, p % per_cell);
        let mut x = [0.0; MAX_DIM];
        grid.center(cell, &mut x[..d]);
        for k in (0..d).rev() {
            let j = sub % per_axis;
            sub /= per_axis;
            x[k] += ((j as f64 + 0.5) / per_axis as f64 - 0.5) * h;
        }
        (x, u0.eval(&x[..d]) * w0)
    });
    let mut positions = Vec::with_capacity(data.len() * d);
    let mut weights = Vec::with_capacity(data.len());
    for (x, w) in data {
        positions.extend_from_slice(&x[..d]);
        weights.push(w);
    }
    Particles { dim: d, positions, weights }
}

/// Cloud-in-cell deposition with the interpolation weights. Contributions
/// are computed in parallel and added in particle order, so the result does
/// not depend on the worker count.
fn deposit(grid: &Grid, t: f64, positions: &[f64], masses: &[f64]) -> (GriddedDensity, f64) {
    let d = grid.dim();
    let corners = 1usize << d;
    let contributions = crate::par::map(masses.len(), |p| {
        let mut out = [(usize::MAX, 0.0); 1 << MAX_DIM];
        let mut k = 0;
        for_each_corner(grid, &positions[p * d..(p + 1) * d], |cell, w| {
            out[k] = (cell.unwrap_or(usize::MAX), w * masses[p]);
            k += 1;
        });
        out
    });
    let mut values = vec![0.0; grid.cells()];
    let mut outflow = 0.0;
    let inv = 1.0 / grid.cell_volume();
    for c in &contributions {
        for &(cell, m) in &c[..corners] {
            if cell == usize::MAX {
                outflow += m;
            } else {
                values[cell] += m * inv;
            }
        }
    }
    (GriddedDensity::from_values(*grid, t, values), outflow)
}

/// Pushforward solutions at every node of the forward flow from 0 to `t`.
///
/// Particles carry `u₀(x_p) h^d / k^d`, are advected by RK4, reweighted by
/// `exp(dampInt)` and deposited by cloud-in-cell.
pub fn pushforward_series(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    t: f64,
    grid: &Grid,
    per_axis: usize,
    opts: &FlowOptions,
) -> Result<Vec<(GriddedDensity, LagrangianAudit)>> {
    if per_axis == 0 {
        return invalid("at least one particle per axis is required");
    }
    if b.dim() != grid.dim() {
        return invalid("field and grid dimensions differ");
    }
    let b = b.resolved_for(grid);
    let parts = seed_particles(u0, grid, per_axis);
    let d = parts.dim;
    let tracks = crate::par::try_map(parts.weights.len(), |p| {
        let mut rec = Vec::new();
        let end = characteristic(&b, Some(c), p, &parts.positions[p * d..(p + 1) * d], 0.0, t, opts, Some(&mut rec))?;
        Ok::<_, Error>((rec, end.exited))
    })?;
    let nodes = tracks.first().map_or(1, |tr| tr.0.len());
    let steps = nodes - 1;
    let mut out = Vec::with_capacity(nodes);
    let exited_by: Vec<usize> = (0..nodes)
        .map(|k| {
            tracks
                .iter()
                .filter(|tr| tr.0[..=k].iter().any(|s| !opts.domain.contains(&s[..d])))
                .count()
        })
        .collect();
    for k in 0..nodes {
        let time = if k == steps { t } else { t * k as f64 / steps.max(1) as f64 };
        let mut positions = Vec::with_capacity(tracks.len() * d);
        let mut masses = Vec::with_capacity(tracks.len());
        for (p, tr) in tracks.iter().enumerate() {
            let s = &tr.0[k];
            positions.extend_from_slice(&s[..d]);
            masses.push(parts.weights[p] * s[d + 1].exp());
        }
        let (density, outflow_mass) = deposit(grid, time, &positions, &masses);
        if !density.is_finite() {
            return Err(Error::NonFinite { what: "pushforward density", time });
        }
        out.push((density, LagrangianAudit { exited: exited_by[k], outflow_mass }));
    }
    Ok(out)
}

/// Pushforward solution at time `t`.
pub fn solve_pushforward(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    t: f64,
    grid: &Grid,
    per_axis: usize,
    opts: &FlowOptions,
) -> Result<(GriddedDensity, LagrangianAudit)> {
    let mut series = pushforward_series(u0, b, c, t, grid, per_axis, opts)?;
    Ok(series.pop().expect("series has at least one node"))
}

/// `h^d Σ |u_rep - u_push|`.
pub fn cross_validate(rep: &GriddedDensity, push: &GriddedDensity) -> Result<f64> {
    rep.l1_distance(push)
}
