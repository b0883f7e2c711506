//! First-order upwind finite volumes, dimension-split, with copy (outflow)
//! boundary conditions and an explicit Euler source step.

use crate::error::{invalid, Error, Result};
use crate::fields::{Grid, GriddedDensity, ScalarField, VectorField, MAX_DIM};
use crate::lagrangian::InitialData;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FvAudit {
    /// Sub-steps taken per grid time step.
    pub substeps: usize,
    pub dt: f64,
    /// Largest per-axis Courant number met during the run.
    pub max_courant: f64,
    /// Net mass carried out through the box faces.
    pub outflow_mass: f64,
}

fn sampled_speed(b: &VectorField, grid: &Grid) -> f64 {
    let d = grid.dim();
    let times = grid.times();
    let per_cell = crate::par::map(grid.cells(), |i| {
        let mut x = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        grid.center(i, &mut x[..d]);
        let mut m = 0.0f64;
        for &t in &times {
            b.eval(t, &x[..d], &mut v[..d]);
            for c in &v[..d] {
                m = m.max(c.abs());
            }
        }
        m
    });
    crate::par::max(&per_cell).max(0.0)
}

struct Stepper<'a> {
    b: &'a VectorField,
    c: &'a ScalarField,
    grid: &'a Grid,
    dt: f64,
}

impl Stepper<'_> {
    /// One upwind sweep along `axis`; returns (max Courant, net outflow).
    fn sweep(&self, u: &mut [f64], t: f64, axis: usize) -> (f64, f64) {
        let g = self.grid;
        let d = g.dim();
        let n = g.n();
        let h = g.h();
        let stride = n.pow((d - 1 - axis) as u32);
        let upwind = |vel: f64, left: f64, right: f64| if vel >= 0.0 { vel * left } else { vel * right };
        let u_ref: &[f64] = u;
        // (flux through the right face, flux through the left face if on the boundary, |b| on the right face)
        let faces = crate::par::map(g.cells(), |i| {
            let idx = g.multi_index(i);
            let mut x = [0.0; MAX_DIM];
            let mut v = [0.0; MAX_DIM];
            g.center(i, &mut x[..d]);
            let xc = x[axis];
            x[axis] = xc + 0.5 * h;
            self.b.eval(t, &x[..d], &mut v[..d]);
            let vr = v[axis];
            let right = if idx[axis] + 1 < n { u_ref[i + stride] } else { u_ref[i] };
            let fr = upwind(vr, u_ref[i], right);
            let (fl, vl) = if idx[axis] == 0 {
                x[axis] = xc - 0.5 * h;
                self.b.eval(t, &x[..d], &mut v[..d]);
                (upwind(v[axis], u_ref[i], u_ref[i]), v[axis].abs())
            } else {
                (0.0, 0.0)
            };
            (fr, fl, vr.abs().max(vl))
        });
        let ratio = self.dt / h;
        let updated = crate::par::map(g.cells(), |i| {
            let idx_k = (i / stride) % n;
            let left = if idx_k == 0 { faces[i].1 } else { faces[i - stride].0 };
            u_ref[i] - ratio * (faces[i].0 - left)
        });
        u.copy_from_slice(&updated);
        let speed = faces.iter().fold(0.0f64, |m, f| m.max(f.2));
        let boundary: Vec<f64> = (0..g.cells())
            .filter_map(|i| {
                let idx_k = (i / stride) % n;
                let mut net = 0.0;
                let mut on = false;
                if idx_k + 1 == n {
                    net += faces[i].0;
                    on = true;
                }
                if idx_k == 0 {
                    net -= faces[i].1;
                    on = true;
                }
                on.then_some(net)
            })
            .collect();
        let face_area = h.powi(d as i32 - 1);
        (speed * ratio, self.dt * face_area * crate::par::sum(&boundary))
    }

    fn source(&self, u: &mut [f64], t: f64) {
        let g = self.grid;
        let d = g.dim();
        let u_ref: &[f64] = u;
        let updated = crate::par::map(g.cells(), |i| {
            let mut x = [0.0; MAX_DIM];
            g.center(i, &mut x[..d]);
            u_ref[i] * (1.0 + self.dt * self.c.eval(t, &x[..d]))
        });
        u.copy_from_slice(&updated);
    }
}

/// Finite-volume states at every grid time node `0, dt, …, T`.
///
/// Sub-steps are chosen so that `dt_fv = cfl·h / max|b|` (sampled over cell
/// centers and grid times) divides the grid step; exceeding Courant number 1
/// during the run is reported as an error.
pub fn solve_fv_series(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    grid: &Grid,
    cfl: f64,
) -> Result<(Vec<GriddedDensity>, FvAudit)> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return invalid(format!("CFL number must lie in (0, 1], got {cfl}"));
    }
    if b.dim() != grid.dim() {
        return invalid("field and grid dimensions differ");
    }
    let speed = sampled_speed(b, grid);
    let substeps = if speed == 0.0 {
        1
    } else {
        ((grid.dt() * speed / (cfl * grid.h())) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    };
    let dt = grid.dt() / substeps as f64;
    let stepper = Stepper { b, c, grid, dt };
    let times = grid.times();
    let mut u = u0.sample(grid).into_values();
    let mut out = vec![GriddedDensity::new(*grid, 0.0, u.clone())?];
    let mut audit = FvAudit { substeps, dt, max_courant: 0.0, outflow_mass: 0.0 };
    for w in times.windows(2) {
        for s in 0..substeps {
            let t = w[0] + s as f64 * dt;
            for axis in 0..grid.dim() {
                let (courant, outflow) = stepper.sweep(&mut u, t, axis);
                audit.max_courant = audit.max_courant.max(courant);
                audit.outflow_mass += outflow;
                if courant > 1.0 {
                    return Err(Error::Cfl { time: t, courant });
                }
            }
            stepper.source(&mut u, t);
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "finite-volume state", time: t + dt });
            }
        }
        out.push(GriddedDensity::new(*grid, w[1], u.clone())?);
    }
    Ok((out, audit))
}

/// Finite-volume state at the grid horizon.
pub fn solve_fv(
    u0: &InitialData,
    b: &VectorField,
    c: &ScalarField,
    grid: &Grid,
    cfl: f64,
) -> Result<(GriddedDensity, FvAudit)> {
    let (mut series, audit) = solve_fv_series(u0, b, c, grid, cfl)?;
    Ok((series.pop().expect("series is never empty"), audit))
}
