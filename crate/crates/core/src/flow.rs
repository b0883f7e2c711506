//! Characteristics of `b`: positions by classical RK4, with the log-Jacobian
//! and the damping integral carried as two extra state components.
//!
//! Along a trajectory `d(log JX)/dt = (∇·b)(t, X)` and `d(dampInt)/dt =
//! c(t, X)`; integrating them inside the same RK4 step makes both
//! quadratures Simpson-consistent with the positions they are sampled at.

use crate::error::{invalid, Error, Result};
use crate::fields::{Domain, Grid, ScalarField, VectorField, MAX_DIM};

/// `1/JX` is refused below this Jacobian.
pub const JACOBIAN_FLOOR: f64 = 1e-12;

/// Default perturbation for the finite-difference Jacobian.
pub const JACOBIAN_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From time 0 to `t`.
    Forward,
    /// From time `t` back to 0.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitPolicy {
    /// Leaving the box is an error.
    Error,
    /// Keep integrating outside the box; the caller audits exits.
    Allow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    pub domain: Domain,
    pub exit: ExitPolicy,
}

impl FlowOptions {
    pub fn new(dt: f64, domain: Domain) -> Self {
        Self { dt, domain, exit: ExitPolicy::Error }
    }

    pub fn allow_exit(mut self) -> Self {
        self.exit = ExitPolicy::Allow;
        self
    }
}

/// Seed points with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Seeds {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Seeds {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM || points.len() % dim != 0 {
            return invalid("seed coordinates do not match the dimension");
        }
        if weights.len() != points.len() / dim {
            return invalid("one weight per seed is required");
        }
        Ok(Self { dim, points, weights })
    }

    /// Unit-weight seeds.
    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { points.len() / dim };
        Self::new(dim, points, vec![1.0; n])
    }

    /// Cell centers of `grid`, each weighted by the cell volume.
    pub fn grid_centers(grid: &Grid) -> Self {
        let d = grid.dim();
        let mut points = vec![0.0; grid.cells() * d];
        for (i, chunk) in points.chunks_mut(d).enumerate() {
            grid.center(i, chunk);
        }
        Self { dim: d, points, weights: vec![grid.cell_volume(); grid.cells()] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// One sampled characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: Vec<f64>,
    /// Positions at each time node, flattened `nodes × dim`.
    pub positions: Vec<f64>,
    pub log_j: Vec<f64>,
    pub damp_int: Vec<f64>,
}

impl Trajectory {
    pub fn position(&self, k: usize) -> &[f64] {
        let d = self.seed.len();
        &self.positions[k * d..(k + 1) * d]
    }

    pub fn end(&self) -> &[f64] {
        self.position(self.log_j.len() - 1)
    }

    pub fn jacobian(&self, k: usize) -> f64 {
        self.log_j[k].exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub dim: usize,
    pub direction: Direction,
    /// Shared time nodes; decreasing for backward maps.
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

/// Endpoint of a characteristic: position, accumulated log-Jacobian and
/// damping integral, and whether it ever left the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Endpoint {
    pub state: [f64; MAX_DIM + 2],
    pub exited: bool,
}

pub(crate) fn step_count(span: f64, dt: f64) -> usize {
    if span == 0.0 {
        return 0;
    }
    let r = span.abs() / dt;
    let k = if (r - r.round()).abs() <= 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
    (k as usize).max(1)
}

struct System<'a> {
    b: &'a VectorField,
    c: Option<&'a ScalarField>,
    dim: usize,
}

impl System<'_> {
    #[inline]
    fn rhs(&self, t: f64, s: &[f64; MAX_DIM + 2], out: &mut [f64; MAX_DIM + 2]) {
        let d = self.dim;
        self.b.eval(t, &s[..d], &mut out[..d]);
        out[d] = self.b.divergence(t, &s[..d]);
        out[d + 1] = self.c.map_or(0.0, |c| c.eval(t, &s[..d]));
    }

    fn rk4(&self, t: f64, h: f64, s: &mut [f64; MAX_DIM + 2]) {
        let n = self.dim + 2;
        let mut k1 = [0.0; MAX_DIM + 2];
        let mut k2 = [0.0; MAX_DIM + 2];
        let mut k3 = [0.0; MAX_DIM + 2];
        let mut k4 = [0.0; MAX_DIM + 2];
        let mut tmp = [0.0; MAX_DIM + 2];
        self.rhs(t, s, &mut k1);
        for i in 0..n {
            tmp[i] = s[i] + 0.5 * h * k1[i];
        }
        self.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = s[i] + 0.5 * h * k2[i];
        }
        self.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = s[i] + h * k3[i];
        }
        self.rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Integrates one characteristic from `(t0, seed)` to time `t1` (either
/// order), optionally recording every node.
#[allow(clippy::too_many_arguments)]
pub(crate) fn characteristic(
    b: &VectorField,
    c: Option<&ScalarField>,
    seed_index: usize,
    seed: &[f64],
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
    mut record: Option<&mut Vec<[f64; MAX_DIM + 2]>>,
) -> Result<Endpoint> {
    let d = seed.len();
    let sys = System { b, c, dim: d };
    let steps = step_count(t1 - t0, opts.dt);
    let h = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };
    let mut s = [0.0; MAX_DIM + 2];
    s[..d].copy_from_slice(seed);
    if let Some(rec) = record.as_deref_mut() {
        rec.push(s);
    }
    let mut exited = !opts.domain.contains(seed);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        sys.rk4(t, h, &mut s);
        let t_next = if k + 1 == steps { t1 } else { t + h };
        if s[..d + 2].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "characteristic", time: t_next });
        }
        if !opts.domain.contains(&s[..d]) {
            if opts.exit == ExitPolicy::Error {
                return Err(Error::DomainExit { seed: seed_index, time: t_next });
            }
            exited = true;
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(s);
        }
    }
    Ok(Endpoint { state: s, exited })
}

/// Integrates the characteristic ODE from every seed.
///
/// Forward maps run from 0 to `t_end`; backward maps start at `t_end` and
/// integrate the time-reversed field down to 0, so their `log_j` and
/// `damp_int` are the log-Jacobian and damping integral of the inverse map.
pub fn integrate_flow(
    b: &VectorField,
    c: &ScalarField,
    seeds: &Seeds,
    t_end: f64,
    direction: Direction,
    opts: &FlowOptions,
) -> Result<FlowMap> {
    if !(opts.dt > 0.0) {
        return invalid(format!("time step must be positive, got {}", opts.dt));
    }
    if seeds.dim() != b.dim() {
        return invalid("seed dimension differs from the field dimension");
    }
    let (t0, t1) = match direction {
        Direction::Forward => (0.0, t_end),
        Direction::Backward => (t_end, 0.0),
    };
    let steps = step_count(t1 - t0, opts.dt);
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { t1 } else { t0 + (t1 - t0) * k as f64 / steps as f64 })
        .collect();
    let d = seeds.dim();
    let trajectories = crate::par::try_map(seeds.len(), |i| {
        let mut rec = Vec::with_capacity(steps + 1);
        characteristic(b, Some(c), i, seeds.point(i), t0, t1, opts, Some(&mut rec))?;
        let mut positions = Vec::with_capacity(rec.len() * d);
        for s in &rec {
            positions.extend_from_slice(&s[..d]);
        }
        Ok::<_, Error>(Trajectory {
            seed: seeds.point(i).to_vec(),
            positions,
            log_j: rec.iter().map(|s| s[d]).collect(),
            damp_int: rec.iter().map(|s| s[d + 1]).collect(),
        })
    })?;
    Ok(FlowMap { dim: d, direction, times, weights: seeds.weights.clone(), trajectories })
}

/// `X(t,·)^{-1}(x)`, by integrating the characteristic backward from `(t, x)`.
pub fn inverse_point(b: &VectorField, t: f64, x: &[f64], opts: &FlowOptions) -> Result<Vec<f64>> {
    let end = characteristic(b, None, 0, x, t, 0.0, opts, None)?;
    Ok(end.state[..x.len()].to_vec())
}

/// `X(t,·)(x)`, by forward integration.
pub fn forward_point(b: &VectorField, t: f64, x: &[f64], opts: &FlowOptions) -> Result<Vec<f64>> {
    let end = characteristic(b, None, 0, x, 0.0, t, opts, None)?;
    Ok(end.state[..x.len()].to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// `|exp(logJ) - det ∂X/∂x| / exp(logJ)` per seed.
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
}

fn determinant(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!("dimension is at most {MAX_DIM}"),
    }
}

/// Compares the Liouville-accumulated Jacobian with the determinant of the
/// centered finite-difference matrix `∂X(t,x)/∂x` (perturbation `h_j`).
pub fn jacobian_consistency(
    b: &VectorField,
    t: f64,
    seeds: &Seeds,
    opts: &FlowOptions,
    h_j: f64,
) -> Result<JacobianReport> {
    if !(h_j > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let d = seeds.dim();
    let discrepancies = crate::par::try_map(seeds.len(), |i| {
        let x = seeds.point(i);
        let base = characteristic(b, None, i, x, 0.0, t, opts, None)?;
        let jac = base.state[d].exp();
        let mut m = [0.0; MAX_DIM * MAX_DIM];
        let mut p = [0.0; MAX_DIM];
        for j in 0..d {
            p[..d].copy_from_slice(x);
            p[j] = x[j] + h_j;
            let plus = characteristic(b, None, i, &p[..d], 0.0, t, opts, None)?;
            p[j] = x[j] - h_j;
            let minus = characteristic(b, None, i, &p[..d], 0.0, t, opts, None)?;
            for r in 0..d {
                m[r * d + j] = (plus.state[r] - minus.state[r]) / (2.0 * h_j);
            }
        }
        let det = determinant(&m[..d * d], d);
        Ok::<_, Error>((jac - det).abs() / jac)
    })?;
    let max_discrepancy = crate::par::max(&discrepancies).max(0.0);
    Ok(JacobianReport { discrepancies, max_discrepancy })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressibilityReport {
    /// `∫∫ |c(τ, X(τ,x))| dτ dx` over the seeds.
    pub transported: f64,
    /// `∫∫ |c(τ, x)| dτ dx` on the same seeds and time nodes.
    pub eulerian: f64,
    /// `transported / eulerian`, or 1 when both vanish.
    pub ratio: f64,
}

/// Estimates the compression constant `C` with
/// `∫∫|c(τ,X(τ,x))| ≤ C ∫∫|c(τ,x)|` by trapezoid-in-time quadrature.
pub fn compressibility_audit(flow: &FlowMap, c: &ScalarField) -> CompressibilityReport {
    let times = &flow.times;
    let per_seed = crate::par::map(flow.trajectories.len(), |i| {
        let tr = &flow.trajectories[i];
        let (mut moved, mut fixed) = (0.0, 0.0);
        for k in 0..times.len().saturating_sub(1) {
            let dt = (times[k + 1] - times[k]).abs();
            moved += 0.5
                * dt
                * (c.eval(times[k], tr.position(k)).abs()
                    + c.eval(times[k + 1], tr.position(k + 1)).abs());
            fixed += 0.5
                * dt
                * (c.eval(times[k], &tr.seed).abs() + c.eval(times[k + 1], &tr.seed).abs());
        }
        (flow.weights[i] * moved, flow.weights[i] * fixed)
    });
    let moved: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
    let fixed: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
    let transported = crate::par::sum(&moved);
    let eulerian = crate::par::sum(&fixed);
    let ratio = if transported == 0.0 && eulerian == 0.0 { 1.0 } else { transported / eulerian };
    CompressibilityReport { transported, eulerian, ratio }
}
