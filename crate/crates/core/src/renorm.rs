//! Renormalization functions, decaying test functions, the weak residual of
//! the renormalized equation and the `Γ_{δ,R}` functional.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::fields::{norm, Grid, GriddedDensity, ScalarField, VectorField, MAX_DIM};

type RealFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Log-spaced admissibility sample grid on `[-1e6, 1e6]`, including 0.
pub fn admissibility_samples() -> Vec<f64> {
    let k = 1201;
    let mut out = vec![0.0];
    for i in 0..k {
        let r = 10f64.powf(-6.0 + 12.0 * i as f64 / (k - 1) as f64);
        out.push(r);
        out.push(-r);
    }
    out
}

/// An admissible `β`: `β(0) = 0`, `β` bounded and `β′(z) z` bounded.
#[derive(Clone)]
pub struct RenormalizationFn {
    beta: Arc<RealFn>,
    dbeta: Arc<RealFn>,
    sup_beta: f64,
    sup_z_dbeta: f64,
}

impl fmt::Debug for RenormalizationFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RenormalizationFn")
            .field("sup_beta", &self.sup_beta)
            .field("sup_z_dbeta", &self.sup_z_dbeta)
            .finish_non_exhaustive()
    }
}

impl RenormalizationFn {
    /// Wraps `β` and `β′`, certifying admissibility on [`admissibility_samples`].
    pub fn new(
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dbeta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_arcs(Arc::new(beta), Arc::new(dbeta))
    }

    fn from_arcs(beta: Arc<RealFn>, dbeta: Arc<RealFn>) -> Result<Self> {
        if beta(0.0) != 0.0 {
            return invalid("renormalization function must vanish at 0");
        }
        let (mut sup_beta, mut sup_z_dbeta) = (0.0f64, 0.0f64);
        for r in admissibility_samples() {
            let (v, w) = (beta(r), r * dbeta(r));
            if !v.is_finite() || !w.is_finite() {
                return invalid(format!("renormalization function is not finite at {r}"));
            }
            sup_beta = sup_beta.max(v.abs());
            sup_z_dbeta = sup_z_dbeta.max(w.abs());
        }
        Ok(Self { beta, dbeta, sup_beta, sup_z_dbeta })
    }

    #[inline]
    pub fn beta(&self, r: f64) -> f64 {
        (self.beta)(r)
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        (self.dbeta)(r)
    }

    /// Sampled `sup |β|`.
    pub fn sup_beta(&self) -> f64 {
        self.sup_beta
    }

    /// Sampled `sup |β′(z) z|`.
    pub fn sup_z_derivative(&self) -> f64 {
        self.sup_z_dbeta
    }

    /// `α·self + other`.
    pub fn combine(&self, alpha: f64, other: &Self) -> Result<Self> {
        let (b1, b2, d1, d2) = (self.beta.clone(), other.beta.clone(), self.dbeta.clone(), other.dbeta.clone());
        Self::from_arcs(
            Arc::new(move |r| alpha * b1(r) + b2(r)),
            Arc::new(move |r| alpha * d1(r) + d2(r)),
        )
    }
}

/// `β_δ(r) = log(1 + arctan(r)²/δ)`.
pub fn beta_delta(delta: f64) -> Result<RenormalizationFn> {
    if !(delta > 0.0) {
        return invalid(format!("δ must be positive, got {delta}"));
    }
    RenormalizationFn::new(
        move |r| (r.atan().powi(2) / delta).ln_1p(),
        move |r| {
            let a = r.atan();
            2.0 * a / ((delta + a * a) * (1.0 + r * r))
        },
    )
}

/// `sup_r β_δ(r) = log(1 + π²/(4δ))`, the value approached as `|r| → ∞`.
pub fn beta_delta_sup(delta: f64) -> f64 {
    (PI * PI / (4.0 * delta)).ln_1p()
}

/// Test function with the decay `|φ| ≤ C(1+|x|)^{-(d+1)}`,
/// `|∇φ| ≤ C(1+|x|)^{-(d+2)}`.
pub trait TestFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn decay_constant(&self) -> f64;
}

/// `φ_R = 2^{-(d+1)}` on `B_R`, `R^{d+1}/(R+|x|)^{d+1}` outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiR {
    radius: f64,
    dim: usize,
}

pub fn phi_r(radius: f64, dim: usize) -> Result<PhiR> {
    if !(radius > 0.0) {
        return invalid(format!("R must be positive, got {radius}"));
    }
    if dim == 0 || dim > MAX_DIM {
        return invalid(format!("dimension {dim} is not supported"));
    }
    Ok(PhiR { radius, dim })
}

impl PhiR {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `‖φ_R‖₁ = ω_d R^d (1 − 2^{-(d+1)})` with `ω_d` the unit-ball volume.
    pub fn l1_norm(&self) -> f64 {
        let d = self.dim as i32;
        unit_ball_volume(self.dim) * self.radius.powi(d) * (1.0 - 0.5f64.powi(d + 1))
    }

    /// Profile as a function of `|x|`.
    pub fn radial(&self, s: f64) -> f64 {
        let p = self.dim as i32 + 1;
        if s < self.radius {
            0.5f64.powi(p)
        } else {
            (self.radius / (self.radius + s)).powi(p)
        }
    }
}

impl TestFn for PhiR {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.radial(norm(x))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = norm(x);
        if s < self.radius {
            out.fill(0.0);
            return;
        }
        let p = self.dim as f64 + 1.0;
        let g = -p * self.radial(s) / (self.radius + s) / s;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = g * xi;
        }
    }

    fn decay_constant(&self) -> f64 {
        let r = self.radius;
        let p = self.dim as i32 + 1;
        // (1+s)/(R+s) is monotone, so its sup over s ≥ R sits at an end.
        let q = ((1.0 + r) / (2.0 * r)).max(1.0);
        let inside = 0.5f64.powi(p) * (1.0 + r).powi(p);
        let outside = r.powi(p) * q.powi(p);
        let grad = (p as f64) * r.powi(p) * q.powi(p + 1);
        inside.max(outside).max(grad)
    }
}

/// Smooth compactly supported `exp(-1/(1-|x-c|²/ρ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    center: Vec<f64>,
    radius: f64,
}

impl Bump {
    pub fn new(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.is_empty() || center.len() > MAX_DIM {
            return invalid("bump needs a positive radius and 1..=3 coordinates");
        }
        Ok(Self { center: center.to_vec(), radius })
    }

    fn s2(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (self.radius * self.radius)
    }
}

impl TestFn for Bump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s2 = self.s2(x);
        if s2 < 1.0 { (-1.0 / (1.0 - s2)).exp() } else { 0.0 }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s2 = self.s2(x);
        if s2 >= 1.0 {
            out.fill(0.0);
            return;
        }
        let v = (-1.0 / (1.0 - s2)).exp();
        let g = -v * 2.0 / ((1.0 - s2) * (1.0 - s2) * self.radius * self.radius);
        for ((o, xi), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = g * (xi - c);
        }
    }

    fn decay_constant(&self) -> f64 {
        // Supported in |x| ≤ |c| + ρ with |φ| ≤ e^{-1} and |∇φ| ≤ 2/ρ.
        let reach = 1.0 + norm(&self.center) + self.radius;
        (reach.powi(self.dim() as i32 + 1) / std::f64::consts::E).max(reach.powi(self.dim() as i32 + 2) * 2.0 / self.radius)
    }
}

pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => unreachable!("dimension is at most {MAX_DIM}"),
    }
}

/// Piecewise-linear time weight: 0 at `start`, 1 at `peak`, 0 at `end`.
/// With `start == peak` it is a half hat equal to 1 at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeHat {
    start: f64,
    peak: f64,
    end: f64,
}

impl TimeHat {
    pub fn new(start: f64, peak: f64, end: f64) -> Result<Self> {
        if !(start <= peak && peak < end) {
            return invalid("time hat needs start ≤ peak < end");
        }
        Ok(Self { start, peak, end })
    }

    /// Half hat from 1 at `t = 0` down to 0 at `end`.
    pub fn initial(end: f64) -> Result<Self> {
        Self::new(0.0, 0.0, end)
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            0.0
        } else if t < self.peak {
            (t - self.start) / (self.peak - self.start)
        } else {
            (self.end - t) / (self.end - self.peak)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            0.0
        } else if t < self.peak {
            1.0 / (self.peak - self.start)
        } else {
            -1.0 / (self.end - self.peak)
        }
    }
}

fn check_series(series: &[GriddedDensity]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::MissingSamples("empty time series".into()));
    }
    if series[0].time() != 0.0 {
        return Err(Error::MissingSamples(format!("series starts at t = {}", series[0].time())));
    }
    let g = series[0].grid();
    for w in series.windows(2) {
        if !(w[1].time() > w[0].time()) {
            return Err(Error::MissingSamples("sample times must increase".into()));
        }
        if w[1].grid().n() != g.n() || w[1].grid().domain() != g.domain() {
            return invalid("series mixes grids");
        }
    }
    Ok(())
}

/// Midpoint quadrature `h^d Σ f(x_i, u_i)`.
fn cell_integral(grid: &Grid, f: impl Fn(&[f64], usize) -> f64 + Sync + Send) -> f64 {
    let d = grid.dim();
    let terms = crate::par::map(grid.cells(), |i| {
        let mut x = [0.0; MAX_DIM];
        grid.center(i, &mut x[..d]);
        f(&x[..d], i)
    });
    grid.cell_volume() * crate::par::sum(&terms)
}

/// Integrand of the renormalized equation that is tested against `ψ` and
/// `∇ψ`: `∇ψ·b β(u) + ψ[∇·b(β(u) − uβ′(u)) + c u β′(u)]`.
fn renormalized_flux(
    u: &GriddedDensity,
    b: &VectorField,
    c: &ScalarField,
    beta: &RenormalizationFn,
    psi: &dyn TestFn,
) -> f64 {
    let t = u.time();
    let d = u.grid().dim();
    let vals = u.values();
    cell_integral(u.grid(), |x, i| {
        let ui = vals[i];
        let (bu, dbu) = (beta.beta(ui), beta.derivative(ui));
        let mut g = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        psi.gradient(x, &mut g[..d]);
        b.eval(t, x, &mut v[..d]);
        let adv: f64 = (0..d).map(|k| g[k] * v[k]).sum();
        let div = b.divergence(t, x);
        adv * bu + psi.value(x) * (div * (bu - ui * dbu) + c.eval(t, x) * ui * dbu)
    })
}

/// Weak residual of the renormalized equation against `χ(t)ψ(x)`:
///
/// `∫ψχ(0)β(u₀) + ∫∫[χ′ψ + χ∇ψ·b]β(u) + ∫∫χψ[∇·b(β(u) − uβ′(u)) + c u β′(u)]`
///
/// by trapezoid in time and midpoint in space. On each interval `∫χ′` is
/// taken exactly, which keeps a kink of `χ` between samples harmless.
#[allow(clippy::too_many_arguments)]
pub fn weak_residual(
    series: &[GriddedDensity],
    u0: &GriddedDensity,
    b: &VectorField,
    c: &ScalarField,
    beta: &RenormalizationFn,
    chi: &TimeHat,
    psi: &dyn TestFn,
) -> Result<f64> {
    check_series(series)?;
    let last = series.last().expect("checked non-empty").time();
    if chi.end() > last * (1.0 + 1e-12) {
        return Err(Error::MissingSamples(format!(
            "test function reaches t = {} but samples stop at {last}",
            chi.end()
        )));
    }
    let b = b.resolved_for(series[0].grid());
    let initial = chi.value(0.0) * cell_integral(u0.grid(), |x, i| psi.value(x) * beta.beta(u0.values()[i]));
    let pairs = crate::par::map(series.len(), |k| {
        let u = &series[k];
        let p = cell_integral(u.grid(), |x, i| psi.value(x) * beta.beta(u.values()[i]));
        (p, renormalized_flux(u, &b, c, beta, psi))
    });
    let mut terms = Vec::with_capacity(series.len());
    for k in 0..series.len() - 1 {
        let (t0, t1) = (series[k].time(), series[k + 1].time());
        let dt = t1 - t0;
        let (c0, c1) = (chi.value(t0), chi.value(t1));
        terms.push(0.5 * (c1 - c0) * (pairs[k].0 + pairs[k + 1].0) + 0.5 * dt * (c0 * pairs[k].1 + c1 * pairs[k + 1].1));
    }
    Ok(initial + crate::par::sum(&terms))
}

/// `Γ_{δ,R} = ∫ φ_R β_δ(u)` by midpoint quadrature.
pub fn gamma(u: &GriddedDensity, delta: f64, radius: f64) -> Result<f64> {
    let beta = beta_delta(delta)?;
    let phi = phi_r(radius, u.grid().dim())?;
    Ok(gamma_with(u, &beta, &phi))
}

pub(crate) fn gamma_with(u: &GriddedDensity, beta: &RenormalizationFn, phi: &PhiR) -> f64 {
    cell_integral(u.grid(), |x, i| phi.value(x) * beta.beta(u.values()[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    /// `(t, centered difference of Γ, right-hand side)` at interior times.
    pub samples: Vec<(f64, f64, f64)>,
    pub max_mismatch: f64,
}

/// Compares the centered time difference of `Γ_{δ,R}` with
/// `∫∇φ_R·b β_δ(u) + ∫φ_R(c − ∇·b)uβ_δ′(u) + ∫φ_R ∇·b β_δ(u)`.
pub fn gamma_derivative_check(
    series: &[GriddedDensity],
    b: &VectorField,
    c: &ScalarField,
    delta: f64,
    radius: f64,
) -> Result<DerivativeCheck> {
    check_series(series)?;
    if series.len() < 3 {
        return Err(Error::MissingSamples("need at least three time samples".into()));
    }
    let beta = beta_delta(delta)?;
    let phi = phi_r(radius, series[0].grid().dim())?;
    let b = b.resolved_for(series[0].grid());
    let gammas: Vec<f64> = series.iter().map(|u| gamma_with(u, &beta, &phi)).collect();
    let samples = crate::par::map(series.len() - 2, |j| {
        let k = j + 1;
        let fd = (gammas[k + 1] - gammas[k - 1]) / (series[k + 1].time() - series[k - 1].time());
        (series[k].time(), fd, renormalized_flux(&series[k], &b, c, &beta, &phi))
    });
    let max_mismatch = samples.iter().fold(0.0f64, |m, s| m.max((s.1 - s.2).abs()));
    Ok(DerivativeCheck { samples, max_mismatch })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceCheck {
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Weak residual of `u₁ − u₂` with zero datum and `β = β_δ`, tested
/// against the half hat on `[0, T]` times `φ_R`; passes iff
/// `|residual| ≤ tolerance`.
#[allow(clippy::too_many_arguments)]
pub fn difference_renormalized_check(
    u1: &[GriddedDensity],
    u2: &[GriddedDensity],
    b: &VectorField,
    c: &ScalarField,
    delta: f64,
    radius: f64,
    tolerance: f64,
) -> Result<DifferenceCheck> {
    if u1.len() != u2.len() {
        return Err(Error::MissingSamples("series lengths differ".into()));
    }
    let diff = u1
        .iter()
        .zip(u2)
        .map(|(a, b)| {
            if (a.time() - b.time()).abs() > 1e-12 {
                return Err(Error::MissingSamples("series sample times differ".into()));
            }
            a.difference(b)
        })
        .collect::<Result<Vec<_>>>()?;
    check_series(&diff)?;
    let zero = GriddedDensity::zeros(*diff[0].grid(), 0.0);
    let beta = beta_delta(delta)?;
    let phi = phi_r(radius, zero.grid().dim())?;
    let chi = TimeHat::initial(diff.last().expect("non-empty").time())?;
    let residual = weak_residual(&diff, &zero, b, c, &beta, &chi, &phi)?;
    Ok(DifferenceCheck { residual, tolerance, pass: residual.abs() <= tolerance })
}
