//! Domains, grids, analytic fields and gridded densities.
//!
//! Points are passed as `&[f64]` slices of length `dim`; all evaluators are
//! pure functions of `(t, x)` and may be shared freely between threads.

mod grid;
mod mollify;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use grid::{Domain, Grid, GriddedDensity, MAX_DIM};
pub(crate) use grid::for_each_corner;
pub use mollify::{mollify, mollify_vector, MOLLIFIER_NODES};
pub use validate::{
    validate_divergence_decomposition, validate_growth, BoundReport, SamplePlan, TAU_DIV,
    TAU_GROWTH,
};

pub type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
pub type VectorFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type TimeFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Integrability classes a field is declared to belong to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Integrability {
    pub l1_spacetime: bool,
    pub linf_space: bool,
    pub bmo_l1_space: bool,
}

#[derive(Clone)]
pub struct ScalarField {
    f: Arc<ScalarFn>,
    tags: Integrability,
    autonomous: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("tags", &self.tags)
            .field("autonomous", &self.autonomous)
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), tags: Integrability::default(), autonomous: false }
    }

    /// A field that does not depend on `t`.
    pub fn spatial(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |_, x| f(x)).autonomous()
    }

    pub fn constant(v: f64) -> Self {
        Self::new(move |_, _| v).autonomous()
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn tagged(mut self, tags: Integrability) -> Self {
        self.tags = tags;
        self
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn tags(&self) -> Integrability {
        self.tags
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.f)(t, x)
    }

    /// Point samples at the cell centers of `grid`.
    pub fn sample(&self, grid: &Grid, t: f64) -> GriddedDensity {
        let d = grid.dim();
        let values = crate::par::map(grid.cells(), |i| {
            let mut p = [0.0; MAX_DIM];
            grid.center(i, &mut p[..d]);
            self.eval(t, &p[..d])
        });
        GriddedDensity::from_values(*grid, t, values)
    }

    /// Pointwise absolute value.
    pub fn abs(&self) -> Self {
        let f = self.f.clone();
        Self { f: Arc::new(move |t, x| f(t, x).abs()), tags: self.tags, autonomous: self.autonomous }
    }
}

/// Growth split `|b(t,x)|/(1+|x|) ≤ b1(t,x) + b2(t)`.
#[derive(Clone)]
pub struct Growth {
    pub b1: ScalarField,
    pub b2: Arc<TimeFn>,
}

impl Growth {
    pub fn new(b1: ScalarField, b2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { b1, b2: Arc::new(b2) }
    }

    pub fn bounded(b2: f64) -> Self {
        Self::new(ScalarField::zero(), move |_| b2)
    }
}

/// Default finite-difference step for divergence when no grid is known.
pub const DEFAULT_DIV_STEP: f64 = 1e-5;

#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: Arc<VectorFn>,
    div: Option<Arc<ScalarFn>>,
    div_step: Option<f64>,
    growth: Option<Growth>,
    autonomous: bool,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_divergence", &self.div.is_some())
            .field("div_step", &self.div_step)
            .field("growth", &self.growth.is_some())
            .finish_non_exhaustive()
    }
}

impl VectorField {
    pub fn new(dim: usize, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f), div: None, div_step: None, growth: None, autonomous: false }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, out| out.fill(0.0))
            .with_divergence(ScalarField::zero())
            .with_growth(Growth::bounded(0.0))
            .autonomous()
    }

    pub fn constant(v: &[f64]) -> Self {
        let v = v.to_vec();
        let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self::new(v.len(), move |_, _, out| out.copy_from_slice(&v))
            .with_divergence(ScalarField::zero())
            .with_growth(Growth::bounded(speed))
            .autonomous()
    }

    /// `b(x) = A x` with `A` given row-major.
    pub fn linear(dim: usize, a: &[f64]) -> Self {
        assert_eq!(a.len(), dim * dim, "matrix must be dim x dim");
        let a = a.to_vec();
        let trace: f64 = (0..dim).map(|i| a[i * dim + i]).sum();
        let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let m = a.clone();
        Self::new(dim, move |_, x, out| {
            for i in 0..dim {
                out[i] = (0..dim).map(|j| m[i * dim + j] * x[j]).sum();
            }
        })
        .with_divergence(ScalarField::constant(trace))
        .with_growth(Growth::bounded(frob))
        .autonomous()
    }

    /// Rigid rotation `(-x2, x1)` in the plane.
    pub fn rotation() -> Self {
        Self::linear(2, &[0.0, -1.0, 1.0, 0.0])
    }

    pub fn with_divergence(mut self, div: ScalarField) -> Self {
        self.div = Some(div.f);
        self
    }

    pub fn with_div_step(mut self, h: f64) -> Self {
        self.div_step = Some(h);
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn without_growth(mut self) -> Self {
        self.growth = None;
        self
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> Option<&Growth> {
        self.growth.as_ref()
    }

    pub fn has_analytic_divergence(&self) -> bool {
        self.div.is_some()
    }

    /// Sets the finite-difference divergence step to `h/2` unless one is set.
    pub fn resolved_for(&self, grid: &Grid) -> Self {
        let mut out = self.clone();
        if out.div_step.is_none() {
            out.div_step = Some(grid.h() / 2.0);
        }
        out
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }

    pub fn norm(&self, t: f64, x: &[f64]) -> f64 {
        let mut v = [0.0; MAX_DIM];
        self.eval(t, x, &mut v[..self.dim]);
        v[..self.dim].iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Analytic divergence if supplied, else a centered second-order difference.
    pub fn divergence(&self, t: f64, x: &[f64]) -> f64 {
        if let Some(div) = &self.div {
            return div(t, x);
        }
        let h = self.div_step.unwrap_or(DEFAULT_DIV_STEP);
        let d = self.dim;
        let mut p = [0.0; MAX_DIM];
        let mut vp = [0.0; MAX_DIM];
        let mut vm = [0.0; MAX_DIM];
        p[..d].copy_from_slice(x);
        let mut acc = 0.0;
        for k in 0..d {
            p[k] = x[k] + h;
            self.eval(t, &p[..d], &mut vp[..d]);
            p[k] = x[k] - h;
            self.eval(t, &p[..d], &mut vm[..d]);
            p[k] = x[k];
            acc += (vp[k] - vm[k]) / (2.0 * h);
        }
        acc
    }

    /// The divergence as a scalar field.
    pub fn divergence_field(&self) -> ScalarField {
        let me = self.clone();
        let sf = ScalarField::new(move |t, x| me.divergence(t, x));
        if self.autonomous {
            sf.autonomous()
        } else {
            sf
        }
    }
}

/// `|∇·b| ≤ d1 + d2` with `d1` bounded in space and `d2` in BMO ∩ L¹.
#[derive(Debug, Clone)]
pub struct DivergenceDecomposition {
    pub d1: ScalarField,
    pub d2: ScalarField,
}

impl DivergenceDecomposition {
    pub fn new(d1: ScalarField, d2: ScalarField) -> Self {
        Self { d1, d2 }
    }

    pub fn bounded(d1: ScalarField) -> Self {
        Self { d1, d2: ScalarField::zero() }
    }
}

/// Euclidean norm of a point.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_divergence_of_linear_field_is_trace() {
        let b = VectorField::new(2, |_, x, out| {
            out[0] = 2.0 * x[0] + x[1];
            out[1] = -x[0] + 0.5 * x[1];
        });
        let div = b.divergence(0.0, &[0.3, -0.7]);
        assert!((div - 2.5).abs() < 1e-9, "{div}");
    }

    #[test]
    fn fd_divergence_of_solenoidal_field_is_second_order() {
        // b = ∇^⊥ ψ with ψ = sin(x) sin(y): analytically divergence free.
        let b = VectorField::new(2, |_, x, out| {
            out[0] = -(x[0].sin() * x[1].cos());
            out[1] = x[0].cos() * x[1].sin();
        });
        let mut errs = vec![];
        for &h in &[0.1, 0.05] {
            let bh = b.clone().with_div_step(h);
            let mut worst = 0.0f64;
            for i in 0..20 {
                for j in 0..20 {
                    let p = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64];
                    worst = worst.max(bh.divergence(0.0, &p).abs());
                }
            }
            errs.push(worst);
        }
        // Exact cancellation makes both tiny; the bound is C h^2.
        assert!(errs[0] <= 0.1 * 0.1 && errs[1] <= 0.05 * 0.05);
    }

    #[test]
    fn resolved_for_uses_half_cell() {
        let g = Grid::new(Domain::new(1, 1.0, 1.0).unwrap(), 10, 0.1).unwrap();
        let b = VectorField::new(1, |_, x, o| o[0] = x[0] * x[0]).resolved_for(&g);
        assert!(format!("{b:?}").contains("Some(0.1)"));
    }
}
