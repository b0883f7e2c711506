//! Numerical checks of the structural hypotheses on `b`.

use super::{norm, DivergenceDecomposition, Grid, VectorField, MAX_DIM};
use crate::error::{Error, Result};

/// Relative tolerance for the growth bound.
pub const TAU_GROWTH: f64 = 1e-8;
/// Relative tolerance for the divergence decomposition.
pub const TAU_DIV: f64 = 1e-8;

/// Tensor grid of cell centers times a list of sample times.
#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub grid: Grid,
    pub times: Vec<f64>,
}

impl SamplePlan {
    /// Cell centers of `grid` at `n_times` uniformly spaced times in `[0, T]`.
    pub fn uniform(grid: Grid, n_times: usize) -> Self {
        let t_end = grid.domain().horizon();
        let times = if n_times <= 1 {
            vec![0.0]
        } else {
            (0..n_times).map(|k| t_end * k as f64 / (n_times - 1) as f64).collect()
        };
        Self { grid, times }
    }

    fn len(&self) -> usize {
        self.grid.cells() * self.times.len()
    }

    fn point(&self, s: usize, out: &mut [f64]) -> f64 {
        let cells = self.grid.cells();
        self.grid.center(s % cells, out);
        self.times[s / cells]
    }
}

/// Outcome of a pointwise `lhs ≤ rhs` audit.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `max(lhs - rhs)` over all samples.
    pub max_deficit: f64,
    /// Sampled sup of the left-hand side; the tolerance is relative to it.
    pub lhs_sup: f64,
    pub tolerance: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

fn audit(
    plan: &SamplePlan,
    tau: f64,
    sample: impl Fn(f64, &[f64]) -> (f64, f64) + Sync + Send,
) -> BoundReport {
    let d = plan.grid.dim();
    let rows = crate::par::map(plan.len(), |s| {
        let mut p = [0.0; MAX_DIM];
        let t = plan.point(s, &mut p[..d]);
        sample(t, &p[..d])
    });
    let mut max_deficit = f64::NEG_INFINITY;
    let mut lhs_sup = 0.0f64;
    let mut worst = 0;
    for (s, &(lhs, rhs)) in rows.iter().enumerate() {
        lhs_sup = lhs_sup.max(lhs.abs());
        let deficit = lhs - rhs;
        if deficit > max_deficit {
            max_deficit = deficit;
            worst = s;
        }
    }
    let mut p = vec![0.0; d];
    let worst_time = plan.point(worst, &mut p);
    let tolerance = tau * lhs_sup;
    BoundReport {
        max_deficit,
        lhs_sup,
        tolerance,
        worst_time,
        worst_point: p,
        pass: max_deficit <= tolerance,
    }
}

/// Checks `|b(t,x)|/(1+|x|) ≤ b1(t,x) + b2(t)` on the sample plan.
pub fn validate_growth(b: &VectorField, plan: &SamplePlan) -> Result<BoundReport> {
    let growth = b
        .growth()
        .ok_or_else(|| Error::Config("vector field carries no growth decomposition".into()))?;
    Ok(audit(plan, TAU_GROWTH, |t, x| {
        let lhs = b.norm(t, x) / (1.0 + norm(x));
        (lhs, growth.b1.eval(t, x) + (growth.b2)(t))
    }))
}

/// Checks `|∇·b(t,x)| ≤ d1(t,x) + d2(t,x)` on the sample plan.
pub fn validate_divergence_decomposition(
    b: &VectorField,
    dec: &DivergenceDecomposition,
    plan: &SamplePlan,
) -> Result<BoundReport> {
    let b = b.resolved_for(&plan.grid);
    Ok(audit(plan, TAU_DIV, |t, x| {
        (b.divergence(t, x).abs(), dec.d1.eval(t, x) + dec.d2.eval(t, x))
    }))
}

#[cfg(test)]
mod tests {
    use super::super::{Domain, Growth, ScalarField};
    use super::*;

    fn plan(dim: usize) -> SamplePlan {
        let g = Grid::new(Domain::new(dim, 2.0, 1.0).unwrap(), 16, 0.25).unwrap();
        SamplePlan::uniform(g, 3)
    }

    fn identity_field(dim: usize) -> VectorField {
        VectorField::new(dim, |_, x, out| out.copy_from_slice(x)).autonomous()
    }

    #[test]
    fn zero_field_passes_with_zero_deficit() {
        let r = validate_growth(&VectorField::zero(2), &plan(2)).unwrap();
        assert_eq!(r.max_deficit, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn identity_field_is_bounded_growth() {
        let b = identity_field(2).with_growth(Growth::bounded(1.0));
        let r = validate_growth(&b, &plan(2)).unwrap();
        assert!(r.max_deficit <= 0.0 && r.pass);
    }

    #[test]
    fn identity_field_violates_zero_growth() {
        let b = identity_field(2).with_growth(Growth::bounded(0.0));
        let r = validate_growth(&b, &plan(2)).unwrap();
        assert!(r.max_deficit > 0.0 && !r.pass);
    }

    #[test]
    fn missing_growth_is_a_configuration_error() {
        assert!(matches!(validate_growth(&identity_field(1), &plan(1)), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_free_with_zero_bound_passes() {
        let dec = DivergenceDecomposition::bounded(ScalarField::zero());
        let r = validate_divergence_decomposition(&VectorField::rotation(), &dec, &plan(2)).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn identity_field_divergence_equals_dimension() {
        for dim in 1..=3 {
            let b = identity_field(dim);
            let ok = DivergenceDecomposition::bounded(ScalarField::constant(dim as f64));
            let r = validate_divergence_decomposition(&b, &ok, &plan(dim)).unwrap();
            assert!(r.pass, "dim {dim}: {r:?}");
            assert!(r.max_deficit.abs() < 1e-9);
            let bad = DivergenceDecomposition::bounded(ScalarField::constant(dim as f64 - 1.0));
            assert!(!validate_divergence_decomposition(&b, &bad, &plan(dim)).unwrap().pass);
        }
    }

    #[test]
    fn enlarging_bounds_never_flips_pass_to_fail() {
        let b = identity_field(2).with_growth(Growth::bounded(1.0));
        let bigger = identity_field(2)
            .with_growth(Growth::new(ScalarField::spatial(|x| x[0].abs()), |_| 1.5));
        assert!(validate_growth(&b, &plan(2)).unwrap().pass);
        assert!(validate_growth(&bigger, &plan(2)).unwrap().pass);
    }
}
