//! Regularization by convolution with a smooth compactly supported bump.
//!
//! The kernel is a tensor product of the 1-D bump `exp(-1/(1-s²))` on
//! `(-ε, ε)`, discretized on a fixed symmetric midpoint stencil whose
//! weights are normalized to sum to one. Symmetry makes every odd discrete
//! moment vanish, so affine fields pass through unchanged up to round-off.

use std::sync::Arc;

use super::{ScalarField, VectorField, MAX_DIM};
use crate::error::{invalid, Result};

/// Stencil nodes per axis.
pub const MOLLIFIER_NODES: usize = 16;

struct Stencil {
    offsets: [f64; MOLLIFIER_NODES],
    weights: [f64; MOLLIFIER_NODES],
}

impl Stencil {
    fn new(eps: f64) -> Self {
        let m = MOLLIFIER_NODES as f64;
        let mut offsets = [0.0; MOLLIFIER_NODES];
        let mut weights = [0.0; MOLLIFIER_NODES];
        for k in 0..MOLLIFIER_NODES {
            let s = -1.0 + (2.0 * k as f64 + 1.0) / m;
            offsets[k] = eps * s;
            weights[k] = (-1.0 / (1.0 - s * s)).exp();
        }
        // Symmetrize explicitly so w_k == w_{M-1-k} bit for bit.
        for k in 0..MOLLIFIER_NODES / 2 {
            let w = weights[k];
            weights[MOLLIFIER_NODES - 1 - k] = w;
            offsets[MOLLIFIER_NODES - 1 - k] = -offsets[k];
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { offsets, weights }
    }

    /// Calls `visit(shift, weight)` for every tensor-product node.
    fn for_each(&self, dim: usize, mut visit: impl FnMut(&[f64], f64)) {
        let total = MOLLIFIER_NODES.pow(dim as u32);
        let mut shift = [0.0; MAX_DIM];
        for node in 0..total {
            let mut rest = node;
            let mut w = 1.0;
            for s in shift.iter_mut().take(dim) {
                let k = rest % MOLLIFIER_NODES;
                rest /= MOLLIFIER_NODES;
                *s = self.offsets[k];
                w *= self.weights[k];
            }
            visit(&shift[..dim], w);
        }
    }
}

/// `f(t,·) * ρ_ε` for a scalar field on `ℝ^dim`.
pub fn mollify(f: &ScalarField, dim: usize, eps: f64) -> Result<ScalarField> {
    if !(eps > 0.0) {
        return invalid(format!("mollification radius must be positive, got {eps}"));
    }
    let stencil = Arc::new(Stencil::new(eps));
    let inner = f.clone();
    let out = ScalarField::new(move |t, x| {
        let mut p = [0.0; MAX_DIM];
        let mut acc = 0.0;
        stencil.for_each(dim, |shift, w| {
            for k in 0..dim {
                p[k] = x[k] - shift[k];
            }
            acc += w * inner.eval(t, &p[..dim]);
        });
        acc
    })
    .tagged(f.tags());
    Ok(if f.is_autonomous() { out.autonomous() } else { out })
}

/// Componentwise mollification; an analytic divergence is mollified alongside.
pub fn mollify_vector(b: &VectorField, eps: f64) -> Result<VectorField> {
    if !(eps > 0.0) {
        return invalid(format!("mollification radius must be positive, got {eps}"));
    }
    let dim = b.dim();
    let stencil = Arc::new(Stencil::new(eps));
    let inner = b.clone();
    let st = stencil.clone();
    let mut out = VectorField::new(dim, move |t, x, out| {
        let mut p = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        out.fill(0.0);
        st.for_each(dim, |shift, w| {
            for k in 0..dim {
                p[k] = x[k] - shift[k];
            }
            inner.eval(t, &p[..dim], &mut v[..dim]);
            for k in 0..dim {
                out[k] += w * v[k];
            }
        });
    });
    if b.has_analytic_divergence() {
        out = out.with_divergence(mollify(&b.divergence_field(), dim, eps)?);
    }
    if let Some(g) = b.growth() {
        out = out.with_growth(g.clone());
    }
    Ok(if b.is_autonomous() { out.autonomous() } else { out })
}
