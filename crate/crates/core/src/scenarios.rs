//! Built-in scenarios: a field `b` with its hypothesis data, a damping `c`,
//! initial data and, where available, the exact solution.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{
    mollify, norm, DivergenceDecomposition, Domain, Grid, GriddedDensity, Growth, ScalarField, VectorField, MAX_DIM,
};

pub type Solution = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Truncation level of the logarithmic divergence.
pub const LOG_TRUNCATION: f64 = 8.0;

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub domain: Domain,
    pub b: VectorField,
    pub c: ScalarField,
    pub u0: ScalarField,
    pub dec: DivergenceDecomposition,
    pub exact: Option<Solution>,
    /// Mollification radius already applied to the rough parts.
    pub mollify: Option<f64>,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("exact", &self.exact.is_some())
            .field("mollify", &self.mollify)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Grid with `n` cells per axis and step `dt` on the scenario domain.
    pub fn grid(&self, n: usize, dt: f64) -> Result<Grid> {
        Grid::new(self.domain, n, dt)
    }

    /// Exact solution sampled at cell centers.
    pub fn exact_density(&self, grid: &Grid, t: f64) -> Option<GriddedDensity> {
        let exact = self.exact.clone()?;
        Some(ScalarField::new(move |t, x| exact(t, x)).sample(grid, t))
    }
}

/// Name and one-line description of every built-in scenario.
pub const BUILTIN: &[(&str, &str)] = &[
    ("zero-field-damping", "b = 0, c = -min(|x|^(-1/2), 10), u0 = indicator of [0,1]^d"),
    ("translation", "b = (1, 1/2), c = 0, Gaussian datum (d = 2)"),
    ("rotation", "b = (-x2, x1), c = 0, off-center Gaussian datum (d = 2)"),
    ("linear-expansion", "b = x, c = 0, centered Gaussian datum"),
    ("contracting", "b = -x, c = -indicator of the ball of radius 1/2 (mollified)"),
    ("truncated-log-divergence", "b = x g(|x|) with div b = min(log(1/|x|), 8)+, c = 0 (d = 2)"),
];

fn gaussian(center: Vec<f64>, sigma: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync + Clone {
    move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    }
}

fn solution(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Option<Solution> {
    Some(Arc::new(f))
}

/// `min(log(1/r), M)₊`.
pub fn truncated_log(r: f64, m: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else if r <= (-m).exp() {
        m
    } else {
        -r.ln()
    }
}

/// `g` with `∇·(x g(|x|)) = min(log(1/|x|), M)₊` in the plane: `r² g(r)` is
/// `∫₀^r s min(log(1/s), M)₊ ds`.
pub fn truncated_log_profile(r: f64, m: f64) -> f64 {
    let rm = (-m).exp();
    if r <= rm {
        0.5 * m
    } else if r <= 1.0 {
        0.25 - 0.5 * r.ln() - 0.25 * (rm / r).powi(2)
    } else {
        0.25 * (1.0 - rm * rm) / (r * r)
    }
}

/// Looks up a built-in scenario; `dim` overrides the default dimension where
/// the scenario allows it.
pub fn builtin(name: &str, dim: Option<usize>) -> Result<Scenario> {
    let fixed = |d: usize| match dim {
        Some(k) if k != d => Err(Error::Config(format!("scenario {name} is only defined for d = {d}"))),
        _ => Ok(d),
    };
    let zero_dec = |d1: f64| DivergenceDecomposition::bounded(ScalarField::constant(d1));
    let s = match name {
        "zero-field-damping" => {
            let d = dim.unwrap_or(2);
            let c = |x: &[f64]| -norm(x).powf(-0.5).min(10.0);
            let u0 = |x: &[f64]| if x.iter().all(|v| (0.0..=1.0).contains(v)) { 1.0 } else { 0.0 };
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 2.0, 1.0)?,
                b: VectorField::zero(d),
                c: ScalarField::spatial(c),
                u0: ScalarField::spatial(u0),
                dec: zero_dec(0.0),
                exact: solution(move |t, x| u0(x) * (t * c(x)).exp()),
                mollify: None,
            }
        }
        "translation" => {
            let d = fixed(2)?;
            let v = [1.0, 0.5];
            let g = gaussian(vec![-0.5, -0.25], 0.2);
            let ge = g.clone();
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 2.0, 1.0)?,
                b: VectorField::constant(&v),
                c: ScalarField::zero(),
                u0: ScalarField::spatial(g),
                dec: zero_dec(0.0),
                exact: solution(move |t, x| ge(&[x[0] - t * v[0], x[1] - t * v[1]])),
                mollify: None,
            }
        }
        "rotation" => {
            let d = fixed(2)?;
            let g = gaussian(vec![0.7, 0.0], 0.2);
            let ge = g.clone();
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 2.0, 1.0)?,
                b: VectorField::rotation(),
                c: ScalarField::zero(),
                u0: ScalarField::spatial(g),
                dec: zero_dec(0.0),
                exact: solution(move |t, x| {
                    let (s, c) = t.sin_cos();
                    ge(&[c * x[0] + s * x[1], -s * x[0] + c * x[1]])
                }),
                mollify: None,
            }
        }
        "linear-expansion" => {
            let d = dim.unwrap_or(2);
            let g = gaussian(vec![0.0; d], 0.3);
            let ge = g.clone();
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = 1.0;
            }
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 4.0, 1.0)?,
                b: VectorField::linear(d, &a).with_growth(Growth::bounded(1.0)),
                c: ScalarField::zero(),
                u0: ScalarField::spatial(g),
                dec: zero_dec(d as f64),
                exact: solution(move |t, x| {
                    let mut y = [0.0; MAX_DIM];
                    for (k, v) in x.iter().enumerate() {
                        y[k] = (-t).exp() * v;
                    }
                    ge(&y[..x.len()]) * (-(x.len() as f64) * t).exp()
                }),
                mollify: None,
            }
        }
        "contracting" => {
            let d = dim.unwrap_or(2);
            let eps = 0.05;
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = -1.0;
            }
            let ball = ScalarField::spatial(|x| if norm(x) <= 0.5 { -1.0 } else { 0.0 });
            // The stencil reaches at most eps·sqrt(d), beyond which the
            // convolution equals the indicator itself.
            let smooth = mollify(&ball, d, eps)?;
            let reach = eps * (d as f64).sqrt();
            let c = ScalarField::spatial(move |x| {
                let r = norm(x);
                if r < 0.5 - reach {
                    -1.0
                } else if r > 0.5 + reach {
                    0.0
                } else {
                    smooth.eval(0.0, x)
                }
            });
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 2.0, 1.0)?,
                b: VectorField::linear(d, &a).with_growth(Growth::bounded(1.0)),
                c,
                u0: ScalarField::spatial(gaussian(vec![0.0; d], 0.4)),
                dec: zero_dec(d as f64),
                exact: None,
                mollify: Some(eps),
            }
        }
        "truncated-log-divergence" => {
            let d = fixed(2)?;
            let m = LOG_TRUNCATION;
            let b = VectorField::new(2, move |_, x, out| {
                let g = truncated_log_profile(norm(x), m);
                out[0] = g * x[0];
                out[1] = g * x[1];
            })
            .with_divergence(ScalarField::spatial(move |x| truncated_log(norm(x), m)))
            .with_growth(Growth::bounded(0.25))
            .autonomous();
            Scenario {
                name: name.into(),
                domain: Domain::new(d, 2.0, 1.0)?,
                b,
                c: ScalarField::zero(),
                u0: ScalarField::spatial(gaussian(vec![0.8, 0.0], 0.2)),
                dec: DivergenceDecomposition::new(
                    ScalarField::zero(),
                    ScalarField::spatial(move |x| truncated_log(norm(x), m)),
                ),
                exact: None,
                mollify: None,
            }
        }
        _ => return Err(Error::Config(format!("unknown scenario {name:?}"))),
    };
    Ok(s)
}

/// `mass` spread as a height-one disk (or ball) about `center`, so that the
/// witness measure equals the mass.
pub fn bump_density(grid: &Grid, t: f64, center: &[f64], mass: f64) -> GriddedDensity {
    let d = grid.dim();
    let radius = (mass / crate::renorm::unit_ball_volume(d)).powf(1.0 / d as f64);
    let c = center.to_vec();
    ScalarField::spatial(move |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        if r2.sqrt() <= radius { 1.0 } else { 0.0 }
    })
    .sample(grid, t)
}

/// Adds the bump to every sample at or after `t_star`.
pub fn inject_bump(series: &[GriddedDensity], t_star: f64, center: &[f64], mass: f64) -> Vec<GriddedDensity> {
    series
        .iter()
        .map(|u| {
            if u.time() + 1e-12 < t_star {
                return u.clone();
            }
            let bump = bump_density(u.grid(), u.time(), center, mass);
            let mut out = u.clone();
            for (v, b) in out.values_mut().iter_mut().zip(bump.values()) {
                *v += b;
            }
            out
        })
        .collect()
}
