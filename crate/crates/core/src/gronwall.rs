//! Gronwall envelopes for `Γ_{δ,R}` and the uniqueness certificate built on
//! the contradiction argument: a nonzero difference forces `Γ` to grow like
//! `m 2^{-(d+1)} log(1/δ)`, faster than the envelope allows.

use std::f64::consts::PI;

use crate::bmo::{self, CubeFamily};
use crate::error::{invalid, Error, Result};
use crate::fields::{norm, DivergenceDecomposition, Grid, GriddedDensity, ScalarField, VectorField, MAX_DIM};
use crate::fit;
use crate::renorm::{beta_delta, gamma_with, phi_r};

/// `log(1 + π²/(4δ))`.
pub fn log_factor(delta: f64) -> f64 {
    (PI * PI / (4.0 * delta)).ln_1p()
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let parts: Vec<f64> =
        times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).collect();
    crate::par::sum(&parts)
}

/// Which of the two formal uniqueness computations to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// `d/dt ∫u² ≤ (2‖c‖_∞ + ‖∇·b‖_∞) ∫u²`.
    Quadratic,
    /// `d/dt ∫log(1+u²/δ) ≤ ‖∇·b‖_∞ ∫log(1+u²/δ) + 2∫(|c| + |∇·b|)`.
    LogDamped { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    /// Left side at the last sample time.
    pub left: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates the chosen Gronwall bound for a difference series against its
/// left side at the final sample. Sup norms are sampled at cell centers and
/// time integrals use the trapezoid rule over the series times; the
/// log-damped source integral runs over the whole series, as in the formal
/// argument on `[0, T]`.
pub fn linf_envelope(
    u_diff: &[GriddedDensity],
    b: &VectorField,
    c: &ScalarField,
    strategy: Strategy,
) -> Result<EnvelopeCheck> {
    let first = u_diff.first().ok_or_else(|| Error::MissingSamples("empty series".into()))?;
    let grid = *first.grid();
    let b = b.resolved_for(&grid);
    let d = grid.dim();
    let times: Vec<f64> = u_diff.iter().map(|u| u.time()).collect();
    let per_time = crate::par::map(times.len(), |k| {
        let t = times[k];
        let cells = crate::par::map(grid.cells(), |i| {
            let mut x = [0.0; MAX_DIM];
            grid.center(i, &mut x[..d]);
            (b.divergence(t, &x[..d]).abs(), c.eval(t, &x[..d]).abs())
        });
        let div_sup = cells.iter().fold(0.0f64, |m, v| m.max(v.0));
        let c_sup = cells.iter().fold(0.0f64, |m, v| m.max(v.1));
        let sum: Vec<f64> = cells.iter().map(|v| v.0 + v.1).collect();
        (div_sup, c_sup, grid.cell_volume() * crate::par::sum(&sum))
    });
    if per_time.iter().any(|p| !p.0.is_finite() || !p.1.is_finite() || !p.2.is_finite()) {
        return invalid("sampled sup norm is unbounded");
    }
    let integral = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        trapezoid(&times, &per_time.iter().map(f).collect::<Vec<_>>())
    };
    let last = u_diff.last().expect("non-empty");
    let (left, bound) = match strategy {
        Strategy::Quadratic => {
            let energy = |u: &GriddedDensity| {
                let sq: Vec<f64> = u.values().iter().map(|v| v * v).collect();
                u.grid().cell_volume() * crate::par::sum(&sq)
            };
            (energy(last), energy(first) * integral(&|p| 2.0 * p.1 + p.0).exp())
        }
        Strategy::LogDamped { delta } => {
            if !(delta > 0.0) {
                return invalid("δ must be positive");
            }
            let entropy = |u: &GriddedDensity| {
                let v: Vec<f64> = u.values().iter().map(|v| (v * v / delta).ln_1p()).collect();
                u.grid().cell_volume() * crate::par::sum(&v)
            };
            let growth = integral(&|p| p.0).exp();
            (entropy(last), growth * (entropy(first) + 2.0 * integral(&|p| p.2)))
        }
    };
    Ok(EnvelopeCheck { left, bound, holds: left <= bound })
}

/// Worst-case Lemma constants for `|d₂(t,·)|` over the sampled times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmoConstants {
    /// Threshold multiplier `a`.
    pub a: f64,
    /// Decay prefactor `C`.
    pub big_c: f64,
    /// Decay rate `c`.
    pub c: f64,
}

impl BmoConstants {
    /// Constants for a vanishing `d₂`: nothing to control.
    pub fn trivial() -> Self {
        Self { a: 0.0, big_c: 0.0, c: 1.0 }
    }
}

/// Time samples of every norm the envelope needs.
#[derive(Debug, Clone)]
pub struct NormSeries {
    pub dim: usize,
    pub times: Vec<f64>,
    /// `‖d₁(t,·)‖_∞` (sampled sup).
    pub d1_sup: Vec<f64>,
    /// `‖d₂(t,·)‖₁`.
    pub d2_l1: Vec<f64>,
    /// `‖d₂(t,·)‖_*` lower bound over the cube family.
    pub d2_seminorm: Vec<f64>,
    pub b2: Vec<f64>,
    /// `|b₁(t,·)|` on the grid, empty when `b₁ ≡ 0` was declared.
    b1: Vec<GriddedDensity>,
    pub constants: BmoConstants,
}

impl NormSeries {
    /// `‖d₂‖₁ + ‖d₂‖_*` per time.
    pub fn d2_total(&self) -> Vec<f64> {
        self.d2_l1.iter().zip(&self.d2_seminorm).map(|(a, b)| a + b).collect()
    }

    /// `‖b₁(t_k,·)‖_{L¹(ℝ^d∖B_R)}`.
    pub fn b1_tail(&self, k: usize, radius: f64) -> f64 {
        let Some(b1) = self.b1.get(k) else { return 0.0 };
        let grid = b1.grid();
        let d = grid.dim();
        let masked: Vec<f64> = (0..grid.cells())
            .map(|i| {
                let mut x = [0.0; MAX_DIM];
                grid.center(i, &mut x[..d]);
                if norm(&x[..d]) >= radius { b1.values()[i] } else { 0.0 }
            })
            .collect();
        grid.cell_volume() * crate::par::sum(&masked)
    }

    /// Synthetic series, mainly for closed-form checks.
    pub fn from_samples(dim: usize, times: Vec<f64>, d1_sup: Vec<f64>, d2_l1: Vec<f64>, d2_seminorm: Vec<f64>, b2: Vec<f64>, constants: BmoConstants) -> Result<Self> {
        let m = times.len();
        if m < 2 || [d1_sup.len(), d2_l1.len(), d2_seminorm.len(), b2.len()].iter().any(|&l| l != m) {
            return invalid("norm samples must share at least two time nodes");
        }
        Ok(Self { dim, times, d1_sup, d2_l1, d2_seminorm, b2, b1: Vec::new(), constants })
    }
}

/// Samples every norm of the hypotheses at `times`. Autonomous parts are
/// analyzed once.
pub fn norm_series(
    b: &VectorField,
    dec: &DivergenceDecomposition,
    grid: &Grid,
    times: &[f64],
    family: &CubeFamily,
) -> Result<NormSeries> {
    let growth = b.growth().ok_or_else(|| Error::Config("vector field carries no growth bound".into()))?;
    let mut d1_sup = Vec::with_capacity(times.len());
    let mut d2_l1 = Vec::with_capacity(times.len());
    let mut d2_seminorm = Vec::with_capacity(times.len());
    let mut reports: Vec<Option<bmo::BmoReport>> = Vec::new();
    let mut cached: Option<(f64, f64, f64, Option<bmo::BmoReport>)> = None;
    for &t in times {
        let entry = match (&cached, dec.d1.is_autonomous() && dec.d2.is_autonomous()) {
            (Some(c), true) => c.clone(),
            _ => {
                let d1 = dec.d1.sample(grid, t).sup_norm();
                let d2 = dec.d2.abs().sample(grid, t);
                let l1 = d2.l1_norm();
                let report = if l1 > 0.0 { Some(bmo::analyze(&d2, family)?) } else { None };
                let semi = report.as_ref().map_or(0.0, |r| r.seminorm_lb);
                let e = (d1, l1, semi, report);
                cached = Some(e.clone());
                e
            }
        };
        d1_sup.push(entry.0);
        d2_l1.push(entry.1);
        d2_seminorm.push(entry.2);
        reports.push(entry.3);
    }
    let mut constants: Option<BmoConstants> = None;
    for r in reports.iter().flatten() {
        let k = BmoConstants { a: r.a_fit(), big_c: r.decay.big_c_fit, c: r.decay.c_fit };
        constants = Some(match constants {
            None => k,
            Some(w) => BmoConstants { a: w.a.max(k.a), big_c: w.big_c.max(k.big_c), c: w.c.min(k.c) },
        });
    }
    let b2 = times.iter().map(|&t| (growth.b2)(t)).collect();
    let b1_zero = grid.times().is_empty() || growth.b1.is_autonomous() && growth.b1.sample(grid, 0.0).sup_norm() == 0.0;
    let b1 = if b1_zero { Vec::new() } else { times.iter().map(|&t| growth.b1.abs().sample(grid, t)).collect() };
    Ok(NormSeries {
        dim: grid.dim(),
        times: times.to_vec(),
        d1_sup,
        d2_l1,
        d2_seminorm,
        b2,
        b1,
        constants: constants.unwrap_or_else(BmoConstants::trivial),
    })
}

/// First time after `start` at which `∫_start^τ g = budget`, with `g`
/// piecewise linear through the samples; the last time if never reached.
pub fn choose_tau0_from(times: &[f64], g: &[f64], start: f64, budget: f64) -> Result<f64> {
    if times.len() < 2 || times.len() != g.len() {
        return invalid("need matching samples at two or more times");
    }
    if g.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return invalid("the integrand must be finite and nonnegative");
    }
    let horizon = *times.last().expect("non-empty");
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        let (mut t0, t1) = (times[k], times[k + 1]);
        if t1 <= start {
            continue;
        }
        let (mut g0, g1) = (g[k], g[k + 1]);
        if t0 < start {
            g0 += (g1 - g0) * (start - t0) / (t1 - t0);
            t0 = start;
        }
        let dt = t1 - t0;
        let piece = 0.5 * dt * (g0 + g1);
        if acc + piece >= budget && piece > 0.0 {
            // acc + g0 s + q s² = budget on [0, dt], in a cancellation-free form.
            let rem = budget - acc;
            let q = (g1 - g0) / (2.0 * dt);
            let s = 2.0 * rem / (g0 + (g0 * g0 + 4.0 * q * rem).max(0.0).sqrt());
            return Ok((t0 + s.min(dt)).min(horizon));
        }
        acc += piece;
    }
    Ok(horizon)
}

/// `τ₀` with `∫₀^{τ₀}(‖d₂‖₁ + ‖d₂‖_*) = c/2`, or the horizon.
pub fn choose_tau0(norms: &NormSeries, c: f64) -> Result<f64> {
    choose_tau0_from(&norms.times, &norms.d2_total(), norms.times[0], 0.5 * c)
}

/// The four coefficient functions on one window and their integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallEnvelope {
    pub lambda: f64,
    pub radius: f64,
    pub start: f64,
    pub tau0: f64,
    pub constants: BmoConstants,
    pub phi_l1: f64,
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub big_a: f64,
    pub big_b: f64,
    pub big_c: f64,
    pub big_d: f64,
}

fn lerp(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.iter().position(|&s| s >= t) {
        Some(0) => values[0],
        Some(k) if times[k] == t => values[k],
        Some(k) => values[k - 1] + (values[k] - values[k - 1]) * (t - times[k - 1]) / (times[k] - times[k - 1]),
        None => *values.last().expect("non-empty"),
    }
}

/// `a_λ = ‖d₁‖_∞ + λ(‖d₂‖₁+‖d₂‖_*) + (d+1)b₂`,
/// `b_{λ,R} = 2(‖d₁‖_∞ + λ(‖d₂‖₁+‖d₂‖_*))‖φ_R‖₁ + C 2^{-d} e^{-cλ}‖d₂‖₁`,
/// `c_R = (d+1)‖b₁‖_{L¹(ℝ^d∖B_R)}`, `d_λ = C 2^{-(d+1)} e^{-cλ}‖d₂‖₁`,
/// sampled on `[start, end]` and integrated by the trapezoid rule.
pub fn envelope_coefficients(norms: &NormSeries, lambda: f64, radius: f64, start: f64, end: f64) -> Result<GronwallEnvelope> {
    let k = norms.constants;
    if !(lambda > k.a) {
        return invalid(format!("λ = {lambda} must exceed a = {}", k.a));
    }
    if !(radius > 1.0) {
        return invalid(format!("R = {radius} must exceed 1"));
    }
    if !(end > start) {
        return invalid("empty time window");
    }
    let d = norms.dim;
    let phi_l1 = phi_r(radius, d)?.l1_norm();
    let dd = (d + 1) as f64;
    let decay = k.big_c * (-k.c * lambda).exp();
    let mut times = vec![start];
    let mut idx: Vec<Option<usize>> = vec![norms.times.iter().position(|&t| t == start)];
    for (j, &t) in norms.times.iter().enumerate() {
        if t > start && t < end {
            times.push(t);
            idx.push(Some(j));
        }
    }
    times.push(end);
    idx.push(norms.times.iter().position(|&t| t == end));
    let total = norms.d2_total();
    let tails: Vec<f64> = (0..norms.times.len()).map(|j| norms.b1_tail(j, radius)).collect();
    let at = |series: &[f64], t: f64, j: Option<usize>| j.map_or_else(|| lerp(&norms.times, series, t), |j| series[j]);
    let (mut a, mut b, mut c, mut dcoef) = (vec![], vec![], vec![], vec![]);
    for (&t, &j) in times.iter().zip(&idx) {
        let core = at(&norms.d1_sup, t, j) + lambda * at(&total, t, j);
        let l1 = at(&norms.d2_l1, t, j);
        a.push(core + dd * at(&norms.b2, t, j));
        b.push(2.0 * core * phi_l1 + decay * 0.5f64.powi(d as i32) * l1);
        c.push(dd * at(&tails, t, j));
        dcoef.push(decay * 0.5f64.powi(d as i32 + 1) * l1);
    }
    Ok(GronwallEnvelope {
        lambda,
        radius,
        start,
        tau0: end - start,
        constants: k,
        phi_l1,
        big_a: trapezoid(&times, &a),
        big_b: trapezoid(&times, &b),
        big_c: trapezoid(&times, &c),
        big_d: trapezoid(&times, &dcoef),
        times,
        a,
        b,
        c,
        d: dcoef,
    })
}

/// `exp(A_λ)(B_{λ,R} + log(1+π²/(4δ))(C_R + D_λ))`.
pub fn gronwall_bound(env: &GronwallEnvelope, delta: f64) -> f64 {
    bound_from(env.big_a, env.big_b, env.big_c, env.big_d, delta)
}

pub fn bound_from(big_a: f64, big_b: f64, big_c: f64, big_d: f64, delta: f64) -> f64 {
    big_a.exp() * (big_b + log_factor(delta) * (big_c + big_d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    UniqueConsistent,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::UniqueConsistent => 0,
            Verdict::Violated => 2,
            Verdict::Inconclusive => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::UniqueConsistent => "unique-consistent",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// `m = ℒ^d({x ∈ B_{R₀} : [arctan u(t,x)]² > γ})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub m: f64,
    pub gamma: f64,
    pub r0: f64,
}

/// Candidate levels are quantiles of `[arctan u]²` above `floor`; the witness
/// maximizes `m·γ`, and `R₀` encloses every witness cell.
pub fn extract_witness(u: &GriddedDensity, floor: f64) -> Witness {
    let grid = u.grid();
    let d = grid.dim();
    let cell = grid.cell_volume();
    let mut levels: Vec<f64> = u.values().iter().map(|v| v.atan().powi(2)).filter(|s| *s > floor).collect();
    let none = Witness { t: u.time(), m: 0.0, gamma: floor, r0: 0.0 };
    if levels.is_empty() {
        return none;
    }
    levels.sort_by(|a, b| a.total_cmp(b));
    // γ just below the q-quantile keeps that quantile inside {s > γ}.
    let mut best = none;
    let mut best_score = 0.0;
    for j in 0..=40 {
        let pos = (j * (levels.len() - 1)) / 40;
        let gamma = if pos == 0 { floor } else { levels[pos - 1] };
        let count = levels.len() - levels.partition_point(|s| *s <= gamma);
        let m = count as f64 * cell;
        if m * gamma > best_score {
            best_score = m * gamma;
            best = Witness { t: u.time(), m, gamma, r0: 0.0 };
        }
    }
    let mut r0 = 0.0f64;
    for (i, v) in u.values().iter().enumerate() {
        if v.atan().powi(2) > best.gamma {
            let mut x = [0.0; MAX_DIM];
            grid.center(i, &mut x[..d]);
            r0 = r0.max(norm(&x[..d]));
        }
    }
    best.r0 = r0 + 0.5 * grid.h() * (d as f64).sqrt();
    best
}

/// Smallest admissible `δ` in units of the noise energy `ε²`.
pub const NOISE_MARGIN: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Multipliers of the fitted `a`; each must exceed 1.
    pub lambda_factors: Vec<f64>,
    pub radii: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Fitted `L²` discretization error `ε` of the solver pair.
    pub noise: f64,
    pub depth: usize,
}

impl CertifyOptions {
    pub fn new(noise: f64) -> Self {
        Self {
            lambda_factors: vec![1.5, 2.0, 4.0, 8.0, 16.0],
            radii: vec![1.5, 3.0, 6.0, 12.0, 24.0],
            deltas: (0..15).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect(),
            noise,
            depth: bmo::DEFAULT_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub radius: f64,
    pub delta: f64,
    pub t: f64,
    pub gamma: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start: f64,
    pub end: f64,
    /// Chosen `(λ, R)`, if any pair was admissible.
    pub lambda: Option<f64>,
    pub radius: Option<f64>,
    /// Largest slope of `Γ` against `log(1/δ)` over the window times.
    pub gamma_slope: f64,
    pub gamma_slope_time: f64,
    /// Slope of the envelope against `log(1/δ)`.
    pub bound_slope: f64,
    /// Largest slope the discretization noise can contribute.
    pub tolerance: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub scenario: String,
    pub verdict: Verdict,
    pub witness: Witness,
    pub noise: f64,
    pub constants: BmoConstants,
    pub deltas: Vec<f64>,
    pub windows: Vec<WindowResult>,
    pub sweep: Vec<SweepRow>,
    pub reason: String,
}

fn slope_against_log(deltas: &[f64], values: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = deltas.iter().map(|d| -d.ln()).collect();
    Ok(fit::line(&xs, values)?.slope)
}

/// Largest slope of `Γ_{δ,R}(t)` against `log(1/δ)` over the samples, with
/// the time at which it occurs.
pub fn gamma_slope(u: &[GriddedDensity], radius: f64, deltas: &[f64]) -> Result<(f64, f64)> {
    let first = u.first().ok_or_else(|| Error::MissingSamples("empty series".into()))?;
    let phi = phi_r(radius, first.grid().dim())?;
    let betas: Vec<_> = deltas.iter().map(|&dl| beta_delta(dl)).collect::<Result<_>>()?;
    let mut worst = (f64::NEG_INFINITY, first.time());
    for v in u {
        let column: Vec<f64> = betas.iter().map(|b| gamma_with(v, b, &phi)).collect();
        let s = slope_against_log(deltas, &column)?;
        if s > worst.0 {
            worst = (s, v.time());
        }
    }
    Ok(worst)
}

/// Runs the contradiction argument on `u₁ − u₂` over windows of length `τ₀`.
///
/// A noise field `e` with `‖e‖₂ ≤ ε` adds at most `ε²/δ` to the slope of
/// `Γ_{δ,R}` in `log(1/δ)`, since `[arctan e]² ≤ e²` and `φ_R ≤ 1`. The
/// sweep keeps `δ ≥ NOISE_MARGIN·ε²` and the tolerance is `ε²/min δ`. On
/// each window the measured slope is compared with the envelope's, for
/// `(λ, R)` chosen as in the argument with `e^{A}D_λ` and `e^{A}C_R` at
/// most `m/2^{d+3}`; without a witness the pair with the smallest envelope
/// slope is used.
#[allow(clippy::too_many_arguments)]
pub fn certify_uniqueness(
    scenario: &str,
    u1: &[GriddedDensity],
    u2: &[GriddedDensity],
    b: &VectorField,
    dec: &DivergenceDecomposition,
    grid: &Grid,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    if u1.is_empty() || u1.len() != u2.len() {
        return Err(Error::MissingSamples("solution series differ in length".into()));
    }
    let initial_gap = u1[0].sup_distance(&u2[0])?;
    let scale = u1[0].sup_norm().max(u2[0].sup_norm()).max(1.0);
    if initial_gap > 1e-12 * scale {
        return Err(Error::InitialDataMismatch(initial_gap));
    }
    if opts.lambda_factors.iter().any(|f| !(*f > 1.0)) || opts.radii.iter().any(|r| !(*r > 1.0)) {
        return invalid("λ multipliers and radii must exceed 1");
    }
    let diff: Vec<GriddedDensity> = u1.iter().zip(u2).map(|(a, b)| a.difference(b)).collect::<Result<_>>()?;
    let times: Vec<f64> = diff.iter().map(|u| u.time()).collect();
    let d = grid.dim();
    let mut depth = opts.depth;
    while depth > 0 && grid.n() % (1usize << (depth + 1)) != 0 {
        depth -= 1;
    }
    let family = CubeFamily::new(grid, depth, true)?;
    let norms = norm_series(b, dec, grid, &times, &family)?;
    let k = norms.constants;
    let floor = (2.0 * opts.noise).atan().powi(2);
    let energy = opts.noise * opts.noise;
    let deltas: Vec<f64> = opts.deltas.iter().copied().filter(|&dl| dl >= NOISE_MARGIN * energy).collect();
    let witness = diff
        .iter()
        .map(|u| extract_witness(u, floor))
        .fold(Witness { t: 0.0, m: 0.0, gamma: floor, r0: 0.0 }, |best, w| if w.m * w.gamma > best.m * best.gamma { w } else { best });
    let mut cert = Certificate {
        scenario: scenario.to_string(),
        verdict: Verdict::Inconclusive,
        witness,
        noise: opts.noise,
        constants: k,
        deltas: deltas.clone(),
        windows: Vec::new(),
        sweep: Vec::new(),
        reason: String::new(),
    };
    if deltas.len() < 2 {
        cert.reason = format!("only {} δ values lie above the noise floor", deltas.len());
        return Ok(cert);
    }
    let lambdas: Vec<f64> = opts.lambda_factors.iter().map(|f| f * k.a.max(1.0)).collect();
    let betas: Vec<_> = deltas.iter().map(|&dl| beta_delta(dl)).collect::<Result<_>>()?;
    let phis: Vec<_> = opts.radii.iter().map(|&r| phi_r(r, d)).collect::<Result<_>>()?;
    // Γ[r][δ][t]
    let gammas: Vec<Vec<Vec<f64>>> = phis
        .iter()
        .map(|phi| betas.iter().map(|beta| diff.iter().map(|u| gamma_with(u, beta, phi)).collect()).collect())
        .collect();
    let tolerance = energy / deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let total = norms.d2_total();
    let horizon = *times.last().expect("non-empty");
    let mut start_idx = 0usize;
    let mut any_exceeded = false;
    let mut any_unchosen = false;
    while start_idx + 1 < times.len() {
        let start = times[start_idx];
        let mut end = choose_tau0_from(&times, &total, start, 0.5 * k.c)?;
        // Windows cover at least one sample interval.
        if end < times[start_idx + 1] {
            end = times[start_idx + 1];
        }
        let end_idx = times.iter().rposition(|&t| t <= end * (1.0 + 1e-12)).expect("start qualifies");
        let end = times[end_idx];
        let mut candidates = Vec::new();
        for &lam in &lambdas {
            for (ri, &r) in opts.radii.iter().enumerate() {
                let env = envelope_coefficients(&norms, lam, r, start, end)?;
                let ea = env.big_a.exp();
                let restart: Vec<f64> = (0..deltas.len()).map(|j| ea * gammas[ri][j][start_idx]).collect();
                let bounds: Vec<f64> = deltas.iter().zip(&restart).map(|(&dl, r0)| r0 + gronwall_bound(&env, dl)).collect();
                for ti in start_idx..=end_idx {
                    for (j, &dl) in deltas.iter().enumerate() {
                        cert.sweep.push(SweepRow { lambda: lam, radius: r, delta: dl, t: times[ti], gamma: gammas[ri][j][ti], bound: bounds[j] });
                    }
                }
                let cap = witness.m * 0.5f64.powi(d as i32 + 3);
                let admissible = if witness.m > 0.0 {
                    ea * env.big_d <= cap && ea * env.big_c <= cap && r >= witness.r0
                } else {
                    true
                };
                if admissible {
                    candidates.push((slope_against_log(&deltas, &bounds)?, lam, r, ri));
                }
            }
        }
        let chosen = candidates.iter().fold(None, |best: Option<(f64, f64, f64, usize)>, c| match best {
            Some(b) if b.0 <= c.0 => Some(b),
            _ => Some(*c),
        });
        let mut result = WindowResult {
            start,
            end,
            lambda: None,
            radius: None,
            gamma_slope: 0.0,
            gamma_slope_time: start,
            bound_slope: f64::NAN,
            tolerance: f64::NAN,
            exceeded: false,
        };
        if let Some((bound_slope, lam, r, ri)) = chosen {
            let mut worst = (f64::NEG_INFINITY, start);
            for ti in start_idx..=end_idx {
                let column: Vec<f64> = (0..deltas.len()).map(|j| gammas[ri][j][ti]).collect();
                let s = slope_against_log(&deltas, &column)?;
                if s > worst.0 {
                    worst = (s, times[ti]);
                }
            }
            result.lambda = Some(lam);
            result.radius = Some(r);
            result.gamma_slope = worst.0;
            result.gamma_slope_time = worst.1;
            result.bound_slope = bound_slope;
            result.tolerance = tolerance;
            result.exceeded = worst.0 > bound_slope + tolerance;
            any_exceeded |= result.exceeded;
        } else {
            any_unchosen = true;
        }
        cert.windows.push(result);
        if end >= horizon {
            break;
        }
        start_idx = end_idx;
    }
    (cert.verdict, cert.reason) = if any_exceeded {
        (Verdict::Violated, "Γ grows faster in log(1/δ) than the envelope allows".to_string())
    } else if any_unchosen {
        (Verdict::Inconclusive, "no admissible (λ, R) for the witness".to_string())
    } else {
        (Verdict::UniqueConsistent, "the envelope holds, so the witness mass must vanish".to_string())
    };
    Ok(cert)
}
