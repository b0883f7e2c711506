//! Mean oscillation over dyadic and half-shifted dyadic cubes, John–Nirenberg
//! tails, and the exponential decay of superlevel deficits.
//!
//! Every sup over cubes is taken over a finite family and is therefore a
//! lower bound for the true BMO seminorm.

use crate::error::{invalid, Error, Result};
use crate::fields::{GriddedDensity, Grid, MAX_DIM};
use crate::fit;

/// Default dyadic depth.
pub const DEFAULT_DEPTH: usize = 6;

/// Tail samples with fewer cells than this are not used by the fits.
pub const RESOLVED_CELLS: usize = 8;

/// Axis-aligned cube made of whole grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cube {
    pub depth: usize,
    pub shifted: bool,
    /// Index of the lowest cell along each axis.
    pub origin: [usize; MAX_DIM],
    /// Side length in cells.
    pub side: usize,
}

impl Cube {
    pub fn volume(&self, grid: &Grid) -> f64 {
        (self.side as f64 * grid.h()).powi(grid.dim() as i32)
    }

    /// Flat indices of the cells in the cube, in grid order.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        let d = grid.dim();
        let total = self.side.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = [0usize; MAX_DIM];
        for mut j in 0..total {
            for k in (0..d).rev() {
                idx[k] = self.origin[k] + j % self.side;
                j /= self.side;
            }
            out.push(grid.flat_index(&idx[..d]));
        }
        out
    }
}

/// Dyadic cubes of the box down to `depth`, optionally with the
/// half-shifted generation at every depth.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily {
    grid: Grid,
    depth: usize,
    shifted: bool,
    cubes: Vec<Cube>,
}

impl CubeFamily {
    pub fn new(grid: &Grid, depth: usize, shifted: bool) -> Result<Self> {
        let need = 1usize << (depth + shifted as usize);
        if grid.n() % need != 0 {
            return invalid(format!(
                "{} cells per axis cannot host dyadic depth {depth}{}",
                grid.n(),
                if shifted { " with shifts" } else { "" }
            ));
        }
        let d = grid.dim();
        let mut cubes = Vec::new();
        for k in 0..=depth {
            let side = grid.n() >> k;
            let per_axis = 1usize << k;
            push_lattice(&mut cubes, d, k, side, per_axis, 0, false);
            if shifted && per_axis > 1 {
                push_lattice(&mut cubes, d, k, side, per_axis - 1, side / 2, true);
            }
        }
        Ok(Self { grid: *grid, depth, shifted, cubes })
    }

    /// Dyadic plus half-shifted cubes to [`DEFAULT_DEPTH`].
    pub fn standard(grid: &Grid) -> Result<Self> {
        Self::new(grid, DEFAULT_DEPTH, true)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    /// The whole box.
    pub fn root(&self) -> Cube {
        self.cubes[0]
    }
}

fn push_lattice(out: &mut Vec<Cube>, d: usize, depth: usize, side: usize, per_axis: usize, offset: usize, shifted: bool) {
    let count = per_axis.pow(d as u32);
    for mut j in 0..count {
        let mut origin = [0usize; MAX_DIM];
        for k in (0..d).rev() {
            origin[k] = offset + (j % per_axis) * side;
            j /= per_axis;
        }
        out.push(Cube { depth, shifted, origin, side });
    }
}

/// Mean and mean oscillation of `f` on one cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeStat {
    pub cube: Cube,
    pub mean: f64,
    pub oscillation: f64,
}

fn check_grid(f: &GriddedDensity, family: &CubeFamily) -> Result<()> {
    let (a, b) = (f.grid(), family.grid());
    if a.n() != b.n() || a.domain() != b.domain() {
        return invalid("density and cube family live on different grids");
    }
    Ok(())
}

fn cube_values(f: &GriddedDensity, cube: &Cube) -> Vec<f64> {
    let v = f.values();
    cube.cells(f.grid()).into_iter().map(|i| v[i]).collect()
}

fn mean_and_oscillation(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = crate::par::sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).abs()).collect();
    (mean, crate::par::sum(&dev) / n)
}

/// `(f)_K` and `(1/|K|)∫_K |f − (f)_K|` on every cube of the family.
pub fn cube_scan(f: &GriddedDensity, family: &CubeFamily) -> Result<Vec<CubeStat>> {
    check_grid(f, family)?;
    Ok(crate::par::map_slice(family.cubes(), |cube| {
        let (mean, oscillation) = mean_and_oscillation(&cube_values(f, cube));
        CubeStat { cube: *cube, mean, oscillation }
    }))
}

/// Largest mean oscillation over the family: a lower bound for `‖f‖_*`.
pub fn bmo_seminorm(f: &GriddedDensity, family: &CubeFamily) -> Result<f64> {
    if family.cubes().is_empty() {
        return invalid("empty cube family");
    }
    let scan = cube_scan(f, family)?;
    Ok(scan.iter().fold(0.0f64, |m, s| m.max(s.oscillation)))
}

/// `ℒ^d({x ∈ K : |f − (f)_K| > r})`, strict inequality.
pub fn tail_measure(f: &GriddedDensity, cube: &Cube, r: f64) -> f64 {
    let values = cube_values(f, cube);
    let (mean, _) = mean_and_oscillation(&values);
    values.iter().filter(|v| (*v - mean).abs() > r).count() as f64 * f.grid().cell_volume()
}

/// One-sided `ℒ^d({x ∈ K : f − (f)_K > r})`.
pub fn upper_tail_measure(f: &GriddedDensity, cube: &Cube, r: f64) -> f64 {
    let values = cube_values(f, cube);
    let (mean, _) = mean_and_oscillation(&values);
    values.iter().filter(|v| *v - mean > r).count() as f64 * f.grid().cell_volume()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JnTail {
    pub cube: Cube,
    /// `‖f‖_*` estimate the multipliers refer to.
    pub seminorm: f64,
    /// `∫_K |f − (f)_K|`.
    pub oscillation_integral: f64,
    /// `(r, tail measure, cells in the tail)`.
    pub samples: Vec<(f64, f64, usize)>,
    pub a_ls: f64,
    /// Envelope constant: `a_ls` raised to cover every resolved sample.
    pub a_fit: f64,
    pub b_fit: f64,
    /// Smallest sampled multiplier beyond which the envelope holds on every
    /// resolved or empty sample, if any.
    pub threshold: Option<f64>,
    /// RMS of the log residual over resolved samples.
    pub log_rms: f64,
    /// `log_rms` relative to the spread of the fitted log tail.
    pub relative_log_residual: f64,
    pub resolved: usize,
}

impl JnTail {
    /// `(A/‖f‖_*) exp(−b r/‖f‖_*) ∫_K|f − (f)_K|`.
    pub fn envelope(&self, r: f64) -> f64 {
        self.a_fit / self.seminorm * (-self.b_fit * r / self.seminorm).exp() * self.oscillation_integral
    }

    pub fn pass(&self) -> bool {
        self.threshold.is_some() && self.b_fit > 0.0
    }
}

/// Measured John–Nirenberg tail on `cube` at `r = (1..=20)·‖f‖_*` with the
/// exponential model fitted by least squares on resolved samples.
pub fn jn_tail(f: &GriddedDensity, cube: &Cube, seminorm: f64) -> Result<JnTail> {
    if !(seminorm > 0.0) {
        return Err(Error::Fit("the seminorm estimate must be positive".into()));
    }
    let values = cube_values(f, cube);
    let (mean, osc) = mean_and_oscillation(&values);
    let cell = f.grid().cell_volume();
    let oscillation_integral = osc * values.len() as f64 * cell;
    let samples: Vec<(f64, f64, usize)> = (1..=20)
        .map(|j| {
            let r = j as f64 * seminorm;
            let count = values.iter().filter(|v| (*v - mean).abs() > r).count();
            (r, count as f64 * cell, count)
        })
        .collect();
    let norm = seminorm / oscillation_integral;
    let (xs, ys): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.2 >= RESOLVED_CELLS)
        .map(|s| (s.0 / seminorm, (s.1 * norm).ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Fit(format!("only {} resolved tail samples", xs.len())));
    }
    let line = fit::line(&xs, &ys)?;
    let worst = xs.iter().zip(&ys).fold(f64::NEG_INFINITY, |m, (x, y)| m.max(y - line.eval(*x)));
    let spread = (line.eval(xs[0]) - line.eval(xs[xs.len() - 1])).abs();
    let mut out = JnTail {
        cube: *cube,
        seminorm,
        oscillation_integral,
        a_ls: line.intercept.exp(),
        a_fit: (line.intercept + worst.max(0.0)).exp(),
        b_fit: -line.slope,
        threshold: None,
        log_rms: line.rms,
        relative_log_residual: if spread > 0.0 { line.rms / spread } else { f64::INFINITY },
        resolved: xs.len(),
        samples,
    };
    // A tail of a few cells is quantized at the cell volume; such samples are
    // reported but not held against the envelope.
    let holds: Vec<bool> = out
        .samples
        .iter()
        .map(|s| (1..RESOLVED_CELLS).contains(&s.2) || s.1 <= out.envelope(s.0) * (1.0 + 1e-12))
        .collect();
    out.threshold = (0..holds.len()).find(|&j| holds[j..].iter().all(|&h| h)).map(|j| out.samples[j].0 / seminorm);
    Ok(out)
}

/// `∫(f − λ(‖f‖₁ + ‖f‖_*))₊` by midpoint quadrature; `{f > threshold}` strict.
pub fn superlevel_deficit(f: &GriddedDensity, lambda: f64, seminorm: f64) -> f64 {
    deficit_above(f, lambda * (f.l1_norm() + seminorm))
}

fn deficit_above(f: &GriddedDensity, threshold: f64) -> f64 {
    let parts: Vec<f64> = f.values().iter().map(|v| if *v > threshold { v - threshold } else { 0.0 }).collect();
    f.grid().cell_volume() * crate::par::sum(&parts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// `(λ, deficit)` on the fitting sweep.
    pub samples: Vec<(f64, f64)>,
    pub c_fit: f64,
    /// Smallest `C` with `deficit ≤ C e^{−c λ} ‖f‖₁` on every sample.
    pub big_c_fit: f64,
    pub l1_norm: f64,
}

impl DecayFit {
    pub fn bound(&self, lambda: f64) -> f64 {
        self.big_c_fit * (-self.c_fit * lambda).exp() * self.l1_norm
    }
}

/// Fits `∫(f − λ(‖f‖₁+‖f‖_*))₊ ≤ C e^{−cλ}‖f‖₁` on a sweep of `λ` in
/// `(a, 20a]`; `c` by least squares on samples resolved by at least
/// [`RESOLVED_CELLS`] cells, `C` as the tightest constant over the sweep.
pub fn fit_superlevel_decay(f: &GriddedDensity, seminorm: f64, a: f64) -> Result<DecayFit> {
    let l1 = f.l1_norm();
    if !(l1 > 0.0) || !(a > 0.0) {
        return Err(Error::Fit("decay fit needs ‖f‖₁ > 0 and a > 0".into()));
    }
    // Steps of a/20, so every integer multiple of a is on the sweep.
    let lambdas: Vec<f64> = (1..=380).map(|j| a * (1.0 + j as f64 / 20.0)).collect();
    let scale = l1 + seminorm;
    let samples: Vec<(f64, f64)> = crate::par::map_slice(&lambdas, |&lam| (lam, superlevel_deficit(f, lam, seminorm)));
    let resolved: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(lam, dv)| *dv > 0.0 && f.values().iter().filter(|v| **v > lam * scale).count() >= RESOLVED_CELLS)
        .map(|(lam, dv)| (*lam, (dv / l1).ln()))
        .collect();
    let c_fit = if resolved.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = resolved.into_iter().unzip();
        -fit::line(&xs, &ys)?.slope
    } else if samples.iter().all(|s| s.1 == 0.0) {
        // Nothing above any threshold: every positive rate is consistent.
        1.0
    } else {
        return Err(Error::Fit("too few resolved superlevel samples".into()));
    };
    if !(c_fit > 0.0) {
        return Err(Error::Fit(format!("non-positive decay rate {c_fit}")));
    }
    let big_c_fit = samples.iter().fold(0.0f64, |m, (lam, dv)| m.max(dv / (l1 * (-c_fit * lam).exp())));
    Ok(DecayFit { samples, c_fit, big_c_fit, l1_norm: l1 })
}

/// One layer-cake comparison on a cube at a given `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainTerms {
    pub lambda: f64,
    /// `∫_K (f − λ(‖f‖₁+‖f‖_*))₊`.
    pub deficit: f64,
    /// `∫_{K ∩ {f − (f)_K > λ‖f‖_*}} (f − (f)_K)₊`.
    pub restricted: f64,
    /// `∫_{λ‖f‖_*}^∞ tail(r) dr + λ‖f‖_* tail(λ‖f‖_*)`, integrated exactly
    /// over the step function `r ↦ tail(r)`.
    pub layer_cake: f64,
}

/// Terms of the superlevel chain on `cube` at multiplier `lambda`.
pub fn chain_terms(f: &GriddedDensity, cube: &Cube, lambda: f64, seminorm: f64) -> ChainTerms {
    let cell = f.grid().cell_volume();
    let values = cube_values(f, cube);
    let (mean, _) = mean_and_oscillation(&values);
    let level = lambda * (f.l1_norm() + seminorm);
    let theta = lambda * seminorm;
    let deficit: Vec<f64> = values.iter().map(|v| (v - level).max(0.0)).collect();
    let restricted: Vec<f64> = values.iter().map(|v| v - mean).filter(|g| *g > theta).collect();
    // tail(r) = cell·#{g > r} is a step function; integrate it between the
    // sorted jump points.
    let mut jumps = restricted.clone();
    jumps.sort_by(|a, b| b.total_cmp(a));
    let mut area = Vec::with_capacity(jumps.len());
    for (k, w) in jumps.iter().enumerate() {
        let next = jumps.get(k + 1).copied().unwrap_or(theta);
        area.push((k + 1) as f64 * (w - next));
    }
    ChainTerms {
        lambda,
        deficit: cell * crate::par::sum(&deficit),
        restricted: cell * crate::par::sum(&restricted),
        layer_cake: cell * (crate::par::sum(&area) + theta * jumps.len() as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageBound {
    /// `max_K ((f)_K ℒ^d(K) − ‖f‖₁)`, at most round-off for nonnegative `f`.
    pub max_excess: f64,
    /// Smallest cube volume from which on `(f)_K ≤ a‖f‖₁` for every cube.
    pub min_volume: Option<f64>,
    pub pass: bool,
}

/// Checks `(f)_K ≤ ‖f‖₁/ℒ^d(K)` on every cube and locates the volumes for
/// which `(f)_K ≤ a‖f‖₁`.
pub fn average_bound_check(f: &GriddedDensity, family: &CubeFamily, a: f64) -> Result<AverageBound> {
    let scan = cube_scan(f, family)?;
    let l1 = f.l1_norm();
    let grid = f.grid();
    let tol = 1e-12 * l1.max(f64::MIN_POSITIVE);
    let max_excess = scan.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.mean * s.cube.volume(grid) - l1));
    let mut volumes: Vec<f64> = scan.iter().map(|s| s.cube.volume(grid)).collect();
    volumes.sort_by(|a, b| a.total_cmp(b));
    volumes.dedup();
    let min_volume = volumes
        .into_iter()
        .find(|&v| scan.iter().filter(|s| s.cube.volume(grid) >= v).all(|s| s.mean <= a * l1 + tol));
    Ok(AverageBound { max_excess, min_volume, pass: max_excess <= tol })
}

/// Everything the certificate needs from one BMO analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct BmoReport {
    pub seminorm_lb: f64,
    pub l1_norm: f64,
    pub cubes: Vec<CubeStat>,
    pub jn: JnTail,
    pub decay: DecayFit,
    pub average: AverageBound,
}

impl BmoReport {
    pub fn a_fit(&self) -> f64 {
        self.jn.threshold.unwrap_or(f64::INFINITY)
    }

    pub fn pass(&self) -> bool {
        self.jn.pass() && self.average.pass && self.decay.c_fit > 0.0
    }
}

/// Cube of the family with the largest `∫_K |f − (f)_K|`.
pub fn heaviest_cube(stats: &[CubeStat], grid: &Grid) -> Option<Cube> {
    stats
        .iter()
        .fold(None, |best: Option<(f64, Cube)>, s| {
            let w = s.oscillation * s.cube.volume(grid);
            match best {
                Some((bw, _)) if bw >= w => best,
                _ => Some((w, s.cube)),
            }
        })
        .map(|b| b.1)
}

/// Full analysis of `|f|`: seminorm scan, John–Nirenberg fit on the cube
/// carrying the most oscillation, superlevel decay and average bound.
pub fn analyze(f: &GriddedDensity, family: &CubeFamily) -> Result<BmoReport> {
    let abs = GriddedDensity::new(*f.grid(), f.time(), f.values().iter().map(|v| v.abs()).collect())?;
    let cubes = cube_scan(&abs, family)?;
    let seminorm_lb = cubes.iter().fold(0.0f64, |m, s| m.max(s.oscillation));
    let cube = heaviest_cube(&cubes, abs.grid()).ok_or_else(|| Error::Fit("empty cube family".into()))?;
    let jn = jn_tail(&abs, &cube, seminorm_lb)?;
    let a = jn.threshold.ok_or_else(|| Error::Fit("John–Nirenberg envelope never holds".into()))?;
    let decay = fit_superlevel_decay(&abs, seminorm_lb, a)?;
    let average = average_bound_check(&abs, family, a)?;
    Ok(BmoReport { seminorm_lb, l1_norm: abs.l1_norm(), cubes, jn, decay, average })
}
