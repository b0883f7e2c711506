//! Least-squares line fits used for convergence orders and decay rates.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Largest absolute residual.
    pub max_abs: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit("length mismatch".into()));
    }
    if xs.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (mut ss, mut max_abs) = (0.0, 0.0f64);
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ss += r * r;
        max_abs = max_abs.max(r.abs());
    }
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::Fit("non-finite fit".into()));
    }
    Ok(LineFit { slope, intercept, rms: (ss / n).sqrt(), max_abs })
}

/// Observed order p of `err ≈ C h^p` by least squares in log–log space.
pub fn order(hs: &[f64], errs: &[f64]) -> Result<f64> {
    if errs.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Fit("errors must be positive to fit an order".into()));
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    Ok(line(&lx, &ly)?.slope)
}

/// Power law `C h^p` fitted in log–log space; returns `(C, p)`.
pub fn power_law(hs: &[f64], errs: &[f64]) -> Result<(f64, f64)> {
    if errs.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Fit("values must be positive to fit a power law".into()));
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let f = line(&lx, &ly)?;
    Ok((f.intercept.exp(), f.slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }

    #[test]
    fn recovers_power_law_order() {
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(4)).collect();
        assert!((order(&hs, &errs).unwrap() - 4.0).abs() < 1e-10);
        let (c, p) = power_law(&hs, &errs).unwrap();
        assert!((c - 3.0).abs() < 1e-9 && (p - 4.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_short_input() {
        assert!(line(&[1.0], &[1.0]).is_err());
        assert!(order(&[0.1, 0.2], &[0.0, 1.0]).is_err());
    }
}
