//! Closed-form limits of the photocount statistics and power-law fits
//! validating the computed densities against them.

use serde::{Deserialize, Serialize};

use crate::count_density::CountDensity;
use crate::error::{Error, Result};
use crate::numerics::linear_fit;
use crate::photon_stats::LaserParams;

/// Relative distance from threshold below which the far-from-threshold
/// formulas are refused; callers must fall back to exact summation.
pub const THRESHOLD_GUARD: f64 = 1e-3;

/// Least-squares power-law exponent with its standard error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    /// Window in `mu` units (absolute, not fractions).
    pub fit_window: (f64, f64),
    pub n_points: usize,
}

/// Exponent of the small-count power law: `(beta M)/(2r) - 1`.
pub fn small_count_exponent(beta: u32, channels_m: u32, r: u32) -> Result<f64> {
    if beta != 1 && beta != 2 {
        return Err(Error::InvalidParameter(format!("beta must be 1 or 2, got {beta}")));
    }
    if channels_m < 1 || r < 1 {
        return Err(Error::InvalidParameter("need M >= 1 and r >= 1".into()));
    }
    Ok((beta * channels_m) as f64 / (2.0 * r as f64) - 1.0)
}

/// Far-from-threshold mean photocount:
/// `t Γ n_s (A - C)/C` below `C = A`, `t Γ A/(C - A)` above.
pub fn asymptotic_mu1(params: &LaserParams, gamma: f64) -> Result<f64> {
    params.validate()?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let a = params.gain_a;
    let c = gamma + params.absorption_kappa;
    let dist = (c - a).abs();
    if dist < THRESHOLD_GUARD * a {
        return Err(Error::ThresholdSingular {
            dist,
            tol: THRESHOLD_GUARD * a,
        });
    }
    let t = params.counting_time_t;
    Ok(if c < a {
        t * gamma * params.saturation_photon_number() * (a - c) / c
    } else {
        t * gamma * a / (c - a)
    })
}

/// The escape rate maximizing the mean photocount, estimated from the
/// far-from-threshold formula: `sqrt(A kappa) - kappa`.
pub fn gamma_star_analytic(gain_a: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !(gain_a > kappa) {
        return Err(Error::NoInteriorPeak { gain: gain_a, kappa });
    }
    Ok((gain_a * kappa).sqrt() - kappa)
}

fn window_nodes(
    density: &CountDensity,
    transform: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&mu, &rho)) in density.mu_grid.iter().zip(&density.density).enumerate() {
        if density.matched_nodes.contains(&i) {
            continue; // asymptote-filled nodes would make the fit circular
        }
        let x = transform(mu);
        if x >= lo && x <= hi && rho > 0.0 && rho.is_finite() {
            xs.push(x.ln());
            ys.push(rho.ln());
        }
    }
    (xs, ys)
}

/// Least-squares slope of `log density` against `log mu` on `window`
/// (absolute `mu` bounds).
pub fn fit_power_law(density: &CountDensity, window: (f64, f64)) -> Result<ExponentFit> {
    let (xs, ys) = window_nodes(density, |mu| mu, window.0, window.1);
    if xs.len() < 10 {
        return Err(Error::TooFewFitPoints {
            need: 10,
            found: xs.len(),
        });
    }
    let (slope, _, stderr) = linear_fit(&xs, &ys);
    Ok(ExponentFit {
        exponent: slope,
        stderr,
        fit_window: window,
        n_points: xs.len(),
    })
}

/// Default singularity fit window, one decade inside the endpoint:
/// distances `[1e-4, 1e-2] mu_max`, i.e. `mu/mu_max` in `(0.99, 0.9999)`.
pub const SINGULARITY_WINDOW: (f64, f64) = (0.99, 0.9999);

/// Least-squares slope of `log density` against `log(mu_max - mu)` over
/// `window` given as fractions of `mu_max`; the target above threshold
/// is `-1/2`. Errors when the density does not diverge at `mu_max`.
pub fn fit_singularity_at_max(
    density: &CountDensity,
    mu_max: f64,
    window: (f64, f64),
) -> Result<ExponentFit> {
    let (lo, hi) = ((1.0 - window.1) * mu_max, (1.0 - window.0) * mu_max);
    let (xs, ys) = window_nodes(density, |mu| mu_max - mu, lo, hi);
    if xs.len() < 10 {
        return Err(Error::TooFewFitPoints {
            need: 10,
            found: xs.len(),
        });
    }
    // Non-divergent input: density falls toward the endpoint.
    let (inner, _) = xs
        .iter()
        .zip(&ys)
        .max_by(|a, b| a.0.partial_cmp(b.0).unwrap())
        .unwrap();
    let inner_rho = ys[xs.iter().position(|x| x == inner).unwrap()];
    let (outer_idx, _) = xs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if ys[outer_idx] <= inner_rho {
        return Err(Error::NotDivergent);
    }
    let (slope, _, stderr) = linear_fit(&xs, &ys);
    Ok(ExponentFit {
        exponent: slope,
        stderr,
        fit_window: (lo, hi),
        n_points: xs.len(),
    })
}
