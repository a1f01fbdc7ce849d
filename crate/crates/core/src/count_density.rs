//! Ensemble distribution of the photocount moments.
//!
//! The density of `mu_r` over the mode ensemble is obtained two independent
//! ways: deterministically, by inverting the response curve branch by branch
//! and applying the change-of-variables rule `ρ(mu) = Σ P(Γ_i)/|mu'(Γ_i)|`,
//! and stochastically, by sampling escape rates and histogramming the exact
//! moments. The two routes validate each other.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_ensemble::{ModeEnsemble, RngHandle};
use crate::numerics::{geomspace, interp_linear};
use crate::photon_stats::LaserParams;
use crate::response_curve::{build_response_curve, mu_exact, ResponseCurve};

/// Nodes closer than this fraction of `mu_max` to the singular endpoint at
/// `mu_max` are filled in from the square-root asymptote instead of finite
/// differences, which degenerate as `mu' -> 0`.
const SINGULAR_SLIVER: f64 = 1e-4;

/// Derivative magnitudes below this (times `mu_max / Γ̄`) flag grid pathology.
const DERIVATIVE_FLOOR: f64 = 1e-12;

/// Histogram range extends to `mu_max * (1 + MU_RANGE_PAD)`.
const MU_RANGE_PAD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    Deterministic,
    MonteCarlo,
}

/// Endpoint annotation: the density is not evaluated at the singular node
/// itself; `exponent` is the local power law, when one applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularPoint {
    pub location: f64,
    pub exponent: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountDensity {
    pub moment_order_r: u32,
    pub mu_grid: Vec<f64>,
    pub density: Vec<f64>,
    pub method: DensityMethod,
    pub mu_max: f64,
    pub singular_points: Vec<SingularPoint>,
    /// Numerical integral of the density including analytic endpoint slivers.
    pub mass_check: f64,
    /// Indices of nodes filled in from the endpoint asymptote.
    pub matched_nodes: Vec<usize>,
    pub flags: Vec<String>,
}

/// Node layout for the deterministic density: logarithmically dense toward
/// both the origin and `mu_max`, where the interesting structure lives.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MuGridSpec {
    pub points: usize,
}

impl Default for MuGridSpec {
    fn default() -> Self {
        Self { points: 500 }
    }
}

impl MuGridSpec {
    pub fn build(&self, mu_max: f64) -> Result<Vec<f64>> {
        if self.points < 50 {
            return Err(Error::InvalidParameter(format!(
                "mu grid needs >= 50 points, got {}",
                self.points
            )));
        }
        let n1 = self.points / 2;
        let n2 = self.points - n1;
        let mut grid = geomspace(1e-6 * mu_max, 0.5 * mu_max, n1);
        grid.extend(geomspace(3e-5 * mu_max, 0.5 * mu_max, n2).iter().map(|d| mu_max - d));
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * mu_max);
        Ok(grid)
    }
}

/// Power-law exponent of the density at vanishing photocount,
/// `(beta M)/(2r) - 1`.
fn small_count_exponent(ensemble: &ModeEnsemble, r: u32) -> f64 {
    ensemble.nu() as f64 / (2.0 * r as f64) - 1.0
}

/// Escape-rate span that the response curve must cover for a given
/// ensemble: at least 20 mean rates and essentially all ensemble mass.
pub fn default_gamma_max(params: &LaserParams, ensemble: &ModeEnsemble) -> f64 {
    let tail = ensemble.gamma_quantile(1.0 - 1e-9).unwrap_or(20.0 * ensemble.mean_gamma);
    let mut gmax = (20.0 * ensemble.mean_gamma).max(tail);
    // Below threshold the plateau is only approached as Γ -> ∞; extend the
    // grid until the asymptotic moment reaches 99.9% of the plateau so the
    // upper end of the density support is resolved.
    if params.absorption_kappa > params.gain_a {
        gmax = gmax.max(999.0 * (params.absorption_kappa - params.gain_a));
    }
    gmax
}

/// Deterministic ensemble density by change of variables over the
/// monotonic branches of the response curve.
pub fn density_deterministic(
    curve: &ResponseCurve,
    ensemble: &ModeEnsemble,
    spec: &MuGridSpec,
) -> Result<CountDensity> {
    let mu_max = curve.mu_max();
    let grid = spec.build(mu_max)?;
    let gbar = ensemble.mean_gamma;
    let params = curve.params;
    let r = curve.moment_order_r;
    let has_peak = curve.peak.is_some();
    let deriv_floor = DERIVATIVE_FLOOR * mu_max / gbar;

    let sliver_cut = mu_max * (1.0 - SINGULAR_SLIVER);
    let results: Vec<(f64, Option<String>)> = grid
        .par_iter()
        .map(|&mu| {
            if has_peak && mu >= sliver_cut {
                return (f64::NAN, None); // filled from the asymptote below
            }
            let mut total = 0.0;
            let mut flag = None;
            for bid in 0..curve.branches.len() {
                let gamma = match curve.invert_on_branch(bid, mu) {
                    Ok(g) => g,
                    Err(Error::OutOfBranchRange { .. }) => continue,
                    Err(e) => return (f64::NAN, Some(e.to_string())),
                };
                if gamma <= 0.0 {
                    continue;
                }
                let h0 = (1e-4 * gamma).max(1e-8 * gbar).min(0.5 * gamma);
                let diff = |h: f64| {
                    let up = mu_exact(&params, r, gamma + h).unwrap_or(f64::NAN);
                    let dn = mu_exact(&params, r, gamma - h).unwrap_or(f64::NAN);
                    (up - dn) / (2.0 * h)
                };
                // One step of Richardson extrapolation on the central difference.
                let d = (4.0 * diff(0.5 * h0) - diff(h0)) / 3.0;
                if !d.is_finite() || d.abs() < deriv_floor {
                    flag = Some(format!("derivative {d:.3e} below floor at mu = {mu:.6e}"));
                    continue;
                }
                total += ensemble.gamma_pdf(gamma).unwrap_or(0.0) / d.abs();
            }
            (total, flag)
        })
        .collect();

    let mut density: Vec<f64> = results.iter().map(|(d, _)| *d).collect();
    let mut flags: Vec<String> = results.iter().filter_map(|(_, f)| f.clone()).collect();
    flags.dedup();

    // Square-root asymptote inside the sliver at mu_max, matched to the
    // outermost regularly evaluated node.
    let mut matched_nodes = Vec::new();
    if has_peak {
        let reference = grid
            .iter()
            .zip(&density)
            .rev()
            .find(|(&mu, &d)| mu < sliver_cut && d.is_finite() && d > 0.0)
            .map(|(&mu, &d)| (mu_max - mu, d));
        if let Some((d_ref, rho_ref)) = reference {
            let c = rho_ref * d_ref.sqrt();
            for (i, &mu) in grid.iter().enumerate() {
                if mu >= sliver_cut {
                    density[i] = c / (mu_max - mu).sqrt();
                    matched_nodes.push(i);
                }
            }
        } else {
            flags.push("no regular node available to anchor the mu_max asymptote".into());
        }
    }

    let exp0 = small_count_exponent(ensemble, r);
    let singular_points = vec![
        SingularPoint {
            location: 0.0,
            exponent: Some(exp0),
            note: "small-count power law".into(),
        },
        SingularPoint {
            location: mu_max,
            exponent: has_peak.then_some(-0.5),
            note: if has_peak {
                "square-root singularity at maximum photocount".into()
            } else {
                "density vanishes toward the plateau".into()
            },
        },
    ];

    let mass_check = integrate_with_slivers(&grid, &density, mu_max, exp0, has_peak);

    if let Some(&gtop) = curve.gamma_grid.last() {
        let covered = ensemble.gamma_cdf(gtop).unwrap_or(0.0);
        if covered < 0.999 {
            flags.push(format!("curve covers only {covered:.4} of the ensemble mass"));
        }
    }

    Ok(CountDensity {
        moment_order_r: r,
        mu_grid: grid,
        density,
        method: DensityMethod::Deterministic,
        mu_max,
        singular_points,
        mass_check,
        matched_nodes,
        flags,
    })
}

/// Trapezoid over the regular nodes plus analytic integrals of the
/// power-law slivers at both endpoints.
fn integrate_with_slivers(grid: &[f64], density: &[f64], mu_max: f64, exp0: f64, has_peak: bool) -> f64 {
    let mut mass = 0.0;
    for i in 1..grid.len() {
        let (d0, d1) = (density[i - 1], density[i]);
        if d0.is_finite() && d1.is_finite() {
            mass += 0.5 * (d0 + d1) * (grid[i] - grid[i - 1]);
        }
    }
    // [0, mu_0] under rho = c mu^exp0.
    if let Some((&mu0, &rho0)) = grid.iter().zip(density).find(|(_, &d)| d.is_finite() && d > 0.0) {
        mass += rho0 * mu0 / (exp0 + 1.0);
    }
    // [mu_last, mu_max] under rho = c (mu_max - mu)^(-1/2).
    if has_peak {
        if let Some((&mu1, &rho1)) = grid.iter().zip(density).rev().find(|(_, &d)| d.is_finite() && d > 0.0) {
            mass += 2.0 * rho1 * (mu_max - mu1);
        }
    }
    mass
}

/// Monte Carlo ensemble density: sample escape rates, evaluate the exact
/// moment for each, histogram into equal-width bins over
/// `[0, mu_max (1 + pad)]`, and normalize to unit mass.
pub fn density_monte_carlo(
    params: &LaserParams,
    ensemble: &ModeEnsemble,
    r: u32,
    rng: &RngHandle,
    n_samples: usize,
    bins: usize,
) -> Result<CountDensity> {
    if n_samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "n_samples must be >= 10^4, got {n_samples}"
        )));
    }
    if bins < 10 {
        return Err(Error::InvalidParameter(format!("bins must be >= 10, got {bins}")));
    }
    let curve = build_response_curve(params, r, default_gamma_max(params, ensemble), 300)?;
    let mu_max = curve.mu_max();

    let gammas = ensemble.sample_gamma(rng, n_samples);
    let mus: Vec<f64> = gammas
        .par_iter()
        .map(|&g| mu_exact(params, r, g).unwrap_or(f64::NAN))
        .collect();

    let hi = mu_max * (1.0 + MU_RANGE_PAD);
    let width = hi / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut bad = 0u64;
    for &mu in &mus {
        if !mu.is_finite() || mu < 0.0 || mu > hi {
            bad += 1;
            continue;
        }
        let idx = ((mu / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let mut flags = Vec::new();
    if bad > 0 {
        flags.push(format!("{bad} samples outside [0, {hi:.6e}] dropped"));
    }
    let kept = (n_samples as u64 - bad) as f64;
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (kept * width)).collect();
    let mu_grid: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) * width).collect();

    let singular_points = vec![
        SingularPoint {
            location: 0.0,
            exponent: Some(small_count_exponent(ensemble, r)),
            note: "first bin dominated by the small-count divergence".into(),
        },
        SingularPoint {
            location: mu_max,
            exponent: curve.peak.map(|_| -0.5),
            note: "endpoint bin".into(),
        },
    ];

    Ok(CountDensity {
        moment_order_r: r,
        mu_grid,
        density,
        method: DensityMethod::MonteCarlo,
        mu_max,
        singular_points,
        mass_check: 1.0,
        matched_nodes: Vec::new(),
        flags,
    })
}

/// Bin masses of a density on equal-width bins over `[0, hi]`.
///
/// Monte Carlo densities are piecewise constant over their own bins;
/// deterministic ones are integrated as piecewise-linear in their nodes,
/// zero outside the tabulated support.
fn bin_masses(d: &CountDensity, edges: &[f64]) -> Vec<f64> {
    let nb = edges.len() - 1;
    let mut masses = vec![0.0; nb];
    match d.method {
        DensityMethod::MonteCarlo => {
            let src_w = d.mu_grid[1] - d.mu_grid[0];
            for (i, m) in masses.iter_mut().enumerate() {
                let (e0, e1) = (edges[i], edges[i + 1]);
                for (&c, &rho) in d.mu_grid.iter().zip(&d.density) {
                    let (s0, s1) = (c - 0.5 * src_w, c + 0.5 * src_w);
                    let overlap = (e1.min(s1) - e0.max(s0)).max(0.0);
                    *m += rho * overlap;
                }
            }
        }
        DensityMethod::Deterministic => {
            let lo = d.mu_grid[0];
            let hi = *d.mu_grid.last().unwrap();
            for (i, m) in masses.iter_mut().enumerate() {
                let (e0, e1) = (edges[i].max(lo), edges[i + 1].min(hi));
                if e1 <= e0 {
                    continue;
                }
                let mut xs = vec![e0];
                xs.extend(d.mu_grid.iter().cloned().filter(|&x| x > e0 && x < e1));
                xs.push(e1);
                for w in xs.windows(2) {
                    let y0 = interp_linear(&d.mu_grid, &d.density, w[0]);
                    let y1 = interp_linear(&d.mu_grid, &d.density, w[1]);
                    if y0.is_finite() && y1.is_finite() {
                        *m += 0.5 * (y0 + y1) * (w[1] - w[0]);
                    }
                }
            }
        }
    }
    masses
}

/// Total-variation distance and KS statistic between two densities on
/// common regular bins, excluding the singular endpoint bins.
pub fn compare_densities(a: &CountDensity, b: &CountDensity) -> Result<(f64, f64)> {
    if (a.mu_max - b.mu_max).abs() > 1e-6 * a.mu_max.max(b.mu_max) {
        return Err(Error::IncompatibleGrids(format!(
            "mu_max differs: {} vs {}",
            a.mu_max, b.mu_max
        )));
    }
    let nb = match (a.method, b.method) {
        (DensityMethod::MonteCarlo, _) => a.mu_grid.len(),
        (_, DensityMethod::MonteCarlo) => b.mu_grid.len(),
        _ => 400,
    };
    if a.method == DensityMethod::MonteCarlo
        && b.method == DensityMethod::MonteCarlo
        && a.mu_grid.len() != b.mu_grid.len()
    {
        return Err(Error::IncompatibleGrids(format!(
            "histogram bin counts differ: {} vs {}",
            a.mu_grid.len(),
            b.mu_grid.len()
        )));
    }
    let hi = a.mu_max.max(b.mu_max) * (1.0 + MU_RANGE_PAD);
    let edges: Vec<f64> = (0..=nb).map(|i| hi * i as f64 / nb as f64).collect();
    let ma = bin_masses(a, &edges);
    let mb = bin_masses(b, &edges);

    // A bin is singular if it contains an annotated singular location.
    let singular = |i: usize| -> bool {
        a.singular_points
            .iter()
            .chain(&b.singular_points)
            .any(|s| s.location >= edges[i] && s.location < edges[i + 1])
    };
    let mut tv = 0.0;
    let mut ks: f64 = 0.0;
    let (mut ca, mut cb) = (0.0, 0.0);
    for i in 0..nb {
        if singular(i) {
            continue;
        }
        tv += 0.5 * (ma[i] - mb[i]).abs();
        ca += ma[i];
        cb += mb[i];
        ks = ks.max((ca - cb).abs());
    }
    Ok((tv, ks))
}

impl CountDensity {
    /// CSV rows `mu,mu_over_mu_max,density,method,flag`.
    pub fn to_csv(&self) -> String {
        let method = match self.method {
            DensityMethod::Deterministic => "deterministic",
            DensityMethod::MonteCarlo => "monte_carlo",
        };
        let mut out = String::from("mu,mu_over_mu_max,density,method,flag\n");
        for (i, (&mu, &rho)) in self.mu_grid.iter().zip(&self.density).enumerate() {
            let flag = if self.matched_nodes.contains(&i) { "matched" } else { "" };
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{}\n",
                mu,
                mu / self.mu_max,
                rho,
                method,
                flag
            ));
        }
        out
    }

    /// JSON document carrying the full density with its annotations.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("density serializes")
    }

    /// Integral of the density over `[lo, hi]` by trapezoid on the nodes.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let edges = [lo, hi];
        bin_masses(self, &edges)[0]
    }
}
