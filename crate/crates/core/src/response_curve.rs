//! The photocount moment as a function of the escape rate.
//!
//! Above the ensemble threshold (`A > kappa`) the mean photocount rises to
//! an interior maximum at `Γ*` and then relaxes toward the large-`Γ`
//! plateau; below threshold it climbs monotonically toward the plateau.
//! The tabulated curve, its monotonic branches, and the refined peak are
//! what the ensemble density computation inverts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect_monotone, geomspace, golden_section_max};
use crate::photon_stats::{short_time_moments, LaserParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Inclusive index range of a monotonic section; adjacent branches share
/// their turning-point index so both can be inverted up to the extremum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Branch {
    pub start: usize,
    pub end: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Peak {
    pub gamma_star: f64,
    pub mu_max: f64,
}

/// Ensemble position relative to the lasing threshold `A = kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdClass {
    AboveEnsemble,
    BelowEnsemble,
    /// `A = kappa` exactly; treated as below by convention.
    Critical,
}

impl ThresholdClass {
    pub fn is_above(&self) -> bool {
        matches!(self, ThresholdClass::AboveEnsemble)
    }
}

/// `A > kappa` puts the whole ensemble above threshold regardless of `Γ`.
pub fn classify_threshold(params: &LaserParams) -> ThresholdClass {
    if params.gain_a > params.absorption_kappa {
        ThresholdClass::AboveEnsemble
    } else if params.gain_a == params.absorption_kappa {
        ThresholdClass::Critical
    } else {
        ThresholdClass::BelowEnsemble
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub params: LaserParams,
    pub moment_order_r: u32,
    pub gamma_grid: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub branches: Vec<Branch>,
    pub peak: Option<Peak>,
    pub plateau_estimate: f64,
    pub flags: Vec<String>,
}

/// Exact moment evaluation backing the tabulated curve.
pub fn mu_exact(params: &LaserParams, r: u32, gamma: f64) -> Result<f64> {
    Ok(short_time_moments(params, gamma, r)?[r as usize - 1])
}

fn factorial(r: u32) -> f64 {
    (1..=r).map(|k| k as f64).product()
}

/// Tabulate `mu_r(Γ)` on `[0, gamma_max]`, detect the monotonic branches,
/// and refine any interior maximum by golden-section search.
///
/// The grid is logarithmic over eight decades up to `gamma_max`, with a
/// linear refinement of width `0.2 Γ*` inserted around a detected peak.
pub fn build_response_curve(
    params: &LaserParams,
    r: u32,
    gamma_max: f64,
    grid_points: usize,
) -> Result<ResponseCurve> {
    params.validate()?;
    if grid_points < 200 {
        return Err(Error::InvalidParameter(format!(
            "grid_points must be >= 200, got {grid_points}"
        )));
    }
    if !(gamma_max > 0.0) || !gamma_max.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma_max must be > 0, got {gamma_max}")));
    }
    if r < 1 {
        return Err(Error::InvalidParameter("moment order r must be >= 1".into()));
    }

    let mut grid = vec![0.0];
    grid.extend(geomspace(gamma_max * 1e-8, gamma_max, grid_points - 1));
    let mut mu = eval_grid(params, r, &grid)?;

    // First pass: locate an interior maximum and refine it.
    let mut peak = None;
    if let Some(g) = interior_argmax(&mu) {
        let (gamma_star, mu_max) = golden_section_max(
            |x| mu_exact(params, r, x).unwrap_or(f64::NEG_INFINITY),
            grid[g - 1],
            grid[g + 1],
            1e-8,
        );
        peak = Some(Peak { gamma_star, mu_max });
        // Linear refinement of width 0.2 Γ* around the peak.
        let mut extra: Vec<f64> = (0..=32)
            .map(|i| gamma_star * (0.9 + 0.2 * i as f64 / 32.0))
            .filter(|&x| x > 0.0 && x < gamma_max)
            .collect();
        extra.push(gamma_star);
        grid.extend(extra);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        mu = eval_grid(params, r, &grid)?;
    }

    let mut flags = Vec::new();
    let branches = detect_branches(&mu, &mut flags);
    if r == 1 && branches.len() > 2 {
        flags.push(format!("expected at most 2 branches for r=1, found {}", branches.len()));
    }

    let t = params.counting_time_t;
    let plateau_estimate = factorial(r) * (params.gain_a * t).powi(r as i32);
    if peak.is_none() {
        if let Some(&last) = mu.last() {
            if last > plateau_estimate * (1.0 + 1e-9) {
                flags.push(format!(
                    "largest grid value {last} exceeds plateau estimate {plateau_estimate}"
                ));
            }
        }
    }

    Ok(ResponseCurve {
        params: *params,
        moment_order_r: r,
        gamma_grid: grid,
        mu_values: mu,
        branches,
        peak,
        plateau_estimate,
        flags,
    })
}

fn eval_grid(params: &LaserParams, r: u32, grid: &[f64]) -> Result<Vec<f64>> {
    grid.par_iter().map(|&g| mu_exact(params, r, g)).collect()
}

/// Index of a strict interior maximum of `mu`, if one exists.
fn interior_argmax(mu: &[f64]) -> Option<usize> {
    let g = mu
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?
        .0;
    let tol = 1e-12 * mu[g].abs();
    if g > 0 && g + 1 < mu.len() && mu[g] > mu[mu.len() - 1] + tol && mu[g] > tol {
        Some(g)
    } else {
        None
    }
}

fn detect_branches(mu: &[f64], flags: &mut Vec<String>) -> Vec<Branch> {
    let max_mu = mu.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-13 * max_mu;
    let mut branches: Vec<Branch> = Vec::new();
    let mut dir: Option<Direction> = None;
    let mut start = 0usize;
    for i in 1..mu.len() {
        let d = mu[i] - mu[i - 1];
        let step = if d > tol {
            Some(Direction::Increasing)
        } else if d < -tol {
            Some(Direction::Decreasing)
        } else {
            None // flat within tolerance; absorbed into current branch
        };
        match (dir, step) {
            (None, Some(s)) => dir = Some(s),
            (Some(cur), Some(s)) if s != cur => {
                branches.push(Branch {
                    start,
                    end: i - 1,
                    direction: cur,
                });
                start = i - 1; // turning point shared with the next branch
                dir = Some(s);
            }
            _ => {}
        }
    }
    branches.push(Branch {
        start,
        end: mu.len() - 1,
        direction: dir.unwrap_or(Direction::Increasing),
    });
    if branches.len() > 3 {
        flags.push(format!("direction alternates {} times", branches.len() - 1));
    }
    branches
}

impl ResponseCurve {
    /// Refined interior maximum, if the curve has one.
    pub fn find_peak(&self) -> Option<Peak> {
        self.peak
    }

    /// Largest photocount over all `Γ`: the refined peak above threshold,
    /// otherwise the analytic plateau limit.
    pub fn mu_max(&self) -> f64 {
        self.peak.map(|p| p.mu_max).unwrap_or(self.plateau_estimate)
    }

    /// Solve `mu_r(Γ) = mu` on one monotonic branch by bisection against
    /// the exact moment evaluation.
    pub fn invert_on_branch(&self, branch_id: usize, mu: f64) -> Result<f64> {
        let branch = self
            .branches
            .get(branch_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no branch {branch_id}")))?;
        let (ga, gb) = (self.gamma_grid[branch.start], self.gamma_grid[branch.end]);
        let (va, vb) = (self.mu_values[branch.start], self.mu_values[branch.end]);
        let (lo, hi) = if va <= vb { (va, vb) } else { (vb, va) };
        let slack = 1e-12 * self.mu_max();
        if mu < lo - slack || mu > hi + slack {
            return Err(Error::OutOfBranchRange { value: mu, lo, hi });
        }
        let mu_target = mu.clamp(lo, hi);
        if mu_target == va {
            return Ok(ga);
        }
        if mu_target == vb {
            return Ok(gb);
        }
        let params = self.params;
        let r = self.moment_order_r;
        let f = |g: f64| mu_exact(&params, r, g).unwrap_or(f64::NAN);
        let gamma = bisect_monotone(f, ga, gb, mu_target, 90);
        Ok(gamma)
    }

    /// CSV rows `gamma,mu_r,branch_id` with full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,mu_r,branch_id\n");
        for (i, (&g, &m)) in self.gamma_grid.iter().zip(&self.mu_values).enumerate() {
            let b = self
                .branches
                .iter()
                .position(|br| i >= br.start && i <= br.end)
                .unwrap_or(0);
            out.push_str(&format!("{:.16e},{:.16e},{}\n", g, m, b));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn above() -> LaserParams {
        LaserParams::new(1.0, 0.005, 0.7, 1.0).unwrap()
    }

    fn below() -> LaserParams {
        LaserParams::new(1.0, 0.005, 2.0, 1.0).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_threshold(&above()), ThresholdClass::AboveEnsemble);
        assert_eq!(classify_threshold(&below()), ThresholdClass::BelowEnsemble);
        let crit = LaserParams::new(1.0, 0.005, 1.0, 1.0).unwrap();
        assert_eq!(classify_threshold(&crit), ThresholdClass::Critical);
        assert!(!classify_threshold(&crit).is_above());
    }

    #[test]
    fn above_threshold_has_single_interior_maximum() {
        let curve = build_response_curve(&above(), 1, 0.4, 300).unwrap();
        assert!(curve.mu_values[0] == 0.0);
        let peak = curve.find_peak().expect("interior maximum");
        // Dense-grid oracle puts the exact argmax at 0.1402; the paper's
        // estimate sqrt(A k) - k = 0.1366 is within 10%.
        assert!((peak.gamma_star - 0.1402).abs() < 0.002, "gamma* = {}", peak.gamma_star);
        assert!((peak.gamma_star - 0.13666).abs() / 0.13666 < 0.1);
        assert_eq!(curve.branches.len(), 2);
        assert_eq!(curve.branches[0].direction, Direction::Increasing);
        assert_eq!(curve.branches[1].direction, Direction::Decreasing);
        assert!(curve.flags.is_empty(), "{:?}", curve.flags);
    }

    #[test]
    fn below_threshold_is_monotone() {
        let curve = build_response_curve(&below(), 1, 10.0, 300).unwrap();
        assert!(curve.find_peak().is_none());
        assert_eq!(curve.branches.len(), 1);
        assert_eq!(curve.branches[0].direction, Direction::Increasing);
        assert_eq!(curve.mu_max(), curve.plateau_estimate);
        assert!((curve.plateau_estimate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(build_response_curve(&above(), 1, 0.4, 1).is_err());
        assert!(build_response_curve(&above(), 1, 0.0, 300).is_err());
    }

    #[test]
    fn invert_round_trip_on_both_branches() {
        let curve = build_response_curve(&above(), 1, 0.4, 300).unwrap();
        let mu_max = curve.mu_max();
        for (bid, branch) in curve.branches.iter().enumerate() {
            for i in (branch.start..=branch.end).step_by(17) {
                let g = curve.gamma_grid[i];
                if g == 0.0 {
                    continue;
                }
                let mu = curve.mu_values[i];
                let back = curve.invert_on_branch(bid, mu).unwrap();
                let res = (mu_exact(&curve.params, 1, back).unwrap() - mu).abs();
                assert!(res <= 1e-9 * mu_max, "branch {bid}, gamma {g}: residual {res}");
                assert!((back / g - 1.0).abs() < 1e-6, "branch {bid}: {back} vs {g}");
            }
        }
    }

    #[test]
    fn invert_at_zero_and_near_peak() {
        let curve = build_response_curve(&above(), 1, 0.4, 300).unwrap();
        assert_eq!(curve.invert_on_branch(0, 0.0).unwrap(), 0.0);
        let peak = curve.peak.unwrap();
        let mu = peak.mu_max * (1.0 - 1e-4);
        let g0 = curve.invert_on_branch(0, mu).unwrap();
        let g1 = curve.invert_on_branch(1, mu).unwrap();
        assert!(g0 < peak.gamma_star && peak.gamma_star < g1);
        // Out of range on the wrong side.
        assert!(curve.invert_on_branch(0, peak.mu_max * 1.01).is_err());
    }

    #[test]
    fn invert_below_threshold_recovers_gamma() {
        let curve = build_response_curve(&below(), 1, 10.0, 300).unwrap();
        let mu = mu_exact(&curve.params, 1, 0.5).unwrap();
        let g = curve.invert_on_branch(0, mu).unwrap();
        assert!((g / 0.5 - 1.0).abs() < 1e-6, "gamma = {g}");
    }

    #[test]
    fn plateau_approach_direction_and_level() {
        // Lower case of the far-from-threshold formula becomes exact as
        // Γ -> ∞ up to the saturation correction n_s/(n_s+1).
        for (p, above_thr) in [(above(), true), (below(), false)] {
            let g = 100.0 * p.gain_a.max(p.absorption_kappa);
            let mu = mu_exact(&p, 1, g).unwrap();
            let c = g + p.absorption_kappa;
            let ratio = mu * (c - p.gain_a) / (g * p.gain_a * p.counting_time_t);
            assert!((ratio - 1.0).abs() < 0.02, "ratio = {ratio}");
            // Approach direction at large Γ: above-threshold ensembles sit
            // above the A t plateau scaled by n_s/(n_s+1), below-threshold
            // ensembles below it.
            let ns = p.saturation_photon_number();
            let plateau_exact = p.gain_a * p.counting_time_t * ns / (ns + 1.0);
            let sign = mu - plateau_exact;
            assert_eq!(sign > 0.0, above_thr, "mu = {mu} vs {plateau_exact}");
        }
    }

    fn eq12(p: &LaserParams, g: f64) -> f64 {
        let c = g + p.absorption_kappa;
        let ns = p.saturation_photon_number();
        if c < p.gain_a {
            p.counting_time_t * g * ns * (p.gain_a - c) / c
        } else {
            p.counting_time_t * g * p.gain_a / (c - p.gain_a)
        }
    }

    #[test]
    fn far_from_threshold_matches_asymptotic() {
        // Preset mean escape rates with |A - C| >= 0.2 A agree to 5%. The
        // bound does not extend to arbitrary grid points: just past threshold
        // on the absorbing side the saturation correction alone reaches ~18%.
        for (p, g) in [(above(), 0.02), (below(), 0.5), (below(), 4.0)] {
            let mu = mu_exact(&p, 1, g).unwrap();
            let asym = eq12(&p, g);
            assert!((mu - asym).abs() / mu < 0.05, "gamma = {g}: {mu} vs {asym}");
        }
    }

    #[test]
    fn eq12_error_shrinks_along_gamma_ray() {
        // Relative error decreases monotonically with distance from threshold.
        for p in [above(), below()] {
            let mut last = f64::INFINITY;
            for k in 0..12 {
                let c = p.gain_a * (1.3 + 0.4 * k as f64);
                let g = c - p.absorption_kappa;
                if g <= 0.0 {
                    continue;
                }
                let mu = mu_exact(&p, 1, g).unwrap();
                let err = ((mu - eq12(&p, g)) / mu).abs();
                assert!(err < last * (1.0 + 1e-9), "err = {err} at gamma = {g}");
                last = err;
            }
        }
    }

    #[test]
    fn csv_has_branch_annotations() {
        let curve = build_response_curve(&above(), 1, 0.4, 200).unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("gamma,mu_r,branch_id\n"));
        assert!(csv.lines().count() == curve.gamma_grid.len() + 1);
        assert!(csv.lines().last().unwrap().ends_with(",1"));
    }
}
