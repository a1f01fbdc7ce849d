//! Stationary photon statistics of a saturated single-mode laser.
//!
//! The stationary photon number distribution is
//! `P_n ∝ (A n_s / C)^(n + n_s) / Γ(n + n_s + 1)` with saturation photon
//! number `n_s = A / B` and total loss `C`. The distribution spans hundreds
//! of orders of magnitude, so everything is carried in log space and only
//! the window within 40 natural-log units of the mode is materialized.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, sum_small_to_large};

/// Hard cap on the truncation index of the photon distribution.
pub const N_MAX_CAP: u64 = 10_000_000;

/// Highest factorial-moment order with guaranteed tail resolution.
pub const MOMENT_ORDER_CAP: u32 = 8;

/// Log-probability drop below the mode at which the distribution is cut.
const LOG_DROP: f64 = 40.0;

/// Fixed physics of one laser ensemble: linear gain `A`, saturation `B`,
/// absorption loss `kappa`, counting time `t`. Rates are in units of `A = 1`
/// by convention; `t` is a pure scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    pub gain_a: f64,
    pub saturation_b: f64,
    pub absorption_kappa: f64,
    pub counting_time_t: f64,
}

impl LaserParams {
    pub fn new(gain_a: f64, saturation_b: f64, absorption_kappa: f64, counting_time_t: f64) -> Result<Self> {
        let p = Self {
            gain_a,
            saturation_b,
            absorption_kappa,
            counting_time_t,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_a > 0.0) || !self.gain_a.is_finite() {
            return Err(Error::InvalidParameter(format!("gain_a must be > 0, got {}", self.gain_a)));
        }
        if !(self.saturation_b > 0.0) || !self.saturation_b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "saturation_b must be > 0, got {}",
                self.saturation_b
            )));
        }
        if !(self.absorption_kappa >= 0.0) || !self.absorption_kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "absorption_kappa must be >= 0, got {}",
                self.absorption_kappa
            )));
        }
        if !(self.counting_time_t > 0.0) || !self.counting_time_t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "counting_time_t must be > 0, got {}",
                self.counting_time_t
            )));
        }
        let ns = self.gain_a / self.saturation_b;
        if !ns.is_finite() || ns <= 0.0 {
            return Err(Error::InvalidParameter(format!("saturation photon number n_s = {ns} not usable")));
        }
        Ok(())
    }

    /// Saturation photon number `n_s = A / B`.
    pub fn saturation_photon_number(&self) -> f64 {
        self.gain_a / self.saturation_b
    }
}

/// Truncated numerical photon distribution with normalization metadata.
///
/// `probabilities[n]` is `P_n` for `n = 0..=n_max`; entries below the
/// retained window are zero. `log_norm` is the log of the normalization
/// constant multiplying the raw weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhotonDistribution {
    pub probabilities: Vec<f64>,
    pub n_max: usize,
    pub log_norm: f64,
    pub total_loss_c: f64,
    /// Geometric-series bound on the truncated tail mass.
    pub tail_bound: f64,
}

impl PhotonDistribution {
    /// Build a distribution from explicit non-negative weights (testing and
    /// synthetic constructions); weights are normalized to unit mass.
    pub fn from_weights(weights: &[f64], total_loss_c: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
        }
        let s: f64 = weights.iter().sum();
        if s <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(Self {
            probabilities: weights.iter().map(|&w| w / s).collect(),
            n_max: weights.len() - 1,
            log_norm: -s.ln(),
            total_loss_c,
            tail_bound: 0.0,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Stationary photon distribution for the given laser and total loss `C`.
///
/// Truncation starts at the mode (where the weight ratio crosses 1) and
/// extends both ways until the log-weight has dropped [`LOG_DROP`] units.
pub fn compute_photon_distribution(params: &LaserParams, total_loss_c: f64) -> Result<PhotonDistribution> {
    params.validate()?;
    if !(total_loss_c > 0.0) || !total_loss_c.is_finite() {
        return Err(Error::InvalidParameter(format!("total_loss_c must be > 0, got {total_loss_c}")));
    }
    let ns = params.saturation_photon_number();
    let lambda = params.gain_a * ns / total_loss_c;
    let log_lambda = lambda.ln();
    if !log_lambda.is_finite() {
        return Err(Error::NonFinite("log of A*n_s/C"));
    }
    // Raw log-weight of P_n before normalization.
    let lw = |n: u64| (n as f64 + ns) * log_lambda - ln_gamma(n as f64 + ns + 1.0);

    let mode = (lambda - ns - 1.0).floor().max(0.0) as u64;
    if mode >= N_MAX_CAP {
        return Err(Error::Truncation { needed: mode, cap: N_MAX_CAP });
    }
    let lw_mode = lw(mode);
    if !lw_mode.is_finite() {
        return Err(Error::NonFinite("log-weight at mode"));
    }
    let cut = lw_mode - LOG_DROP;

    // Lower edge: smallest n with lw(n) >= cut (lw increases up to the mode).
    let lo = if lw(0) >= cut {
        0
    } else {
        let (mut a, mut b) = (0u64, mode);
        while b - a > 1 {
            let m = (a + b) / 2;
            if lw(m) < cut {
                a = m;
            } else {
                b = m;
            }
        }
        b
    };

    // Upper edge: largest n with lw(n) >= cut.
    let mut hi = mode;
    let mut step = 16u64;
    while lw(hi + step) >= cut {
        hi += step;
        step *= 2;
        if hi + step >= N_MAX_CAP {
            return Err(Error::Truncation { needed: hi + step, cap: N_MAX_CAP });
        }
    }
    let (mut a, mut b) = (hi, hi + step);
    while b - a > 1 {
        let m = (a + b) / 2;
        if lw(m) >= cut {
            a = m;
        } else {
            b = m;
        }
    }
    hi = a;

    let log_weights: Vec<f64> = (lo..=hi).map(lw).collect();
    if log_weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-weight in retained window"));
    }
    let lse = log_sum_exp(&log_weights);

    let mut probabilities = vec![0.0; hi as usize + 1];
    for (i, &l) in log_weights.iter().enumerate() {
        probabilities[lo as usize + i] = (l - lse).exp();
    }

    // Geometric tail bounds just outside the retained window.
    let p_hi = probabilities[hi as usize];
    let r_hi = lambda / (hi as f64 + 1.0 + ns);
    let mut tail = if r_hi < 1.0 { p_hi * r_hi / (1.0 - r_hi) } else { f64::INFINITY };
    if lo > 0 {
        let p_lo = probabilities[lo as usize];
        let r_lo = (lo as f64 + ns) / lambda;
        tail += if r_lo < 1.0 { p_lo * r_lo / (1.0 - r_lo) } else { f64::INFINITY };
    }

    Ok(PhotonDistribution {
        probabilities,
        n_max: hi as usize,
        log_norm: -lse,
        total_loss_c,
        tail_bound: tail,
    })
}

/// `r`-th factorial moment `Σ n(n-1)···(n-r+1) P_n`.
pub fn factorial_moment(dist: &PhotonDistribution, r: u32) -> Result<f64> {
    if r < 1 {
        return Err(Error::InvalidParameter("moment order r must be >= 1".into()));
    }
    if r > MOMENT_ORDER_CAP {
        return Err(Error::MomentOrder { r, cap: MOMENT_ORDER_CAP });
    }
    let mut terms: Vec<f64> = dist
        .probabilities
        .iter()
        .enumerate()
        .skip(r as usize)
        .filter(|(_, &p)| p > 0.0)
        .map(|(n, &p)| {
            let mut ff = 1.0;
            for j in 0..r {
                ff *= (n as u32 - j) as f64;
            }
            ff * p
        })
        .collect();
    Ok(sum_small_to_large(&mut terms))
}

/// Mean photon number; alias of [`factorial_moment`] with `r = 1`.
pub fn mean_photon_number(dist: &PhotonDistribution) -> Result<f64> {
    factorial_moment(dist, 1)
}

/// Short-time photocount moments `mu_r = (Γ t)^r <:n^r:>` for `r = 1..=r_max`.
///
/// The quantum average is taken at total loss `C = Γ + kappa`, so it depends
/// on the escape rate through the loss.
pub fn short_time_moments(params: &LaserParams, escape_gamma: f64, r_max: u32) -> Result<Vec<f64>> {
    if !(escape_gamma >= 0.0) || !escape_gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("escape_gamma must be >= 0, got {escape_gamma}")));
    }
    let c = escape_gamma + params.absorption_kappa;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("total loss C = {c} must be > 0")));
    }
    if escape_gamma == 0.0 {
        return Ok(vec![0.0; r_max as usize]);
    }
    let dist = compute_photon_distribution(params, c)?;
    let gt = escape_gamma * params.counting_time_t;
    (1..=r_max)
        .map(|r| Ok(gt.powi(r as i32) * factorial_moment(&dist, r)?))
        .collect()
}

/// Variance over mean of the photon number: 1 for Poisson, `1 + n` thermal.
pub fn fano_factor(dist: &PhotonDistribution) -> Result<f64> {
    let m1 = factorial_moment(dist, 1)?;
    if m1 <= 0.0 {
        return Err(Error::ZeroMean);
    }
    let m2 = factorial_moment(dist, 2)?;
    let var = m2 + m1 - m1 * m1;
    Ok(var / m1)
}
