//! Chi-squared ensemble of escape rates for chaotic cavity modes.
//!
//! Over an ensemble of chaotic modes the escape rate follows a chi-squared
//! distribution with `nu = beta * M` degrees of freedom and mean `Γ̄`;
//! `beta = M = 1` is the Porter-Thomas case.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Degrees of freedom above which sampling switches from summed squared
/// normals to a gamma-variate sampler.
const SUM_OF_SQUARES_NU_CAP: u32 = 32;

/// Symmetry class and channel count defining `P(Γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEnsemble {
    /// Symmetry index: 1 with time-reversal invariance, 2 without.
    pub beta: u32,
    /// Number of transverse waveguide modes `M`.
    pub channels_m: u32,
    /// Mean escape rate `Γ̄`.
    pub mean_gamma: f64,
}

/// Seed plus stream id; identical handles reproduce identical samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngHandle {
    pub seed: u64,
    pub stream: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl ModeEnsemble {
    pub fn new(beta: u32, channels_m: u32, mean_gamma: f64) -> Result<Self> {
        if beta != 1 && beta != 2 {
            return Err(Error::InvalidParameter(format!("beta must be 1 or 2, got {beta}")));
        }
        if channels_m < 1 {
            return Err(Error::InvalidParameter("channels_m must be >= 1".into()));
        }
        if !(mean_gamma > 0.0) || !mean_gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("mean_gamma must be > 0, got {mean_gamma}")));
        }
        Ok(Self {
            beta,
            channels_m,
            mean_gamma,
        })
    }

    /// Degrees of freedom `nu = beta * M`.
    pub fn nu(&self) -> u32 {
        self.beta * self.channels_m
    }

    /// Density `A_nu Γ^(nu/2-1) exp(-nu Γ / 2Γ̄)`, normalized to unit mass
    /// with mean `Γ̄`.
    pub fn gamma_pdf(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        let nu = self.nu() as f64;
        let half = 0.5 * nu;
        if gamma == 0.0 {
            // Porter-Thomas divergence for nu = 1; finite for nu = 2.
            return Ok(match self.nu() {
                1 => f64::INFINITY,
                2 => 1.0 / self.mean_gamma,
                _ => 0.0,
            });
        }
        let log_a = half * (half / self.mean_gamma).ln() - ln_gamma(half);
        Ok((log_a + (half - 1.0) * gamma.ln() - half * gamma / self.mean_gamma).exp())
    }

    /// Cumulative distribution of the escape rate.
    pub fn gamma_cdf(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        let half = 0.5 * self.nu() as f64;
        Ok(gamma_lr(half, half * gamma / self.mean_gamma))
    }

    /// Upper quantile: smallest `Γ` with `CDF(Γ) >= p`.
    pub fn gamma_quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("quantile level must be in [0, 1), got {p}")));
        }
        let mut hi = self.mean_gamma;
        while self.gamma_cdf(hi)? < p {
            hi *= 2.0;
        }
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.gamma_cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `count` i.i.d. escape rates. For small `nu` each draw is
    /// `(Γ̄/nu) Σ z_k^2` over `nu` standard normals; large `nu` uses a
    /// gamma-variate sampler.
    pub fn sample_gamma(&self, handle: &RngHandle, count: usize) -> Vec<f64> {
        let mut rng = handle.rng();
        let nu = self.nu();
        let mut out = Vec::with_capacity(count);
        if nu <= SUM_OF_SQUARES_NU_CAP {
            let scale = self.mean_gamma / nu as f64;
            for _ in 0..count {
                let mut s = 0.0;
                for _ in 0..nu {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s += z * z;
                }
                out.push(scale * s);
            }
        } else {
            let gamma = Gamma::new(0.5 * nu as f64, 2.0 * self.mean_gamma / nu as f64)
                .expect("valid gamma parameters");
            for _ in 0..count {
                out.push(gamma.sample(&mut rng));
            }
        }
        out
    }

    /// Saddle-point Gaussian limit for many channels: mean `Γ̄` and
    /// standard deviation `Γ̄ / sqrt(beta M / 2)`.
    pub fn gaussian_limit_stats(&self) -> (f64, f64) {
        let nu = self.nu() as f64;
        (self.mean_gamma, self.mean_gamma / (0.5 * nu).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson;

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModeEnsemble::new(3, 1, 1.0).is_err());
        assert!(ModeEnsemble::new(1, 0, 1.0).is_err());
        assert!(ModeEnsemble::new(1, 1, 0.0).is_err());
        let e = ModeEnsemble::new(1, 1, 1.0).unwrap();
        assert!(e.gamma_pdf(-0.1).is_err());
    }

    #[test]
    fn porter_thomas_divergence_at_origin() {
        let e = ModeEnsemble::new(1, 1, 1.0).unwrap();
        assert!(e.gamma_pdf(0.0).unwrap().is_infinite());
        // Density grows as Γ^{-1/2} toward the origin.
        let p1 = e.gamma_pdf(1e-6).unwrap();
        let p2 = e.gamma_pdf(4e-6).unwrap();
        assert!((p1 / p2 - 2.0).abs() < 1e-3);
    }

    /// Quadrature oracle for normalization and mean; the integrand is
    /// regularized with the substitution Γ = u^2.
    fn pdf_integral(e: &ModeEnsemble, moment: u32) -> f64 {
        let gbar = e.mean_gamma;
        let f = |u: f64| 2.0 * u * e.gamma_pdf(u * u).unwrap() * (u * u).powi(moment as i32);
        // Split at the bulk of the distribution so large-nu peaks are not
        // stepped over by the first coarse panels.
        let mid = gbar.sqrt();
        adaptive_simpson(&f, 1e-12, mid, 5e-13) + adaptive_simpson(&f, mid, (50.0 * gbar).sqrt(), 5e-13)
    }

    #[test]
    fn pdf_normalized_and_mean_correct() {
        for nu in [1u32, 2, 3, 4, 8, 100] {
            let (beta, m) = if nu % 2 == 0 { (2, nu / 2) } else { (1, nu) };
            let e = ModeEnsemble::new(beta, m, 0.7).unwrap();
            assert_eq!(e.nu(), nu);
            assert!((pdf_integral(&e, 0) - 1.0).abs() < 1e-8, "nu = {nu}");
            assert!((pdf_integral(&e, 1) / 0.7 - 1.0).abs() < 1e-6, "nu = {nu}");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_handle() {
        let e = ModeEnsemble::new(1, 1, 0.5).unwrap();
        let h = RngHandle::new(42, 7);
        let a = e.sample_gamma(&h, 1000);
        let b = e.sample_gamma(&h, 1000);
        assert_eq!(a, b);
        let c = e.sample_gamma(&RngHandle::new(42, 8), 1000);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_matches() {
        let e = ModeEnsemble::new(2, 1, 0.3).unwrap();
        let xs = e.sample_gamma(&RngHandle::new(1, 0), 1_000_000);
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        // Var = 2 Γ̄²/nu; 3 standard errors.
        let se = (2.0 * 0.09f64 / 2.0 / 1e6).sqrt();
        assert!((mean - 0.3).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn small_gamma_fraction_porter_thomas() {
        let e = ModeEnsemble::new(1, 1, 1.0).unwrap();
        let xs = e.sample_gamma(&RngHandle::new(2, 0), 1_000_000);
        let frac = xs.iter().filter(|&&x| x < 0.01).count() as f64 / xs.len() as f64;
        // CDF oracle: P(Γ < Γ̄/100) = 0.0797 for nu = 1.
        let p = e.gamma_cdf(0.01).unwrap();
        assert!((p - 0.0797).abs() < 3e-4);
        let se = (p * (1.0 - p) / 1e6).sqrt();
        assert!((frac - p).abs() < 3.0 * se, "frac = {frac}");
    }

    #[test]
    fn large_nu_sampler_matches_moments() {
        let e = ModeEnsemble::new(2, 50, 1.0).unwrap();
        let xs = e.sample_gamma(&RngHandle::new(3, 0), 200_000);
        let n = xs.len() as f64;
        let mean: f64 = xs.iter().sum::<f64>() / n;
        let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((mean - 1.0).abs() < 0.005);
        assert!((var / (2.0 / 100.0) - 1.0).abs() < 0.05);
        let skew: f64 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(skew.abs() < 0.35, "skew = {skew}");
    }

    #[test]
    fn empirical_cdf_ks() {
        for nu in [1u32, 2, 4] {
            let (beta, m) = if nu % 2 == 0 { (2, nu / 2) } else { (1, nu) };
            let e = ModeEnsemble::new(beta, m, 1.0).unwrap();
            let mut xs = e.sample_gamma(&RngHandle::new(4, nu as u64), 1_000_000);
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let mut ks: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let cdf = e.gamma_cdf(x).unwrap();
                ks = ks
                    .max((cdf - i as f64 / n).abs())
                    .max(((i + 1) as f64 / n - cdf).abs());
            }
            assert!(ks < 0.002, "nu = {nu}: KS = {ks}");
        }
    }

    #[test]
    fn gaussian_limit_values() {
        let e = ModeEnsemble::new(2, 2, 1.0).unwrap();
        let (m, s) = e.gaussian_limit_stats();
        assert_eq!(m, 1.0);
        assert!((s - 1.0 / (2.0f64).sqrt()).abs() < 1e-15);

        let e = ModeEnsemble::new(1, 1, 1.0).unwrap();
        let (_, s) = e.gaussian_limit_stats();
        assert!((s - (2.0f64).sqrt()).abs() < 1e-15);

        for (beta, m) in [(1u32, 4u32), (2, 10), (1, 100)] {
            let e = ModeEnsemble::new(beta, m, 0.37).unwrap();
            let (mean, s) = e.gaussian_limit_stats();
            let want = (2.0 / (beta as f64 * m as f64)).sqrt();
            assert!((s / mean - want).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let e = ModeEnsemble::new(1, 1, 2.0).unwrap();
        for p in [0.1, 0.5, 0.99, 0.999999] {
            let g = e.gamma_quantile(p).unwrap();
            assert!((e.gamma_cdf(g).unwrap() - p).abs() < 1e-9);
        }
    }
}
