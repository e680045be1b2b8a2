//! Log moment generating functions of block-fading service processes.
//!
//! Sign convention: Λ(θ) = log E{e^(θ·c)} with c the per-block service in
//! bits. The service-side quantity log E{e^(-θ·c)} is therefore Λ(-θ).

use crate::error::{invalid, Error, Result};
use crate::fading::{FadingDistribution, QuadratureOptions};

/// Below this exponent the effective capacity is reported as its θ → 0 limit.
pub const SMALL_THETA: f64 = 1e-12;

/// One hop of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    /// Linear SNR.
    pub snr: f64,
    /// Block duration T in seconds.
    pub block_s: f64,
    pub bandwidth_hz: f64,
    pub fading: FadingDistribution,
    pub quadrature: QuadratureOptions,
}

impl LinkParams {
    pub fn new(snr: f64, block_s: f64, bandwidth_hz: f64, fading: FadingDistribution) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(invalid("snr", format!("must be positive, got {snr}")));
        }
        if !(block_s.is_finite() && block_s > 0.0) {
            return Err(invalid("block_s", format!("must be positive, got {block_s}")));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(invalid(
                "bandwidth_hz",
                format!("must be positive, got {bandwidth_hz}"),
            ));
        }
        Ok(Self {
            snr,
            block_s,
            bandwidth_hz,
            fading,
            quadrature: QuadratureOptions::default(),
        })
    }

    /// Same as [`LinkParams::new`] with the SNR given in dB.
    pub fn from_db(snr_db: f64, block_s: f64, bandwidth_hz: f64, fading: FadingDistribution) -> Result<Self> {
        Self::new(db_to_linear(snr_db), block_s, bandwidth_hz, fading)
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureOptions) -> Self {
        self.quadrature = quadrature;
        self
    }

    /// Channel uses per block, T·B.
    pub fn symbols_per_block(&self) -> f64 {
        self.block_s * self.bandwidth_hz
    }

    /// Bits served in a block with power gain `z`: T·B·log₂(1 + SNR·z).
    pub fn service_bits(&self, gain: f64) -> f64 {
        self.symbols_per_block() * (self.snr * gain).ln_1p() / std::f64::consts::LN_2
    }

    /// E_z{T·B·log₂(1 + SNR·z)}, bits per block.
    pub fn ergodic_capacity(&self) -> Result<f64> {
        self.fading
            .expectation_with(|z| self.service_bits(z), &self.quadrature)
    }

    /// Service rate at the worst gain; the θ → ∞ limit of the effective capacity.
    pub fn delay_limited_capacity(&self) -> f64 {
        self.service_bits(self.fading.min_gain())
    }

    /// Service rate at the best gain (infinite for Rayleigh fading).
    pub fn peak_rate(&self) -> f64 {
        self.service_bits(self.fading.max_gain())
    }

    /// Λ(θ) = log E_z{e^(θ·c(z))}.
    pub fn service_lmgf(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("theta must be finite, got {theta}")));
        }
        if theta == 0.0 {
            return Ok(0.0);
        }
        // θ·T·B·log₂(1+SNR·z) is formed before exponentiation.
        let scale = theta * self.symbols_per_block() / std::f64::consts::LN_2;
        self.fading
            .log_mean_exp(|z| scale * (self.snr * z).ln_1p(), &self.quadrature)
    }

    /// -Λ(-θ)/θ in bits per block, with the ergodic capacity as the θ → 0 limit.
    pub fn effective_capacity(&self, theta: f64) -> Result<f64> {
        if theta.is_nan() || theta < 0.0 || theta.is_infinite() {
            return Err(Error::Domain(format!(
                "effective capacity needs finite theta >= 0, got {theta}"
            )));
        }
        if theta < SMALL_THETA {
            return self.ergodic_capacity();
        }
        Ok(-self.service_lmgf(-theta)? / theta)
    }

    /// E_B(θ - θ₁) = (1 - θ₁/θ)·Λ(θ - θ₁)/(θ - θ₁), which simplifies to
    /// Λ(θ - θ₁)/θ; zero at θ = θ₁.
    pub fn virtual_effective_bandwidth(&self, theta: f64, theta1: f64) -> Result<f64> {
        if !(theta1 > 0.0 && theta1.is_finite()) {
            return Err(Error::Domain(format!("theta1 must be positive, got {theta1}")));
        }
        if !theta.is_finite() || theta < theta1 {
            return Err(Error::Domain(format!(
                "virtual effective bandwidth needs theta >= theta1 ({theta1}), got {theta}"
            )));
        }
        if theta == theta1 {
            return Ok(0.0);
        }
        Ok(self.service_lmgf(theta - theta1)? / theta)
    }

    /// Departure-process LMGF of a queue fed at constant rate `rate` and
    /// served by this link:
    /// Λ_B(θ) = R·θ for θ ≤ θ̃, R·θ̃ + Λ(θ - θ̃) beyond.
    /// `theta_tilde` may be +∞ (the linear branch then applies everywhere).
    pub fn departure_lmgf(&self, rate: f64, theta_tilde: f64, theta: f64) -> Result<f64> {
        if theta.is_nan() || theta < 0.0 {
            return Err(Error::Domain(format!("departure LMGF needs theta >= 0, got {theta}")));
        }
        if theta_tilde.is_nan() || theta_tilde <= 0.0 {
            return Err(Error::Domain(format!(
                "theta_tilde must be positive, got {theta_tilde}"
            )));
        }
        if theta <= theta_tilde {
            Ok(rate * theta)
        } else {
            Ok(rate * theta_tilde + self.service_lmgf(theta - theta_tilde)?)
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
