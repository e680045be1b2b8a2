//! Fading power-gain laws and expectations over them.
//!
//! Gains are power gains z = |g|², so Rayleigh fading means z is
//! exponentially distributed. Expectations over Rayleigh fading run through
//! a 200-node Gauss-Laguerre rule and are cross-checked against adaptive
//! Gauss-Kronrod integration of the same integrand.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_adaptive, log_sum_exp, GaussLaguerre};

/// Tolerances for expectations over continuous fading laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Relative agreement required between the Laguerre rule and the
    /// adaptive cross-check before the Laguerre value is accepted.
    pub rel_tol: f64,
    /// Target relative error of the adaptive integrator.
    pub adaptive_rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            adaptive_rel_tol: 1e-13,
            max_panels: 4000,
        }
    }
}

/// One atom of a discrete gain law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub gain: f64,
    pub prob: f64,
}

/// Law of the channel power gain z.
#[derive(Debug, Clone, PartialEq)]
pub enum FadingDistribution {
    /// z ~ Exp(mean).
    Rayleigh { mean: f64 },
    /// z = gain with probability one.
    Constant { gain: f64 },
    Discrete { atoms: Vec<Atom>, cumulative: Vec<f64> },
}

impl FadingDistribution {
    pub fn rayleigh(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(invalid("mean", format!("must be positive and finite, got {mean}")));
        }
        Ok(Self::Rayleigh { mean })
    }

    pub fn constant(gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(invalid("gain", format!("must be nonnegative and finite, got {gain}")));
        }
        Ok(Self::Constant { gain })
    }

    /// Builds a finite law from `(gain, probability)` pairs. Probabilities
    /// must be positive and sum to one within 1e-12.
    pub fn discrete(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("atoms", "at least one atom is required"));
        }
        let mut atoms = Vec::with_capacity(pairs.len());
        for &(gain, prob) in pairs {
            if !(gain.is_finite() && gain >= 0.0) {
                return Err(invalid("atoms", format!("gain {gain} must be nonnegative")));
            }
            if !(prob.is_finite() && prob > 0.0) {
                return Err(invalid("atoms", format!("probability {prob} must be positive")));
            }
            atoms.push(Atom { gain, prob });
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(
                "atoms",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        Ok(Self::Discrete { atoms, cumulative })
    }

    /// Essential infimum of the gain.
    pub fn min_gain(&self) -> f64 {
        match self {
            Self::Rayleigh { .. } => 0.0,
            Self::Constant { gain } => *gain,
            Self::Discrete { atoms, .. } => atoms.iter().map(|a| a.gain).fold(f64::INFINITY, f64::min),
        }
    }

    /// Essential supremum of the gain (infinite for Rayleigh).
    pub fn max_gain(&self) -> f64 {
        match self {
            Self::Rayleigh { .. } => f64::INFINITY,
            Self::Constant { gain } => *gain,
            Self::Discrete { atoms, .. } => atoms.iter().map(|a| a.gain).fold(0.0, f64::max),
        }
    }

    /// E_z{f(z)}.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.expectation_with(f, &QuadratureOptions::default())
    }

    pub fn expectation_with<F: Fn(f64) -> f64>(
        &self,
        f: F,
        opts: &QuadratureOptions,
    ) -> Result<f64> {
        match self {
            Self::Constant { gain } => Ok(f(*gain)),
            Self::Discrete { atoms, .. } => Ok(atoms.iter().map(|a| a.prob * f(a.gain)).sum()),
            Self::Rayleigh { mean } => {
                let m = *mean;
                let rule = GaussLaguerre::standard();
                let laguerre = rule.integrate(|x| f(m * x));
                let scale = rule.integrate(|x| f(m * x).abs());
                let breaks = [0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 40.0];
                let adaptive = integrate_adaptive(
                    |x| f(m * x) * (-x).exp(),
                    &breaks,
                    opts.adaptive_rel_tol,
                    opts.max_panels,
                )?;
                if laguerre.is_finite() && (laguerre - adaptive.value).abs() <= opts.rel_tol * scale {
                    Ok(laguerre)
                } else {
                    Ok(adaptive.value)
                }
            }
        }
    }

    /// log E_z{e^(g(z))}, evaluated entirely in log space.
    pub fn log_mean_exp<G: Fn(f64) -> f64>(&self, g: G, opts: &QuadratureOptions) -> Result<f64> {
        match self {
            Self::Constant { gain } => Ok(g(*gain)),
            Self::Discrete { atoms, .. } => {
                let terms: Vec<f64> = atoms.iter().map(|a| a.prob.ln() + g(a.gain)).collect();
                Ok(log_sum_exp(&terms))
            }
            Self::Rayleigh { mean } => {
                let m = *mean;
                let laguerre = GaussLaguerre::standard().log_integrate_exp(|x| g(m * x));
                let adaptive = log_integrate_exp_adaptive(|x| g(m * x) - x, opts)?;
                if laguerre.is_finite() && (laguerre - adaptive).abs() <= opts.rel_tol {
                    Ok(laguerre)
                } else {
                    Ok(adaptive)
                }
            }
        }
    }

    /// One i.i.d. draw of z. Consumes exactly one `u64` from `rng` for every
    /// variant, so the k-th draw of a stream is fixed by its position alone.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = unit_uniform(rng.next_u64());
        match self {
            Self::Constant { gain } => *gain,
            Self::Rayleigh { mean } => -mean * (1.0 - u).ln(),
            Self::Discrete { atoms, cumulative } => {
                let idx = cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
                atoms[idx].gain
            }
        }
    }
}

/// Maps 64 random bits to [0, 1) using the top 53 bits.
fn unit_uniform(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// log ∫₀^∞ e^(φ(x)) dx for a log-integrand that eventually decreases.
fn log_integrate_exp_adaptive<P: Fn(f64) -> f64>(phi: P, opts: &QuadratureOptions) -> Result<f64> {
    // Geometric grid from 2^-40 to 2^40 locates the peak and the cut-off.
    let mut peak = phi(0.0);
    let mut peak_x = 0.0;
    let mut grid = Vec::with_capacity(82);
    grid.push(0.0);
    let mut upper = None;
    for k in -40..=40 {
        let x = 2f64.powi(k);
        let v = phi(x);
        if v.is_nan() {
            return Err(Error::Quadrature {
                estimate: f64::NAN,
                detail: format!("log-integrand is NaN at x = {x:e}"),
            });
        }
        if v > peak {
            peak = v;
            peak_x = x;
        }
        grid.push(x);
        if x > peak_x.max(1.0) && v < peak - 80.0 {
            upper = Some(x);
            break;
        }
    }
    if upper.is_none() {
        return Err(Error::Quadrature {
            estimate: peak,
            detail: "log-integrand does not decay below 2^40".into(),
        });
    }
    let est = integrate_adaptive(
        |x| (phi(x) - peak).exp(),
        &grid,
        opts.adaptive_rel_tol,
        opts.max_panels,
    )
    .map_err(|e| match e {
        Error::Quadrature { estimate, detail } => Error::Quadrature {
            estimate: peak + estimate.ln(),
            detail,
        },
        other => other,
    })?;
    Ok(peak + est.value.ln())
}

impl fmt::Display for FadingDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rayleigh { mean } => write!(f, "rayleigh:{mean}"),
            Self::Constant { gain } => write!(f, "constant:{gain}"),
            Self::Discrete { atoms, .. } => {
                write!(f, "discrete:")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{}@{}", a.gain, a.prob)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for FadingDistribution {
    type Err = Error;

    /// Parses `rayleigh:<mean>`, `constant:<z0>` or
    /// `discrete:<z1>@<p1>,<z2>@<p2>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| invalid("fading", format!("`{s}` is missing `kind:` prefix")))?;
        let number = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|_| invalid("fading", format!("`{t}` is not a number")))
        };
        match kind.trim() {
            "rayleigh" => Self::rayleigh(number(body)?),
            "constant" => Self::constant(number(body)?),
            "discrete" => {
                let pairs = body
                    .split(',')
                    .map(|item| {
                        let (z, p) = item.split_once('@').ok_or_else(|| {
                            invalid("fading", format!("atom `{item}` must look like z@p"))
                        })?;
                        Ok((number(z)?, number(p)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::discrete(&pairs)
            }
            other => Err(invalid("fading", format!("unknown fading law `{other}`"))),
        }
    }
}
