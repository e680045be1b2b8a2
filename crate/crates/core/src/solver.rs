//! Effective capacity of the two-hop link.
//!
//! With source QoS exponent θ₁ and relay exponent θ₂, the supportable
//! constant arrival rate is:
//!
//! * θ₁ ≥ θ₂: min{E_C,1(θ₁), E_C,2(θ₂)}, the smaller single-hop effective
//!   capacity.
//! * θ₁ < θ₂ ≤ θ'₂: E_C,1(θ₁); the relay constraint is slack.
//! * θ₂ > θ'₂: E_C,1(θ̃₀), where θ̃₀ ∈ [θ₁, θ₂] balances the source
//!   effective capacity against the rate the relay can absorb when the
//!   source runs at exponent θ̃₀.
//!
//! θ'₂ is found from the relay objective
//! g(θ) = -(Λ_H(-θ) + Λ_C(θ - θ₁))/θ₁, which is positive up to the crossing
//! θ* of the virtual effective capacity and bandwidth curves and peaks at the
//! stationary point θ** when one exists in (θ₁, θ*).
//!
//! Every root is found by bisection on a monotone or sign-changing function.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::lmgf::LinkParams;
use crate::root::bisect;

/// QoS exponents of the source (θ₁) and relay (θ₂) buffers, in 1/bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosPair {
    pub theta1: f64,
    pub theta2: f64,
}

impl QosPair {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1.is_finite() && theta1 > 0.0) {
            return Err(invalid("theta1", format!("must be positive and finite, got {theta1}")));
        }
        if !(theta2.is_finite() && theta2 > 0.0) {
            return Err(invalid("theta2", format!("must be positive and finite, got {theta2}")));
        }
        Ok(Self { theta1, theta2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// θ₁ ≥ θ₂.
    CaseI,
    /// θ₁ < θ₂ ≤ θ'₂.
    CaseII1,
    /// θ₂ > θ'₂.
    CaseII2,
    /// The ergodic capacity of the first hop is not below that of the second.
    Unstable,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CaseI => "CaseI",
            Self::CaseII1 => "CaseII_1",
            Self::CaseII2 => "CaseII_2",
            Self::Unstable => "Unstable",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Effective capacity and every exponent solved along the way. Exponents may
/// be +∞ (a constraint that never binds); `None` means not applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct EffCapResult {
    /// Bits per block.
    pub r_e: f64,
    pub case: CaseTag,
    /// Source decay rate at arrival rate `r_e`.
    pub theta_tilde: Option<f64>,
    /// Relay decay rate at arrival rate `r_e`.
    pub theta_hat: Option<f64>,
    pub theta_star: Option<f64>,
    pub theta_star_star: Option<f64>,
    pub theta2_prime: Option<f64>,
    pub theta_tilde_0: Option<f64>,
}

impl EffCapResult {
    /// Result for misordered ergodic capacities: zero rate, no exponents.
    pub fn unstable() -> Self {
        Self {
            r_e: 0.0,
            case: CaseTag::Unstable,
            theta_tilde: None,
            theta_hat: None,
            theta_star: None,
            theta_star_star: None,
            theta2_prime: None,
            theta_tilde_0: None,
        }
    }
}

/// The θ₂-independent quantities that decide the θ₁ < θ₂ cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayGeometry {
    pub theta1: f64,
    /// E_C,1(θ₁), bits per block.
    pub source_capacity: f64,
    /// Crossing of the virtual curves; `None` when E_C stays above E_B.
    pub theta_star: Option<f64>,
    pub theta_star_star: Option<f64>,
    /// Zero when no θ₂ > θ₁ leaves the source capacity intact; may be +∞.
    pub theta2_prime: f64,
}

/// Source exponent θ̃₀ balancing the two terms of the θ₂ > θ'₂ bound, and
/// the resulting rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceTilt {
    pub theta_tilde_0: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative width at which bisection stops.
    pub root_rel_tol: f64,
    /// Exponents beyond this are treated as infinite.
    pub theta_cap: f64,
    /// Initial bracket for source/relay exponent searches.
    pub bracket: (f64, f64),
    /// Central-difference step for the stationary point, relative to θ.
    pub derivative_step: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            root_rel_tol: 1e-12,
            theta_cap: 1e4,
            bracket: (1e-8, 1e-2),
            derivative_step: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Solver {
    pub opts: SolverOptions,
}

impl Solver {
    pub fn new(opts: SolverOptions) -> Self {
        Self { opts }
    }

    fn bisect<F: FnMut(f64) -> Result<f64>>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        bisect(f, lo, hi, self.opts.root_rel_tol, self.opts.max_iter)
    }

    /// True iff E{log₂(1 + SNR₁z₁)} < E{log₂(1 + SNR₂z₂)} in bits per block.
    pub fn check_stability(&self, link1: &LinkParams, link2: &LinkParams) -> Result<bool> {
        Ok(link1.ergodic_capacity()? < link2.ergodic_capacity()?)
    }

    /// Source decay rate θ̃ solving E_C,1(θ̃) = `rate`. Returns +∞ when the
    /// link serves `rate` in every block, or sustains it at every exponent
    /// below the cap.
    pub fn solve_theta_tilde(&self, link1: &LinkParams, rate: f64) -> Result<f64> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("arrival rate must be positive, got {rate}")));
        }
        if rate <= link1.delay_limited_capacity() {
            return Ok(f64::INFINITY);
        }
        let ergodic = link1.ergodic_capacity()?;
        if rate >= ergodic {
            return Err(Error::NoSolution(format!(
                "arrival rate {rate} is not below the ergodic capacity {ergodic}"
            )));
        }
        let h = |theta: f64| Ok(link1.effective_capacity(theta)? - rate);
        let (mut lo, mut hi) = self.opts.bracket;
        while h(lo)? < 0.0 {
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return Ok(lo);
            }
        }
        loop {
            let v = h(hi)?;
            if v == 0.0 {
                return Ok(hi);
            }
            if v < 0.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > self.opts.theta_cap {
                return Ok(f64::INFINITY);
            }
        }
        self.bisect(h, lo, hi)
    }

    /// Relay decay rate θ̂ > 0 solving Λ_B(θ) + Λ_H(-θ) = 0, where Λ_B is the
    /// departure LMGF of the source queue. +∞ when the relay never congests.
    pub fn solve_theta_hat(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        rate: f64,
        theta_tilde: f64,
    ) -> Result<f64> {
        let ergodic2 = link2.ergodic_capacity()?;
        if rate >= ergodic2 {
            return Err(Error::Unstable(format!(
                "relay input rate {rate} is not below its ergodic capacity {ergodic2}"
            )));
        }
        let f = |theta: f64| {
            Ok(link1.departure_lmgf(rate, theta_tilde, theta)? + link2.service_lmgf(-theta)?)
        };
        let (mut lo, mut hi) = self.opts.bracket;
        while f(lo)? >= 0.0 {
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return Err(Error::Unstable(
                    "relay balance function is not negative near zero".into(),
                ));
            }
        }
        loop {
            let v = f(hi)?;
            if v == 0.0 {
                return Ok(hi);
            }
            if v > 0.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > self.opts.theta_cap {
                return Ok(f64::INFINITY);
            }
        }
        self.bisect(f, lo, hi)
    }

    /// g(θ) = -(Λ_H(-θ) + Λ_C(θ - θ₁))/θ₁, the rate the relay can absorb at
    /// exponent θ when the source queue decays at θ₁.
    pub fn relay_objective(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        theta1: f64,
        theta: f64,
    ) -> Result<f64> {
        Ok(-(link2.service_lmgf(-theta)? + link1.service_lmgf(theta - theta1)?) / theta1)
    }

    /// θ* > θ₁ where E_C,2(θ*) = E_B,1(θ* - θ₁).
    pub fn crossing_theta_star(&self, link1: &LinkParams, link2: &LinkParams, theta1: f64) -> Result<f64> {
        positive(theta1, "theta1")?;
        let h = |theta: f64| {
            Ok(link2.effective_capacity(theta)? - link1.virtual_effective_bandwidth(theta, theta1)?)
        };
        if h(theta1)? <= 0.0 {
            return Ok(theta1);
        }
        let mut lo = theta1;
        let mut hi = 2.0 * theta1;
        while h(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > self.opts.theta_cap {
                return Err(Error::NoCrossing {
                    cap: self.opts.theta_cap,
                    dominant: "virtual effective capacity",
                });
            }
        }
        self.bisect(h, lo, hi)
    }

    /// Stationary point θ** of the relay objective in (θ₁, `upper`), located
    /// by bisection on a central-difference derivative. `None` when the
    /// objective does not rise from θ₁ or still rises at `upper`.
    pub fn stationary_theta_star_star(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        theta1: f64,
        upper: f64,
    ) -> Result<Option<f64>> {
        let slope = |theta: f64| {
            let step = self.opts.derivative_step * theta;
            let up = self.relay_objective(link1, link2, theta1, theta + step)?;
            let down = self.relay_objective(link1, link2, theta1, theta - step)?;
            Ok((up - down) / (2.0 * step))
        };
        if upper <= theta1 || slope(theta1)? <= 0.0 || slope(upper)? >= 0.0 {
            return Ok(None);
        }
        self.bisect(slope, theta1, upper).map(Some)
    }

    /// The largest relay exponent that leaves E_C,1(θ₁) supportable.
    pub fn theta2_prime(&self, link1: &LinkParams, link2: &LinkParams, theta1: f64) -> Result<f64> {
        Ok(self.relay_geometry(link1, link2, theta1)?.theta2_prime)
    }

    /// θ*, θ**, and θ'₂ for a given θ₁. None of these depend on θ₂.
    pub fn relay_geometry(&self, link1: &LinkParams, link2: &LinkParams, theta1: f64) -> Result<RelayGeometry> {
        positive(theta1, "theta1")?;
        let source_capacity = link1.effective_capacity(theta1)?;
        let theta_star = match self.crossing_theta_star(link1, link2, theta1) {
            Ok(t) => Some(t),
            Err(Error::NoCrossing { .. }) => None,
            Err(e) => return Err(e),
        };
        let upper = theta_star.unwrap_or(self.opts.theta_cap);
        let theta_star_star = self.stationary_theta_star_star(link1, link2, theta1, upper)?;
        let peak = theta_star_star.unwrap_or(theta1);
        let g = |theta: f64| Ok(self.relay_objective(link1, link2, theta1, theta)? - source_capacity);
        let theta2_prime = if g(peak)? < 0.0 {
            0.0
        } else if g(upper)? >= 0.0 {
            f64::INFINITY
        } else {
            self.bisect(g, peak, upper)?
        };
        Ok(RelayGeometry {
            theta1,
            source_capacity,
            theta_star,
            theta_star_star,
            theta2_prime,
        })
    }

    /// Maximizes min{E_C,1(θ̃), -(Λ_H(-θ₂) + Λ_C(θ₂ - θ̃))/θ̃} over
    /// θ̃ ∈ [θ₁, θ₂]. The first term falls and the second rises with θ̃, so
    /// the optimum is their crossing, or an endpoint when they do not cross.
    pub fn theta_tilde_0(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        theta1: f64,
        theta2: f64,
    ) -> Result<SourceTilt> {
        positive(theta1, "theta1")?;
        positive(theta2, "theta2")?;
        if theta1 >= theta2 {
            return Err(Error::Domain(format!(
                "theta_tilde_0 needs theta1 < theta2, got {theta1} >= {theta2}"
            )));
        }
        let relay_lmgf = link2.service_lmgf(-theta2)?;
        let absorbed = |t: f64| Ok(-(relay_lmgf + link1.service_lmgf(theta2 - t)?) / t);
        let gap = |t: f64| Ok(link1.effective_capacity(t)? - absorbed(t)?);
        if gap(theta1)? <= 0.0 {
            return Ok(SourceTilt {
                theta_tilde_0: theta1,
                rate: link1.effective_capacity(theta1)?.max(0.0),
            });
        }
        if gap(theta2)? >= 0.0 {
            return Ok(SourceTilt {
                theta_tilde_0: theta2,
                rate: absorbed(theta2)?.max(0.0),
            });
        }
        let t = self.bisect(gap, theta1, theta2)?;
        Ok(SourceTilt {
            theta_tilde_0: t,
            rate: link1.effective_capacity(t)?.max(0.0),
        })
    }

    pub fn effective_capacity(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        qos: QosPair,
    ) -> Result<EffCapResult> {
        if !self.check_stability(link1, link2)? {
            return Ok(EffCapResult::unstable());
        }
        let geometry = self.relay_geometry(link1, link2, qos.theta1)?;
        self.effective_capacity_with(link1, link2, qos, &geometry)
    }

    /// As [`Solver::effective_capacity`] with a precomputed geometry for
    /// `qos.theta1`; sweeps over θ₂ reuse one geometry. Stability is assumed.
    pub fn effective_capacity_with(
        &self,
        link1: &LinkParams,
        link2: &LinkParams,
        qos: QosPair,
        geometry: &RelayGeometry,
    ) -> Result<EffCapResult> {
        debug_assert_eq!(geometry.theta1, qos.theta1);
        let QosPair { theta1, theta2 } = qos;
        let (case, r_e, theta_tilde_0) = if theta1 >= theta2 {
            let relay = link2.effective_capacity(theta2)?;
            (CaseTag::CaseI, geometry.source_capacity.min(relay), None)
        } else if theta2 <= geometry.theta2_prime {
            (CaseTag::CaseII1, geometry.source_capacity, None)
        } else {
            let tilt = self.theta_tilde_0(link1, link2, theta1, theta2)?;
            (CaseTag::CaseII2, tilt.rate, Some(tilt.theta_tilde_0))
        };
        let r_e = r_e.max(0.0);
        let (theta_tilde, theta_hat) = if r_e > 0.0 {
            let tilde = self.solve_theta_tilde(link1, r_e)?;
            let hat = self.solve_theta_hat(link1, link2, r_e, tilde)?;
            (Some(tilde), Some(hat))
        } else {
            (None, None)
        };
        Ok(EffCapResult {
            r_e,
            case,
            theta_tilde,
            theta_hat,
            theta_star: geometry.theta_star,
            theta_star_star: geometry.theta_star_star,
            theta2_prime: Some(geometry.theta2_prime),
            theta_tilde_0,
        })
    }

    /// Largest constant arrival rate whose relay decay rate is at least θ₂,
    /// ignoring the source constraint. Capped just below the first hop's
    /// ergodic capacity when the relay never binds.
    pub fn relay_bottleneck_rate(&self, link1: &LinkParams, link2: &LinkParams, theta2: f64) -> Result<f64> {
        positive(theta2, "theta2")?;
        let ceiling = link1.ergodic_capacity()?.min(link2.ergodic_capacity()?) * (1.0 - 1e-9);
        let balance = |rate: f64| {
            let tilde = self.solve_theta_tilde(link1, rate)?;
            Ok(link1.departure_lmgf(rate, tilde, theta2)? + link2.service_lmgf(-theta2)?)
        };
        if balance(ceiling)? <= 0.0 {
            return Ok(ceiling);
        }
        self.bisect(balance, ceiling * 1e-9, ceiling)
    }
}

fn positive(v: f64, name: &'static str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}
