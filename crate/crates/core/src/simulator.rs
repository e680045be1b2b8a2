//! Block-level Monte Carlo simulation of the source and relay buffers.
//!
//! Each block draws fresh gains for both hops. The source queue receives R
//! bits, then sends d₁ = min(Q₁ + R, c₁). The relay is store-and-forward:
//! bits sent by the source in block i join the relay queue in block i + 1,
//! so Q₂[i+1] = max(Q₂[i] + d₁[i-1] - c₂[i], 0). Queues are fluid (real
//! numbers of bits).
//!
//! Gains come from ChaCha8 streams keyed by the seed: stream 0 for the first
//! hop, stream 1 for the second. Block i always consumes the i-th `u64` of
//! each stream, so a run is reproducible draw by draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::lmgf::LinkParams;

/// Minimum number of thresholds inside the probability window for a fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub link1: LinkParams,
    /// `None` simulates the source queue alone (infinite relay capacity).
    pub link2: Option<LinkParams>,
    /// Constant arrivals, bits per block.
    pub arrival_rate: f64,
    pub num_blocks: u64,
    pub seed: u64,
    /// Strictly ascending, positive queue-length thresholds in bits.
    pub thresholds: Vec<f64>,
    pub warmup_blocks: u64,
}

impl SimConfig {
    /// Config with default thresholds and a warmup of 1% of the blocks.
    pub fn new(
        link1: LinkParams,
        link2: Option<LinkParams>,
        arrival_rate: f64,
        num_blocks: u64,
        seed: u64,
    ) -> Self {
        let thresholds = default_thresholds(link1.symbols_per_block());
        Self {
            link1,
            link2,
            arrival_rate,
            num_blocks,
            seed,
            thresholds,
            warmup_blocks: num_blocks / 100,
        }
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn with_warmup(mut self, warmup_blocks: u64) -> Self {
        self.warmup_blocks = warmup_blocks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(invalid(
                "arrival_rate",
                format!("must be positive, got {}", self.arrival_rate),
            ));
        }
        if self.num_blocks <= self.warmup_blocks {
            return Err(invalid(
                "num_blocks",
                format!(
                    "{} blocks leave nothing after {} warmup blocks",
                    self.num_blocks, self.warmup_blocks
                ),
            ));
        }
        if self.thresholds.is_empty() {
            return Err(invalid("thresholds", "at least one threshold is required"));
        }
        if !self.thresholds.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(invalid("thresholds", "thresholds must be positive and finite"));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("thresholds", "thresholds must be strictly ascending"));
        }
        Ok(())
    }
}

/// 16 log-spaced thresholds over [5, 5000] bits, scaled by T·B/200.
pub fn default_thresholds(symbols_per_block: f64) -> Vec<f64> {
    let scale = symbols_per_block / 200.0;
    log_space(5.0 * scale, 5000.0 * scale, 16)
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    v[n - 1] = hi;
    v
}

/// Exponential decay rate fitted to an overflow curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// 1/bits; positive for a decaying curve.
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Probability band whose thresholds enter the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayWindow {
    pub min_prob: f64,
    pub max_prob: f64,
}

impl Default for DecayWindow {
    fn default() -> Self {
        Self {
            min_prob: 1e-5,
            max_prob: 1e-1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueStats {
    pub thresholds: Vec<f64>,
    /// P̂(Q > q) for each threshold.
    pub overflow_probability: Vec<f64>,
    /// Time-average backlog in bits.
    pub mean_length: f64,
    pub max_length: f64,
    /// `None` when fewer than [`MIN_FIT_POINTS`] thresholds fall in the window.
    pub fit: Option<DecayFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueSelector {
    Source,
    Relay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub seed: u64,
    pub measured_blocks: u64,
    pub source: QueueStats,
    pub relay: Option<QueueStats>,
    pub arrival_rate: f64,
    /// Mean bits per block leaving the source after warmup.
    pub source_departure_rate: f64,
    /// Mean bits per block leaving the relay after warmup.
    pub relay_departure_rate: Option<f64>,
    /// Totals over the whole run, warmup included.
    pub arrived_bits: f64,
    pub source_departed_bits: f64,
    pub final_source_backlog: f64,
    /// Arrival rate is not below an ergodic capacity on the path.
    pub unstable: bool,
}

impl SimResult {
    pub fn queue(&self, which: QueueSelector) -> Option<&QueueStats> {
        match which {
            QueueSelector::Source => Some(&self.source),
            QueueSelector::Relay => self.relay.as_ref(),
        }
    }
}

struct Tally {
    // exceed_hist[k]: blocks whose backlog exceeded exactly the first k thresholds.
    exceed_hist: Vec<u64>,
    sum: f64,
    max: f64,
}

impl Tally {
    fn new(n_thresholds: usize) -> Self {
        Self {
            exceed_hist: vec![0; n_thresholds + 1],
            sum: 0.0,
            max: 0.0,
        }
    }

    fn record(&mut self, thresholds: &[f64], q: f64) {
        let k = thresholds.partition_point(|&t| t < q);
        self.exceed_hist[k] += 1;
        self.sum += q;
        self.max = self.max.max(q);
    }

    fn finish(self, thresholds: &[f64], measured: u64, window: DecayWindow) -> QueueStats {
        let n = measured as f64;
        let mut tail = 0u64;
        let mut probs = vec![0.0; thresholds.len()];
        for j in (0..thresholds.len()).rev() {
            tail += self.exceed_hist[j + 1];
            probs[j] = tail as f64 / n;
        }
        let fit = fit_decay(thresholds, &probs, window).ok();
        QueueStats {
            thresholds: thresholds.to_vec(),
            overflow_probability: probs,
            mean_length: self.sum / n,
            max_length: self.max,
            fit,
        }
    }
}

/// Runs one replication.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let rate = config.arrival_rate;
    let ergodic1 = config.link1.ergodic_capacity()?;
    let ergodic2 = match &config.link2 {
        Some(l) => Some(l.ergodic_capacity()?),
        None => None,
    };
    let unstable = rate >= ergodic1 || ergodic2.is_some_and(|c| rate >= c);

    let mut rng1 = ChaCha8Rng::seed_from_u64(config.seed);
    rng1.set_stream(0);
    let mut rng2 = ChaCha8Rng::seed_from_u64(config.seed);
    rng2.set_stream(1);

    let thresholds = &config.thresholds;
    let mut source_tally = Tally::new(thresholds.len());
    let mut relay_tally = Tally::new(thresholds.len());

    let (mut q1, mut q2, mut in_transit) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut departed_total, mut departed_measured, mut relay_served_measured) = (0.0, 0.0, 0.0);

    for block in 0..config.num_blocks {
        let c1 = config.link1.service_bits(config.link1.fading.sample(&mut rng1));
        let backlog = q1 + rate;
        let d1 = backlog.min(c1);
        q1 = backlog - d1;
        departed_total += d1;

        let measured = block >= config.warmup_blocks;
        if let Some(link2) = &config.link2 {
            let c2 = link2.service_bits(link2.fading.sample(&mut rng2));
            let relay_backlog = q2 + in_transit;
            let served = relay_backlog.min(c2);
            q2 = relay_backlog - served;
            in_transit = d1;
            if measured {
                relay_served_measured += served;
                relay_tally.record(thresholds, q2);
            }
        }
        if measured {
            departed_measured += d1;
            source_tally.record(thresholds, q1);
        }
    }

    let measured = config.num_blocks - config.warmup_blocks;
    let window = DecayWindow::default();
    Ok(SimResult {
        seed: config.seed,
        measured_blocks: measured,
        source: source_tally.finish(thresholds, measured, window),
        relay: config
            .link2
            .as_ref()
            .map(|_| relay_tally.finish(thresholds, measured, window)),
        arrival_rate: rate,
        source_departure_rate: departed_measured / measured as f64,
        relay_departure_rate: config
            .link2
            .as_ref()
            .map(|_| relay_served_measured / measured as f64),
        arrived_bits: rate * config.num_blocks as f64,
        source_departed_bits: departed_total,
        final_source_backlog: q1,
        unstable,
    })
}

/// Runs `replications` independent copies with seeds `seed + k`. Results are
/// returned in replication order regardless of scheduling.
pub fn run_replications(config: &SimConfig, replications: usize, exec: Execution) -> Result<Vec<SimResult>> {
    if replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    config.validate()?;
    let configs: Vec<SimConfig> = (0..replications as u64)
        .map(|k| SimConfig {
            seed: config.seed.wrapping_add(k),
            ..config.clone()
        })
        .collect();
    map_ordered(&configs, exec, run).into_iter().collect()
}

/// Fitted decay rate of the selected queue's overflow curve.
pub fn estimate_decay(result: &SimResult, which: QueueSelector) -> Result<DecayFit> {
    let queue = result
        .queue(which)
        .ok_or_else(|| invalid("queue", "relay queue was not simulated"))?;
    fit_decay(
        &queue.thresholds,
        &queue.overflow_probability,
        DecayWindow::default(),
    )
}

/// Ordinary least squares of log P̂(Q > q) on q over thresholds whose
/// probability lies in `window`. Returns the negated slope.
pub fn fit_decay(thresholds: &[f64], probs: &[f64], window: DecayWindow) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p >= window.min_prob && p <= window.max_prob)
        .map(|(&q, &p)| (q, p.ln()))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            usable: points.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(DecayFit {
        slope: -slope,
        stderr,
        points: points.len(),
    })
}

/// Inverse-variance pooling of per-replication fits. The pooled standard
/// error is inflated by √(χ²/(k-1)) when the replications scatter more than
/// their own error bars allow.
pub fn pool_fits(fits: &[DecayFit]) -> Option<DecayFit> {
    if fits.is_empty() {
        return None;
    }
    let floor = fits
        .iter()
        .map(|f| f.stderr)
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { f64::EPSILON };
    let weights: Vec<f64> = fits.iter().map(|f| 1.0 / f.stderr.max(floor).powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let slope = fits.iter().zip(&weights).map(|(f, w)| w * f.slope).sum::<f64>() / total;
    let mut stderr = total.sqrt().recip();
    if fits.len() > 1 {
        let chi2: f64 = fits
            .iter()
            .zip(&weights)
            .map(|(f, w)| w * (f.slope - slope).powi(2))
            .sum();
        let ratio = chi2 / (fits.len() - 1) as f64;
        stderr *= ratio.max(1.0).sqrt();
    }
    Some(DecayFit {
        slope,
        stderr,
        points: fits.iter().map(|f| f.points).sum(),
    })
}
