use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use twohop_core::simulator::{lin_space, log_space};
use twohop_core::{FadingDistribution, LinkParams, Solver, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Scenario keys. Every key can come from the command line or from a JSON
/// scenario file; command-line values win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScenarioArgs {
    /// JSON scenario file whose keys mirror these flags
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub scenario: Option<PathBuf>,

    /// Source QoS exponent θ₁ (1/bits) [default: 0.01]
    #[arg(long)]
    pub theta1: Option<f64>,

    /// Relay QoS exponent θ₂ (1/bits)
    #[arg(long)]
    pub theta2: Option<f64>,

    /// First-hop SNR in dB [default: 0]
    #[arg(long)]
    #[serde(alias = "snr1_db")]
    pub snr1_db: Option<f64>,

    /// Second-hop SNR in dB [default: 10]
    #[arg(long)]
    #[serde(alias = "snr2_db")]
    pub snr2_db: Option<f64>,

    /// Block duration T in seconds [default: 0.002]
    #[arg(long)]
    #[serde(alias = "block_s")]
    pub block_s: Option<f64>,

    /// Bandwidth B in Hz [default: 100000]
    #[arg(long)]
    #[serde(alias = "bandwidth_hz")]
    pub bandwidth_hz: Option<f64>,

    /// First-hop fading law: rayleigh:<mean>, constant:<z0> or discrete:<z>@<p>,... [default: rayleigh:1]
    #[arg(long)]
    pub fading1: Option<String>,

    /// Second-hop fading law [default: rayleigh:1]
    #[arg(long)]
    pub fading2: Option<String>,

    /// Sweep as VAR:LO:HI:N:log|lin with VAR one of theta2, snr2_db, theta
    #[arg(long)]
    pub sweep: Option<String>,

    /// Simulated arrival rate as a fraction of r_e [default: 0.95]
    #[arg(long)]
    #[serde(alias = "rate_frac")]
    pub rate_frac: Option<f64>,

    /// Simulated blocks per replication [default: 1000000]
    #[arg(long)]
    pub blocks: Option<u64>,

    /// Base seed; replication k uses seed + k [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Comma-separated queue-length thresholds in bits
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,

    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Relative tolerance of every root solve [default: 1e-12]
    #[arg(long)]
    pub tol: Option<f64>,

    /// Independent simulation replications [default: 1]
    #[arg(long)]
    pub replications: Option<usize>,

    /// Simulate the source queue alone, ignoring the second hop
    #[arg(long)]
    #[serde(default, alias = "single_queue")]
    pub single_queue: bool,

    /// A fitted slope passes when it is at least this fraction of its target [default: 0.9]
    #[arg(long)]
    pub margin: Option<f64>,
}

impl ScenarioArgs {
    fn or(self, file: Self) -> Self {
        Self {
            scenario: self.scenario,
            theta1: self.theta1.or(file.theta1),
            theta2: self.theta2.or(file.theta2),
            snr1_db: self.snr1_db.or(file.snr1_db),
            snr2_db: self.snr2_db.or(file.snr2_db),
            block_s: self.block_s.or(file.block_s),
            bandwidth_hz: self.bandwidth_hz.or(file.bandwidth_hz),
            fading1: self.fading1.or(file.fading1),
            fading2: self.fading2.or(file.fading2),
            sweep: self.sweep.or(file.sweep),
            rate_frac: self.rate_frac.or(file.rate_frac),
            blocks: self.blocks.or(file.blocks),
            seed: self.seed.or(file.seed),
            thresholds: self.thresholds.or(file.thresholds),
            format: self.format.or(file.format),
            tol: self.tol.or(file.tol),
            replications: self.replications.or(file.replications),
            single_queue: self.single_queue || file.single_queue,
            margin: self.margin.or(file.margin),
        }
    }

    /// Merges the scenario file (if any) under the flags and validates every key.
    pub fn resolve(self) -> Result<Scenario> {
        let merged = match &self.scenario {
            Some(path) => {
                let file = read_scenario(path)?;
                self.or(file)
            }
            None => self,
        };
        Scenario::from_args(merged)
    }
}

fn read_scenario(path: &Path) -> Result<ScenarioArgs> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid scenario file {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Theta2,
    Snr2Db,
    Theta,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Theta2 => "theta2",
            Self::Snr2Db => "snr2_db",
            Self::Theta => "theta",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub points: Vec<f64>,
}

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |why: &str| anyhow!("invalid value for `sweep` (`{spec}`): {why}");
        let parts: Vec<&str> = spec.split(':').collect();
        let [var, lo, hi, n, spacing] = parts[..] else {
            return Err(bad("expected VAR:LO:HI:N:log|lin"));
        };
        let var = match var {
            "theta2" => SweepVar::Theta2,
            "snr2_db" | "snr2-db" => SweepVar::Snr2Db,
            "theta" => SweepVar::Theta,
            _ => return Err(bad("VAR must be theta2, snr2_db or theta")),
        };
        let lo: f64 = lo.parse().map_err(|_| bad("LO is not a number"))?;
        let hi: f64 = hi.parse().map_err(|_| bad("HI is not a number"))?;
        let n: usize = n.parse().map_err(|_| bad("N is not a positive integer"))?;
        if n == 0 {
            return Err(bad("N must be at least 1"));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(bad("range must be finite"));
        }
        if (n > 1 && lo >= hi) || lo > hi {
            return Err(bad("range must be ascending"));
        }
        if var != SweepVar::Snr2Db && lo <= 0.0 {
            return Err(bad("exponents must be positive"));
        }
        let points = match spacing {
            "log" if lo <= 0.0 => return Err(bad("log spacing needs a positive range")),
            "log" => log_space(lo, hi, n),
            "lin" => lin_space(lo, hi, n),
            _ => return Err(bad("spacing must be log or lin")),
        };
        Ok(Self { var, points })
    }
}

/// Fully resolved and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub link1: LinkParams,
    pub link2: LinkParams,
    pub snr1_db: f64,
    pub snr2_db: f64,
    pub theta1: f64,
    pub theta2: Option<f64>,
    pub sweep: Option<Sweep>,
    pub rate_frac: f64,
    pub blocks: u64,
    pub seed: u64,
    pub thresholds: Option<Vec<f64>>,
    pub format: Format,
    pub solver: Solver,
    pub replications: usize,
    pub single_queue: bool,
    pub margin: f64,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        bail!("invalid value for `{key}`: must be positive and finite, got {v}")
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        bail!("invalid value for `{key}`: must be finite, got {v}")
    }
}

fn fading(key: &str, spec: Option<String>) -> Result<FadingDistribution> {
    let spec = spec.unwrap_or_else(|| "rayleigh:1".into());
    spec.parse()
        .map_err(|e| anyhow!("invalid value for `{key}` (`{spec}`): {e}"))
}

impl Scenario {
    fn from_args(a: ScenarioArgs) -> Result<Self> {
        let block_s = positive("block-s", a.block_s.unwrap_or(0.002))?;
        let bandwidth_hz = positive("bandwidth-hz", a.bandwidth_hz.unwrap_or(1e5))?;
        let snr1_db = finite("snr1-db", a.snr1_db.unwrap_or(0.0))?;
        let snr2_db = finite("snr2-db", a.snr2_db.unwrap_or(10.0))?;
        let link1 = LinkParams::from_db(snr1_db, block_s, bandwidth_hz, fading("fading1", a.fading1)?)
            .map_err(|e| anyhow!("invalid first hop: {e}"))?;
        let link2 = LinkParams::from_db(snr2_db, block_s, bandwidth_hz, fading("fading2", a.fading2)?)
            .map_err(|e| anyhow!("invalid second hop: {e}"))?;
        let theta1 = positive("theta1", a.theta1.unwrap_or(0.01))?;
        let theta2 = a.theta2.map(|t| positive("theta2", t)).transpose()?;
        let sweep = a.sweep.as_deref().map(Sweep::parse).transpose()?;
        let rate_frac = positive("rate-frac", a.rate_frac.unwrap_or(0.95))?;
        let blocks = a.blocks.unwrap_or(1_000_000);
        if blocks < 100 {
            bail!("invalid value for `blocks`: need at least 100 blocks, got {blocks}");
        }
        if let Some(t) = &a.thresholds {
            if t.is_empty() || !t.iter().all(|v| v.is_finite() && *v > 0.0) {
                bail!("invalid value for `thresholds`: values must be positive and finite");
            }
            if !t.windows(2).all(|w| w[0] < w[1]) {
                bail!("invalid value for `thresholds`: values must be strictly ascending");
            }
        }
        let tol = positive("tol", a.tol.unwrap_or(SolverOptions::default().root_rel_tol))?;
        if tol >= 0.1 {
            bail!("invalid value for `tol`: must be below 0.1, got {tol}");
        }
        let replications = a.replications.unwrap_or(1);
        if replications == 0 {
            bail!("invalid value for `replications`: must be at least 1");
        }
        let margin = positive("margin", a.margin.unwrap_or(0.9))?;
        Ok(Self {
            link1,
            link2,
            snr1_db,
            snr2_db,
            theta1,
            theta2,
            sweep,
            rate_frac,
            blocks,
            seed: a.seed.unwrap_or(1),
            thresholds: a.thresholds,
            format: a.format.unwrap_or_default(),
            solver: Solver::new(SolverOptions {
                root_rel_tol: tol,
                ..SolverOptions::default()
            }),
            replications,
            single_queue: a.single_queue,
            margin,
        })
    }

    pub fn symbols_per_block(&self) -> f64 {
        self.link1.symbols_per_block()
    }

    pub fn require_theta2(&self) -> Result<f64> {
        self.theta2.ok_or_else(|| anyhow!("missing key `theta2`"))
    }
}
