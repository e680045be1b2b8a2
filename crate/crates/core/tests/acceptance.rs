//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use twohop_core::exec::map_ordered;
use twohop_core::simulator::{lin_space, log_space};
use twohop_core::{
    pool_fits, run_replications, CaseTag, DecayFit, Execution, FadingDistribution, LinkParams,
    QosPair, QueueSelector, SimConfig, SimResult, Solver,
};

const TB: f64 = 200.0;
const THETA1: f64 = 0.01;

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn close(&mut self, what: &str, got: f64, expected: f64, rel_tol: f64) {
        let err = rel_err(got, expected);
        self.check(err <= rel_tol, format!("{what}: {got} vs {expected} (rel {err:.2e})"));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn rel_err(got: f64, expected: f64) -> f64 {
    if got == expected {
        0.0
    } else {
        ((got - expected) / expected).abs()
    }
}

fn rayleigh(snr_db: f64) -> LinkParams {
    LinkParams::from_db(snr_db, 0.002, 1e5, FadingDistribution::rayleigh(1.0).unwrap()).unwrap()
}

fn gain_for(bits: f64) -> f64 {
    (bits / TB).exp2() - 1.0
}

fn constant(bits: f64) -> LinkParams {
    LinkParams::new(1.0, 0.002, 1e5, FadingDistribution::constant(gain_for(bits)).unwrap()).unwrap()
}

fn two_level(low: f64, high: f64) -> LinkParams {
    let fading = FadingDistribution::discrete(&[(gain_for(low), 0.5), (gain_for(high), 0.5)]).unwrap();
    LinkParams::new(1.0, 0.002, 1e5, fading).unwrap()
}

fn qos(theta1: f64, theta2: f64) -> QosPair {
    QosPair::new(theta1, theta2).unwrap()
}

/// Plain bisection for the hand-derived oracles; f(lo) and f(hi) must differ in sign.
fn oracle_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = f(lo) > 0.0;
    assert_ne!(lo_sign, f(hi) > 0.0, "oracle bracket [{lo}, {hi}] has no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// log Σ pₖ e^(θ·cₖ) for a finite service law.
fn finite_lmgf(atoms: &[(f64, f64)], theta: f64) -> f64 {
    let m = atoms.iter().map(|&(c, _)| theta * c).fold(f64::NEG_INFINITY, f64::max);
    m + atoms.iter().map(|&(c, p)| p * (theta * c - m).exp()).sum::<f64>().ln()
}

fn oracle_equivalence() -> Outcome {
    let mut out = Outcome::new();
    let s = Solver::default();

    let c200 = constant(200.0);
    for theta in [-1.0, -0.01, 0.3] {
        out.close("constant lmgf", c200.service_lmgf(theta).unwrap(), 200.0 * theta, 1e-9);
    }
    for theta in [1e-3, 0.05, 2.0] {
        out.close("constant capacity", c200.effective_capacity(theta).unwrap(), 200.0, 1e-9);
    }

    let laws: [&[(f64, f64)]; 2] = [&[(0.5, 0.5), (1.5, 0.5)], &[(0.0, 0.2), (1.0, 0.3), (3.0, 0.5)]];
    for atoms in laws {
        let fading = FadingDistribution::discrete(atoms).unwrap();
        let link = LinkParams::new(1.0, 0.002, 1e5, fading).unwrap();
        let service: Vec<(f64, f64)> = atoms.iter().map(|&(z, p)| (TB * (1.0 + z).log2(), p)).collect();
        for theta in [-0.5, -0.01, 0.01, 0.2] {
            out.close("discrete lmgf", link.service_lmgf(theta).unwrap(), finite_lmgf(&service, theta), 1e-9);
        }
        for theta in [1e-3, 0.05, 2.0] {
            let expected = -finite_lmgf(&service, -theta) / theta;
            out.close("discrete capacity", link.effective_capacity(theta).unwrap(), expected, 1e-9);
        }
    }

    // Constant links: r_e = min(c₁, c₂) whenever the relay is faster.
    let c400 = constant(400.0);
    for (t1, t2, case) in [
        (0.01, 0.001, CaseTag::CaseI),
        (0.01, 0.01, CaseTag::CaseI),
        (0.01, 0.5, CaseTag::CaseII1),
    ] {
        let r = s.effective_capacity(&c200, &c400, qos(t1, t2)).unwrap();
        out.close("constant 200/400 r_e", r.r_e, 200.0, 1e-9);
        out.check(r.case == case, format!("constant 200/400 case {:?} at theta2 {t2}", r.case));
    }
    // Constant 200 → 100 and 200 → 150: E_B = (1 - θ₁/θ)·200 meets the relay rate.
    let c100 = constant(100.0);
    let c150 = constant(150.0);
    out.close("theta* 200/100", s.crossing_theta_star(&c200, &c100, 0.01).unwrap(), 0.02, 1e-9);
    out.close("theta* 200/150", s.crossing_theta_star(&c200, &c150, 0.01).unwrap(), 0.04, 1e-9);
    // g(θ) = 200 - 50·θ/θ₁ < 200 for every θ > 0, so the flat region is empty.
    out.check(s.theta2_prime(&c200, &c150, 0.01).unwrap() == 0.0, "theta2' 200/150 must be 0");
    // Second term (150θ₂ - 200(θ₂ - θ̃))/θ̃ stays below 200 and peaks at θ̃ = θ₂ with value 150.
    let tilt = s.theta_tilde_0(&c200, &c150, 0.01, 0.5).unwrap();
    out.close("theta~0 200/150 rate", tilt.rate, 150.0, 1e-9);
    out.close("theta~0 200/150 point", tilt.theta_tilde_0, 0.5, 1e-9);

    // Constant source 100 bits, relay 50 or 400 bits with equal odds: every
    // case reduces to min{100, E_C,2(θ₂)}; θ'₂ solves E_C,2(θ) = 100.
    let (src, relay) = (constant(100.0), two_level(50.0, 400.0));
    let relay_ec = |t: f64| -finite_lmgf(&[(50.0, 0.5), (400.0, 0.5)], -t) / t;
    let t2p = oracle_root(|t| relay_ec(t) - 100.0, 1e-6, 1.0);
    out.close("theta2' constant/two-level", s.theta2_prime(&src, &relay, 0.005).unwrap(), t2p, 1e-9);
    for theta2 in [0.001, 0.005, 0.01, 0.5 * (0.005 + t2p), t2p * 1.01, 0.1] {
        let r = s.effective_capacity(&src, &relay, qos(0.005, theta2)).unwrap();
        out.close(&format!("constant/two-level r_e at {theta2:.4}"), r.r_e, relay_ec(theta2).min(100.0), 1e-9);
    }

    // Two-level source (100 or 300 bits), constant relay 250 bits, θ₁ = 0.005.
    // Λ_C(δ) = log(e^(100δ) + e^(300δ)) - log 2, Λ_H(-θ) = -250θ.
    let theta1 = 0.005;
    let src_atoms = [(100.0, 0.5), (300.0, 0.5)];
    let (src, relay) = (two_level(100.0, 300.0), constant(250.0));
    let lmgf_c = |d: f64| finite_lmgf(&src_atoms, d);
    let ec1 = |t: f64| -lmgf_c(-t) / t;
    let g = |t: f64| (250.0 * t - lmgf_c(t - theta1)) / theta1;
    // g'(θ) = 0 ⟺ Λ_C'(δ) = 250 ⟺ e^(200δ) = 3.
    let peak = theta1 + 3f64.ln() / 200.0;
    let star = oracle_root(|t| 250.0 - lmgf_c(t - theta1) / t, theta1 * 1.0001, 1.0);
    let t2p = oracle_root(|t| g(t) - ec1(theta1), peak, star);
    let geom = s.relay_geometry(&src, &relay, theta1).unwrap();
    out.close("two-level theta*", geom.theta_star.unwrap_or(f64::NAN), star, 1e-9);
    out.close("two-level theta**", geom.theta_star_star.unwrap_or(f64::NAN), peak, 1e-6);
    out.close("two-level theta2'", geom.theta2_prime, t2p, 1e-9);
    let cases = [
        (0.002, CaseTag::CaseI),
        (0.5 * (theta1 + t2p), CaseTag::CaseII1),
        (t2p * 1.5, CaseTag::CaseII2),
        (0.1, CaseTag::CaseII2),
        (1.0, CaseTag::CaseII2),
    ];
    for (theta2, case) in cases {
        let expected = match case {
            CaseTag::CaseI => ec1(theta1).min(250.0),
            CaseTag::CaseII1 => ec1(theta1),
            _ => {
                let b = |t: f64| (250.0 * theta2 - lmgf_c(theta2 - t)) / t;
                ec1(oracle_root(|t| ec1(t) - b(t), theta1, theta2))
            }
        };
        let r = s.effective_capacity(&src, &relay, qos(theta1, theta2)).unwrap();
        out.close(&format!("two-level r_e at {theta2:.4}"), r.r_e, expected, 1e-9);
        out.check(r.case == case, format!("two-level case {:?} at theta2 {theta2}", r.case));
    }
    out.note(format!("two-level theta2' = {t2p:.10}"));
    out
}

fn fig2_regime() -> Outcome {
    let mut out = Outcome::new();
    let (l1, l2) = (rayleigh(0.0), rayleigh(10.0));
    let grid = lin_space(THETA1, 1.0, 200);
    let rows = map_ordered(&grid, Execution::Parallel, |&t| {
        (
            l2.effective_capacity(t).unwrap(),
            l1.virtual_effective_bandwidth(t, THETA1).unwrap(),
        )
    });
    for (i, w) in rows.windows(2).enumerate() {
        out.check(w[1].0 < w[0].0, format!("E_C not decreasing at grid {i}"));
        out.check(w[1].1 > w[0].1, format!("E_B not increasing at grid {i}"));
    }
    out.check(rows[0].1 == 0.0, format!("E_B(theta1) = {} not exactly 0", rows[0].1));
    let sign_changes = rows
        .windows(2)
        .filter(|w| (w[0].0 - w[0].1 > 0.0) != (w[1].0 - w[1].1 > 0.0))
        .count();
    out.check(sign_changes == 1, format!("{sign_changes} crossings on the grid"));
    match Solver::default().crossing_theta_star(&l1, &l2, THETA1) {
        Ok(t) => {
            out.check(t > THETA1 && t < 1.0, format!("theta* {t} outside (theta1, 1)"));
            out.note(format!("theta* = {t:.10}"));
        }
        Err(e) => out.check(false, format!("crossing: {e}")),
    }
    let ergodic = l2.effective_capacity(0.0).unwrap();
    out.check((ergodic - 581.3).abs() <= 0.5, format!("E_C(0) = {ergodic:.4}, want 581.3 ± 0.5"));
    let ec1 = l1.effective_capacity(THETA1).unwrap();
    out.check((ec1 - 117.3).abs() <= 0.5, format!("E_C,1(theta1) = {ec1:.4}, want 117.3 ± 0.5"));
    out.note(format!("E_C(0) = {ergodic:.4}, E_C,1(theta1) = {ec1:.4}"));
    out
}

fn fig3_flat_region() -> Outcome {
    let mut out = Outcome::new();
    let s = Solver::default();
    let l1 = rayleigh(0.0);
    let source_only = l1.effective_capacity(THETA1).unwrap();
    let grid = log_space(1e-4, 1.0, 50);
    let mut primes = Vec::new();
    for snr2 in [5.0, 10.0, 15.0] {
        let l2 = rayleigh(snr2);
        let results = map_ordered(&grid, Execution::Parallel, |&t2| {
            s.effective_capacity(&l1, &l2, qos(THETA1, t2)).unwrap()
        });
        let t2p = results[0].theta2_prime.unwrap();
        primes.push(t2p);
        for (i, w) in results.windows(2).enumerate() {
            out.check(
                w[1].r_e <= w[0].r_e * (1.0 + 1e-9),
                format!("{snr2} dB: r_e increases at grid {i} ({} -> {})", w[0].r_e, w[1].r_e),
            );
        }
        for (t2, r) in grid.iter().zip(&results) {
            if *t2 <= t2p {
                out.check(
                    rel_err(r.r_e, source_only) <= 1e-6,
                    format!("{snr2} dB: not flat at theta2 {t2:.3e}: {}", r.r_e),
                );
            } else {
                out.check(
                    r.r_e < source_only,
                    format!("{snr2} dB: not below source-only at theta2 {t2:.3e}"),
                );
            }
        }
        let flat = grid.iter().filter(|&&t| t <= t2p).count();
        out.note(format!("{snr2} dB: theta2' = {t2p:.6} ({flat} flat points)"));
    }
    out.check(
        primes.windows(2).all(|w| w[1] >= w[0]),
        format!("theta2' not nondecreasing in SNR2: {primes:?}"),
    );
    out
}

fn case_one_no_harm() -> Outcome {
    let mut out = Outcome::new();
    let s = Solver::default();
    let mut worst: f64 = 0.0;
    for snr1 in [0.0, 5.0] {
        for step in [0.1, 5.0] {
            let (l1, l2) = (rayleigh(snr1), rayleigh(snr1 + step));
            for theta1 in [0.001, 0.01, 0.1] {
                let source_only = l1.effective_capacity(theta1).unwrap();
                for ratio in [0.1, 0.5, 1.0] {
                    let r = s.effective_capacity(&l1, &l2, qos(theta1, ratio * theta1)).unwrap();
                    let err = rel_err(r.r_e, source_only);
                    worst = worst.max(err);
                    out.check(
                        err <= 1e-9 && r.case == CaseTag::CaseI,
                        format!("snr1 {snr1} snr2 {} theta1 {theta1} ratio {ratio}: {:?} {}", snr1 + step, r.case, r.r_e),
                    );
                }
            }
        }
    }
    out.note(format!("max relative deviation {worst:.1e}"));
    out
}

fn boundary_continuity() -> Outcome {
    let mut out = Outcome::new();
    let s = Solver::default();
    let l1 = rayleigh(0.0);
    let mut worst: f64 = 0.0;
    for snr2 in [5.0, 10.0, 15.0] {
        let l2 = rayleigh(snr2);
        let t2p = s.theta2_prime(&l1, &l2, THETA1).unwrap();
        for (label, edge) in [("theta1", THETA1), ("theta2'", t2p)] {
            let below = s.effective_capacity(&l1, &l2, qos(THETA1, edge * (1.0 - 1e-6))).unwrap();
            let above = s.effective_capacity(&l1, &l2, qos(THETA1, edge * (1.0 + 1e-6))).unwrap();
            let err = rel_err(above.r_e, below.r_e);
            worst = worst.max(err);
            out.check(
                err <= 1e-5,
                format!("{snr2} dB at {label}: {} ({:?}) vs {} ({:?})", below.r_e, below.case, above.r_e, above.case),
            );
        }
    }
    out.note(format!("max two-sided gap {worst:.1e}"));
    out
}

const BLOCKS: u64 = 10_000_000;
const REPLICATIONS: usize = 8;

fn pooled(results: &[SimResult], which: QueueSelector) -> Option<DecayFit> {
    let fits: Vec<DecayFit> = results
        .iter()
        .filter_map(|r| r.queue(which).and_then(|q| q.fit))
        .collect();
    if fits.len() < results.len() {
        return None;
    }
    pool_fits(&fits)
}

fn single_queue_decay() -> Outcome {
    let mut out = Outcome::new();
    let l1 = rayleigh(0.0);
    for (k, target) in [0.005, 0.02].into_iter().enumerate() {
        let rate = l1.effective_capacity(target).unwrap();
        let config = SimConfig::new(l1.clone(), None, rate, BLOCKS, 1000 + 100 * k as u64)
            .with_thresholds(lin_space(0.25 / target, 14.0 / target, 56));
        let results = run_replications(&config, REPLICATIONS, Execution::Parallel).unwrap();
        let Some(fit) = pooled(&results, QueueSelector::Source) else {
            out.check(false, format!("theta {target}: a replication had too few points to fit"));
            continue;
        };
        let err = rel_err(fit.slope, target);
        out.check(err <= 0.10, format!("theta {target}: slope {:.6} off by {:.1}%", fit.slope, 100.0 * err));
        let z = (fit.slope - target).abs() / fit.stderr;
        out.check(z <= 3.0, format!("theta {target}: slope {:.6} is {z:.2} pooled SE from target", fit.slope));
        out.note(format!(
            "theta {target}: R {rate:.3}, slope {:.6} ± {:.6} ({:+.2}%, {z:.2} SE)",
            fit.slope,
            fit.stderr,
            100.0 * (fit.slope - target) / target
        ));
    }
    out
}

fn tandem_decay() -> Outcome {
    let mut out = Outcome::new();
    let s = Solver::default();
    let (l1, l2) = (rayleigh(0.0), rayleigh(10.0));
    let theta2 = 0.02;
    let r = s.effective_capacity(&l1, &l2, qos(THETA1, theta2)).unwrap();
    out.note(format!("r_e {:.4} ({})", r.r_e, r.case));
    out.check(
        matches!(r.case, CaseTag::CaseII1 | CaseTag::CaseII2),
        format!("theta2 {theta2} should fall in Case II, got {:?}", r.case),
    );
    let thresholds = lin_space(20.0, 2000.0, 100);

    let config = SimConfig::new(l1.clone(), Some(l2.clone()), 0.999 * r.r_e, BLOCKS, 7000)
        .with_thresholds(thresholds.clone());
    let results = run_replications(&config, REPLICATIONS, Execution::Parallel).unwrap();
    match (pooled(&results, QueueSelector::Source), pooled(&results, QueueSelector::Relay)) {
        (Some(src), Some(relay)) => {
            out.check(src.slope >= 0.9 * THETA1, format!("source slope {:.6} < 0.9·theta1", src.slope));
            out.check(relay.slope >= 0.9 * theta2, format!("relay slope {:.6} < 0.9·theta2", relay.slope));
            out.note(format!(
                "R = 0.999 r_e: source {:.6} ± {:.6}, relay {:.6} ± {:.6}",
                src.slope, src.stderr, relay.slope, relay.stderr
            ));
        }
        (src, relay) => out.check(false, format!("unfit at 0.999 r_e: source {src:?}, relay {relay:?}")),
    }

    let bottleneck = s.relay_bottleneck_rate(&l1, &l2, theta2).unwrap();
    let overload = SimConfig::new(l1, Some(l2), 1.05 * bottleneck, BLOCKS, 8000).with_thresholds(thresholds);
    let results = run_replications(&overload, REPLICATIONS, Execution::Parallel).unwrap();
    match pooled(&results, QueueSelector::Relay) {
        Some(relay) => {
            out.check(relay.slope < theta2, format!("overloaded relay slope {:.6} not below theta2", relay.slope));
            out.note(format!(
                "R = 1.05 x {bottleneck:.4}: relay {:.6} ± {:.6}",
                relay.slope, relay.stderr
            ));
        }
        None => out.check(false, "overloaded relay curve could not be fitted"),
    }
    out
}

fn large_theta2_limit() -> Outcome {
    let mut out = Outcome::new();
    let r = Solver::default()
        .effective_capacity(&rayleigh(0.0), &rayleigh(10.0), qos(THETA1, 5.0))
        .unwrap();
    out.check(r.r_e < 1.0, format!("r_e(theta2 = 5) = {:.6} bits/block, want < 1", r.r_e));
    out.note(format!("r_e {:.10} ({}), theta~0 {:?}", r.r_e, r.case, r.theta_tilde_0));
    out
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "oracle equivalence on finite fading laws", Some(Duration::from_secs(1)), oracle_equivalence),
        (2, "virtual capacity/bandwidth regime", Some(Duration::from_secs(5)), fig2_regime),
        (3, "flat region in theta2 and growth of theta2' with SNR2", Some(Duration::from_secs(30)), fig3_flat_region),
        (4, "relay causes no loss when theta2 <= theta1", Some(Duration::from_secs(10)), case_one_no_harm),
        (5, "continuity at theta2 = theta1 and theta2 = theta2'", Some(Duration::from_secs(5)), boundary_continuity),
        (6, "single-queue decay rate matches target exponent", None, single_queue_decay),
        (7, "tandem decay rates respect both QoS exponents", None, tandem_decay),
        (8, "effective capacity vanishes as theta2 grows", Some(Duration::from_secs(5)), large_theta2_limit),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let Some(budget) = budget {
            outcome.check(elapsed <= budget, format!("took {elapsed:.2?}, budget {budget:?}"));
        }
        let verdict = if outcome.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("[{verdict}] criterion {id}: {name} ({:.2} s)", elapsed.as_secs_f64());
        for note in &outcome.notes {
            println!("       {note}");
        }
        for failure in outcome.failures.iter().take(8) {
            println!("       ✗ {failure}");
        }
        if outcome.failures.len() > 8 {
            println!("       ✗ ... {} more", outcome.failures.len() - 8);
        }
        if !outcome.failures.is_empty() {
            failed += 1;
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
