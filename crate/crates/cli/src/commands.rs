use anyhow::{anyhow, bail, Result};

use twohop_core::exec::map_ordered;
use twohop_core::simulator::fit_decay;
use twohop_core::{
    pool_fits, run_replications, CaseTag, DecayFit, DecayWindow, EffCapResult, Execution, LinkParams, QosPair,
    QueueSelector, SimConfig, SimResult,
};

use crate::output::{Cell, Table};
use crate::scenario::{Scenario, Sweep, SweepVar};

fn qos(theta1: f64, theta2: f64) -> Result<QosPair> {
    QosPair::new(theta1, theta2).map_err(|e| anyhow!("{e}"))
}

fn core<T>(r: twohop_core::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow!("{e}"))
}

pub fn compute(s: &Scenario) -> Result<Table> {
    let theta2 = s.require_theta2()?;
    let r = core(s.solver.effective_capacity(&s.link1, &s.link2, qos(s.theta1, theta2)?))?;
    let mut t = Table::new(vec![
        "theta1",
        "theta2",
        "snr1_db",
        "snr2_db",
        "r_e",
        "r_e_norm",
        "case",
        "theta_tilde",
        "theta_hat",
        "theta_star",
        "theta_star_star",
        "theta2_prime",
        "theta_tilde_0",
    ]);
    t.push(vec![
        s.theta1.into(),
        theta2.into(),
        s.snr1_db.into(),
        s.snr2_db.into(),
        r.r_e.into(),
        (r.r_e / s.symbols_per_block()).into(),
        r.case.as_str().into(),
        Cell::opt(r.theta_tilde),
        Cell::opt(r.theta_hat),
        Cell::opt(r.theta_star),
        Cell::opt(r.theta_star_star),
        Cell::opt(r.theta2_prime),
        Cell::opt(r.theta_tilde_0),
    ]);
    Ok(t)
}

pub fn curves(s: &Scenario) -> Result<Table> {
    let grid = match &s.sweep {
        None => Sweep::parse(&format!("theta:{}:1:200:lin", s.theta1))?.points,
        Some(Sweep { var: SweepVar::Theta, points }) => points.clone(),
        Some(other) => bail!("invalid value for `sweep`: curves sweeps theta, not {}", other.var.as_str()),
    };
    if grid.len() < 2 {
        bail!("invalid value for `sweep`: curves need at least 2 points");
    }
    if grid[0] < s.theta1 {
        bail!("invalid value for `sweep`: theta grid must start at or above theta1 = {}", s.theta1);
    }
    let tb = s.symbols_per_block();
    let rows = map_ordered(&grid, Execution::Parallel, |&theta| -> Result<(f64, f64)> {
        Ok((
            core(s.link2.effective_capacity(theta))?,
            core(s.link1.virtual_effective_bandwidth(theta, s.theta1))?,
        ))
    });
    let mut t = Table::new(vec!["theta", "E_C_norm", "E_B_norm"]);
    for (theta, row) in grid.iter().zip(rows) {
        let (ec, eb) = row?;
        t.push(vec![(*theta).into(), (ec / tb).into(), (eb / tb).into()]);
    }
    let star = s.solver.crossing_theta_star(&s.link1, &s.link2, s.theta1).ok();
    t.footer.push(("theta_star", Cell::opt(star)));
    Ok(t)
}

pub fn sweep(s: &Scenario) -> Result<Table> {
    let sweep = s.sweep.as_ref().ok_or_else(|| anyhow!("missing key `sweep`"))?;
    match sweep.var {
        SweepVar::Theta2 => sweep_theta2(s, &sweep.points),
        SweepVar::Snr2Db => sweep_snr2(s, &sweep.points),
        SweepVar::Theta => bail!("invalid value for `sweep`: theta sweeps belong to the curves command"),
    }
}

fn sweep_theta2(s: &Scenario, grid: &[f64]) -> Result<Table> {
    let stable = core(s.solver.check_stability(&s.link1, &s.link2))?;
    let geometry = if stable {
        Some(core(s.solver.relay_geometry(&s.link1, &s.link2, s.theta1))?)
    } else {
        None
    };
    let results = map_ordered(grid, Execution::Parallel, |&theta2| -> Result<EffCapResult> {
        match &geometry {
            Some(g) => core(s.solver.effective_capacity_with(&s.link1, &s.link2, qos(s.theta1, theta2)?, g)),
            None => Ok(EffCapResult::unstable()),
        }
    });
    let tb = s.symbols_per_block();
    let mut t = Table::new(vec!["theta2", "r_e_norm", "case_tag"]);
    for (theta2, r) in grid.iter().zip(results) {
        let r = r?;
        t.push(vec![(*theta2).into(), (r.r_e / tb).into(), r.case.as_str().into()]);
    }
    t.footer.push(("theta2_prime", Cell::opt(geometry.map(|g| g.theta2_prime))));
    Ok(t)
}

fn sweep_snr2(s: &Scenario, grid: &[f64]) -> Result<Table> {
    let primes = map_ordered(grid, Execution::Parallel, |&db| -> Result<Option<f64>> {
        let link2 = core(LinkParams::from_db(db, s.link2.block_s, s.link2.bandwidth_hz, s.link2.fading.clone()))?;
        if !core(s.solver.check_stability(&s.link1, &link2))? {
            return Ok(None);
        }
        core(s.solver.theta2_prime(&s.link1, &link2, s.theta1)).map(Some)
    });
    let mut t = Table::new(vec!["snr2_db", "theta2_prime"]);
    for (db, p) in grid.iter().zip(primes) {
        t.push(vec![(*db).into(), Cell::opt(p?)]);
    }
    Ok(t)
}

fn pooled_fit(results: &[SimResult], which: QueueSelector, mean_curve: &[f64], thresholds: &[f64]) -> Option<DecayFit> {
    let fits: Option<Vec<DecayFit>> = results.iter().map(|r| r.queue(which).and_then(|q| q.fit)).collect();
    match fits {
        Some(fits) => pool_fits(&fits),
        None => fit_decay(thresholds, mean_curve, DecayWindow::default()).ok(),
    }
}

fn mean_curve(results: &[SimResult], which: QueueSelector) -> Option<Vec<f64>> {
    let curves: Option<Vec<&Vec<f64>>> =
        results.iter().map(|r| r.queue(which).map(|q| &q.overflow_probability)).collect();
    let curves = curves?;
    let n = curves.len() as f64;
    Some(
        (0..curves[0].len())
            .map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / n)
            .collect(),
    )
}

pub fn simulate(s: &Scenario) -> Result<Table> {
    let (rate, target2, solved) = if s.single_queue {
        (s.rate_frac * core(s.link1.effective_capacity(s.theta1))?, None, None)
    } else {
        let theta2 = s.require_theta2()?;
        let r = core(s.solver.effective_capacity(&s.link1, &s.link2, qos(s.theta1, theta2)?))?;
        if r.case == CaseTag::Unstable || r.r_e <= 0.0 {
            bail!("scenario has zero effective capacity ({}); nothing to simulate", r.case);
        }
        (s.rate_frac * r.r_e, Some(theta2), Some(r))
    };
    let link2 = (!s.single_queue).then(|| s.link2.clone());
    let mut config = SimConfig::new(s.link1.clone(), link2, rate, s.blocks, s.seed);
    if let Some(th) = &s.thresholds {
        config = config.with_thresholds(th.clone());
    }
    let results = core(run_replications(&config, s.replications, Execution::Parallel))?;

    let source = mean_curve(&results, QueueSelector::Source).unwrap_or_default();
    let relay = mean_curve(&results, QueueSelector::Relay);
    let mut t = Table::new(vec!["threshold", "source_overflow", "relay_overflow"]);
    for (j, q) in config.thresholds.iter().enumerate() {
        t.push(vec![
            (*q).into(),
            source[j].into(),
            Cell::opt(relay.as_ref().map(|c| c[j])),
        ]);
    }

    let n = results.len() as f64;
    t.footer.push(("rate", rate.into()));
    if let Some(r) = &solved {
        t.footer.push(("r_e", r.r_e.into()));
        t.footer.push(("case", r.case.as_str().into()));
    }
    t.footer.push(("replications", Cell::Int(results.len() as u64)));
    t.footer.push(("blocks", Cell::Int(s.blocks)));
    t.footer.push(("seed", Cell::Int(s.seed)));
    if results.iter().any(|r| r.unstable) {
        t.footer.push(("warning", "arrival rate not below an ergodic capacity".into()));
    }
    let queues = [
        (QueueSelector::Source, Some(source), Some(s.theta1), "source"),
        (QueueSelector::Relay, relay, target2, "relay"),
    ];
    for (which, curve, target, name) in queues {
        let (Some(curve), Some(target)) = (curve, target) else {
            continue;
        };
        let fit = pooled_fit(&results, which, &curve, &config.thresholds);
        let mean_len = results.iter().filter_map(|r| r.queue(which)).map(|q| q.mean_length).sum::<f64>() / n;
        let verdict = match fit {
            None => "UNMEASURED",
            Some(f) if f.slope >= s.margin * target => "PASS",
            Some(_) => "FAIL",
        };
        let keys: [(&'static str, Cell); 5] = match name {
            "source" => [
                ("source_slope", Cell::opt(fit.map(|f| f.slope))),
                ("source_stderr", Cell::opt(fit.map(|f| f.stderr))),
                ("source_target", target.into()),
                ("source_mean_length", mean_len.into()),
                ("source_verdict", verdict.into()),
            ],
            _ => [
                ("relay_slope", Cell::opt(fit.map(|f| f.slope))),
                ("relay_stderr", Cell::opt(fit.map(|f| f.stderr))),
                ("relay_target", target.into()),
                ("relay_mean_length", mean_len.into()),
                ("relay_verdict", verdict.into()),
            ],
        };
        t.footer.extend(keys);
    }
    Ok(t)
}
