//! The five batch commands. Each validates its configuration before any
//! computation and returns an [`Outcome`]; errors map to exit codes in
//! [`crate::exit_code`].

use std::collections::BTreeMap;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rev_euler::data_fields::{
    certify_decay, eval_data, eval_grad_data, fd_jacobian, resolving_step, Jacobian,
};
use rev_euler::diagnostics::{
    compactified_sup, compactify_check, decay_radii, grid_decay_certificates, holder_exponent,
    holder_seminorm_seeded, limit_rows_csv, lipschitz_estimate, norm_rows_csv, residual_probes,
    reversed_euler_residual, singular_slab_scan, slab_rows_csv, DiagnosticsReport, ResidualOptions, Trend,
};
use rev_euler::holder::Region;
use rev_euler::iteration::{
    burgers_term, init_step0, leray_term, max_ratio, navier_force_term, run_contraction, run_refined, run_with,
    viscosity_limit_drive, CauchyVerdict, Engine, Form, HorizonTrial, IterationConfig, IterationState, NormRecord,
    TermOptions, CONTRACTION_FACTOR,
};
use rev_euler::kernels::{degeneracy_scan, gaussian_grad, second_moment, weighted_moment_full_space, KernelSpec};
use rev_euler::{Error, Family, GridSpec, Point3, Result, ScalarField, TimeSlab, VectorField};
use serde::{Deserialize, Serialize};

use crate::config::{CheckpointMode, RunConfig};
use crate::output::Output;

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Pass,
    /// Named checks failed.
    CheckFailed(Vec<String>),
    /// A convergence verdict failed.
    VerdictFailed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// The check passes when `value < threshold`, unless stated in `detail`.
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value, threshold, pass: value < threshold, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
    /// Informational values with no pass/fail threshold.
    /// `None` where an estimate is undefined.
    pub measurements: BTreeMap<String, Option<f64>>,
}

impl CheckReport {
    fn outcome(&self) -> Outcome {
        let failed: Vec<String> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        if failed.is_empty() {
            Outcome::Pass
        } else {
            Outcome::CheckFailed(failed)
        }
    }

    fn print(&self) {
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            println!("{tag} {:<24} {:.3e} (threshold {:.1e}) {}", c.name, c.value, c.threshold, c.detail);
        }
    }
}

fn relative_jacobian_error(exact: &Jacobian, fd: &Jacobian) -> f64 {
    let scale = exact.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let err = (exact[i][j] - fd[i][j]).abs();
            worst = worst.max(err / exact[i][j].abs().max(1e-6 * scale));
        }
    }
    worst
}

/// Divergence, gradient, Hölder and decay checks of the configured data.
pub fn data_check(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    cfg.validate()?;
    let p = cfg.iteration.params;
    let mut report = CheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut worst = 0.0f64;
    let mut count = 0;
    while count < cfg.data.divergence_points {
        let x = Point3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        if x.x1.abs() <= 1e-3 {
            continue;
        }
        let j = eval_grad_data(x, &p)?;
        worst = worst.max((j[0][0] + j[1][1] + j[2][2]).abs());
        count += 1;
    }
    report.checks.push(Check::below("divergence", worst, 1e-9, format!("max |div| at {count} points")));

    let mut worst = 0.0f64;
    for _ in 0..cfg.data.gradient_points {
        let x = match p.family {
            Family::Planar => {
                let mut x1: f64 = rng.gen_range(-5.0..5.0);
                if x1.abs() < 1e-3 {
                    x1 = 1e-3f64.copysign(x1);
                }
                Point3::new(x1, rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))
            }
            Family::Radial => loop {
                let x = Point3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                if x.norm() >= 0.05 {
                    break x;
                }
            },
        };
        // The radial oscillation is resolved by the step for |x1| = r.
        let probe = match p.family {
            Family::Planar => x,
            Family::Radial => Point3::new(x.norm(), 0.0, 0.0),
        };
        let fd = fd_jacobian(|y| eval_data(y, &p), x, resolving_step(probe, &p));
        worst = worst.max(relative_jacobian_error(&eval_grad_data(x, &p)?, &fd));
    }
    report.checks.push(Check::below(
        "gradient",
        worst,
        1e-5,
        format!("max relative error against fourth-order differences at {} points", cfg.data.gradient_points),
    ));

    let grid = GridSpec::new(cfg.iteration.half_width, cfg.data.holder_grid_n)?;
    let data = VectorField::sample(grid, |x| eval_data(x, &p));
    let delta = p.holder_delta();
    for (i, c) in data.components.iter().enumerate() {
        let name = format!("data{}", i + 1);
        let s = holder_seminorm_seeded(c, delta, &Region::whole(&grid), cfg.seed);
        report.checks.push(Check {
            name: format!("holder[{name}]"),
            value: s,
            threshold: f64::INFINITY,
            pass: s.is_finite(),
            detail: format!("sampled C^{delta:.3} seminorm on {}^3, must be finite", grid.n),
        });
        let e = holder_exponent(c, cfg.diagnostics.holder_levels, 0.5 * grid.half_width);
        report.measurements.insert(format!("holder_exponent[{name}]"), finite(e));
    }

    let m = cfg.diagnostics.decay_m;
    let radii = decay_radii(&grid);
    for i in 0..3 {
        let cert = certify_decay(|x| eval_data(x, &p)[i], 2 * m, m, &radii)?;
        report.checks.push(Check {
            name: format!("decay[data{}]", i + 1),
            value: cert.fitted_exponent,
            threshold: cert.l as f64,
            pass: cert.holds(),
            detail: format!("fitted decay exponent, must reach order {} (m = {m}) within slack", cert.l),
        });
    }

    report.print();
    out.json("data_check.json", &report)?;
    Ok(report.outcome())
}

/// Antisymmetry, full-space moment, `M2` and degeneracy checks.
pub fn kernel_check(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    cfg.validate()?;
    let k = &cfg.kernel;
    let mut report = CheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut worst = 0.0f64;
    for _ in 0..k.antisymmetry_points {
        let spec = KernelSpec::new(rng.gen_range(1e-3..1.0), 0.0, rng.gen_range(1e-2..2.0))?;
        let y = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for i in 0..3 {
            let g = gaussian_grad(&spec, y, i);
            if g != 0.0 {
                worst = worst.max((g + gaussian_grad(&spec, y.reflected(i), i)).abs() / g.abs());
            }
        }
    }
    report.checks.push(Check {
        name: "antisymmetry".into(),
        value: worst,
        threshold: 1e-15,
        pass: worst <= 1e-15,
        detail: "max relative defect of G_j(-y) = -G_j(y); passes at or below the threshold".into(),
    });

    let mut worst = 0.0f64;
    for &(nu, sigma) in &k.moment_pairs {
        let spec = KernelSpec::new(nu, 0.0, sigma)?;
        for i in 0..3 {
            worst = worst.max((weighted_moment_full_space(&spec, i, 40) - 2.0).abs());
        }
    }
    report.checks.push(Check::below("moment", worst, 1e-6, "max |weighted second moment - 2|"));

    let t = k.m2_horizon;
    let mut m2s = Vec::new();
    for &nu in &k.m2_nus {
        let m2 = second_moment(&KernelSpec::new(nu, 0.0, t)?, t, 0.0)?.measured_m2;
        report.measurements.insert(format!("m2[nu={nu:e}]"), finite(m2));
        m2s.push(m2);
    }
    let spread = m2s.iter().map(|m| (m - t / 4.0).abs()).fold(0.0, f64::max);
    report.checks.push(Check::below("m2_viscosity_free", spread, 1e-4, format!("max |M2 - T/4| at T = {t}")));

    let vals = degeneracy_scan(|x| if x.x1 > 0.0 { 1.0 } else { 0.0 }, k.degeneracy_t, 0, &k.degeneracy_nus)?;
    for (nu, v) in k.degeneracy_nus.iter().zip(&vals) {
        report.measurements.insert(format!("degeneracy[nu={nu:e}]"), finite(*v));
    }
    let increases = vals.windows(2).filter(|w| w[1] >= w[0]).count();
    report.checks.push(Check {
        name: "degeneracy".into(),
        value: increases as f64,
        threshold: 1.0,
        pass: increases == 0,
        detail: "non-decreasing steps of the unit-step scan as nu decreases".into(),
    });

    report.print();
    out.json("kernel_check.json", &report)?;
    Ok(report.outcome())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateSummary {
    pub t_measured: f64,
    pub trivial: bool,
    pub max_ratio: Option<f64>,
    pub trials: Vec<HorizonTrial>,
    pub records: Vec<NormRecord>,
    pub config: IterationConfig,
}

pub fn checkpoint_name(k: usize, node: usize) -> String {
    format!("checkpoints/k{k:02}_n{node:03}.fld1")
}

fn write_checkpoints(out: &Output, engine: &Engine, s: &IterationState, mode: CheckpointMode) -> Result<()> {
    let nodes: Vec<usize> = match mode {
        CheckpointMode::All => (0..s.nodes()).collect(),
        CheckpointMode::LastNode => vec![s.nodes() - 1],
        CheckpointMode::None => vec![],
    };
    for node in nodes {
        out.field(&checkpoint_name(s.k, node), &s.velocity(engine, node))?;
    }
    Ok(())
}

/// Horizon search, then a checkpointed run at the measured horizon.
pub fn iterate(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    cfg.validate()?;
    let it = &cfg.iteration;
    let engine = Engine::for_config(it)?;
    let search = run_contraction(&engine, it)?;
    println!("measured contraction horizon T = {:.6}", search.t_measured);
    let final_cfg = IterationConfig { horizon: search.t_measured, ..it.clone() };
    let state = run_with(&engine, &final_cfg, |s| write_checkpoints(out, &engine, s, cfg.diagnostics.checkpoints))?;
    let records = state.norm_history.clone();
    out.jsonl("history.jsonl", &records)?;
    out.csv("norms.csv", norm_rows_csv(&records))?;
    let ratio = max_ratio(&records);
    for r in &records {
        println!("k = {} sup {:.4e} ratio {:?}", r.k, r.sup_incr, r.contraction_ratio);
    }
    out.json(
        "summary.json",
        &IterateSummary {
            t_measured: search.t_measured,
            trivial: search.trivial,
            max_ratio: ratio,
            trials: search.trials,
            records,
            config: final_cfg,
        },
    )?;
    if search.trivial || ratio.is_some_and(|r| r <= CONTRACTION_FACTOR) {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::VerdictFailed(format!("max ratio {ratio:?} above {CONTRACTION_FACTOR}")))
    }
}

/// Velocity at the last three nodes, with times shifted to start at 0.
fn tail_slab(engine: &Engine, state: &IterationState) -> Result<TimeSlab<VectorField>> {
    let last = state.nodes() - 1;
    let t0 = state.times[last - 2];
    let times = state.times[last - 2..].iter().map(|t| t - t0).collect();
    let fields = (last - 2..=last).map(|n| state.velocity(engine, n)).collect();
    TimeSlab::new(times, fields)
}

fn max_lipschitz(slabs: impl Iterator<Item = Result<TimeSlab<ScalarField>>>) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in slabs {
        worst = worst.max(lipschitz_estimate(&s?)?);
    }
    Ok(worst)
}

/// Viscosity limit drive and every diagnostic of its candidate.
pub fn limit(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    cfg.validate()?;
    let it = &cfg.iteration;
    let lc = &cfg.limit;
    let engine = Engine::for_config(it)?;
    let (horizon, t_measured) = match lc.horizon {
        Some(t) => (t, None),
        None => {
            let search = run_contraction(&engine, it)?;
            (lc.horizon_fraction * search.t_measured, Some(search.t_measured))
        }
    };
    println!("limit horizon T = {horizon:.6}");
    let template = IterationConfig { horizon, nsteps_time: lc.nsteps_time, time_ratio: lc.time_ratio, ..it.clone() };
    let (nus, epss) = (lc.nus.clone(), lc.eps_schedule());
    let drive = viscosity_limit_drive(&engine, &template, &nus, &epss)?;
    out.csv("limit.csv", limit_rows_csv(&drive.rows))?;
    for r in &drive.rows {
        println!("nu {:.3e} eps {:.3e} sup {:.4e} cauchy {:?}", r.nu, r.eps, r.sup_incr, r.cauchy_diff);
    }

    let mut report = DiagnosticsReport {
        t_measured,
        contraction: drive.candidate.norm_history.clone(),
        limit_table: drive.rows.clone(),
        cauchy_verdict: Some(drive.verdict),
        ..Default::default()
    };
    let mut failures = Vec::new();
    for r in drive.rows.iter().filter(|r| !r.contracting) {
        failures.push(format!("not_contracting[nu={:e}]", r.nu));
    }
    let (nu, eps) = (*nus.last().unwrap(), *epss.last().unwrap());
    let candidate = &drive.candidate;
    let last = candidate.nodes() - 1;
    let v = candidate.velocity(&engine, last);
    let grid = engine.grid();

    let radii = if cfg.diagnostics.slab_radii.is_empty() {
        [8.0, 4.0, 2.0, 1.0].iter().map(|c| c * grid.spacing()).collect()
    } else {
        cfg.diagnostics.slab_radii.clone()
    };
    let profile = singular_slab_scan(&v, &radii)?;
    if profile.trends.omega1 != Trend::Growing {
        failures.push("omega1_not_growing".into());
    }
    report.singular_slab_profile = profile.rows;
    report.singular_slab_trends = Some(profile.trends);

    let m = cfg.diagnostics.decay_m;
    for (idx, inc) in drive.increments.iter().enumerate() {
        if let Err(e) = compactify_check(inc, m) {
            failures.push(format!("compactify[nu={:e}]: {e}", nus[idx]));
        }
        report.compactified_sup.push(compactified_sup(inc, m));
    }
    report.decay = grid_decay_certificates(drive.increments.last().unwrap(), m)?;

    for node in 0..candidate.nodes() {
        let f = navier_force_term(&candidate.velocity(&engine, node), nu);
        report.force_sup.push(std::array::from_fn(|i| f.components[i].sup()));
    }

    let first_cfg = IterationConfig { nu, eps, ..template.clone() };
    let first = init_step0(&engine, &first_cfg)?;
    let opts = TermOptions::from_config(&first_cfg);
    report.lipschitz_b = max_lipschitz((0..3).map(|i| burgers_term(&engine, &first, i, Form::FirstStep, &opts)))?;
    report.lipschitz_l = max_lipschitz((0..3).map(|i| leray_term(&engine, &first, i, Form::FirstStep, &opts)))?;
    report.m2 = second_moment(&KernelSpec::new(nu, eps, horizon)?, horizon, report.lipschitz_b + report.lipschitz_l)?
        .measured_m2;

    let levels = cfg.diagnostics.holder_levels;
    let half = 0.5 * grid.half_width;
    for i in 0..3 {
        report.holder_exponents.insert(format!("v{}", i + 1), finite(holder_exponent(&v.components[i], levels, half)));
        for j in 0..3 {
            let d = candidate.derivative(&engine, last, i, j);
            report.holder_exponents.insert(format!("d{}v{}", j + 1, i + 1), finite(holder_exponent(&d, levels, half)));
        }
    }

    let grids = &cfg.diagnostics.residual_grids;
    if let Some(&coarsest) = grids.first() {
        let min_x1 = cfg.diagnostics.residual_min_cells * 2.0 * it.half_width / coarsest as f64;
        let probes = residual_probes(cfg.diagnostics.residual_probes, 0.5 * it.half_width, min_x1, cfg.seed)?;
        for &n in grids {
            let c = IterationConfig { grid_n: n, ..first_cfg.clone() };
            let e = Engine::for_config(&c)?;
            let (_, s) = run_refined(&e, &c)?;
            let r = reversed_euler_residual(&tail_slab(&e, &s)?, &probes, &ResidualOptions::default())?;
            println!("residual at {n}^3: {r:.4e}");
            report.residual_trend.push((n, r));
        }
        if report.residual_trend.windows(2).any(|w| w[1].1 >= w[0].1) {
            failures.push("residual_not_decreasing".into());
        }
    }

    report.failures = failures.clone();
    write_limit_outputs(out, &report)?;
    for f in &failures {
        println!("FAIL {f}");
    }
    if drive.verdict == CauchyVerdict::NotCauchy {
        println!("FAIL cauchy verdict");
        return Ok(Outcome::VerdictFailed("viscosity sequence is not Cauchy".into()));
    }
    Ok(if failures.is_empty() { Outcome::Pass } else { Outcome::CheckFailed(failures) })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn write_limit_outputs(out: &Output, report: &DiagnosticsReport) -> Result<()> {
    out.json("report.json", report)?;
    out.csv("limit.csv", limit_rows_csv(&report.limit_table))?;
    out.csv("slab.csv", slab_rows_csv(&report.singular_slab_profile))?;
    out.csv("norms.csv", norm_rows_csv(&report.contraction))?;
    let rows = report.residual_trend.iter().map(|&(n, r)| vec![n as f64, r]).collect();
    out.csv("residual.csv", (vec!["grid_n", "residual"], rows))
}

/// Parses `k{k}_n{node}.fld1`.
fn parse_checkpoint(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_suffix(".fld1")?;
    let (k, node) = stem.strip_prefix('k')?.split_once("_n")?;
    Some((k.parse().ok()?, node.parse().ok()?))
}

/// Re-renders tables from the history, report and checkpoints in the
/// output directory.
pub fn report(out: &Output) -> Result<Outcome> {
    let mut found = false;
    if let Ok(text) = fs::read_to_string(out.path("history.jsonl")) {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<NormRecord>(l).map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        out.csv("norms.csv", norm_rows_csv(&records))?;
        println!("history: {} records", records.len());
        found = true;
    }
    if let Ok(f) = fs::File::open(out.path("report.json")) {
        let report = DiagnosticsReport::read_json(std::io::BufReader::new(f))?;
        write_limit_outputs(out, &report)?;
        println!("report: {} limit rows, verdict {:?}", report.limit_table.len(), report.cauchy_verdict);
        found = true;
    }
    let mut rows = Vec::new();
    if let Ok(entries) = fs::read_dir(out.path("checkpoints")) {
        let mut names: Vec<String> = entries.filter_map(|e| e.ok()?.file_name().into_string().ok()).collect();
        names.sort();
        for name in names {
            let Some((k, node)) = parse_checkpoint(&name) else { continue };
            let f = fs::File::open(out.path("checkpoints").join(&name))?;
            let v = VectorField::read_fld1(std::io::BufReader::new(f))?;
            let g = v.grid();
            rows.push(vec![k as f64, node as f64, g.n as f64, g.half_width, v.sup()]);
        }
    }
    if !rows.is_empty() {
        println!("checkpoints: {} fields", rows.len());
        out.csv("checkpoints.csv", (vec!["k", "node", "grid_n", "half_width", "sup"], rows))?;
        found = true;
    }
    if !found {
        return Err(Error::InvalidConfig(format!("nothing to report in {}", out.dir().display())));
    }
    Ok(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_names_parse_back() {
        let name = checkpoint_name(3, 17);
        let file = name.strip_prefix("checkpoints/").unwrap();
        assert_eq!(parse_checkpoint(file), Some((3, 17)));
        assert_eq!(parse_checkpoint("notes.txt"), None);
    }
}
