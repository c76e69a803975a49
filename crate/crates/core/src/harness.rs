//! Ensembles, sweeps, offline checks and artifact export.
//!
//! Artifacts of `run` in the output directory:
//! `config.txt` (canonical echo), `path_NNNN.csv` (one ledger per path),
//! `summary.json` (sorted keys) and, with snapshots enabled,
//! `path_NNNN.snap.json` + `path_NNNN.snap.bin` (little-endian `f64`).
//!
//! Exit codes: 0 all checks pass, 2 a soft check failed, 3 a hard
//! invariant (mass, positivity, Ito bound) failed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map};
pub use serde_json::Value;

use crate::config::RunConfig;
use crate::density::density_envelope;
use crate::diagnostics::{
    energy_balance_residual, max_continuity_residual, max_momentum_residual, max_renormalized_residual,
};
use crate::error::{Error, Result};
use crate::friction::friction_law_residual;
use crate::geometry::{ScalarField, VelocityCoeffs};
use crate::integrator::{run_trajectory, LedgerRow, Simulation, Snapshots, State, TrajectoryRecord, LEDGER_COLUMNS};
use crate::noise::{refine_brownian_path, WienerPath};
use crate::pde_ops::{pressure_moment_diagnostic, BogovskiiSolver, SpectralField};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "SLIPNS_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOFT: i32 = 2;
pub const EXIT_HARD: i32 = 3;

/// Relative mass drift tolerated at every step.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Envelope margin tolerated at every step.
pub const ENVELOPE_TOLERANCE: f64 = -1e-8;

pub const SWEEP_PARAMS: &[&str] = &["h", "alpha", "m", "epsilon", "delta", "R", "dt_inner"];

/// Result of a command: exit status and the JSON written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
}

/// Worker count from the environment, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Seed of path `p` in an ensemble started from `seed`.
pub fn path_seed(seed: u64, p: usize) -> u64 {
    seed.wrapping_add(p as u64)
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Per-path invariant bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMetrics {
    pub completed: bool,
    pub failure: Option<(usize, String)>,
    pub steps_completed: usize,
    pub max_mass_drift: f64,
    pub min_rho: f64,
    pub envelope_margin: f64,
    pub ito_min_slack: f64,
    pub max_abs_energy_residual: f64,
    pub final_energy: f64,
    pub final_margin: f64,
    pub hard_failures: Vec<String>,
}

pub fn path_metrics(record: &TrajectoryRecord) -> PathMetrics {
    let rows = &record.rows;
    let m0 = rows.first().map(|r| r.mass).unwrap_or(f64::NAN);
    let max_mass_drift = rows.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max);
    let min_rho = rows.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min);
    let env = density_envelope(
        &rows.iter().map(|r| r.min_rho).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.max_rho).collect::<Vec<_>>(),
        &rows.iter().skip(1).map(|r| r.div_integral).collect::<Vec<_>>(),
        &vec![1.0; rows.len().saturating_sub(1)],
    );
    let ito_min_slack = rows
        .iter()
        .skip(1)
        .map(|r| r.ito_correction.min(r.ito_upper - r.ito_correction))
        .fold(f64::INFINITY, f64::min);
    let res = energy_balance_residual(record);
    let mut hard = Vec::new();
    if max_mass_drift > MASS_TOLERANCE {
        hard.push(format!("mass drift {max_mass_drift:e} exceeds {MASS_TOLERANCE:e}"));
    }
    if !(min_rho > 0.0) {
        hard.push(format!("density minimum {min_rho:e} is not positive"));
    }
    if let Some(f) = &record.failure {
        hard.push(format!("step {} failed: {}", f.step, f.error));
    }
    PathMetrics {
        completed: record.completed(),
        failure: record.failure.as_ref().map(|f| (f.step, f.error.to_string())),
        steps_completed: rows.len().saturating_sub(1),
        max_mass_drift,
        min_rho,
        envelope_margin: env.margin,
        ito_min_slack,
        max_abs_energy_residual: res.iter().map(|r| r.abs()).fold(0.0, f64::max),
        final_energy: rows.last().map(|r| r.total_energy()).unwrap_or(f64::NAN),
        final_margin: res.last().map(|r| -r).unwrap_or(f64::NAN),
        hard_failures: hard,
    }
}

/// Run `n_paths` independent paths; results are ordered by path index
/// and independent of the worker count.
pub fn run_paths(cfg: &RunConfig, seed: u64, n_paths: usize) -> Result<(Simulation, Vec<TrajectoryRecord>)> {
    let sim = cfg.simulation()?;
    let initial = cfg.initial_state(&sim.space)?;
    let echo = cfg.echo();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("{WORKERS_ENV}: cannot build worker pool: {e}")))?;
    let records = pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let s = path_seed(seed, p);
                run_trajectory(&sim, initial.clone(), &cfg.wiener_path(s), s, echo.clone())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((sim, records))
}

pub fn ledger_csv(rows: &[LedgerRow]) -> String {
    let mut s = LEDGER_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_fields().join(","));
        s.push('\n');
    }
    s
}

/// Parse a ledger written by [`ledger_csv`]. Columns not exported are NaN.
pub fn parse_ledger_csv(text: &str, path: &Path) -> Result<Vec<LedgerRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != LEDGER_COLUMNS.join(",") {
        return Err(Error::Config(format!("{}: unexpected ledger header", path.display())));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let bad = || Error::Config(format!("{}:{}: malformed ledger row", path.display(), ln + 2));
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != LEDGER_COLUMNS.len() {
            return Err(bad());
        }
        let f = |i: usize| c[i].parse::<f64>().map_err(|_| bad());
        rows.push(LedgerRow {
            step: c[0].parse().map_err(|_| bad())?,
            t: f(1)?,
            mass: f(2)?,
            kinetic_energy: f(3)?,
            potential_energy: f(4)?,
            visc_dissipation: f(5)?,
            eps_grad_u_dissipation: f(6)?,
            eps_pressure_dissipation: f(7)?,
            boundary_dissipation: f(8)?,
            ito_correction: f(9)?,
            martingale_increment: f(10)?,
            energy_residual: f(11)?,
            min_rho: f(12)?,
            max_rho: f(13)?,
            u_norm_vm: f(14)?,
            chi_value: f(15)?,
            cfl_substeps: c[16].parse().map_err(|_| bad())?,
            forcing_work: f64::NAN,
            ito_upper: f64::NAN,
            div_integral: f64::NAN,
        });
    }
    Ok(rows)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn path_name(p: usize) -> String {
    format!("path_{p:04}")
}

/// Header plus flat binary layout of a snapshot series.
pub fn write_snapshots(dir: &Path, stem: &str, sim: &Simulation, snaps: &Snapshots) -> Result<()> {
    let dom = sim.space.domain();
    let sub = snaps.increments.first().map(|s| s.len()).unwrap_or(0);
    let times: Vec<f64> = (0..snaps.rho.len()).map(|n| n as f64 * sim.params.h).collect();
    let header = json!({
        "dtype": "f64-le",
        "layout": ["rho[levels][ny][nx]", "coeffs[levels][m]", "chi[levels-1]", "increments[levels-1][substeps][modes]"],
        "nx": dom.nx(),
        "ny": dom.ny(),
        "lx": dom.lx(),
        "dx": dom.dx(),
        "dy": dom.dy(),
        "m": sim.space.dim(),
        "levels": snaps.rho.len(),
        "substeps": sub,
        "modes": sim.noise.modes(),
        "time": times,
    });
    let mut bin = Vec::new();
    let mut push = |v: f64| bin.extend_from_slice(&v.to_le_bytes());
    snaps.rho.iter().flatten().for_each(|v| push(*v));
    snaps.coeffs.iter().flatten().for_each(|v| push(*v));
    snaps.chi.iter().for_each(|v| push(*v));
    snaps.increments.iter().flatten().flatten().for_each(|v| push(*v));
    write(
        &dir.join(format!("{stem}.snap.json")),
        (serde_json::to_string_pretty(&header).expect("json") + "\n").as_bytes(),
    )?;
    write(&dir.join(format!("{stem}.snap.bin")), &bin)
}

pub fn read_snapshots(dir: &Path, stem: &str) -> Result<Snapshots> {
    let hp = dir.join(format!("{stem}.snap.json"));
    let bp = dir.join(format!("{stem}.snap.bin"));
    let header: Value = serde_json::from_str(&fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?)
        .map_err(|e| Error::Config(format!("{}: {e}", hp.display())))?;
    let get = |k: &str| {
        header[k]
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::Config(format!("{}: missing {k}", hp.display())))
    };
    let (nx, ny, m, levels, sub, modes) = (get("nx")?, get("ny")?, get("m")?, get("levels")?, get("substeps")?, get("modes")?);
    let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let steps = levels.saturating_sub(1);
    let want = levels * nx * ny + levels * m + steps + steps * sub * modes;
    if bytes.len() != 8 * want {
        return Err(Error::Shape(format!("{}: expected {} values", bp.display(), want)));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut it = vals.into_iter();
    let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
    let rho = (0..levels).map(|_| take(nx * ny)).collect();
    let coeffs = (0..levels).map(|_| take(m)).collect();
    let chi = take(steps);
    let increments = (0..steps)
        .map(|_| (0..sub).map(|_| take(modes)).collect())
        .collect();
    Ok(Snapshots { rho, coeffs, increments, chi })
}

fn metrics_json(m: &PathMetrics, seed: u64, rec: &TrajectoryRecord) -> Value {
    json!({
        "seed": seed,
        "completed": m.completed,
        "failure": m.failure.as_ref().map(|(s, e)| json!({"step": s, "error": e})),
        "steps_completed": m.steps_completed,
        "max_mass_drift": finite(m.max_mass_drift),
        "min_rho": finite(m.min_rho),
        "envelope_margin": finite(m.envelope_margin),
        "ito_min_slack": finite(m.ito_min_slack),
        "max_abs_energy_residual": finite(m.max_abs_energy_residual),
        "final_energy": finite(m.final_energy),
        "final_energy_margin": finite(m.final_margin),
        "final_coeffs": rec.final_state.velocity.0.iter().map(|v| finite(*v)).collect::<Vec<_>>(),
        "hard_failures": m.hard_failures,
    })
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Energy-inequality statistic over an ensemble of terminal margins:
/// `(mean, stderr, mean >= -3 stderr)`. Fewer than two paths carry no
/// spread information and are not judged.
pub fn margin_statistic(margins: &[f64]) -> (f64, f64, bool) {
    let (mean, se) = mean_stderr(margins);
    (mean, se, margins.len() < 2 || mean >= -3.0 * se)
}

/// Run the configured checks on finished records; returns JSON and
/// whether any soft check failed.
fn suite_checks(cfg: &RunConfig, sim: &Simulation, records: &[TrajectoryRecord]) -> Result<(Value, bool)> {
    let mut out = Map::new();
    let mut soft_fail = false;
    for suite in &cfg.checks {
        let v = match suite.as_str() {
            "energy" => {
                let margins: Vec<f64> =
                    records.iter().filter(|r| r.completed()).map(|r| path_metrics(r).final_margin).collect();
                let (mean, se, ok) = margin_statistic(&margins);
                let envelope_ok = records.iter().all(|r| path_metrics(r).envelope_margin >= ENVELOPE_TOLERANCE);
                soft_fail |= !ok || !envelope_ok;
                json!({"margin_mean": finite(mean), "margin_stderr": finite(se), "inequality_holds": ok, "envelope_holds": envelope_ok})
            }
            "mass" => {
                let worst = records.iter().map(|r| path_metrics(r).max_mass_drift).fold(0.0, f64::max);
                json!({"max_relative_drift": finite(worst), "tolerance": MASS_TOLERANCE})
            }
            "friction" => {
                let mut r1s = Vec::new();
                let mut r2s = Vec::new();
                for r in records {
                    let (r1, r2) = friction_law_residual(&sim.space, &r.final_state.velocity, &sim.params, &sim.g)?;
                    r1s.push(finite(r1));
                    r2s.push(finite(r2));
                }
                json!({"r1": r1s, "r2": r2s})
            }
            "weakforms" => {
                if !cfg.snapshots {
                    return Err(Error::Config("checks: weakforms requires snapshots=true".into()));
                }
                let mut rows = Vec::new();
                for r in records.iter().filter(|r| r.completed()) {
                    rows.push(json!({
                        "continuity": finite(max_continuity_residual(sim, r)?),
                        "momentum": finite(max_momentum_residual(sim, r)?),
                        "renormalized": finite(max_renormalized_residual(sim, r)?),
                    }));
                }
                json!({"catalogue_version": crate::diagnostics::CATALOGUE_VERSION, "paths": rows})
            }
            "ops" => {
                let (v, ok) = operator_checks(sim, records, cfg.snapshots)?;
                soft_fail |= !ok;
                v
            }
            other => return Err(Error::Config(format!("checks: unknown suite '{other}'"))),
        };
        out.insert(suite.clone(), v);
    }
    Ok((Value::Object(out), soft_fail))
}

/// Operator identities on random fields plus, when snapshots exist, the
/// pressure-moment decomposition of each completed path.
pub fn operator_checks(sim: &Simulation, records: &[TrajectoryRecord], snapshots: bool) -> Result<(Value, bool)> {
    let dom = sim.space.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut riesz_err: f64 = 0.0;
    for _ in 0..10 {
        let n = [2 * (dom.nx() / 2) + 1, 2 * (dom.ny() / 2) + 1];
        let f = SpectralField::new(n, [dom.lx(), 1.0], (0..n[0] * n[1]).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let a = f.riesz(0, 0)?;
        let b = f.riesz(1, 1)?;
        let m = f.mean();
        for ((x, y), v) in a.values.iter().zip(&b.values).zip(&f.values) {
            riesz_err = riesz_err.max((x + y - (v - m)).abs());
        }
    }
    let solver = BogovskiiSolver::new(dom)?;
    let mut div_res: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for _ in 0..5 {
        let f = ScalarField {
            nx: dom.nx(),
            ny: dom.ny(),
            data: (0..dom.cells()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let s = solver.solve(&f, 2.0)?;
        div_res = div_res.max(s.div_residual);
        trace = trace.max(s.wall_trace);
    }
    let ok = riesz_err <= 1e-10 && div_res <= 1e-8 && trace <= 1e-10;
    let mut moments = Vec::new();
    if snapshots {
        for r in records.iter().filter(|r| r.completed()) {
            let rep = pressure_moment_diagnostic(sim, r, 0.25)?;
            moments.push(serde_json::to_value(rep).expect("serializable"));
        }
    }
    Ok((
        json!({
            "riesz_trace_identity_error": finite(riesz_err),
            "bogovskii_div_residual": finite(div_res),
            "bogovskii_wall_trace": finite(trace),
            "identities_hold": ok,
            "pressure_moments": moments,
        }),
        ok,
    ))
}

/// Pretty JSON with sorted keys.
pub fn to_pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values are always serializable")
}

fn write_summary(out: &Path, name: &str, v: &Value) -> Result<()> {
    write(&out.join(name), (to_pretty(v) + "\n").as_bytes())
}

/// `run`: ensemble of paths with per-path ledgers and one summary.
pub fn run_command(cfg: &RunConfig, seed: u64, n_paths: usize, out: &Path) -> Result<Outcome> {
    if n_paths == 0 {
        return Err(Error::Config("paths: at least one path required".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (sim, records) = run_paths(cfg, seed, n_paths)?;
    write(&out.join("config.txt"), cfg.echo().as_bytes())?;
    let mut paths = Vec::new();
    let mut hard = false;
    for (p, rec) in records.iter().enumerate() {
        let stem = path_name(p);
        write(&out.join(format!("{stem}.csv")), ledger_csv(&rec.rows).as_bytes())?;
        if let Some(s) = &rec.snapshots {
            write_snapshots(out, &stem, &sim, s)?;
        }
        let m = path_metrics(rec);
        hard |= !m.hard_failures.is_empty();
        paths.push(metrics_json(&m, rec.seed, rec));
    }
    let (checks, soft) = if hard {
        (Value::Object(Map::new()), false)
    } else {
        suite_checks(cfg, &sim, &records)?
    };
    let exit_code = if hard {
        EXIT_HARD
    } else if soft {
        EXIT_SOFT
    } else {
        EXIT_OK
    };
    let deterministic = cfg.is_deterministic();
    let summary = json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "command": "run",
        "seed": seed,
        "n_paths": n_paths,
        "steps": sim.steps,
        "deterministic": deterministic,
        "config": cfg.echo(),
        "paths": paths,
        "checks": checks,
        "hard_failure": hard,
        "exit_code": exit_code,
    });
    write_summary(out, "summary.json", &summary)?;
    Ok(Outcome {
        exit_code,
        report: summary,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Paths for an `h` sweep: one coarse realization refined dyadically.
pub fn shared_paths(cfg: &RunConfig, seed: u64, hs: &[f64]) -> Result<Vec<WienerPath>> {
    let hmax = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let base_cfg = cfg.with_override("h", &hmax.to_string())?;
    let base = base_cfg.wiener_path(seed);
    hs.iter()
        .map(|h| {
            let r = hmax / h;
            let level = r.log2().round();
            if level < 0.0 || ((2f64).powf(level) - r).abs() > 1e-9 * r {
                return Err(Error::Config(format!("values: h={h} is not a dyadic refinement of {hmax}")));
            }
            Ok(refine_brownian_path(&base, level as u32))
        })
        .collect()
}

/// `sweep`: one path per value; cross-value comparison depends on the parameter.
pub fn sweep_command(cfg: &RunConfig, param: &str, values: &[String], seed: u64, out: &Path) -> Result<Outcome> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Error::Config(format!(
            "param: unknown sweep parameter '{param}', expected one of {}",
            SWEEP_PARAMS.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(Error::Config("values: empty list".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut cfgs = Vec::new();
    for v in values {
        let c = if param == "dt_inner" {
            let dt: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("values: cannot parse '{v}'")))?;
            if !(dt > 0.0) {
                return Err(Error::Config(format!("values: dt_inner>0 required, got {v}")));
            }
            cfg.with_override("min_substeps", &((cfg.params.h / dt).ceil().max(1.0) as usize).to_string())?
        } else {
            cfg.with_override(param, v)?
        };
        cfgs.push(c);
    }
    let paths = if param == "h" {
        shared_paths(cfg, seed, &cfgs.iter().map(|c| c.params.h).collect::<Vec<_>>())?
    } else {
        cfgs.iter().map(|c| c.wiener_path(seed)).collect()
    };
    let results: Vec<(Simulation, TrajectoryRecord)> = {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .map_err(|e| Error::Config(format!("{WORKERS_ENV}: {e}")))?;
        pool.install(|| {
            cfgs.par_iter()
                .zip(paths.par_iter())
                .map(|(c, path)| {
                    let sim = c.simulation()?;
                    let init = c.initial_state(&sim.space)?;
                    let rec = run_trajectory(&sim, init, path, seed, c.echo())?;
                    Ok((sim, rec))
                })
                .collect::<Result<Vec<_>>>()
        })?
    };
    let mut entries = Vec::new();
    let mut hard = false;
    for (i, ((sim, rec), v)) in results.iter().zip(values).enumerate() {
        write(&out.join(format!("value_{i:02}.csv")), ledger_csv(&rec.rows).as_bytes())?;
        let m = path_metrics(rec);
        hard |= !m.hard_failures.is_empty();
        let (r1, r2) = friction_law_residual(&sim.space, &rec.final_state.velocity, &sim.params, &sim.g)?;
        let mut e = metrics_json(&m, rec.seed, rec);
        e["value"] = json!(v);
        e["friction_r1"] = finite(r1);
        e["friction_r2"] = finite(r2);
        entries.push(e);
    }
    let mut comparison = Map::new();
    let mut soft = false;
    match param {
        "h" => {
            let hs: Vec<f64> = cfgs.iter().map(|c| c.params.h).collect();
            let res: Vec<f64> = results.iter().map(|(_, r)| path_metrics(r).max_abs_energy_residual).collect();
            let slope = loglog_slope(&hs, &res);
            let target = if cfg.is_deterministic() { 0.8 } else { 0.35 };
            let ok = slope >= target;
            soft |= !ok;
            comparison.insert("energy_residual_order".into(), finite(slope));
            comparison.insert("order_target".into(), json!(target));
            comparison.insert("order_passes".into(), json!(ok));
        }
        "alpha" => {
            let mut pairs: Vec<(f64, f64)> = cfgs
                .iter()
                .zip(&entries)
                .map(|(c, e)| (c.params.alpha, e["friction_r2"].as_f64().unwrap_or(f64::NAN)))
                .collect();
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            let monotone = pairs.windows(2).all(|w| w[1].1 <= w[0].1);
            comparison.insert(
                "r2_by_decreasing_alpha".into(),
                json!(pairs.iter().map(|(a, r)| json!([a, finite(*r)])).collect::<Vec<_>>()),
            );
            comparison.insert("r2_monotone".into(), json!(monotone));
            soft |= !monotone;
        }
        "m" => {
            let coeffs: Vec<&Vec<f64>> = results.iter().map(|(_, r)| &r.final_state.velocity.0).collect();
            let mut table = Vec::new();
            for i in 0..coeffs.len() {
                for j in i + 1..coeffs.len() {
                    let k = coeffs[i].len().min(coeffs[j].len());
                    let d = (0..k).map(|q| (coeffs[i][q] - coeffs[j][q]).powi(2)).sum::<f64>().sqrt();
                    table.push(json!({"a": values[i], "b": values[j], "prefix_len": k, "prefix_distance": finite(d)}));
                }
            }
            comparison.insert("coefficient_prefix".into(), json!(table));
        }
        _ => {}
    }
    let exit_code = if hard {
        EXIT_HARD
    } else if soft {
        EXIT_SOFT
    } else {
        EXIT_OK
    };
    let report = json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "command": "sweep",
        "param": param,
        "seed": seed,
        "deterministic": cfg.is_deterministic(),
        "config": cfg.echo(),
        "values": entries,
        "comparison": Value::Object(comparison),
        "exit_code": exit_code,
    });
    write_summary(out, "sweep.json", &report)?;
    Ok(Outcome { exit_code, report })
}

fn ledger_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let n = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            n.starts_with("path_") && n.ends_with(".csv")
        })
        .collect();
    v.sort();
    if v.is_empty() {
        return Err(Error::Config(format!("{}: no path_*.csv ledgers found", dir.display())));
    }
    Ok(v)
}

/// `check`: re-evaluate one suite from the artifacts of a `run`.
pub fn check_command(record_dir: &Path, suite: &str) -> Result<Outcome> {
    if !crate::config::CHECK_SUITES.contains(&suite) {
        return Err(Error::Config(format!("suite: unknown suite '{suite}'")));
    }
    let cfg_path = record_dir.join("config.txt");
    let cfg = RunConfig::parse(&fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?)?;
    let sim = cfg.simulation()?;
    let files = ledger_files(record_dir)?;
    let mut ledgers = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        ledgers.push(parse_ledger_csv(&text, f)?);
    }
    let summary_path = record_dir.join("summary.json");
    let summary: Option<Value> = fs::read_to_string(&summary_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let forcing = sim.params.has_forcing();
    let mut exit_code = EXIT_OK;
    let result = match suite {
        "mass" => {
            let mut worst: f64 = 0.0;
            let mut min_rho = f64::INFINITY;
            for rows in &ledgers {
                let m0 = rows.first().map(|r| r.mass).unwrap_or(f64::NAN);
                for r in rows {
                    worst = worst.max(((r.mass - m0) / m0).abs());
                    min_rho = min_rho.min(r.min_rho);
                }
            }
            if worst > MASS_TOLERANCE || !(min_rho > 0.0) {
                exit_code = EXIT_HARD;
            }
            json!({"max_relative_drift": finite(worst), "min_rho": finite(min_rho)})
        }
        "energy" => {
            let mut worst_mismatch: f64 = 0.0;
            let mut margins = Vec::new();
            let mut ito_negative = false;
            for rows in &ledgers {
                let e0 = rows.first().map(|r| r.total_energy()).unwrap_or(0.0);
                let mut acc = 0.0;
                for r in rows {
                    acc += r.dissipation() - r.ito_correction - r.martingale_increment;
                    ito_negative |= r.ito_correction < -1e-12;
                    if !forcing {
                        let recomputed = r.total_energy() - e0 + acc;
                        let scale = 1.0 + r.total_energy().abs();
                        worst_mismatch = worst_mismatch.max((recomputed - r.energy_residual).abs() / scale);
                    }
                }
                if let Some(last) = rows.last() {
                    margins.push(-last.energy_residual);
                }
            }
            let (mean, se, ok) = margin_statistic(&margins);
            if worst_mismatch > 1e-9 || ito_negative {
                exit_code = EXIT_HARD;
            } else if !ok {
                exit_code = EXIT_SOFT;
            }
            json!({
                "ledger_recompute_mismatch": finite(worst_mismatch),
                "recomputed": !forcing,
                "ito_nonnegative": !ito_negative,
                "margin_mean": finite(mean),
                "margin_stderr": finite(se),
                "inequality_holds": ok,
            })
        }
        "friction" => {
            let s = summary
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{}: summary required for friction check", summary_path.display())))?;
            let mut r = Vec::new();
            for p in s["paths"].as_array().cloned().unwrap_or_default() {
                let c: Vec<f64> = p["final_coeffs"]
                    .as_array()
                    .map(|a| a.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
                    .unwrap_or_default();
                let (r1, r2) = friction_law_residual(&sim.space, &VelocityCoeffs(c), &sim.params, &sim.g)?;
                r.push(json!({"r1": finite(r1), "r2": finite(r2)}));
            }
            json!({"paths": r})
        }
        "weakforms" | "ops" => {
            let mut records = Vec::new();
            for (p, rows) in ledgers.iter().enumerate() {
                let snaps = read_snapshots(record_dir, &path_name(p))?;
                let last = snaps.rho.len() - 1;
                let final_state = State::new(
                    ScalarField {
                        nx: cfg.nx,
                        ny: cfg.ny,
                        data: snaps.rho[last].clone(),
                    },
                    VelocityCoeffs(snaps.coeffs[last].clone()),
                    &sim.params,
                )?;
                records.push(TrajectoryRecord {
                    seed: 0,
                    config_echo: cfg.echo(),
                    rows: rows.clone(),
                    snapshots: Some(snaps),
                    failure: None,
                    final_state,
                });
            }
            if suite == "ops" {
                let (v, ok) = operator_checks(&sim, &records, true)?;
                if !ok {
                    exit_code = EXIT_HARD;
                }
                v
            } else {
                let mut rows = Vec::new();
                for r in &records {
                    rows.push(json!({
                        "continuity": finite(max_continuity_residual(&sim, r)?),
                        "momentum": finite(max_momentum_residual(&sim, r)?),
                        "renormalized": finite(max_renormalized_residual(&sim, r)?),
                    }));
                }
                json!({"catalogue_version": crate::diagnostics::CATALOGUE_VERSION, "paths": rows})
            }
        }
        _ => unreachable!("suite checked above"),
    };
    let report = json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "command": "check",
        "suite": suite,
        "ledgers": files.len(),
        "result": result,
        "exit_code": exit_code,
    });
    Ok(Outcome { exit_code, report })
}
