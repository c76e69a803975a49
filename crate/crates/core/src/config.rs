//! Plain `key=value` run configuration.
//!
//! Unknown keys and duplicate keys are errors. Every violated constraint
//! is reported, each message naming its key. [`RunConfig::echo`] writes
//! every key in canonical order and parses back to the same config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::constitutive::{BoundaryMode, SimParams};
use crate::error::{Error, Result};
use crate::friction::load_g_table;
use crate::geometry::{ChannelDomain, GalerkinSpace, VelocityCoeffs, WallField};
use crate::integrator::{IntegrationMode, Simulation, State};
use crate::noise::{NoiseFamily, NoiseModel, WienerPath};

pub const CONFIG_VERSION: u32 = 1;

/// Recognized keys in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "lx",
    "nx",
    "ny",
    "m",
    "gamma",
    "a",
    "mu",
    "lambda",
    "delta",
    "Gamma",
    "epsilon",
    "alpha",
    "R",
    "h",
    "T",
    "boundary_mode",
    "friction_g",
    "friction_table_bottom",
    "friction_table_top",
    "noise_family",
    "noise_modes",
    "noise_g0",
    "noise_c1",
    "noise_c2",
    "rho0_mean",
    "rho0_amp",
    "u0_amp",
    "forcing_x",
    "forcing_x_cos",
    "integration",
    "coupled_levels",
    "cfl",
    "min_substeps",
    "snapshots",
    "checks",
];

/// Check suites understood by `run` and `check`.
pub const CHECK_SUITES: &[&str] = &["energy", "mass", "friction", "weakforms", "ops"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationChoice {
    Iterated,
    Coupled,
}

impl IntegrationChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            IntegrationChoice::Iterated => "iterated",
            IntegrationChoice::Coupled => "coupled",
        }
    }
}

impl FromStr for IntegrationChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iterated" => Ok(Self::Iterated),
            "coupled" => Ok(Self::Coupled),
            _ => Err(format!("expected iterated or coupled, got {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lx: f64,
    pub nx: usize,
    pub ny: usize,
    pub params: SimParams,
    pub horizon: f64,
    pub friction_g: f64,
    pub friction_table_bottom: Option<PathBuf>,
    pub friction_table_top: Option<PathBuf>,
    pub noise_family: NoiseFamily,
    pub noise_modes: usize,
    pub noise_g0: f64,
    pub noise_c1: f64,
    pub noise_c2: f64,
    pub rho0_mean: f64,
    pub rho0_amp: f64,
    pub u0_amp: f64,
    pub integration: IntegrationChoice,
    pub coupled_levels: u32,
    pub cfl: f64,
    pub min_substeps: usize,
    pub snapshots: bool,
    pub checks: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lx: 2.0,
            nx: 64,
            ny: 32,
            params: SimParams::default(),
            horizon: 1.0,
            friction_g: 1.0,
            friction_table_bottom: None,
            friction_table_top: None,
            noise_family: NoiseFamily::LinearMomentum,
            noise_modes: 8,
            noise_g0: 0.1,
            noise_c1: 0.5,
            noise_c2: 0.5,
            rho0_mean: 1.0,
            rho0_amp: 0.2,
            u0_amp: 0.2,
            integration: IntegrationChoice::Iterated,
            coupled_levels: 1,
            cfl: 0.5,
            min_substeps: 1,
            snapshots: false,
            checks: vec!["energy".into(), "mass".into()],
        }
    }
}

fn noise_family_str(f: NoiseFamily) -> &'static str {
    match f {
        NoiseFamily::LinearMomentum => "linear-momentum",
        NoiseFamily::DensityOnly => "density-only",
        NoiseFamily::Off => "off",
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str, errs: &mut Vec<String>) -> Option<T> {
    match raw.parse::<T>() {
        Ok(v) => Some(v),
        Err(_) => {
            errs.push(format!("{key}: cannot parse value '{raw}'"));
            None
        }
    }
}

fn parse_bool(key: &str, raw: &str, errs: &mut Vec<String>) -> Option<bool> {
    match raw {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => {
            errs.push(format!("{key}: expected true or false, got '{raw}'"));
            None
        }
    }
}

impl RunConfig {
    /// Parse and validate, collecting every problem.
    pub fn parse_report(text: &str) -> std::result::Result<Self, Vec<String>> {
        let mut cfg = RunConfig::default();
        let mut errs = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                errs.push(format!("line {}: expected key=value, got '{line}'", ln + 1));
                continue;
            };
            let (key, raw) = (key.trim(), raw.trim());
            if !CONFIG_KEYS.contains(&key) {
                errs.push(format!("{key}: unknown key (line {})", ln + 1));
                continue;
            }
            if seen.iter().any(|k| k == key) {
                errs.push(format!("{key}: duplicate key (line {})", ln + 1));
                continue;
            }
            seen.push(key.to_string());
            cfg.set(key, raw, &mut errs);
        }
        errs.extend(cfg.violations());
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs)
        }
    }

    /// Parse and validate; all violations are joined into one error.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_report(text).map_err(|e| Error::Config(e.join("; ")))
    }

    /// Read a config file; friction table paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for t in [&mut cfg.friction_table_bottom, &mut cfg.friction_table_top].into_iter().flatten() {
            if t.is_relative() {
                *t = base.join(&*t);
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, raw: &str, errs: &mut Vec<String>) {
        let p = &mut self.params;
        macro_rules! num {
            ($field:expr) => {
                if let Some(v) = parse_value(key, raw, errs) {
                    $field = v;
                }
            };
        }
        match key {
            "lx" => num!(self.lx),
            "nx" => num!(self.nx),
            "ny" => num!(self.ny),
            "m" => num!(p.m),
            "gamma" => num!(p.gamma),
            "a" => num!(p.a),
            "mu" => num!(p.mu),
            "lambda" => num!(p.lambda),
            "delta" => num!(p.delta),
            "Gamma" => num!(p.big_gamma),
            "epsilon" => num!(p.epsilon),
            "alpha" => num!(p.alpha),
            "R" => num!(p.r_cut),
            "h" => num!(p.h),
            "T" => num!(self.horizon),
            "boundary_mode" => match raw.parse::<BoundaryMode>() {
                Ok(v) => p.boundary_mode = v,
                Err(_) => errs.push(format!("{key}: expected friction or navier, got '{raw}'")),
            },
            "friction_g" => num!(self.friction_g),
            "friction_table_bottom" => {
                self.friction_table_bottom = (!raw.is_empty() && raw != "none").then(|| PathBuf::from(raw))
            }
            "friction_table_top" => {
                self.friction_table_top = (!raw.is_empty() && raw != "none").then(|| PathBuf::from(raw))
            }
            "noise_family" => match raw.parse::<NoiseFamily>() {
                Ok(v) => self.noise_family = v,
                Err(_) => errs.push(format!(
                    "{key}: expected linear-momentum, density-only or off, got '{raw}'"
                )),
            },
            "noise_modes" => num!(self.noise_modes),
            "noise_g0" => num!(self.noise_g0),
            "noise_c1" => num!(self.noise_c1),
            "noise_c2" => num!(self.noise_c2),
            "rho0_mean" => num!(self.rho0_mean),
            "rho0_amp" => num!(self.rho0_amp),
            "u0_amp" => num!(self.u0_amp),
            "forcing_x" => num!(p.forcing_x),
            "forcing_x_cos" => num!(p.forcing_x_cos),
            "integration" => match raw.parse::<IntegrationChoice>() {
                Ok(v) => self.integration = v,
                Err(e) => errs.push(format!("{key}: {e}")),
            },
            "coupled_levels" => num!(self.coupled_levels),
            "cfl" => num!(self.cfl),
            "min_substeps" => num!(self.min_substeps),
            "snapshots" => {
                if let Some(v) = parse_bool(key, raw, errs) {
                    self.snapshots = v;
                }
            }
            "checks" => {
                let list: Vec<String> = raw
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty() && s != "none")
                    .collect();
                for c in &list {
                    if !CHECK_SUITES.contains(&c.as_str()) {
                        errs.push(format!("checks: unknown suite '{c}'"));
                    }
                }
                self.checks = list;
            }
            _ => unreachable!("key list checked by caller"),
        }
    }

    /// Every constraint violation, each naming its key.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.params.violations();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        check(self.lx > 0.0 && self.lx.is_finite(), format!("lx>0 required, got {}", self.lx));
        check(self.nx >= 4, format!("nx>=4 required, got {}", self.nx));
        check(self.ny >= 4, format!("ny>=4 required, got {}", self.ny));
        check(
            self.horizon > 0.0 && self.horizon.is_finite(),
            format!("T>0 required, got {}", self.horizon),
        );
        if self.horizon > 0.0 && self.params.h > 0.0 {
            let steps = (self.horizon / self.params.h).round();
            check(
                steps >= 1.0 && (steps * self.params.h - self.horizon).abs() <= 1e-9 * self.horizon,
                format!("T must be a multiple of h, got T={} h={}", self.horizon, self.params.h),
            );
        }
        check(
            self.friction_g >= 0.0 && self.friction_g.is_finite(),
            format!("friction_g>=0 required, got {}", self.friction_g),
        );
        check(
            !(self.params.boundary_mode == BoundaryMode::Friction
                && self.friction_g == 0.0
                && self.friction_table_bottom.is_none()
                && self.friction_table_top.is_none()),
            "friction_g>0 required in friction mode".into(),
        );
        check(
            self.noise_g0 >= 0.0 && self.noise_g0.is_finite(),
            format!("noise_g0>=0 required, got {}", self.noise_g0),
        );
        check(
            (0.0..=1.0).contains(&self.noise_c1)
                && (0.0..=1.0).contains(&self.noise_c2)
                && self.noise_c1 + self.noise_c2 <= 1.0,
            format!(
                "noise_c1, noise_c2 in [0,1] with noise_c1+noise_c2<=1 required, got {}, {}",
                self.noise_c1, self.noise_c2
            ),
        );
        check(
            self.noise_family == NoiseFamily::Off || self.noise_modes >= 1,
            "noise_modes>=1 required unless noise_family=off".into(),
        );
        check(
            self.rho0_mean > 0.0 && self.rho0_amp.abs() < self.rho0_mean,
            format!(
                "rho0_mean>0 and |rho0_amp|<rho0_mean required, got {}, {}",
                self.rho0_mean, self.rho0_amp
            ),
        );
        check(self.u0_amp.is_finite(), "u0_amp must be finite".into());
        check(
            self.coupled_levels <= 8,
            format!("coupled_levels<=8 required, got {}", self.coupled_levels),
        );
        check(self.cfl > 0.0, format!("cfl>0 required, got {}", self.cfl));
        check(self.min_substeps >= 1, "min_substeps>=1 required".into());
        out
    }

    /// Canonical text form listing every key.
    pub fn echo(&self) -> String {
        let p = &self.params;
        let path = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into());
        let checks = if self.checks.is_empty() {
            "none".to_string()
        } else {
            self.checks.join(",")
        };
        let values: Vec<String> = vec![
            self.lx.to_string(),
            self.nx.to_string(),
            self.ny.to_string(),
            p.m.to_string(),
            p.gamma.to_string(),
            p.a.to_string(),
            p.mu.to_string(),
            p.lambda.to_string(),
            p.delta.to_string(),
            p.big_gamma.to_string(),
            p.epsilon.to_string(),
            p.alpha.to_string(),
            p.r_cut.to_string(),
            p.h.to_string(),
            self.horizon.to_string(),
            p.boundary_mode.as_str().to_string(),
            self.friction_g.to_string(),
            path(&self.friction_table_bottom),
            path(&self.friction_table_top),
            noise_family_str(self.noise_family).to_string(),
            self.noise_modes.to_string(),
            self.noise_g0.to_string(),
            self.noise_c1.to_string(),
            self.noise_c2.to_string(),
            self.rho0_mean.to_string(),
            self.rho0_amp.to_string(),
            self.u0_amp.to_string(),
            p.forcing_x.to_string(),
            p.forcing_x_cos.to_string(),
            self.integration.as_str().to_string(),
            self.coupled_levels.to_string(),
            self.cfl.to_string(),
            self.min_substeps.to_string(),
            self.snapshots.to_string(),
            checks,
        ];
        debug_assert_eq!(values.len(), CONFIG_KEYS.len());
        let mut s = format!("# config version {CONFIG_VERSION}\n");
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Copy with one key replaced; the result is revalidated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!("{key}: unknown key")));
        }
        let mut text = String::new();
        for line in self.echo().lines() {
            match line.split_once('=') {
                Some((k, _)) if k == key => {
                    let _ = writeln!(text, "{key}={value}");
                }
                _ => {
                    text.push_str(line);
                    text.push('\n');
                }
            }
        }
        Self::parse(&text)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.params.h).round() as usize
    }

    pub fn domain(&self) -> Result<ChannelDomain> {
        ChannelDomain::new(self.lx, self.nx, self.ny)
    }

    pub fn space(&self) -> Result<GalerkinSpace> {
        GalerkinSpace::new(&self.domain()?, self.params.m, false)
    }

    pub fn noise_model(&self, space: &GalerkinSpace) -> Result<NoiseModel> {
        if self.noise_family == NoiseFamily::Off {
            return Ok(NoiseModel::off(space));
        }
        NoiseModel::new(
            space,
            self.noise_family,
            self.noise_modes,
            self.noise_g0,
            self.noise_c1,
            self.noise_c2,
            self.params.epsilon,
        )
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_family == NoiseFamily::Off || self.noise_g0 == 0.0
    }

    /// Friction modulus at the wall nodes (bottom row, then top row).
    pub fn friction_field(&self, domain: &ChannelDomain) -> Result<WallField> {
        let nx = domain.nx();
        let wall = |t: &Option<PathBuf>| -> Result<Vec<f64>> {
            match t {
                Some(p) => load_g_table(p, domain),
                None => Ok(vec![self.friction_g; nx]),
            }
        };
        let mut data = wall(&self.friction_table_bottom)?;
        data.extend(wall(&self.friction_table_top)?);
        let g = WallField { nx, data };
        if self.params.boundary_mode == BoundaryMode::Friction && g.data.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("friction_g: modulus vanishes on both walls in friction mode".into()));
        }
        Ok(g)
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let space = self.space()?;
        let noise = self.noise_model(&space)?;
        let g = self.friction_field(space.domain())?;
        let mut sim = Simulation::new(self.params.clone(), space, noise, g, self.steps())?;
        sim.cfl = self.cfl;
        sim.min_substeps = self.min_substeps;
        sim.record_snapshots = self.snapshots;
        sim.mode = match self.integration {
            IntegrationChoice::Iterated => IntegrationMode::Iterated,
            IntegrationChoice::Coupled => IntegrationMode::Coupled {
                levels: self.coupled_levels,
            },
        };
        Ok(sim)
    }

    /// `rho0 = mean + amp cos(2 pi x/Lx) cos(pi y)`, `c_j = u0_amp/(1+j)`.
    pub fn initial_state(&self, space: &GalerkinSpace) -> Result<State> {
        let dom = space.domain();
        let lx = dom.lx();
        let (mean, amp) = (self.rho0_mean, self.rho0_amp);
        let rho = dom.scalar_from_fn(|x, y| {
            mean + amp * (2.0 * std::f64::consts::PI * x / lx).cos() * (std::f64::consts::PI * y).cos()
        });
        let v = VelocityCoeffs((0..space.dim()).map(|j| self.u0_amp / (1.0 + j as f64)).collect());
        State::new(rho, v, &self.params)
    }

    pub fn wiener_path(&self, seed: u64) -> WienerPath {
        let modes = if self.noise_family == NoiseFamily::Off {
            0
        } else {
            self.noise_modes
        };
        WienerPath::new(seed, modes, self.params.h, self.steps())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_round_trips() {
        let cfg = RunConfig::parse("h=0.01\nT=0.1\n").unwrap();
        assert_eq!(cfg.nx, 64);
        assert_eq!(cfg.steps(), 10);
        let echo = cfg.echo();
        let again = RunConfig::parse(&echo).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn infinite_radius_round_trips() {
        let cfg = RunConfig::parse("R=inf\n").unwrap();
        assert!(cfg.params.r_cut.is_infinite());
        assert!(cfg.echo().contains("\nR=inf\n"));
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn violations_name_their_keys() {
        let e = RunConfig::parse_report("gamma=0.9\n").unwrap_err();
        assert!(e.iter().any(|m| m.contains("gamma>1")));
        let e = RunConfig::parse_report("gamma=2\nGamma=4\n").unwrap_err();
        assert!(e.iter().any(|m| m.contains("Gamma >= max(6, gamma)")));
        let e = RunConfig::parse_report("bogus=1\nnx=abc\nmu=-1\nh=0.3\n").unwrap_err();
        assert!(e.iter().any(|m| m.starts_with("bogus")));
        assert!(e.iter().any(|m| m.starts_with("nx")));
        assert!(e.iter().any(|m| m.starts_with("mu>0")));
        assert!(e.iter().any(|m| m.contains("multiple of h")));
        let e = RunConfig::parse_report("h=0.01\nh=0.02\n").unwrap_err();
        assert!(e[0].contains("duplicate"));
    }

    #[test]
    fn override_replaces_one_key() {
        let cfg = RunConfig::parse("T=0.1\n").unwrap();
        let o = cfg.with_override("alpha", "0.01").unwrap();
        assert_eq!(o.params.alpha, 0.01);
        assert_eq!(o.with_override("alpha", &cfg.params.alpha.to_string()).unwrap(), cfg);
        assert!(cfg.with_override("nope", "1").is_err());
        assert!(cfg.with_override("h", "0.03").is_err());
    }

    #[test]
    fn builds_simulation_and_state() {
        let cfg = RunConfig::parse("nx=16\nny=8\nm=6\nT=0.02\nnoise_modes=2\n").unwrap();
        let sim = cfg.simulation().unwrap();
        assert_eq!(sim.steps, 2);
        let st = cfg.initial_state(&sim.space).unwrap();
        assert!((st.density.rho.max() - 1.2).abs() < 0.05);
        assert_eq!(st.velocity.0[0], 0.2);
        assert_eq!(cfg.wiener_path(3).modes, 2);
    }
}
