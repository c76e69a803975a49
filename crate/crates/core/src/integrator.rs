//! Time stepping: freeze the velocity over an outer step, transport the
//! density with inner substeps, and update the momentum functional.
//!
//! The ledger columns are step integrals chosen so that the discrete energy
//! identity closes up to the quadratic-variation defect
//! `1/2 d.M[rho_{n+1}]d - h c(rho_n, u_n)`, with `d = u_{n+1} - u_n`.

use crate::constitutive::{drift_with_frame, DualVector, MassOperator, SimParams, VelocityFrame};
use crate::density::{
    cell_divergence, inner_step, outflow_rate, substeps_for, DensityState, HeatSemigroup,
};
use crate::error::{Error, Result};
use crate::geometry::{GalerkinSpace, ScalarField, VelocityCoeffs, WallField};
use crate::noise::{noise_frame, NoiseModel, WienerPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    /// Velocity frozen over each outer step `h`.
    Iterated,
    /// `2^levels` frozen steps per outer step on the refined noise path.
    Coupled { levels: u32 },
}

/// Everything needed to advance a state; immutable during a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: SimParams,
    pub space: GalerkinSpace,
    pub heat: HeatSemigroup,
    pub noise: NoiseModel,
    pub g: WallField,
    pub cfl: f64,
    pub min_substeps: usize,
    pub mode: IntegrationMode,
    pub steps: usize,
    pub record_snapshots: bool,
}

impl Simulation {
    pub fn new(
        params: SimParams,
        space: GalerkinSpace,
        noise: NoiseModel,
        g: WallField,
        steps: usize,
    ) -> Result<Self> {
        params.validate()?;
        let heat = HeatSemigroup::new(space.domain());
        Ok(Self {
            params,
            space,
            heat,
            noise,
            g,
            cfl: 0.5,
            min_substeps: 1,
            mode: IntegrationMode::Iterated,
            steps,
            record_snapshots: false,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.steps as f64 * self.params.h
    }
}

/// Solution pair at a time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub density: DensityState,
    pub velocity: VelocityCoeffs,
    pub time: f64,
    pub step: usize,
    pub cutoff_active: bool,
    pub chi: f64,
}

impl State {
    pub fn new(rho: ScalarField, velocity: VelocityCoeffs, params: &SimParams) -> Result<Self> {
        if !velocity.0.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("initial velocity".into()));
        }
        let (_, chi) = crate::constitutive::cutoff_velocity(&velocity, params.r_cut);
        Ok(Self {
            density: DensityState::new(rho, 0.0)?,
            velocity,
            time: 0.0,
            step: 0,
            cutoff_active: chi < 1.0,
            chi,
        })
    }

    pub fn momentum(&self, space: &GalerkinSpace) -> Result<DualVector> {
        MassOperator::new(space, &self.density.rho)?.apply(&self.velocity)
    }
}

/// Step integrals produced by one outer step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub visc: f64,
    pub eps_grad: f64,
    pub eps_pressure: f64,
    pub boundary: f64,
    pub ito: f64,
    pub ito_upper: f64,
    pub martingale: f64,
    pub forcing_work: f64,
    pub substeps: usize,
    pub chi: f64,
    /// `sum dt * ||div [u]_R||_inf` over the step (cell-average divergence).
    pub div_integral: f64,
    /// Increments used, `K` per frozen sub-interval.
    pub increments: Vec<Vec<f64>>,
}

impl StepReport {
    fn absorb(&mut self, o: StepReport) {
        self.visc += o.visc;
        self.eps_grad += o.eps_grad;
        self.eps_pressure += o.eps_pressure;
        self.boundary += o.boundary;
        self.ito += o.ito;
        self.ito_upper += o.ito_upper;
        self.martingale += o.martingale;
        self.forcing_work += o.forcing_work;
        self.substeps += o.substeps;
        self.chi = self.chi.min(o.chi);
        self.div_integral += o.div_integral;
        self.increments.extend(o.increments);
    }
}

/// One frozen-velocity step of length `h` with increments `dw`.
fn frozen_step(sim: &Simulation, state: &State, h: f64, dw: &[f64]) -> Result<(State, StepReport)> {
    let space = &sim.space;
    let dom = space.domain();
    let area = dom.cell_area();
    let params = &sim.params;
    let u = &state.velocity;
    let rho0 = &state.density.rho;
    let frame = VelocityFrame::new(space, u, params)?;
    let mass0 = MassOperator::new(space, rho0)?;
    let mut q = mass0.apply(u)?;

    let mut report = StepReport {
        chi: frame.chi,
        ..StepReport::default()
    };
    if !sim.noise.is_off() {
        let nf = noise_frame(space, rho0, &frame.cell, &sim.noise, &mass0)?;
        let slack = 1e-12 * nf.upper.max(1.0);
        if nf.correction < -slack || nf.correction > nf.upper + slack {
            return Err(Error::Invariant(format!(
                "Ito sandwich violated: c={:e}, upper={:e}",
                nf.correction, nf.upper
            )));
        }
        report.ito = h * nf.correction;
        report.ito_upper = h * nf.upper;
        for (d, w) in nf.duals.iter().zip(dw) {
            q.axpy(*w, d);
            report.martingale += w * d.pair(u);
        }
    }
    report.increments.push(dw.to_vec());

    let rate = outflow_rate(dom, &frame.faces, frame.chi);
    let n_sub = substeps_for(h, rate, sim.cfl, sim.min_substeps);
    let dt = h / n_sub as f64;
    report.substeps = n_sub;
    let div = cell_divergence(dom, &frame.faces);
    let div_sup = div.iter().fold(0.0f64, |a, d| a.max(d.abs())) * frame.chi;
    report.div_integral = h * div_sup;

    let speed2: Vec<f64> = frame
        .cell
        .x
        .iter()
        .zip(&frame.cell.y)
        .map(|(a, b)| a * a + b * b)
        .collect();
    let potential_sum = |r: &ScalarField| r.data.iter().map(|&x| params.potential(x)).sum::<f64>() * area;

    let mut rho = rho0.clone();
    for _ in 0..n_sub {
        let terms = drift_with_frame(space, &frame, &rho, params, &sim.g)?;
        q.axpy(dt, &terms.total());
        let pres_pair = terms.pressure.pair(u);
        let eps_pair = terms.eps.pair(u);
        report.visc += dt * frame.visc_dissipation();
        report.boundary += dt * terms.boundary_dissipation;
        report.forcing_work += dt * terms.forcing.pair(u);
        let p_before = potential_sum(&rho);
        let step = inner_step(&rho, &frame.faces, frame.chi, dom, &sim.heat, params.epsilon, dt, sim.cfl)?;
        let diff_ke: f64 = step
            .rho
            .data
            .iter()
            .zip(&step.advected.data)
            .zip(&speed2)
            .map(|((a, b), s)| 0.5 * s * (a - b))
            .sum::<f64>()
            * area;
        report.eps_grad -= dt * eps_pair - diff_ke;
        report.eps_pressure -= dt * pres_pair + potential_sum(&step.rho) - p_before;
        rho = step.rho;
    }

    let mass1 = MassOperator::new(space, &rho)?;
    let velocity = mass1.solve(&q)?;
    let (_, chi_next) = crate::constitutive::cutoff_velocity(&velocity, params.r_cut);
    let next = State {
        density: DensityState {
            rho,
            time: state.time + h,
        },
        velocity,
        time: state.time + h,
        step: state.step + 1,
        cutoff_active: chi_next < 1.0,
        chi: chi_next,
    };
    Ok((next, report))
}

/// Advance outer step `n` using increments from `path`.
///
/// In iterated mode `path.dt()` must equal `h`; in coupled mode the path is
/// refined internally by the configured number of levels.
pub fn advance_step(sim: &Simulation, state: &State, path: &WienerPath, n: usize) -> Result<(State, StepReport)> {
    let h = sim.params.h;
    match sim.mode {
        IntegrationMode::Iterated => {
            let dw = if sim.noise.is_off() {
                vec![0.0; sim.noise.modes()]
            } else {
                path.sample_increments(n)?
            };
            frozen_step(sim, state, h, &dw)
        }
        IntegrationMode::Coupled { levels } => {
            let fine = crate::noise::refine_brownian_path(path, levels);
            let count = 1usize << levels;
            let dt = h / count as f64;
            let mut st = state.clone();
            let mut total = StepReport {
                chi: 1.0,
                ..StepReport::default()
            };
            for i in 0..count {
                let dw = if sim.noise.is_off() {
                    vec![0.0; sim.noise.modes()]
                } else {
                    fine.sample_increments(n * count + i)?
                };
                let (next, rep) = frozen_step(sim, &st, dt, &dw)?;
                total.absorb(rep);
                st = next;
            }
            st.step = state.step + 1;
            st.time = state.time + h;
            st.density.time = st.time;
            Ok((st, total))
        }
    }
}

/// One ledger row; columns after `cfl_substeps` are not exported to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
    pub visc_dissipation: f64,
    pub eps_grad_u_dissipation: f64,
    pub eps_pressure_dissipation: f64,
    pub boundary_dissipation: f64,
    pub ito_correction: f64,
    pub martingale_increment: f64,
    pub energy_residual: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub u_norm_vm: f64,
    pub chi_value: f64,
    pub cfl_substeps: usize,
    pub forcing_work: f64,
    pub ito_upper: f64,
    pub div_integral: f64,
}

pub const LEDGER_COLUMNS: [&str; 17] = [
    "step",
    "t",
    "mass",
    "kinetic_energy",
    "potential_energy",
    "visc_dissipation",
    "eps_grad_u_dissipation",
    "eps_pressure_dissipation",
    "boundary_dissipation",
    "ito_correction",
    "martingale_increment",
    "energy_residual",
    "min_rho",
    "max_rho",
    "u_norm_Vm",
    "chi_value",
    "cfl_substeps",
];

impl LedgerRow {
    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy + self.potential_energy
    }

    pub fn dissipation(&self) -> f64 {
        self.visc_dissipation
            + self.eps_grad_u_dissipation
            + self.eps_pressure_dissipation
            + self.boundary_dissipation
    }

    /// Values in [`LEDGER_COLUMNS`] order, formatted with full precision.
    pub fn csv_fields(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:e}");
        vec![
            self.step.to_string(),
            f(self.t),
            f(self.mass),
            f(self.kinetic_energy),
            f(self.potential_energy),
            f(self.visc_dissipation),
            f(self.eps_grad_u_dissipation),
            f(self.eps_pressure_dissipation),
            f(self.boundary_dissipation),
            f(self.ito_correction),
            f(self.martingale_increment),
            f(self.energy_residual),
            f(self.min_rho),
            f(self.max_rho),
            f(self.u_norm_vm),
            f(self.chi_value),
            self.cfl_substeps.to_string(),
        ]
    }
}

/// Stored fields for offline diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshots {
    pub rho: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<f64>>,
    /// Per outer step, the increments of each frozen sub-interval.
    pub increments: Vec<Vec<Vec<f64>>>,
    pub chi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub error: Error,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub config_echo: String,
    pub rows: Vec<LedgerRow>,
    pub snapshots: Option<Snapshots>,
    pub failure: Option<StepFailure>,
    pub final_state: State,
}

impl TrajectoryRecord {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn energies(space: &GalerkinSpace, params: &SimParams, state: &State) -> Result<(f64, f64)> {
    let area = space.domain().cell_area();
    let u = space.evaluate(&state.velocity)?;
    let rho = &state.density.rho;
    let ke = rho
        .data
        .iter()
        .zip(u.x.iter().zip(&u.y))
        .map(|(r, (a, b))| 0.5 * r * (a * a + b * b))
        .sum::<f64>()
        * area;
    let pe = rho.data.iter().map(|&r| params.potential(r)).sum::<f64>() * area;
    Ok((ke, pe))
}

fn row_for(
    sim: &Simulation,
    state: &State,
    report: Option<&StepReport>,
    e0: f64,
    totals: &mut [f64; 4],
) -> Result<LedgerRow> {
    let (ke, pe) = energies(&sim.space, &sim.params, state)?;
    let dom = sim.space.domain();
    let rho = &state.density.rho;
    let mut row = LedgerRow {
        step: state.step,
        t: state.time,
        mass: state.density.mass(dom),
        kinetic_energy: ke,
        potential_energy: pe,
        visc_dissipation: 0.0,
        eps_grad_u_dissipation: 0.0,
        eps_pressure_dissipation: 0.0,
        boundary_dissipation: 0.0,
        ito_correction: 0.0,
        martingale_increment: 0.0,
        energy_residual: 0.0,
        min_rho: rho.min(),
        max_rho: rho.max(),
        u_norm_vm: state.velocity.norm(),
        chi_value: state.chi,
        cfl_substeps: 0,
        forcing_work: 0.0,
        ito_upper: 0.0,
        div_integral: 0.0,
    };
    if let Some(r) = report {
        row.visc_dissipation = r.visc;
        row.eps_grad_u_dissipation = r.eps_grad;
        row.eps_pressure_dissipation = r.eps_pressure;
        row.boundary_dissipation = r.boundary;
        row.ito_correction = r.ito;
        row.ito_upper = r.ito_upper;
        row.martingale_increment = r.martingale;
        row.forcing_work = r.forcing_work;
        row.chi_value = r.chi;
        row.cfl_substeps = r.substeps;
        row.div_integral = r.div_integral;
        totals[0] += row.dissipation();
        totals[1] += r.ito;
        totals[2] += r.martingale;
        totals[3] += r.forcing_work;
    }
    row.energy_residual = row.total_energy() - e0 + totals[0] - totals[1] - totals[2] - totals[3];
    Ok(row)
}

/// Run `sim.steps` outer steps from `initial` on the noise `path`.
pub fn run_trajectory(
    sim: &Simulation,
    initial: State,
    path: &WienerPath,
    seed: u64,
    config_echo: String,
) -> Result<TrajectoryRecord> {
    if let IntegrationMode::Iterated = sim.mode {
        if !sim.noise.is_off() && (path.dt() - sim.params.h).abs() > 1e-12 * sim.params.h {
            return Err(Error::Config(format!(
                "noise path step {} does not match h={}",
                path.dt(),
                sim.params.h
            )));
        }
    }
    let mut totals = [0.0; 4];
    let (ke0, pe0) = energies(&sim.space, &sim.params, &initial)?;
    let e0 = ke0 + pe0;
    let mut rows = vec![row_for(sim, &initial, None, e0, &mut totals)?];
    let mut snaps = sim.record_snapshots.then(Snapshots::default);
    let push_snap = |s: &mut Option<Snapshots>, st: &State| {
        if let Some(s) = s.as_mut() {
            s.rho.push(st.density.rho.data.clone());
            s.coeffs.push(st.velocity.0.clone());
        }
    };
    push_snap(&mut snaps, &initial);
    let mut state = initial;
    let mut failure = None;
    for n in 0..sim.steps {
        match advance_step(sim, &state, path, n) {
            Ok((next, report)) => {
                let row = row_for(sim, &next, Some(&report), e0, &mut totals)?;
                rows.push(row);
                push_snap(&mut snaps, &next);
                if let Some(s) = snaps.as_mut() {
                    s.increments.push(report.increments.clone());
                    s.chi.push(report.chi);
                }
                state = next;
            }
            Err(error) => {
                failure = Some(StepFailure { step: n, error });
                break;
            }
        }
    }
    Ok(TrajectoryRecord {
        seed,
        config_echo,
        rows,
        snapshots: snaps,
        failure,
        final_state: state,
    })
}

/// Per-step `||u1 - u2||_{V_m} + ||rho1 - rho2||_{L1}` for a perturbed twin.
pub fn twin_run_divergence(
    sim: &Simulation,
    initial: &State,
    path: &WienerPath,
    perturbation: f64,
) -> Result<Vec<f64>> {
    if !(perturbation >= 0.0) {
        return Err(Error::Config(format!("perturbation must be >= 0, got {perturbation}")));
    }
    let m = sim.space.dim();
    let mut twin = initial.clone();
    let dir = 1.0 / (m as f64).sqrt();
    for c in twin.velocity.0.iter_mut() {
        *c += perturbation * dir;
    }
    let area = sim.space.domain().cell_area();
    let mut a = initial.clone();
    let mut b = twin;
    let dist = |a: &State, b: &State| {
        let du: f64 = a
            .velocity
            .0
            .iter()
            .zip(&b.velocity.0)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let dr: f64 = a
            .density
            .rho
            .data
            .iter()
            .zip(&b.density.rho.data)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * area;
        du + dr
    };
    let mut curve = vec![dist(&a, &b)];
    for n in 0..sim.steps {
        a = advance_step(sim, &a, path, n)?.0;
        b = advance_step(sim, &b, path, n)?.0;
        curve.push(dist(&a, &b));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChannelDomain;
    use crate::noise::NoiseFamily;
    use std::f64::consts::PI;

    fn sim(noise: bool, steps: usize) -> (Simulation, State) {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let space = GalerkinSpace::new(&d, 12, false).unwrap();
        let params = SimParams {
            h: 0.01,
            m: 12,
            ..SimParams::default()
        };
        let model = if noise {
            NoiseModel::new(&space, NoiseFamily::LinearMomentum, 4, 0.5, 0.5, 0.5, params.epsilon).unwrap()
        } else {
            NoiseModel::off(&space)
        };
        let g = WallField::constant(16, 1.0);
        let s = Simulation::new(params.clone(), space, model, g, steps).unwrap();
        let rho = d.scalar_from_fn(|x, y| 1.0 + 0.2 * (PI * x).cos() * (PI * y).cos());
        let v = VelocityCoeffs((0..12).map(|j| 0.3 / (1.0 + j as f64)).collect());
        let st = State::new(rho, v, &params).unwrap();
        (s, st)
    }

    #[test]
    fn rest_is_fixed_point() {
        let (s, _) = sim(false, 5);
        let d = s.space.domain().clone();
        let st = State::new(ScalarField::constant(16, 8, 1.0), VelocityCoeffs::zeros(12), &s.params).unwrap();
        let path = WienerPath::new(1, 0, 0.01, 5);
        let rec = run_trajectory(&s, st, &path, 1, String::new()).unwrap();
        assert_eq!(rec.rows.len(), 6);
        for r in &rec.rows {
            assert!(r.energy_residual.abs() < 1e-12);
            assert!(r.u_norm_vm < 1e-13);
            assert!((r.mass - d.area()).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_ledger_closes_to_first_order() {
        let res = |h: f64, steps: usize| {
            let (mut s, st) = sim(false, steps);
            s.params.h = h;
            let path = WienerPath::new(1, 0, h, steps);
            let rec = run_trajectory(&s, st, &path, 1, String::new()).unwrap();
            assert!(rec.completed());
            rec.rows.iter().map(|r| r.energy_residual.abs()).fold(0.0, f64::max)
        };
        let (a, b) = (res(0.02, 10), res(0.01, 20));
        let order = (a / b).log2();
        assert!(order > 0.8, "residuals {a:e} {b:e}");
    }

    #[test]
    fn runs_are_deterministic_and_conservative() {
        let (s, st) = sim(true, 10);
        let path = WienerPath::new(9, 4, 0.01, 10);
        let a = run_trajectory(&s, st.clone(), &path, 9, String::new()).unwrap();
        let b = run_trajectory(&s, st, &path, 9, String::new()).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.final_state, b.final_state);
        let m0 = a.rows[0].mass;
        for r in &a.rows {
            assert!((r.mass - m0).abs() <= 1e-12 * m0);
            assert!(r.min_rho > 0.0);
            assert!(r.ito_correction <= r.ito_upper + 1e-12);
        }
        assert!(a.rows.iter().skip(1).any(|r| r.martingale_increment != 0.0));
    }

    #[test]
    fn coupled_mode_runs() {
        let (mut s, st) = sim(true, 4);
        s.mode = IntegrationMode::Coupled { levels: 2 };
        let path = WienerPath::new(2, 4, 0.01, 4);
        let rec = run_trajectory(&s, st, &path, 2, String::new()).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.rows.len(), 5);
        assert!((rec.rows[4].t - 0.04).abs() < 1e-14);
    }

    #[test]
    fn twin_zero_perturbation() {
        let (s, st) = sim(true, 5);
        let path = WienerPath::new(2, 4, 0.01, 5);
        let c = twin_run_divergence(&s, &st, &path, 0.0).unwrap();
        assert!(c.iter().all(|v| *v == 0.0));
    }
}
