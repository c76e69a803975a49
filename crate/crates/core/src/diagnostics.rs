//! Energy accounting, weak-form residuals on a fixed test-function
//! catalogue, and the Korn-Poincare ratio.

use std::f64::consts::PI;

use crate::constitutive::{chi, cutoff_velocity, double_dot, viscous_stress, SimParams};
use crate::error::{Error, Result};
use crate::geometry::{
    ChannelDomain, Component, GalerkinSpace, GradientField, ScalarField, VectorField,
    VelocityCoeffs, WallField,
};
use crate::integrator::{Simulation, Snapshots, State, TrajectoryRecord};
use crate::noise::evaluate_coefficient;

/// Version of the test-function catalogues below.
pub const CATALOGUE_VERSION: u32 = 1;

/// `int (1/2 rho |u|^2 + P_delta(rho))`.
pub fn total_energy(space: &GalerkinSpace, params: &SimParams, state: &State) -> Result<f64> {
    let u = space.evaluate(&state.velocity)?;
    let rho = &state.density.rho;
    let a = space.domain().cell_area();
    Ok(rho
        .data
        .iter()
        .enumerate()
        .map(|(c, &r)| 0.5 * r * (u.x[c] * u.x[c] + u.y[c] * u.y[c]) + params.potential(r))
        .sum::<f64>()
        * a)
}

/// `E_n - E_0 + sum(dissipation) - sum(ito) - sum(martingale) - sum(forcing work)`.
pub fn energy_balance_residual(record: &TrajectoryRecord) -> Vec<f64> {
    let Some(first) = record.rows.first() else {
        return Vec::new();
    };
    let e0 = first.total_energy();
    let mut acc = 0.0;
    record
        .rows
        .iter()
        .map(|r| {
            acc += r.dissipation() - r.ito_correction - r.martingale_increment - r.forcing_work;
            r.total_energy() - e0 + acc
        })
        .collect()
}

/// `E_0 + sum(ito) + sum(martingale) + sum(forcing work) - E_n - sum(dissipation)`.
pub fn energy_inequality_margin(record: &TrajectoryRecord) -> Vec<f64> {
    energy_balance_residual(record).into_iter().map(|r| -r).collect()
}

/// Time test functions on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeTest {
    One,
    /// `cos(pi t / (2T))`, decaying to zero at the horizon.
    QuarterCos,
    /// `sin(pi t / T)`.
    HalfSin,
}

impl TimeTest {
    pub fn eval(self, t: f64, horizon: f64) -> f64 {
        match self {
            TimeTest::One => 1.0,
            TimeTest::QuarterCos => (0.5 * PI * t / horizon).cos(),
            TimeTest::HalfSin => (PI * t / horizon).sin(),
        }
    }
}

/// Neumann-compatible scalar test function `X(x) cos(n pi y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTest {
    pub p: usize,
    pub n: usize,
    pub sine: bool,
}

impl SpaceTest {
    pub const ONE: SpaceTest = SpaceTest {
        p: 0,
        n: 0,
        sine: false,
    };

    /// `(psi, d_x psi, d_y psi, lap psi)` at a point.
    pub fn eval(&self, lx: f64, x: f64, y: f64) -> [f64; 4] {
        let k = 2.0 * PI * self.p as f64 / lx;
        let l = PI * self.n as f64;
        let (xv, xd) = if self.sine {
            ((k * x).sin(), k * (k * x).cos())
        } else {
            ((k * x).cos(), -k * (k * x).sin())
        };
        let (yv, yd) = ((l * y).cos(), -l * (l * y).sin());
        [xv * yv, xd * yv, xv * yd, -(k * k + l * l) * xv * yv]
    }
}

pub fn continuity_catalogue() -> Vec<(TimeTest, SpaceTest)> {
    let spaces = [
        SpaceTest::ONE,
        SpaceTest { p: 1, n: 0, sine: false },
        SpaceTest { p: 0, n: 1, sine: false },
        SpaceTest { p: 1, n: 1, sine: true },
        SpaceTest { p: 2, n: 1, sine: false },
    ];
    let mut out = Vec::new();
    for t in [TimeTest::One, TimeTest::QuarterCos] {
        for s in spaces {
            out.push((t, s));
        }
    }
    out
}

/// Renormalization functions `b` with `b'` vanishing for large arguments
/// (except the identity, which reproduces the continuity equation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Renormalization {
    Identity,
    Constant(f64),
    /// `b' = chi((z - z0)/w)`, `b(0) = 0`.
    SmoothTruncation { z0: f64, w: f64 },
}

impl Renormalization {
    /// `(b(z) - b(0), b'(z), b''(z))`; the constant part integrates to zero
    /// against the weak form and is dropped.
    pub fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Renormalization::Identity => (z, 1.0, 0.0),
            Renormalization::Constant(_) => (0.0, 0.0, 0.0),
            Renormalization::SmoothTruncation { z0, w } => {
                let t = (z - z0) / w;
                if t <= 0.0 {
                    (z, 1.0, 0.0)
                } else if t >= 1.0 {
                    (z0 + 0.5 * w, 0.0, 0.0)
                } else {
                    let n = 64;
                    let h = t / n as f64;
                    let mut s = chi(0.0) + chi(t);
                    for i in 1..n {
                        s += if i % 2 == 1 { 4.0 } else { 2.0 } * chi(i as f64 * h);
                    }
                    let integral = s * h / 3.0;
                    let d = 1e-6;
                    let chi_prime = (chi((t + d).min(1.0)) - chi((t - d).max(0.0)))
                        / ((t + d).min(1.0) - (t - d).max(0.0));
                    (z0 + w * integral, chi(t), chi_prime / w)
                }
            }
        }
    }
}

pub fn renormalization_catalogue() -> Vec<Renormalization> {
    vec![
        Renormalization::Identity,
        Renormalization::Constant(1.0),
        Renormalization::SmoothTruncation { z0: 1.0, w: 0.3 },
    ]
}

pub(crate) fn snapshots(record: &TrajectoryRecord) -> Result<&Snapshots> {
    record
        .snapshots
        .as_ref()
        .ok_or_else(|| Error::Config("record has no snapshots; enable snapshots".into()))
}

/// Centered density gradient with mirrored (Neumann) ghost cells.
pub fn density_gradient(domain: &ChannelDomain, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (domain.nx(), domain.ny());
    let (dx, dy) = (domain.dx(), domain.dy());
    let mut gx = vec![0.0; nx * ny];
    let mut gy = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            gx[c] = (rho[j * nx + (i + 1) % nx] - rho[j * nx + (i + nx - 1) % nx]) / (2.0 * dx);
            let up = if j + 1 < ny { rho[c + nx] } else { rho[c] };
            let dn = if j > 0 { rho[c - nx] } else { rho[c] };
            gy[c] = (up - dn) / (2.0 * dy);
        }
    }
    (gx, gy)
}

/// Residual of the renormalized continuity equation on `theta(t) psi(x)`:
/// `sum_n theta_n [ <b(rho_{n+1}) - b(rho_n), psi> - h <b u, grad psi>
///   + h <(rho b' - b) div u, psi> - h eps <b, lap psi> + h eps <b'' |grad rho|^2, psi> ]`.
pub fn renormalized_residual(
    sim: &Simulation,
    record: &TrajectoryRecord,
    b: Renormalization,
    theta: TimeTest,
    psi: SpaceTest,
) -> Result<f64> {
    let snaps = snapshots(record)?;
    let space = &sim.space;
    let dom = space.domain();
    let lx = dom.lx();
    let a = dom.cell_area();
    let h = sim.params.h;
    let eps = sim.params.epsilon;
    let horizon = sim.t_final();
    let tests: Vec<[f64; 4]> = (0..dom.cells())
        .map(|c| {
            let (x, y) = dom.cell_center(c);
            psi.eval(lx, x, y)
        })
        .collect();
    let steps = snaps.rho.len() - 1;
    let mut total = 0.0;
    for n in 0..steps {
        let th = theta.eval(n as f64 * h, horizon);
        let coeffs = VelocityCoeffs(snaps.coeffs[n].clone());
        let (cut, _) = cutoff_velocity(&coeffs, sim.params.r_cut);
        let u = space.evaluate(&cut)?;
        let div = space.divergence(&cut)?;
        let rho = &snaps.rho[n];
        let rho1 = &snaps.rho[n + 1];
        let needs_grad = matches!(b, Renormalization::SmoothTruncation { .. });
        let (gx, gy) = if needs_grad {
            density_gradient(dom, rho)
        } else {
            (Vec::new(), Vec::new())
        };
        let mut s = 0.0;
        for c in 0..dom.cells() {
            let t = tests[c];
            let (b0, bp, bpp) = b.eval(rho[c]);
            let (b1, _, _) = b.eval(rho1[c]);
            let mut local = (b1 - b0) * t[0];
            local -= h * b0 * (u.x[c] * t[1] + u.y[c] * t[2]);
            local += h * (rho[c] * bp - b0) * div.data[c] * t[0];
            local -= h * eps * b0 * t[3];
            if needs_grad && bpp != 0.0 {
                local += h * eps * bpp * (gx[c] * gx[c] + gy[c] * gy[c]) * t[0];
            }
            s += local;
        }
        total += th * s * a;
    }
    Ok(total)
}

/// Weak continuity residual; identical to the identity renormalization.
pub fn weak_residual_continuity(
    sim: &Simulation,
    record: &TrajectoryRecord,
    theta: TimeTest,
    psi: SpaceTest,
) -> Result<f64> {
    renormalized_residual(sim, record, Renormalization::Identity, theta, psi)
}

/// Zero-trace momentum test functions of `V_m`: every normal mode, plus
/// normalized differences of tangential modes sharing an `x`-profile
/// whose wall values cancel on both walls.
pub fn momentum_catalogue(space: &GalerkinSpace) -> Vec<VelocityCoeffs> {
    let m = space.dim();
    let modes = space.modes();
    let mut out = Vec::new();
    for j in 0..m {
        if modes[j].component == Component::Normal || modes[j].interior {
            out.push(VelocityCoeffs::unit(m, j));
        }
    }
    if space.interior_only() {
        return out;
    }
    for j in 0..m {
        let a = modes[j];
        if a.component != Component::Tangential {
            continue;
        }
        // partner: next tangential mode with the same x-profile and y-parity
        if let Some(k) = (j + 1..m).find(|&k| {
            let b = modes[k];
            b.component == Component::Tangential
                && b.xwave == a.xwave
                && b.parity == a.parity
                && b.ywave % 2 == a.ywave % 2
        }) {
            let b = modes[k];
            // wall values: Y_0 = 1, Y_n = sqrt(2) (+-1)^n
            let wa = if a.ywave == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
            let wb = if b.ywave == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
            let mut v = vec![0.0; m];
            v[j] = wb;
            v[k] = -wa;
            let n = (wa * wa + wb * wb).sqrt();
            out.push(VelocityCoeffs(v.iter().map(|c| c / n).collect()));
        }
    }
    out
}

/// Midpoint-quadrature momentum terms tested with `phi`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TestedDrift {
    /// `chi int rho u (x) u : grad phi`
    pub convection: f64,
    /// `chi int p_delta(rho) div phi`
    pub pressure: f64,
    /// `-int S(grad u) : grad phi`
    pub viscous: f64,
    /// `eps int rho u . lap phi`
    pub eps: f64,
    /// `int f phi_x`
    pub forcing: f64,
}

impl TestedDrift {
    pub fn total(&self) -> f64 {
        self.convection + self.pressure + self.viscous + self.eps + self.forcing
    }
}

#[allow(clippy::too_many_arguments)]
pub fn momentum_drift_tested(
    params: &SimParams,
    domain: &ChannelDomain,
    rho: &[f64],
    u: &VectorField,
    gu: &GradientField,
    chi_value: f64,
    phi: &VectorField,
    gphi: &GradientField,
    lphi: &VectorField,
) -> TestedDrift {
    let mut t = TestedDrift::default();
    for c in 0..domain.cells() {
        let r = rho[c];
        let uu = u.at(c);
        let gp = gphi.at(c);
        let mut conv = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                conv += uu[a] * uu[b] * gp[a][b];
            }
        }
        let y = domain.cell_center(c).1;
        t.convection += r * conv;
        t.pressure += params.p_delta(r) * (gp[0][0] + gp[1][1]);
        t.viscous -= double_dot(viscous_stress(gu.at(c), params), gp);
        t.eps += r * (uu[0] * lphi.x[c] + uu[1] * lphi.y[c]);
        t.forcing += params.body_force(y) * phi.x[c];
    }
    let a = domain.cell_area();
    TestedDrift {
        convection: chi_value * t.convection * a,
        pressure: chi_value * t.pressure * a,
        viscous: t.viscous * a,
        eps: params.epsilon * t.eps * a,
        forcing: t.forcing * a,
    }
}

/// Stochastic increment `sum_k dW_k int G_k(rho, u) . phi` over one step.
pub fn noise_tested(
    sim: &Simulation,
    rho: &[f64],
    u: &VectorField,
    increments: &[Vec<f64>],
    phi: &VectorField,
) -> Result<f64> {
    if sim.noise.is_off() {
        return Ok(0.0);
    }
    let dom = sim.space.domain();
    let rf = ScalarField {
        nx: dom.nx(),
        ny: dom.ny(),
        data: rho.to_vec(),
    };
    let mut s = 0.0;
    for k in 0..sim.noise.modes() {
        let w: f64 = increments.iter().map(|sub| sub[k]).sum();
        let g = evaluate_coefficient(&rf, u, k, &sim.noise)?;
        let gp: f64 = (0..dom.cells()).map(|c| g.x[c] * phi.x[c] + g.y[c] * phi.y[c]).sum();
        s += w * gp * dom.cell_area();
    }
    Ok(s)
}

/// `int rho u . phi`.
pub fn momentum_pairing(domain: &ChannelDomain, rho: &[f64], u: &VectorField, phi: &VectorField) -> f64 {
    rho.iter()
        .enumerate()
        .map(|(c, r)| r * (u.x[c] * phi.x[c] + u.y[c] * phi.y[c]))
        .sum::<f64>()
        * domain.cell_area()
}

/// Residual of the interior momentum equation on `theta(t) phi(x)`, with
/// the stochastic integral rebuilt from the stored increments.
pub fn weak_residual_momentum(
    sim: &Simulation,
    record: &TrajectoryRecord,
    theta: TimeTest,
    phi: &VelocityCoeffs,
) -> Result<f64> {
    let snaps = snapshots(record)?;
    let space = &sim.space;
    let dom = space.domain();
    let h = sim.params.h;
    let horizon = sim.t_final();
    let pf = space.evaluate(phi)?;
    let pg = space.gradient(phi)?;
    let pl = space.laplacian_field(phi)?;
    let steps = snaps.rho.len() - 1;
    let mut total = 0.0;
    let mut u_next = space.evaluate(&VelocityCoeffs(snaps.coeffs[0].clone()))?;
    for n in 0..steps {
        let th = theta.eval(n as f64 * h, horizon);
        let coeffs = VelocityCoeffs(snaps.coeffs[n].clone());
        let u = u_next;
        u_next = space.evaluate(&VelocityCoeffs(snaps.coeffs[n + 1].clone()))?;
        let gu = space.gradient(&coeffs)?;
        let (_, chi_value) = cutoff_velocity(&coeffs, sim.params.r_cut);
        let rho = &snaps.rho[n];
        let dq = momentum_pairing(dom, &snaps.rho[n + 1], &u_next, &pf) - momentum_pairing(dom, rho, &u, &pf);
        let drift = momentum_drift_tested(&sim.params, dom, rho, &u, &gu, chi_value, &pf, &pg, &pl);
        let stoch = noise_tested(sim, rho, &u, &snaps.increments[n], &pf)?;
        total += th * (dq - h * drift.total() - stoch);
    }
    Ok(total)
}

/// Largest absolute residual over the continuity catalogue.
pub fn max_continuity_residual(sim: &Simulation, record: &TrajectoryRecord) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (t, s) in continuity_catalogue() {
        worst = worst.max(weak_residual_continuity(sim, record, t, s)?.abs());
    }
    Ok(worst)
}

/// Largest absolute residual over the momentum catalogue and time tests.
pub fn max_momentum_residual(sim: &Simulation, record: &TrajectoryRecord) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for phi in momentum_catalogue(&sim.space) {
        for t in [TimeTest::One, TimeTest::QuarterCos] {
            worst = worst.max(weak_residual_momentum(sim, record, t, &phi)?.abs());
        }
    }
    Ok(worst)
}

/// Largest absolute renormalized residual over the nonlinear `b` catalogue.
pub fn max_renormalized_residual(sim: &Simulation, record: &TrajectoryRecord) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for b in renormalization_catalogue() {
        if !matches!(b, Renormalization::SmoothTruncation { .. }) {
            continue;
        }
        for (t, s) in continuity_catalogue() {
            worst = worst.max(renormalized_residual(sim, record, b, t, s)?.abs());
        }
    }
    Ok(worst)
}

/// `||v||_{W^{1,2}} / (||grad v + grad v^T - 2/3 div v I||_{L2} + int r |v|)`
/// from cell values, cell gradients and wall speeds `|v|`.
pub fn korn_poincare_ratio_fields(
    domain: &ChannelDomain,
    v: &VectorField,
    grad: &GradientField,
    wall_speed: &WallField,
    r: &WallField,
) -> Result<f64> {
    if let Some(bad) = r.data.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("boundary weight must be >= 0, found {bad}")));
    }
    let a = domain.cell_area();
    let mut lhs = 0.0;
    let mut dev = 0.0;
    for c in 0..domain.cells() {
        let g = grad.at(c);
        let d = g[0][0] + g[1][1];
        lhs += v.x[c] * v.x[c] + v.y[c] * v.y[c];
        for i in 0..2 {
            for j in 0..2 {
                lhs += g[i][j] * g[i][j];
                let mut e = g[i][j] + g[j][i];
                if i == j {
                    e -= 2.0 / 3.0 * d;
                }
                dev += e * e;
            }
        }
    }
    let lhs = (lhs * a).sqrt();
    if lhs == 0.0 {
        return Err(Error::Domain("Korn ratio undefined for v = 0".into()));
    }
    let bdry = domain.integrate_boundary(wall_speed, r)?;
    Ok(lhs / ((dev * a).sqrt() + bdry))
}

/// Korn-Poincare ratio of a Galerkin field.
pub fn korn_poincare_ratio(space: &GalerkinSpace, v: &VelocityCoeffs, r: &WallField) -> Result<f64> {
    let dom = space.domain();
    let cell = space.evaluate(v)?;
    let grad = space.gradient(v)?;
    let tr = space.trace(v)?;
    let speed = WallField {
        nx: dom.nx(),
        data: tr
            .tangential
            .data
            .iter()
            .zip(&tr.normal.data)
            .map(|(a, b)| a.hypot(*b))
            .collect(),
    };
    korn_poincare_ratio_fields(dom, &cell, &grad, &speed, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::run_trajectory;
    use crate::noise::{NoiseFamily, NoiseModel, WienerPath};

    fn setup(noise: bool, steps: usize, nx: usize, ny: usize, h: f64) -> (Simulation, State) {
        let d = ChannelDomain::new(2.0, nx, ny).unwrap();
        let space = GalerkinSpace::new(&d, 12, false).unwrap();
        let params = SimParams {
            h,
            m: 12,
            ..SimParams::default()
        };
        let model = if noise {
            NoiseModel::new(&space, NoiseFamily::LinearMomentum, 4, 0.5, 0.5, 0.5, params.epsilon).unwrap()
        } else {
            NoiseModel::off(&space)
        };
        let mut s = Simulation::new(params.clone(), space, model, WallField::constant(nx, 1.0), steps).unwrap();
        s.record_snapshots = true;
        let rho = d.scalar_from_fn(|x, y| 1.0 + 0.3 * (PI * x).cos() * (PI * y).cos());
        let v = VelocityCoeffs((0..12).map(|j| 0.4 / (1.0 + j as f64)).collect());
        let st = State::new(rho, v, &params).unwrap();
        (s, st)
    }

    #[test]
    fn energy_examples() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let space = GalerkinSpace::new(&d, 6, false).unwrap();
        let p = SimParams::default();
        let st = State::new(ScalarField::constant(16, 8, 1.0), VelocityCoeffs::zeros(6), &p).unwrap();
        assert!(total_energy(&space, &p, &st).unwrap().abs() < 1e-15);
        let st = State::new(ScalarField::constant(16, 8, 1.0), VelocityCoeffs::unit(6, 2), &p).unwrap();
        assert!((total_energy(&space, &p, &st).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn margin_is_negated_residual() {
        let (s, st) = setup(false, 5, 16, 8, 0.01);
        let rec = run_trajectory(&s, st, &WienerPath::new(0, 0, 0.01, 5), 0, String::new()).unwrap();
        let r = energy_balance_residual(&rec);
        let m = energy_inequality_margin(&rec);
        for ((a, b), row) in r.iter().zip(&m).zip(&rec.rows) {
            assert_eq!(*a, -*b);
            assert!((a - row.energy_residual).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_residual_matches_quadratic_variation_defect() {
        // Oracle: residual_n = sum_k (1/2 d.M_{k+1} d - h c_k), from snapshots.
        let (s, st) = setup(true, 6, 16, 8, 0.01);
        let path = WienerPath::new(4, 4, 0.01, 6);
        let rec = run_trajectory(&s, st, &path, 4, String::new()).unwrap();
        let snaps = rec.snapshots.as_ref().unwrap();
        let mut acc = 0.0;
        for n in 0..6 {
            let d: Vec<f64> =
                snaps.coeffs[n + 1].iter().zip(&snaps.coeffs[n]).map(|(a, b)| a - b).collect();
            let rho1 = ScalarField { nx: 16, ny: 8, data: snaps.rho[n + 1].clone() };
            let m1 = crate::constitutive::MassOperator::new(&s.space, &rho1).unwrap();
            let md = m1.apply(&VelocityCoeffs(d.clone())).unwrap();
            acc += 0.5 * md.pair(&VelocityCoeffs(d)) - rec.rows[n + 1].ito_correction;
            let res = rec.rows[n + 1].energy_residual;
            assert!((res - acc).abs() < 1e-11 * (1.0 + acc.abs()), "step {n}: {res:e} vs {acc:e}");
        }
    }

    #[test]
    fn continuity_residual_trivial_cases() {
        let (s, st) = setup(true, 5, 16, 8, 0.01);
        let rec = run_trajectory(&s, st, &WienerPath::new(1, 4, 0.01, 5), 1, String::new()).unwrap();
        let one = weak_residual_continuity(&s, &rec, TimeTest::One, SpaceTest::ONE).unwrap();
        assert!(one.abs() < 1e-12);
        let c = renormalized_residual(&s, &rec, Renormalization::Constant(2.0), TimeTest::QuarterCos, SpaceTest { p: 1, n: 1, sine: false }).unwrap();
        assert_eq!(c, 0.0);
        let t = SpaceTest { p: 1, n: 1, sine: true };
        let id = renormalized_residual(&s, &rec, Renormalization::Identity, TimeTest::One, t).unwrap();
        assert_eq!(id, weak_residual_continuity(&s, &rec, TimeTest::One, t).unwrap());
    }

    #[test]
    fn momentum_catalogue_has_zero_trace() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let space = GalerkinSpace::new(&d, 24, false).unwrap();
        let cat = momentum_catalogue(&space);
        assert!(cat.len() > 4);
        for v in &cat {
            assert!((v.norm() - 1.0).abs() < 1e-14);
            let tr = space.trace(v).unwrap();
            assert!(tr.tangential.data.iter().all(|t| t.abs() < 1e-13));
        }
    }

    #[test]
    fn momentum_residual_at_rest_vanishes() {
        let (s, _) = setup(false, 4, 16, 8, 0.01);
        let st = State::new(ScalarField::constant(16, 8, 1.0), VelocityCoeffs::zeros(12), &s.params).unwrap();
        let rec = run_trajectory(&s, st, &WienerPath::new(0, 0, 0.01, 4), 0, String::new()).unwrap();
        assert!(max_momentum_residual(&s, &rec).unwrap() < 1e-10);
    }

    #[test]
    fn smooth_truncation_is_consistent() {
        let b = Renormalization::SmoothTruncation { z0: 1.0, w: 0.3 };
        assert_eq!(b.eval(0.5), (0.5, 1.0, 0.0));
        assert_eq!(b.eval(2.0), (1.15, 0.0, 0.0));
        let z = 1.12;
        let d = 1e-5;
        let fd = (b.eval(z + d).0 - b.eval(z - d).0) / (2.0 * d);
        assert!((fd - b.eval(z).1).abs() < 1e-6);
        let fd2 = (b.eval(z + d).1 - b.eval(z - d).1) / (2.0 * d);
        assert!((fd2 - b.eval(z).2).abs() < 1e-3);
    }

    #[test]
    fn korn_zero_trace_oracle() {
        let d = ChannelDomain::new(2.0, 32, 16).unwrap();
        let space = GalerkinSpace::new(&d, 24, false).unwrap();
        let r = WallField::constant(32, 1.0);
        for v in momentum_catalogue(&space).iter().take(6) {
            let ratio = korn_poincare_ratio(&space, v, &r).unwrap();
            let grad = space.gradient(v).unwrap();
            let cell = space.evaluate(v).unwrap();
            let a = d.cell_area();
            let (mut l2, mut g2, mut d2) = (0.0, 0.0, 0.0);
            for c in 0..d.cells() {
                let g = grad.at(c);
                l2 += cell.x[c].powi(2) + cell.y[c].powi(2);
                g2 += g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2);
                d2 += (g[0][0] + g[1][1]).powi(2);
            }
            let oracle = ((l2 + g2) * a).sqrt() / ((2.0 * g2 + 2.0 / 9.0 * d2) * a).sqrt();
            assert!((ratio / oracle - 1.0).abs() < 0.05);
            let scaled = korn_poincare_ratio(&space, &v.scaled(3.0), &r).unwrap();
            assert!((scaled - ratio).abs() < 1e-12 * ratio);
        }
        assert!(korn_poincare_ratio(&space, &VelocityCoeffs::zeros(24), &r).is_err());
    }

    #[test]
    fn korn_rigid_rotation_is_finite() {
        let d = ChannelDomain::new(2.0, 32, 16).unwrap();
        let v = d.vector_from_fn(|x, y| [-(y - 0.5), x - 1.0]);
        let mut g = GradientField::zeros(32, 16);
        for c in 0..d.cells() {
            g.g[0][1][c] = -1.0;
            g.g[1][0][c] = 1.0;
        }
        let speed = d.wall_from_fn(|x, y| (y - 0.5).hypot(x - 1.0));
        let r = WallField::constant(32, 1.0);
        let ratio = korn_poincare_ratio_fields(&d, &v, &g, &speed, &r).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
    }
}
