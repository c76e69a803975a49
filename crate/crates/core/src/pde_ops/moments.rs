//! Pressure-moment decomposition: the momentum equation tested with
//! `Phi = B[b(rho) - mean b(rho)]`, `b(rho) = rho^beta`.
//!
//! `Phi` is projected onto the zero-trace subspace of the Galerkin space
//! so that it is an admissible test function of the discrete dynamics.
//! With `~Phi` the projection, the identity reads
//! `h sum chi int p_delta(rho) div ~Phi = I1 + I2 + I3 + I4` with
//! `I1 = [int rho u . ~Phi]_0^T`,
//! `I2 = -h sum (convection + viscous + eps + forcing)(~Phi)`,
//! `I3 = -sum int rho_{n+1} u_{n+1} . (~Phi_{n+1} - ~Phi_n)`,
//! `I4 = -sum_n sum_k dW_k int G_k . ~Phi_n`.

use serde::Serialize;

use crate::constitutive::cutoff_velocity;
use crate::diagnostics::{momentum_drift_tested, momentum_pairing, noise_tested, snapshots};
use crate::error::{Error, Result};
use crate::geometry::{ScalarField, VectorField, VelocityCoeffs};
use crate::integrator::{Simulation, TrajectoryRecord};
use crate::pde_ops::bogovskii::BogovskiiSolver;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureMomentReport {
    pub beta: f64,
    /// `h sum chi int p_delta(rho) div ~Phi`.
    pub lhs: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    /// `lhs - (i1 + i2 + i3 + i4)`.
    pub residual: f64,
    /// `h sum chi int p_delta(rho) (b - mean b)`, before projection.
    pub direct_lhs: f64,
    /// `direct_lhs - lhs`.
    pub projection_defect: f64,
    /// `h sum int (p(rho) + delta (rho + rho^Gamma)) rho^beta`.
    pub moment: f64,
    /// Largest Bogovskii divergence residual over the snapshots.
    pub bogovskii_div_residual: f64,
}

pub fn pressure_moment_diagnostic(
    sim: &Simulation,
    record: &TrajectoryRecord,
    beta: f64,
) -> Result<PressureMomentReport> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    let snaps = snapshots(record)?;
    let space = &sim.space;
    let dom = space.domain();
    let p = &sim.params;
    let h = p.h;
    let a = dom.cell_area();
    let solver = BogovskiiSolver::new(dom)?;
    let zbasis = space.zero_trace_basis();
    let n_snap = snaps.rho.len();

    let mut phis: Vec<(VectorField, crate::geometry::GradientField, VectorField)> = Vec::with_capacity(n_snap);
    let mut bog_res: f64 = 0.0;
    let mut direct = 0.0;
    let mut moment = 0.0;
    for (n, rho) in snaps.rho.iter().enumerate() {
        let b = ScalarField {
            nx: dom.nx(),
            ny: dom.ny(),
            data: rho.iter().map(|r| r.powf(beta)).collect(),
        };
        let sol = solver.solve(&b, 2.0)?;
        bog_res = bog_res.max(sol.div_residual);
        let c = space.project(&sol.cell)?;
        let mut proj = vec![0.0; space.dim()];
        for z in &zbasis {
            let w = z.dot(&c.0);
            for (pj, zj) in proj.iter_mut().zip(&z.0) {
                *pj += w * zj;
            }
        }
        let proj = VelocityCoeffs(proj);
        phis.push((space.evaluate(&proj)?, space.gradient(&proj)?, space.laplacian_field(&proj)?));
        if n + 1 < n_snap {
            let chi_n = cutoff_velocity(&VelocityCoeffs(snaps.coeffs[n].clone()), p.r_cut).1;
            let mut d = 0.0;
            let mut mo = 0.0;
            for (r, bv) in rho.iter().zip(&b.data) {
                d += p.p_delta(*r) * (bv - sol.mean);
                mo += p.p_delta(*r) * bv;
            }
            direct += h * chi_n * d * a;
            moment += h * mo * a;
        }
    }

    let us: Vec<VectorField> = snaps
        .coeffs
        .iter()
        .map(|c| space.evaluate(&VelocityCoeffs(c.clone())))
        .collect::<Result<_>>()?;
    let last = n_snap - 1;
    let i1 = momentum_pairing(dom, &snaps.rho[last], &us[last], &phis[last].0)
        - momentum_pairing(dom, &snaps.rho[0], &us[0], &phis[0].0);
    let (mut lhs, mut i2, mut i3, mut i4) = (0.0, 0.0, 0.0, 0.0);
    for n in 0..last {
        let coeffs = VelocityCoeffs(snaps.coeffs[n].clone());
        let gu = space.gradient(&coeffs)?;
        let chi_n = cutoff_velocity(&coeffs, p.r_cut).1;
        let (pf, pg, pl) = &phis[n];
        let t = momentum_drift_tested(p, dom, &snaps.rho[n], &us[n], &gu, chi_n, pf, pg, pl);
        lhs += h * t.pressure;
        i2 -= h * (t.convection + t.viscous + t.eps + t.forcing);
        let dphi = VectorField {
            nx: dom.nx(),
            ny: dom.ny(),
            x: phis[n + 1].0.x.iter().zip(&pf.x).map(|(a, b)| a - b).collect(),
            y: phis[n + 1].0.y.iter().zip(&pf.y).map(|(a, b)| a - b).collect(),
        };
        i3 -= momentum_pairing(dom, &snaps.rho[n + 1], &us[n + 1], &dphi);
        i4 -= noise_tested(sim, &snaps.rho[n], &us[n], &snaps.increments[n], pf)?;
    }
    Ok(PressureMomentReport {
        beta,
        lhs,
        i1,
        i2,
        i3,
        i4,
        residual: lhs - (i1 + i2 + i3 + i4),
        direct_lhs: direct,
        projection_defect: direct - lhs,
        moment,
        bogovskii_div_residual: bog_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::SimParams;
    use crate::geometry::{ChannelDomain, GalerkinSpace, WallField};
    use crate::integrator::{run_trajectory, State};
    use crate::noise::{NoiseModel, WienerPath};

    #[test]
    fn equilibrium_has_vanishing_terms() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let space = GalerkinSpace::new(&d, 12, false).unwrap();
        let params = SimParams { m: 12, ..SimParams::default() };
        let mut sim =
            Simulation::new(params.clone(), space.clone(), NoiseModel::off(&space), WallField::constant(16, 1.0), 3).unwrap();
        sim.record_snapshots = true;
        let st = State::new(ScalarField::constant(16, 8, 1.3), VelocityCoeffs::zeros(12), &params).unwrap();
        let rec = run_trajectory(&sim, st, &WienerPath::new(0, 0, 0.01, 3), 0, String::new()).unwrap();
        let r = pressure_moment_diagnostic(&sim, &rec, 0.25).unwrap();
        for v in [r.lhs, r.i1, r.i2, r.i3, r.i4, r.residual, r.direct_lhs] {
            assert!(v.abs() < 1e-12, "{r:?}");
        }
        assert!(r.moment > 0.0);
        assert!(pressure_moment_diagnostic(&sim, &rec, 0.0).is_err());
    }
}
