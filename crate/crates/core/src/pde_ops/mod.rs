//! Operator toolbox: Bogovskii solver, Riesz transforms, inverse
//! divergence, pressure moments and the effective viscous flux.

pub mod bogovskii;
pub mod moments;
pub mod spectral;

pub use bogovskii::{bogovskii_solve, BogovskiiSolution, BogovskiiSolver};
pub use moments::{pressure_moment_diagnostic, PressureMomentReport};
pub use spectral::{spectral_divergence, Reflection, SpectralField};

use crate::constitutive::SimParams;
use crate::error::Result;
use crate::geometry::{GalerkinSpace, ScalarField};
use crate::integrator::State;

/// `(eta + mu) div u - p_delta(rho)` at cell centers, `eta = mu/3 + lambda`.
pub fn effective_viscous_flux(space: &GalerkinSpace, state: &State, params: &SimParams) -> Result<ScalarField> {
    let div = space.divergence(&state.velocity)?;
    let k = params.eta() + params.mu;
    let data = div
        .data
        .iter()
        .zip(&state.density.rho.data)
        .map(|(d, r)| k * d - params.p_delta(*r))
        .collect();
    Ok(ScalarField {
        nx: div.nx,
        ny: div.ny,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ChannelDomain, Component, VelocityCoeffs};

    #[test]
    fn flux_at_rest() {
        let d = ChannelDomain::new(2.0, 8, 4).unwrap();
        let space = GalerkinSpace::new(&d, 6, false).unwrap();
        let params = SimParams {
            a: 1.0,
            gamma: 2.0,
            delta: 0.0,
            m: 6,
            ..SimParams::default()
        };
        let st = State::new(ScalarField::constant(8, 4, 1.0), VelocityCoeffs::zeros(6), &params).unwrap();
        let f = effective_viscous_flux(&space, &st, &params).unwrap();
        assert!(f.data.iter().all(|v| (*v + 1.0).abs() < 1e-15));
    }

    #[test]
    fn flux_of_divergence_free_field() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let space = GalerkinSpace::new(&d, 12, false).unwrap();
        let params = SimParams {
            a: 0.0,
            delta: 0.5,
            m: 12,
            ..SimParams::default()
        };
        // x-independent tangential modes are divergence-free
        let j = (0..12)
            .find(|&j| space.modes()[j].component == Component::Tangential && space.modes()[j].xwave == 0 && space.modes()[j].ywave > 0)
            .unwrap();
        let st = State::new(ScalarField::constant(16, 8, 1.0), VelocityCoeffs::unit(12, j), &params).unwrap();
        let f = effective_viscous_flux(&space, &st, &params).unwrap();
        // p_delta(1) = a + delta (1 + 1)
        assert!(f.data.iter().all(|v| (*v + 1.0).abs() < 1e-13));
    }
}
