//! Finite-volume continuity solver with Neumann walls.
//!
//! One inner step is explicit first-order upwind transport with the
//! face fluxes of the frozen Galerkin velocity, followed by the exact
//! semigroup `exp(dt eps L_h)` of the five-point Neumann Laplacian. Both
//! stages are conservative and positivity preserving.

use crate::constitutive::{cutoff_velocity, upwind_mass_fluxes, SimParams};
use crate::error::{Error, Result};
use crate::geometry::{ChannelDomain, FaceFluxes, GalerkinSpace, ScalarField, VelocityCoeffs};

/// Density field together with its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub rho: ScalarField,
    pub time: f64,
}

impl DensityState {
    pub fn new(rho: ScalarField, time: f64) -> Result<Self> {
        if let Some(v) = rho.data.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("density must be positive and finite, found {v}")));
        }
        Ok(Self { rho, time })
    }

    pub fn mass(&self, domain: &ChannelDomain) -> f64 {
        self.rho.data.iter().sum::<f64>() * domain.cell_area()
    }
}

/// Exact heat semigroup of the discrete Neumann Laplacian, diagonalized by
/// the real Fourier basis in `x` and the DCT-II basis in `y`.
#[derive(Debug, Clone)]
pub struct HeatSemigroup {
    nx: usize,
    ny: usize,
    bx: Vec<f64>,
    by: Vec<f64>,
    lx: Vec<f64>,
    ly: Vec<f64>,
}

impl HeatSemigroup {
    pub fn new(domain: &ChannelDomain) -> Self {
        use std::f64::consts::PI;
        let (nx, ny) = (domain.nx(), domain.ny());
        let (dx, dy) = (domain.dx(), domain.dy());
        // bx[k*nx + i]: orthonormal real Fourier vectors.
        let mut bx = vec![0.0; nx * nx];
        let mut lx = vec![0.0; nx];
        let mut k = 0;
        let mut push = |row: Vec<f64>, wave: usize, bx: &mut Vec<f64>, lx: &mut Vec<f64>| {
            bx[k * nx..(k + 1) * nx].copy_from_slice(&row);
            let s = (PI * wave as f64 / nx as f64).sin();
            lx[k] = -4.0 / (dx * dx) * s * s;
            k += 1;
        };
        push(vec![1.0 / (nx as f64).sqrt(); nx], 0, &mut bx, &mut lx);
        for w in 1..nx.div_ceil(2) {
            let c = (2.0 / nx as f64).sqrt();
            let th = |i: usize| 2.0 * PI * (w * i) as f64 / nx as f64;
            push((0..nx).map(|i| c * th(i).cos()).collect(), w, &mut bx, &mut lx);
            push((0..nx).map(|i| c * th(i).sin()).collect(), w, &mut bx, &mut lx);
        }
        if nx % 2 == 0 {
            let c = 1.0 / (nx as f64).sqrt();
            push(
                (0..nx).map(|i| if i % 2 == 0 { c } else { -c }).collect(),
                nx / 2,
                &mut bx,
                &mut lx,
            );
        }
        let mut by = vec![0.0; ny * ny];
        let mut ly = vec![0.0; ny];
        for l in 0..ny {
            let c = if l == 0 {
                1.0 / (ny as f64).sqrt()
            } else {
                (2.0 / ny as f64).sqrt()
            };
            for j in 0..ny {
                by[l * ny + j] = c * (PI * l as f64 * (j as f64 + 0.5) / ny as f64).cos();
            }
            let s = (PI * l as f64 / (2.0 * ny as f64)).sin();
            ly[l] = -4.0 / (dy * dy) * s * s;
        }
        Self {
            nx,
            ny,
            bx,
            by,
            lx,
            ly,
        }
    }

    /// `exp(t L_h) rho`; the mean is restored exactly afterwards.
    pub fn apply(&self, rho: &ScalarField, t: f64) -> ScalarField {
        let (nx, ny) = (self.nx, self.ny);
        if t == 0.0 {
            return rho.clone();
        }
        // forward: hat[l][k] = sum_j sum_i by[l][j] bx[k][i] rho[j][i]
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &rho.data[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let b = &self.bx[k * nx..(k + 1) * nx];
                tmp[j * nx + k] = row.iter().zip(b).map(|(a, b)| a * b).sum();
            }
        }
        let mut hat = vec![0.0; nx * ny];
        for l in 0..ny {
            for j in 0..ny {
                let w = self.by[l * ny + j];
                for k in 0..nx {
                    hat[l * nx + k] += w * tmp[j * nx + k];
                }
            }
        }
        for l in 0..ny {
            for k in 0..nx {
                hat[l * nx + k] *= ((self.lx[k] + self.ly[l]) * t).exp();
            }
        }
        // inverse
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            for l in 0..ny {
                let w = self.by[l * ny + j];
                for k in 0..nx {
                    tmp[j * nx + k] += w * hat[l * nx + k];
                }
            }
        }
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for k in 0..nx {
                let c = tmp[j * nx + k];
                let b = &self.bx[k * nx..(k + 1) * nx];
                for (o, bb) in out[j * nx..(j + 1) * nx].iter_mut().zip(b) {
                    *o += c * bb;
                }
            }
        }
        let before: f64 = rho.data.iter().sum();
        let after: f64 = out.iter().sum();
        let shift = (before - after) / (nx * ny) as f64;
        for o in out.iter_mut() {
            *o += shift;
        }
        ScalarField {
            nx,
            ny,
            data: out,
        }
    }
}

/// Net outward flux per cell of the face fluxes, divided by the cell area.
pub fn cell_divergence(domain: &ChannelDomain, f: &FaceFluxes) -> Vec<f64> {
    let (nx, ny) = (domain.nx(), domain.ny());
    let a = domain.cell_area();
    let mut d = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            d[j * nx + i] = (f.x[j * nx + ip] - f.x[j * nx + i] + f.y[(j + 1) * nx + i]
                - f.y[j * nx + i])
                / a;
        }
    }
    d
}

/// Largest outflow rate `sum_out |V_f| / A` over cells, with `V_f`
/// already scaled by the cut-off.
pub fn outflow_rate(domain: &ChannelDomain, vf: &FaceFluxes, chi_value: f64) -> f64 {
    let (nx, ny) = (domain.nx(), domain.ny());
    let a = domain.cell_area();
    let mut rate: f64 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let out = (-vf.x[j * nx + i]).max(0.0)
                + vf.x[j * nx + ip].max(0.0)
                + (-vf.y[j * nx + i]).max(0.0)
                + vf.y[(j + 1) * nx + i].max(0.0);
            rate = rate.max(chi_value * out / a);
        }
    }
    rate
}

/// Number of equal inner steps needed to satisfy the CFL limit over `h`.
pub fn substeps_for(h: f64, rate: f64, cfl: f64, min_substeps: usize) -> usize {
    let need = if rate > 0.0 { (h * rate / cfl).ceil() as usize } else { 1 };
    need.max(min_substeps).max(1)
}

/// Intermediate fields of one inner step.
#[derive(Debug, Clone)]
pub struct InnerStep {
    pub advected: ScalarField,
    pub rho: ScalarField,
}

/// Transport then diffuse, checking CFL and positivity.
pub fn inner_step(
    rho: &ScalarField,
    vf: &FaceFluxes,
    chi_value: f64,
    domain: &ChannelDomain,
    heat: &HeatSemigroup,
    epsilon: f64,
    dt: f64,
    cfl: f64,
) -> Result<InnerStep> {
    let rate = outflow_rate(domain, vf, chi_value);
    let courant = dt * rate;
    if courant > cfl * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            courant,
            limit: cfl,
        });
    }
    let (nx, ny) = (domain.nx(), domain.ny());
    let a = domain.cell_area();
    let flux = upwind_mass_fluxes(rho, vf, chi_value);
    let mut adv = rho.data.clone();
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let ip = (i + 1) % nx;
            let net = flux.x[j * nx + ip] - flux.x[c] + flux.y[(j + 1) * nx + i] - flux.y[c];
            adv[c] -= dt * net / a;
        }
    }
    if let Some((c, v)) = adv.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Scheme(format!(
            "non-positive density {v:e} in cell {c} after transport"
        )));
    }
    let advected = ScalarField {
        nx,
        ny,
        data: adv,
    };
    let out = heat.apply(&advected, epsilon * dt);
    if let Some((c, v)) = out.data.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Scheme(format!(
            "non-positive density {v:e} in cell {c} after diffusion"
        )));
    }
    Ok(InnerStep {
        advected,
        rho: out,
    })
}

/// One inner step of `d_t rho + div(rho [u]_R) = eps Lap rho`.
pub fn advance_density(
    state: &DensityState,
    u_frozen: &VelocityCoeffs,
    space: &GalerkinSpace,
    params: &SimParams,
    dt_inner: f64,
    cfl: f64,
) -> Result<DensityState> {
    if !(dt_inner > 0.0) || dt_inner > params.h * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "inner step {dt_inner} must lie in (0, h={}]",
            params.h
        )));
    }
    let dom = space.domain();
    let (_, chi_value) = cutoff_velocity(u_frozen, params.r_cut);
    let vf = space.face_fluxes(u_frozen)?;
    let heat = HeatSemigroup::new(dom);
    let step = inner_step(&state.rho, &vf, chi_value, dom, &heat, params.epsilon, dt_inner, cfl)?;
    Ok(DensityState {
        rho: step.rho,
        time: state.time + dt_inner,
    })
}

/// Upwind pressure dissipation
/// `D = -sum_f F^vel_f [rho_up (P'_R - P'_L) - (p_R - p_L)] >= 0`
/// where `F^vel_f` is the cut-off face velocity flux.
pub fn upwind_pressure_dissipation(
    rho: &ScalarField,
    vf: &FaceFluxes,
    chi_value: f64,
    params: &SimParams,
) -> f64 {
    let (nx, ny) = (rho.nx, rho.ny);
    let pp: Vec<f64> = rho.data.iter().map(|&r| params.potential_prime(r)).collect();
    let p: Vec<f64> = rho.data.iter().map(|&r| params.p_delta(r)).collect();
    let term = |f: f64, l: usize, r: usize| {
        let up = if f >= 0.0 { rho.data[l] } else { rho.data[r] };
        -f * (up * (pp[r] - pp[l]) - (p[r] - p[l]))
    };
    let mut d = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let f = chi_value * vf.x[j * nx + i];
            if f != 0.0 {
                d += term(f, j * nx + (i + nx - 1) % nx, j * nx + i);
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let f = chi_value * vf.y[j * nx + i];
            if f != 0.0 {
                d += term(f, (j - 1) * nx + i, j * nx + i);
            }
        }
    }
    d
}

/// Maximum-principle envelope along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `min_n min(rho_min(n) - lower(n), upper(n) - rho_max(n))`.
    pub margin: f64,
}

/// Envelope `rho_min(0) exp(-int ||div[u]_R||_inf)` and its upper mirror.
///
/// `div_sup[n]` is the sup-norm of the velocity divergence (cell averages)
/// on the interval `(t_n, t_{n+1}]` of length `dt[n]`; `rho_min` and
/// `rho_max` have one more entry than `dt`.
pub fn density_envelope(rho_min: &[f64], rho_max: &[f64], div_sup: &[f64], dt: &[f64]) -> Envelope {
    let n = rho_min.len();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut integral = 0.0;
    let mut margin = f64::INFINITY;
    for k in 0..n {
        if k > 0 {
            integral += dt[k - 1] * div_sup[k - 1];
        }
        let lo = rho_min[0] * (-integral).exp();
        let hi = rho_max[0] * integral.exp();
        margin = margin.min(rho_min[k] - lo).min(hi - rho_max[k]);
        lower.push(lo);
        upper.push(hi);
    }
    Envelope {
        lower,
        upper,
        margin,
    }
}
