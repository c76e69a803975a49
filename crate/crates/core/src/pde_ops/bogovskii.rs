//! Discrete Bogovskii operator on the channel.
//!
//! Unknowns live on a staggered grid: `u_x` on vertical faces `(i - 1/2, j)`
//! and `u_y` on horizontal faces `(i, j - 1/2)`. Both components vanish on
//! the walls (`u_y` by placement, `u_x` through a mirrored ghost). The
//! solution minimizes `||u||^2 + ||grad_h u||^2` subject to
//! `div_h u = f - mean(f)`. The problem decouples over the `x`-Fourier
//! index; each mode is solved through its Schur complement.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{ChannelDomain, ScalarField, VectorField};

/// Staggered solution together with diagnostics.
#[derive(Debug, Clone)]
pub struct BogovskiiSolution {
    /// `u_x` on vertical faces, `ny * nx`, face `i` is the left face of cell `i`.
    pub ux: Vec<f64>,
    /// `u_y` on horizontal faces, `(ny + 1) * nx`, rows `0` and `ny` are walls.
    pub uy: Vec<f64>,
    /// Cell-center interpolation.
    pub cell: VectorField,
    /// Mean removed from the right-hand side.
    pub mean: f64,
    /// `max |div_h u - (f - mean)|`.
    pub div_residual: f64,
    /// Largest velocity magnitude on the walls.
    pub wall_trace: f64,
    /// `||u||_{W^{1,p}} / ||f - mean||_{L^p}` in discrete norms.
    pub norm_ratio: f64,
}

/// Reusable per-mode factorizations.
pub struct BogovskiiSolver {
    domain: ChannelDomain,
    modes: Vec<ModeSystem>,
}

struct ModeSystem {
    /// `H^{-1} D^*`, `(2 ny - 1) x ny`.
    hinv_dstar: DMatrix<Complex64>,
    /// Factor of the (regularized) Schur complement.
    schur: nalgebra::Cholesky<Complex64, nalgebra::Dyn>,
}

impl BogovskiiSolver {
    pub fn new(domain: &ChannelDomain) -> Result<Self> {
        let (nx, ny) = (domain.nx(), domain.ny());
        let (dx, dy) = (domain.dx(), domain.dy());
        let nu = 2 * ny - 1;
        let mut modes = Vec::with_capacity(nx);
        for k in 0..nx {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / nx as f64;
            let d = (Complex64::new(theta.cos(), theta.sin()) - 1.0) / dx;
            let sx = d.norm_sqr();
            let iy2 = 1.0 / (dy * dy);
            let mut h = DMatrix::<Complex64>::zeros(nu, nu);
            // u_x block: rows 0..ny, wall ghosts give 2 u^2 / dy^2 at j = 0, ny-1
            for j in 0..ny {
                let mut diag = 1.0 + sx;
                diag += if j > 0 { iy2 } else { 2.0 * iy2 };
                diag += if j + 1 < ny { iy2 } else { 2.0 * iy2 };
                h[(j, j)] = Complex64::new(diag, 0.0);
                if j + 1 < ny {
                    h[(j, j + 1)] = Complex64::new(-iy2, 0.0);
                    h[(j + 1, j)] = Complex64::new(-iy2, 0.0);
                }
            }
            // u_y block: interior faces 1..ny-1 at offset ny - 1
            for r in 0..ny - 1 {
                let a = ny + r;
                h[(a, a)] = Complex64::new(1.0 + sx + 2.0 * iy2, 0.0);
                if r + 1 < ny - 1 {
                    h[(a, a + 1)] = Complex64::new(-iy2, 0.0);
                    h[(a + 1, a)] = Complex64::new(-iy2, 0.0);
                }
            }
            let mut dm = DMatrix::<Complex64>::zeros(ny, nu);
            for j in 0..ny {
                dm[(j, j)] = d;
                // (u_y[j+1] - u_y[j]) / dy with wall faces fixed at zero
                if j + 1 < ny {
                    dm[(j, ny + j)] = Complex64::new(1.0 / dy, 0.0);
                }
                if j > 0 {
                    dm[(j, ny + j - 1)] = Complex64::new(-1.0 / dy, 0.0);
                }
            }
            let hc = h
                .cholesky()
                .ok_or(Error::Solver { residual: f64::NAN, tolerance: 0.0 })?;
            let dstar = dm.adjoint();
            let hinv_dstar = hc.solve(&dstar);
            let mut s = &dm * &hinv_dstar;
            if k == 0 {
                // constant vector spans the kernel of D^*, right-hand side is orthogonal to it
                let w = Complex64::new(1.0 / ny as f64, 0.0);
                s.add_scalar_mut(w);
            }
            let schur = s
                .cholesky()
                .ok_or(Error::Solver { residual: f64::NAN, tolerance: 0.0 })?;
            modes.push(ModeSystem { hinv_dstar, schur });
        }
        Ok(Self {
            domain: domain.clone(),
            modes,
        })
    }

    pub fn domain(&self) -> &ChannelDomain {
        &self.domain
    }

    /// Solve `div_h u = f - mean(f)` with zero wall trace.
    pub fn solve(&self, f: &ScalarField, p_exponent: f64) -> Result<BogovskiiSolution> {
        let dom = &self.domain;
        let (nx, ny) = (dom.nx(), dom.ny());
        if f.data.len() != nx * ny {
            return Err(Error::Shape("Bogovskii right-hand side does not match the grid".into()));
        }
        if !(p_exponent >= 1.0) {
            return Err(Error::Config(format!("p_exponent must be >= 1, got {p_exponent}")));
        }
        if !f.is_finite() {
            return Err(Error::NonFinite("Bogovskii right-hand side".into()));
        }
        let mean = f.data.iter().sum::<f64>() / f.data.len() as f64;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nx);
        let inv = planner.plan_fft_inverse(nx);
        // rows of f - mean transformed in x: fh[j][k]
        let mut fh: Vec<Vec<Complex64>> = (0..ny)
            .map(|j| {
                let mut r: Vec<Complex64> =
                    f.data[j * nx..(j + 1) * nx].iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
                fwd.process(&mut r);
                r
            })
            .collect();
        // the k = 0 column is exactly mean-free only up to roundoff
        let col0: Complex64 = fh.iter().map(|r| r[0]).sum::<Complex64>() / ny as f64;
        for r in fh.iter_mut() {
            r[0] -= col0;
        }
        let mut uxh = vec![vec![Complex64::new(0.0, 0.0); nx]; ny];
        let mut uyh = vec![vec![Complex64::new(0.0, 0.0); nx]; ny + 1];
        for (k, sys) in self.modes.iter().enumerate() {
            let rhs = nalgebra::DVector::from_iterator(ny, (0..ny).map(|j| fh[j][k]));
            let lam = sys.schur.solve(&rhs);
            let u = &sys.hinv_dstar * lam;
            for j in 0..ny {
                uxh[j][k] = u[j];
            }
            for r in 0..ny - 1 {
                uyh[r + 1][k] = u[ny + r];
            }
        }
        let back = |rows: Vec<Vec<Complex64>>| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows.len() * nx);
            for mut r in rows {
                inv.process(&mut r);
                out.extend(r.iter().map(|z| z.re / nx as f64));
            }
            out
        };
        let ux = back(uxh);
        let uy = back(uyh);
        if ux.iter().chain(&uy).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Bogovskii solution".into()));
        }
        let (dx, dy) = (dom.dx(), dom.dy());
        let mut div_residual: f64 = 0.0;
        let mut cell = VectorField::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let ip = j * nx + (i + 1) % nx;
                let div = (ux[ip] - ux[c]) / dx + (uy[c + nx] - uy[c]) / dy;
                div_residual = div_residual.max((div - (f.data[c] - mean)).abs());
                cell.x[c] = 0.5 * (ux[c] + ux[ip]);
                cell.y[c] = 0.5 * (uy[c] + uy[c + nx]);
            }
        }
        if div_residual > 1e-8 {
            return Err(Error::Solver {
                residual: div_residual,
                tolerance: 1e-8,
            });
        }
        let wall_trace = (0..nx)
            .map(|i| uy[i].abs().max(uy[ny * nx + i].abs()))
            .fold(0.0, f64::max);
        let norm_ratio = {
            let num = w1p_norm(dom, &ux, &uy, p_exponent);
            let den = lp_norm(dom, f.data.iter().map(|v| v - mean), p_exponent);
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        };
        Ok(BogovskiiSolution {
            ux,
            uy,
            cell,
            mean,
            div_residual,
            wall_trace,
            norm_ratio,
        })
    }
}

/// One-shot convenience wrapper.
pub fn bogovskii_solve(domain: &ChannelDomain, f: &ScalarField, p_exponent: f64) -> Result<BogovskiiSolution> {
    BogovskiiSolver::new(domain)?.solve(f, p_exponent)
}

fn lp_norm(domain: &ChannelDomain, v: impl Iterator<Item = f64>, p: f64) -> f64 {
    (v.map(|x| x.abs().powf(p)).sum::<f64>() * domain.cell_area()).powf(1.0 / p)
}

/// Discrete `W^{1,p}` norm matching the quadratic form minimized above.
fn w1p_norm(domain: &ChannelDomain, ux: &[f64], uy: &[f64], p: f64) -> f64 {
    let (nx, ny) = (domain.nx(), domain.ny());
    let (dx, dy) = (domain.dx(), domain.dy());
    let a = domain.cell_area();
    let pw = |x: f64| x.abs().powf(p);
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let ip = j * nx + (i + 1) % nx;
            s += pw(ux[c]) + pw((ux[ip] - ux[c]) / dx);
            let below = if j > 0 { ux[c - nx] } else { -ux[c] };
            s += pw((ux[c] - below) / dy) * if j > 0 { 1.0 } else { 0.5 };
            if j + 1 == ny {
                s += 0.5 * pw(2.0 * ux[c] / dy);
            }
            s += pw((uy[c + nx] - uy[c]) / dy);
            if j > 0 {
                let f = j * nx + i;
                let fp = j * nx + (i + 1) % nx;
                s += pw(uy[f]) + pw((uy[fp] - uy[f]) / dx);
            }
        }
    }
    (s * a).powf(1.0 / p)
}
