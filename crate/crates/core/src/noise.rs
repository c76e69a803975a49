//! Truncated cylindrical Wiener process and the regularized noise
//! coefficients acting on the momentum.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constitutive::{chi, DualVector, MassOperator};
use crate::error::{Error, Result};
use crate::geometry::{Component, GalerkinSpace, ScalarField, VectorField, VelocityCoeffs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    /// `G_k = g_k sigma_k (c1 rho e_k + c2 q)`.
    LinearMomentum,
    /// `G_k = g_k sigma_k c1 rho e_k`.
    DensityOnly,
    Off,
}

impl NoiseFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseFamily::LinearMomentum => "linear-momentum",
            NoiseFamily::DensityOnly => "density-only",
            NoiseFamily::Off => "off",
        }
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-momentum" => Ok(NoiseFamily::LinearMomentum),
            "density-only" => Ok(NoiseFamily::DensityOnly),
            "off" => Ok(NoiseFamily::Off),
            other => Err(Error::Config(format!(
                "noise_family must be linear-momentum, density-only or off, got {other}"
            ))),
        }
    }
}

/// Retained modes, amplitudes and spatial profiles.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub amplitudes: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub epsilon: f64,
    profiles: Vec<Vec<f64>>,
    directions: Vec<usize>,
}

impl NoiseModel {
    pub fn new(
        space: &GalerkinSpace,
        family: NoiseFamily,
        k_modes: usize,
        g0: f64,
        c1: f64,
        c2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(g0 >= 0.0) || !g0.is_finite() {
            return Err(Error::Config(format!("noise_g0>=0 required, got {g0}")));
        }
        if !(0.0..=1.0).contains(&c1) || !(0.0..=1.0).contains(&c2) || c1 + c2 > 1.0 {
            return Err(Error::Config(format!(
                "noise_c1, noise_c2 in [0,1] with c1+c2<=1 required, got {c1}, {c2}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon>0 required, got {epsilon}")));
        }
        let k_modes = if family == NoiseFamily::Off { 0 } else { k_modes };
        let c2 = if family == NoiseFamily::DensityOnly { 0.0 } else { c2 };
        let dom = space.domain();
        let lx = dom.lx();
        let mut profiles = Vec::with_capacity(k_modes);
        let mut directions = Vec::with_capacity(k_modes);
        for k in 1..=k_modes {
            let (p, n) = mode_waves(k);
            profiles.push(
                (0..dom.cells())
                    .map(|c| {
                        let (x, y) = dom.cell_center(c);
                        (2.0 * std::f64::consts::PI * p as f64 * x / lx).cos()
                            * (std::f64::consts::PI * n as f64 * y).cos()
                    })
                    .collect(),
            );
            directions.push(if k % 2 == 1 { 0 } else { 1 });
        }
        let amplitudes = (1..=k_modes).map(|k| g0 / (k * k) as f64).collect();
        Ok(Self {
            family,
            amplitudes,
            c1,
            c2,
            epsilon,
            profiles,
            directions,
        })
    }

    pub fn off(space: &GalerkinSpace) -> Self {
        Self::new(space, NoiseFamily::Off, 0, 0.0, 0.0, 0.0, 1.0).expect("valid off model")
    }

    pub fn modes(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_off(&self) -> bool {
        self.modes() == 0 || self.amplitudes.iter().all(|g| *g == 0.0)
    }

    pub fn profile(&self, k: usize) -> &[f64] {
        &self.profiles[k]
    }

    /// Component index of `e_k` (0 = x, 1 = y) for zero-based `k`.
    pub fn direction(&self, k: usize) -> usize {
        self.directions[k]
    }

    /// `f_{k,eps} = g_k (1 + 1/eps)`, the pointwise bound on `F_{k,eps}`.
    pub fn bound(&self, k: usize) -> f64 {
        self.amplitudes[k] * (1.0 + 1.0 / self.epsilon)
    }
}

/// `(p_k, n_k)` wavenumbers of the one-based mode `k`.
pub fn mode_waves(k: usize) -> (usize, usize) {
    let j = (k - 1) / 2;
    (j % 3, j / 3)
}

/// `F_{k,eps}(rho, v)` per cell, for zero-based mode `k`.
pub fn regularized_velocity_coefficient(
    rho: &ScalarField,
    u: &VectorField,
    k: usize,
    model: &NoiseModel,
) -> Result<VectorField> {
    if let Some(v) = rho.data.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("density must be non-negative, found {v}")));
    }
    let mut out = VectorField::zeros(rho.nx, rho.ny);
    let gk = model.amplitudes[k];
    let dir = model.direction(k);
    let sig = model.profile(k);
    let eps = model.epsilon;
    for c in 0..rho.data.len() {
        let r = rho.data[c];
        if r <= 0.0 {
            continue;
        }
        let v = u.at(c);
        let cut = chi(eps / r - 1.0) * chi(v[0].hypot(v[1]) - 1.0 / eps);
        if cut == 0.0 {
            continue;
        }
        let s = cut * gk * sig[c];
        let mut f = [model.c2 * v[0], model.c2 * v[1]];
        f[dir] += model.c1;
        out.x[c] = s * f[0];
        out.y[c] = s * f[1];
    }
    Ok(out)
}

/// `G_{k,eps} = rho F_{k,eps}(rho, q/rho)` per cell.
pub fn evaluate_coefficient(
    rho: &ScalarField,
    u: &VectorField,
    k: usize,
    model: &NoiseModel,
) -> Result<VectorField> {
    let mut f = regularized_velocity_coefficient(rho, u, k, model)?;
    for (c, r) in rho.data.iter().enumerate() {
        f.x[c] *= r;
        f.y[c] *= r;
    }
    Ok(f)
}

/// `[G]^*_m` for a cell field.
pub fn dual_of(space: &GalerkinSpace, g: &VectorField) -> DualVector {
    let a = space.domain().cell_area();
    DualVector(
        (0..space.dim())
            .map(|j| {
                let src = match space.component(j) {
                    Component::Tangential => &g.x,
                    Component::Normal => &g.y,
                };
                src.iter().zip(space.values(j)).map(|(s, p)| s * p).sum::<f64>() * a
            })
            .collect(),
    )
}

/// Noise coefficients frozen at one state, as cell fields and duals.
#[derive(Debug, Clone)]
pub struct NoiseFrame {
    pub duals: Vec<DualVector>,
    /// `1/2 sum_k [G_k]^* . M^{-1} [G_k]^*`.
    pub correction: f64,
    /// `1/2 sum_k int rho |F_{k,eps}|^2`.
    pub upper: f64,
}

pub fn noise_frame(
    space: &GalerkinSpace,
    rho: &ScalarField,
    u: &VectorField,
    model: &NoiseModel,
    mass: &MassOperator,
) -> Result<NoiseFrame> {
    let a = space.domain().cell_area();
    let mut duals = Vec::with_capacity(model.modes());
    let mut correction = 0.0;
    let mut upper = 0.0;
    for k in 0..model.modes() {
        let f = regularized_velocity_coefficient(rho, u, k, model)?;
        let g = {
            let mut g = f.clone();
            for (c, r) in rho.data.iter().enumerate() {
                g.x[c] *= r;
                g.y[c] *= r;
            }
            g
        };
        let d = dual_of(space, &g);
        let w = mass.solve(&d)?;
        correction += 0.5 * d.pair(&w);
        upper += 0.5
            * rho
                .data
                .iter()
                .zip(f.x.iter().zip(&f.y))
                .map(|(r, (fx, fy))| r * (fx * fx + fy * fy))
                .sum::<f64>()
            * a;
        duals.push(d);
    }
    Ok(NoiseFrame {
        duals,
        correction,
        upper,
    })
}

/// `(c, upper)` with `0 <= c <= upper`.
pub fn ito_correction(
    space: &GalerkinSpace,
    rho: &ScalarField,
    v: &VelocityCoeffs,
    model: &NoiseModel,
) -> Result<(f64, f64)> {
    let mass = MassOperator::new(space, rho)?;
    let u = space.evaluate(v)?;
    let f = noise_frame(space, rho, &u, model, &mass)?;
    Ok((f.correction, f.upper))
}

/// Counter-based Wiener increments with dyadic Brownian-bridge refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub seed: u64,
    pub modes: usize,
    /// Step of the coarsest level.
    pub dt0: f64,
    /// Number of coarsest-level steps.
    pub steps0: usize,
    pub level: u32,
}

/// Standard normal keyed by `(seed, level, k, n)`.
fn keyed_normal(seed: u64, level: u32, k: usize, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | k as u64);
    rng.set_word_pos(4 * n as u128);
    let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl WienerPath {
    pub fn new(seed: u64, modes: usize, dt0: f64, steps0: usize) -> Self {
        Self {
            seed,
            modes,
            dt0,
            steps0,
            level: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt0 / (1u64 << self.level) as f64
    }

    pub fn horizon(&self) -> usize {
        self.steps0 << self.level
    }

    fn increment(&self, level: u32, k: usize, n: usize) -> f64 {
        if level == 0 {
            return self.dt0.sqrt() * keyed_normal(self.seed, 0, k, n);
        }
        let parent = self.increment(level - 1, k, n / 2);
        let dt_parent = self.dt0 / (1u64 << (level - 1)) as f64;
        let left = 0.5 * parent + 0.5 * dt_parent.sqrt() * keyed_normal(self.seed, level, k, n / 2);
        if n.is_multiple_of(2) {
            left
        } else {
            parent - left
        }
    }

    /// The `K` increments of step `n` at this path's resolution.
    pub fn sample_increments(&self, n: usize) -> Result<Vec<f64>> {
        if n >= self.horizon() {
            return Err(Error::OutOfRange {
                index: n,
                horizon: self.horizon(),
            });
        }
        Ok((0..self.modes).map(|k| self.increment(self.level, k, n)).collect())
    }

    /// Increments of `count` consecutive fine steps starting at `n`.
    pub fn sample_block(&self, n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
        (n..n + count).map(|i| self.sample_increments(i)).collect()
    }
}

/// Same realization at `levels` more dyadic levels.
pub fn refine_brownian_path(path: &WienerPath, levels: u32) -> WienerPath {
    WienerPath {
        level: path.level + levels,
        ..path.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChannelDomain;

    fn space() -> GalerkinSpace {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        GalerkinSpace::new(&d, 12, false).unwrap()
    }

    #[test]
    fn increments_are_deterministic() {
        let p = WienerPath::new(7, 4, 0.01, 100);
        assert_eq!(p.sample_increments(5).unwrap(), p.sample_increments(5).unwrap());
        assert_ne!(p.sample_increments(5).unwrap(), p.sample_increments(6).unwrap());
        assert!(matches!(p.sample_increments(100), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn increments_have_brownian_moments() {
        let dt = 0.01;
        let p = WienerPath::new(11, 1, dt, 100_000);
        let xs: Vec<f64> = (0..100_000).map(|n| p.sample_increments(n).unwrap()[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (dt / n).sqrt());
        assert!((var / dt - 1.0).abs() < 0.05);
    }

    #[test]
    fn bridge_children_sum_to_parent() {
        let p = WienerPath::new(3, 3, 0.02, 50);
        let r = refine_brownian_path(&p, 1);
        for n in 0..50 {
            let a = p.sample_increments(n).unwrap();
            let b = r.sample_increments(2 * n).unwrap();
            let c = r.sample_increments(2 * n + 1).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k] - c[k]).abs() < 1e-14);
            }
        }
        let two = refine_brownian_path(&refine_brownian_path(&p, 1), 1);
        assert_eq!(two, refine_brownian_path(&p, 2));
        for n in 0..200 {
            assert_eq!(
                two.sample_increments(n).unwrap(),
                refine_brownian_path(&p, 2).sample_increments(n).unwrap()
            );
        }
    }

    #[test]
    fn bridge_conditional_variance() {
        // left child minus half the parent has variance dt_child / 2
        let p = WienerPath::new(5, 1, 0.04, 40_000);
        let r = refine_brownian_path(&p, 1);
        let n = 40_000;
        let mut s2 = 0.0;
        for i in 0..n {
            let a = p.sample_increments(i).unwrap()[0];
            let b = r.sample_increments(2 * i).unwrap()[0];
            s2 += (b - 0.5 * a).powi(2);
        }
        let var = s2 / n as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn regularization_examples() {
        let s = space();
        let m = NoiseModel::new(&s, NoiseFamily::LinearMomentum, 6, 1.0, 0.5, 0.5, 0.1).unwrap();
        let rho = ScalarField::constant(16, 8, 1.0);
        let u = s.domain().vector_from_fn(|x, y| [0.5 * x.sin(), 0.3 * y]);
        for k in 0..6 {
            let g = evaluate_coefficient(&rho, &u, k, &m).unwrap();
            let gk = m.amplitudes[k];
            for c in 0..rho.data.len() {
                let mut f = [0.5 * u.x[c], 0.5 * u.y[c]];
                f[m.direction(k)] += 0.5;
                let sig = m.profile(k)[c];
                assert!((g.x[c] - gk * sig * f[0]).abs() < 1e-15);
                assert!((g.y[c] - gk * sig * f[1]).abs() < 1e-15);
            }
        }
        let thin = ScalarField::constant(16, 8, 0.1 / 4.0);
        let g = evaluate_coefficient(&thin, &u, 0, &m).unwrap();
        assert!(g.x.iter().chain(&g.y).all(|v| *v == 0.0));
        let neg = ScalarField::constant(16, 8, -1.0);
        assert!(evaluate_coefficient(&neg, &u, 0, &m).is_err());
        assert!(NoiseModel::new(&s, NoiseFamily::LinearMomentum, 2, 1.0, 0.8, 0.8, 0.1).is_err());
    }

    #[test]
    fn ito_examples() {
        let s = space();
        let rho = ScalarField::constant(16, 8, 2.0);
        let v = VelocityCoeffs((0..12).map(|j| 0.1 * j as f64).collect());
        let off = NoiseModel::off(&s);
        assert_eq!(ito_correction(&s, &rho, &v, &off).unwrap(), (0.0, 0.0));
        // density-only, first mode: G = 2 g1 e_x (sigma_1 = 1) = 2 g1 sqrt(lx) phi_0.
        let m = NoiseModel::new(&s, NoiseFamily::DensityOnly, 1, 0.3, 1.0, 0.0, 0.1).unwrap();
        let (c, up) = ito_correction(&s, &rho, &v, &m).unwrap();
        let kappa = 0.3 * 2f64.sqrt();
        assert!((c - 0.5 * 2.0 * kappa * kappa).abs() < 1e-12);
        assert!(c <= up + 1e-12);
        let m = NoiseModel::new(&s, NoiseFamily::LinearMomentum, 8, 1.0, 0.5, 0.5, 0.1).unwrap();
        let rho = s.domain().scalar_from_fn(|x, y| 1.0 + 0.5 * x.sin() * y);
        let (c, up) = ito_correction(&s, &rho, &v, &m).unwrap();
        assert!(c >= 0.0 && c <= up + 1e-12);
    }
}
