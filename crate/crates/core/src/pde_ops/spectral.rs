//! Fourier multipliers on a doubly periodic grid: double Riesz transforms
//! `R_ij`, inverse divergence `A_j = d_j Lap^{-1}` and derivatives.
//!
//! The zero mode is mapped to zero. On even-length axes the Nyquist
//! frequency has no real antisymmetric partner, so it is projected out as
//! well; on odd grids all identities hold for arbitrary fields.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{ChannelDomain, ScalarField};

/// Real field on an `n[0] x n[1]` periodic grid of side lengths `len`,
/// stored row-major (`j * n[0] + i`, axis 0 fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub n: [usize; 2],
    pub len: [f64; 2],
    pub values: Vec<f64>,
}

/// Boundary parity used when extending a channel field across the walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reflection {
    Even,
    Odd,
}

impl SpectralField {
    pub fn new(n: [usize; 2], len: [f64; 2], values: Vec<f64>) -> Result<Self> {
        if n[0] == 0 || n[1] == 0 || values.len() != n[0] * n[1] {
            return Err(Error::Shape(format!(
                "spectral field needs {}x{} values, got {}",
                n[0],
                n[1],
                values.len()
            )));
        }
        if !(len[0] > 0.0 && len[1] > 0.0) {
            return Err(Error::Config("periodic lengths must be positive".into()));
        }
        Ok(Self { n, len, values })
    }

    pub fn from_fn(n: [usize; 2], len: [f64; 2], f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut v = Vec::with_capacity(n[0] * n[1]);
        for j in 0..n[1] {
            for i in 0..n[0] {
                v.push(f(i as f64 * len[0] / n[0] as f64, j as f64 * len[1] / n[1] as f64));
            }
        }
        Self::new(n, len, v)
    }

    /// Reflect a channel field across `y = 1` onto the torus `(0,Lx) x (0,2)`.
    pub fn from_channel(domain: &ChannelDomain, f: &ScalarField, parity: Reflection) -> Result<Self> {
        let (nx, ny) = (domain.nx(), domain.ny());
        if f.data.len() != nx * ny {
            return Err(Error::Shape("channel field does not match the domain".into()));
        }
        let sign = match parity {
            Reflection::Even => 1.0,
            Reflection::Odd => -1.0,
        };
        let mut v = f.data.clone();
        for j in (0..ny).rev() {
            v.extend(f.data[j * nx..(j + 1) * nx].iter().map(|x| sign * x));
        }
        Self::new([nx, 2 * ny], [domain.lx(), 2.0], v)
    }

    /// Restrict a reflected field back to the channel rows.
    pub fn to_channel(&self, domain: &ChannelDomain) -> ScalarField {
        let (nx, ny) = (domain.nx(), domain.ny());
        ScalarField {
            nx,
            ny,
            data: self.values[..nx * ny].to_vec(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Midpoint-rule `int f g`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let w = self.len[0] * self.len[1] / self.values.len() as f64;
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * w
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn same_grid(&self, n: [usize; 2], len: [f64; 2], values: Vec<f64>) -> SpectralField {
        SpectralField { n, len, values }
    }

    /// Signed angular wavenumber of index `k` on `axis`, or `None` at Nyquist.
    fn wavenumber(&self, axis: usize, k: usize) -> Option<f64> {
        let n = self.n[axis];
        if n.is_multiple_of(2) && k == n / 2 {
            return None;
        }
        let s = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        Some(2.0 * PI * s / self.len[axis])
    }

    fn apply(&self, symbol: impl Fn(f64, f64) -> Complex64) -> SpectralField {
        let [n0, n1] = self.n;
        let mut planner = FftPlanner::<f64>::new();
        let mut c: Vec<Complex64> = self.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft2(&mut planner, &mut c, n0, n1, false);
        for j in 0..n1 {
            for i in 0..n0 {
                let idx = j * n0 + i;
                c[idx] = match (self.wavenumber(0, i), self.wavenumber(1, j)) {
                    (Some(a), Some(b)) if a != 0.0 || b != 0.0 => c[idx] * symbol(a, b),
                    _ => Complex64::new(0.0, 0.0),
                };
            }
        }
        fft2(&mut planner, &mut c, n0, n1, true);
        let scale = 1.0 / (n0 * n1) as f64;
        self.same_grid(self.n, self.len, c.iter().map(|z| z.re * scale).collect())
    }

    /// `R_ij f`, symbol `xi_i xi_j / |xi|^2`.
    pub fn riesz(&self, i: usize, j: usize) -> Result<SpectralField> {
        check_axis(i)?;
        check_axis(j)?;
        Ok(self.apply(|a, b| {
            let xi = [a, b];
            Complex64::new(xi[i] * xi[j] / (a * a + b * b), 0.0)
        }))
    }

    /// `A_j f`, symbol `-i xi_j / |xi|^2`.
    pub fn inverse_divergence(&self) -> [SpectralField; 2] {
        let comp = |j: usize| {
            self.apply(move |a, b| {
                let xi = [a, b];
                Complex64::new(0.0, -xi[j] / (a * a + b * b))
            })
        };
        [comp(0), comp(1)]
    }

    /// Spectral `d_axis f` (Nyquist and mean removed).
    pub fn derivative(&self, axis: usize) -> Result<SpectralField> {
        check_axis(axis)?;
        Ok(self.apply(move |a, b| Complex64::new(0.0, [a, b][axis])))
    }

    /// `f` with the mean and Nyquist modes removed.
    pub fn projected(&self) -> SpectralField {
        self.apply(|_, _| Complex64::new(1.0, 0.0))
    }
}

fn check_axis(a: usize) -> Result<()> {
    if a < 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("axis index must be 0 or 1, got {a}")))
    }
}

/// In-place 2D DFT (unnormalized in both directions).
pub(crate) fn fft2(planner: &mut FftPlanner<f64>, c: &mut [Complex64], n0: usize, n1: usize, inverse: bool) {
    let row = if inverse {
        planner.plan_fft_inverse(n0)
    } else {
        planner.plan_fft_forward(n0)
    };
    for r in c.chunks_mut(n0) {
        row.process(r);
    }
    let col = if inverse {
        planner.plan_fft_inverse(n1)
    } else {
        planner.plan_fft_forward(n1)
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); n1];
    for i in 0..n0 {
        for j in 0..n1 {
            buf[j] = c[j * n0 + i];
        }
        col.process(&mut buf);
        for j in 0..n1 {
            c[j * n0 + i] = buf[j];
        }
    }
}

/// Divergence of a vector spectral field.
pub fn spectral_divergence(v: &[SpectralField; 2]) -> Result<SpectralField> {
    let a = v[0].derivative(0)?;
    let b = v[1].derivative(1)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
    SpectralField::new(a.n, a.len, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: [usize; 2], seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n[0] * n[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
        SpectralField::new(n, [2.0, 1.5], v).unwrap()
    }

    #[test]
    fn riesz_of_plane_wave() {
        let n = [16, 12];
        let len = [2.0, 1.5];
        let (k0, k1) = (2.0 * PI * 3.0 / 2.0, 2.0 * PI * 2.0 / 1.5);
        let f = SpectralField::from_fn(n, len, |x, y| (k0 * x + k1 * y).cos()).unwrap();
        let k2 = k0 * k0 + k1 * k1;
        for (i, j, s) in [(0, 0, k0 * k0 / k2), (0, 1, k0 * k1 / k2), (1, 1, k1 * k1 / k2)] {
            let r = f.riesz(i, j).unwrap();
            let want = SpectralField::from_fn(n, len, |x, y| s * (k0 * x + k1 * y).cos()).unwrap();
            assert!(r.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn inverse_divergence_of_sine() {
        let n = [16, 12];
        let len = [2.0, 1.5];
        let (k0, k1) = (2.0 * PI / 2.0, 2.0 * PI * 2.0 / 1.5);
        let f = SpectralField::from_fn(n, len, |x, y| (k0 * x + k1 * y).sin()).unwrap();
        let a = f.inverse_divergence();
        let k2 = k0 * k0 + k1 * k1;
        for (j, kj) in [(0, k0), (1, k1)] {
            let want = SpectralField::from_fn(n, len, |x, y| -(kj / k2) * (k0 * x + k1 * y).cos()).unwrap();
            assert!(a[j].max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn identities_on_odd_grid() {
        let f = random([15, 11], 1);
        let g = random([15, 11], 2);
        let sum = {
            let a = f.riesz(0, 0).unwrap();
            let b = f.riesz(1, 1).unwrap();
            a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect::<Vec<_>>()
        };
        let m = f.mean();
        for (s, v) in sum.iter().zip(&f.values) {
            assert!((s - (v - m)).abs() < 1e-12);
        }
        let lhs = f.riesz(0, 1).unwrap().inner(&g);
        let rhs = f.inner(&g.riesz(0, 1).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        let a = f.inverse_divergence();
        let div = spectral_divergence(&a).unwrap();
        for (d, v) in div.values.iter().zip(&f.values) {
            assert!((d - (v - m)).abs() < 1e-12);
        }
        let d01 = a[1].derivative(0).unwrap();
        assert!(d01.max_abs_diff(&f.riesz(0, 1).unwrap()) < 1e-12);
    }

    #[test]
    fn channel_reflection_round_trip() {
        let d = ChannelDomain::new(2.0, 8, 4).unwrap();
        let f = d.scalar_from_fn(|x, y| x + y);
        let s = SpectralField::from_channel(&d, &f, Reflection::Odd).unwrap();
        assert_eq!(s.n, [8, 8]);
        assert!(s.mean().abs() < 1e-14);
        assert_eq!(s.to_channel(&d), f);
        assert_eq!(s.values[8 * 4], -s.values[8 * 3]);
    }
}
