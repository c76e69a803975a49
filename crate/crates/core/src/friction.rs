//! Smoothed friction potential `j_alpha`, wall functionals, and the
//! friction-law residuals.

use std::path::Path;

use crate::constitutive::{boundary_terms, viscous_stress, BoundaryMode, DualVector, SimParams};
use crate::error::{Error, Result};
use crate::geometry::{ChannelDomain, GalerkinSpace, VelocityCoeffs, WallField};

/// `j_alpha(v) = |v|` for `|v| > alpha`, else `|v|^2/(2 alpha) + alpha/2`.
pub fn j_alpha(v: [f64; 2], alpha: f64) -> f64 {
    let n = v[0].hypot(v[1]);
    if n > alpha {
        n
    } else {
        n * n / (2.0 * alpha) + alpha / 2.0
    }
}

pub fn grad_j_alpha(v: [f64; 2], alpha: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    let s = if n > alpha { n } else { alpha };
    [v[0] / s, v[1] / s]
}

/// Friction modulus and law on both walls.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionConfig {
    pub alpha: f64,
    pub g: WallField,
    pub mode: BoundaryMode,
}

impl FrictionConfig {
    pub fn uniform(domain: &ChannelDomain, alpha: f64, g: f64, mode: BoundaryMode) -> Self {
        Self {
            alpha,
            g: WallField::constant(domain.nx(), g),
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha>0 required, got {}", self.alpha)));
        }
        if let Some(bad) = self.g.data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("friction modulus must be finite and >= 0, found {bad}")));
        }
        if self.mode == BoundaryMode::Friction && self.g.data.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("friction mode needs g > 0 somewhere on the walls".into()));
        }
        Ok(())
    }
}

/// `-int g b(u) . phi_j` and the dissipation `int g b(u) . u`.
pub fn friction_functional(
    trace: &WallField,
    g: &WallField,
    alpha: f64,
    space: &GalerkinSpace,
    mode: BoundaryMode,
) -> Result<(DualVector, f64)> {
    boundary_terms(space, trace, g, alpha, mode)
}

/// Wall traction `(Tn)_tau` and tangential velocity at each wall node.
pub fn wall_traction(
    space: &GalerkinSpace,
    v: &VelocityCoeffs,
    params: &SimParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dom = space.domain();
    let grads = space.wall_gradient(v)?;
    let ut = space.trace(v)?.tangential.data;
    let traction = grads
        .iter()
        .enumerate()
        .map(|(w, g)| {
            let (_, _, ny) = dom.wall_node(w);
            // The pressure is normal, so only the shear stress acts along tau.
            viscous_stress(*g, params)[0][1] * ny
        })
        .collect();
    Ok((traction, ut))
}

/// `(r1, r2)`: violation of `|(Tn)_tau| <= g` and of the complementarity
/// `(Tn)_tau u_tau + g |u_tau| = 0`, as maxima over wall nodes.
pub fn friction_law_residual(
    space: &GalerkinSpace,
    v: &VelocityCoeffs,
    params: &SimParams,
    g: &WallField,
) -> Result<(f64, f64)> {
    let (traction, ut) = wall_traction(space, v, params)?;
    if g.data.len() != traction.len() {
        return Err(Error::Shape("friction modulus has wrong number of wall nodes".into()));
    }
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    for ((t, u), gw) in traction.iter().zip(&ut).zip(&g.data) {
        r1 = r1.max((t.abs() - gw).max(0.0));
        r2 = r2.max((t * u + gw * u.abs()).abs());
    }
    Ok((r1, r2))
}

/// Read a two-column `(arc length, value)` table and interpolate it
/// periodically onto the wall-node abscissae.
pub fn load_g_table(path: &Path, domain: &ChannelDomain) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if cols.len() != 2 {
            return Err(Error::Config(format!(
                "{}:{}: expected two columns",
                path.display(),
                ln + 1
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::Config(format!("{}:{}: bad number {s}", path.display(), ln + 1))
            })
        };
        rows.push((parse(cols[0])?, parse(cols[1])?));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: empty friction table", path.display())));
    }
    if rows.iter().any(|r| r.1 < 0.0) {
        return Err(Error::Config(format!("{}: negative friction modulus", path.display())));
    }
    let lx = domain.lx();
    for r in rows.iter_mut() {
        r.0 = r.0.rem_euclid(lx);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = rows.len();
    Ok((0..domain.nx())
        .map(|i| {
            let x = (i as f64 + 0.5) * domain.dx();
            // bracketing pair with periodic wrap
            let k = rows.partition_point(|r| r.0 <= x);
            let (lo, hi) = if k == 0 {
                ((rows[n - 1].0 - lx, rows[n - 1].1), rows[0])
            } else if k == n {
                (rows[n - 1], (rows[0].0 + lx, rows[0].1))
            } else {
                (rows[k - 1], rows[k])
            };
            if hi.0 - lo.0 <= 0.0 {
                lo.1
            } else {
                lo.1 + (hi.1 - lo.1) * (x - lo.0) / (hi.0 - lo.0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn j_alpha_examples() {
        let a = 0.1;
        assert!((j_alpha([0.2, 0.0], a) - 0.2).abs() < 1e-15);
        assert_eq!(j_alpha([0.0, 0.0], a), a / 2.0);
        assert!((j_alpha([a, 0.0], a) - a).abs() < 1e-15);
        assert_eq!(grad_j_alpha([0.2, 0.0], a), [1.0, 0.0]);
        assert!((grad_j_alpha([0.05, 0.0], a)[0] - 0.5).abs() < 1e-15);
        assert_eq!(grad_j_alpha([0.0, 0.0], a), [0.0, 0.0]);
    }

    #[test]
    fn j_alpha_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(1e-3..1.0);
            let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let w = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let gu = grad_j_alpha(u, a);
            assert!(gu[0] * u[0] + gu[1] * u[1] >= 0.0);
            assert!(gu[0].hypot(gu[1]) <= 1.0 + 1e-14);
            assert!((j_alpha(u, a) - u[0].hypot(u[1])).abs() <= a + 1e-15);
            let lhs = gu[0] * (w[0] - u[0]) + gu[1] * (w[1] - u[1]);
            assert!(lhs <= j_alpha(w, a) - j_alpha(u, a) + 1e-12);
        }
    }

    #[test]
    fn functional_examples() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let s = GalerkinSpace::new(&d, 12, false).unwrap();
        let g = WallField::constant(16, 1.0);
        let zero = WallField::constant(16, 0.0);
        let (f, diss) = friction_functional(&zero, &g, 0.1, &s, BoundaryMode::Friction).unwrap();
        assert!(f.norm() == 0.0 && diss == 0.0);
        let c = 0.7;
        let tr = WallField::constant(16, c);
        let (_, diss) = friction_functional(&tr, &g, 0.1, &s, BoundaryMode::Navier).unwrap();
        assert!((diss - 2.0 * 2.0 * c * c).abs() < 1e-12);
        let (_, diss) = friction_functional(&tr, &g, 0.01, &s, BoundaryMode::Friction).unwrap();
        assert!((diss - 2.0 * 2.0 * c).abs() <= 0.01 * 4.0);
        let neg = WallField::constant(16, -1.0);
        assert!(friction_functional(&tr, &neg, 0.1, &s, BoundaryMode::Friction).is_err());
    }

    #[test]
    fn residual_of_resting_walls() {
        let d = ChannelDomain::new(2.0, 16, 8).unwrap();
        let s = GalerkinSpace::new(&d, 12, false).unwrap();
        let g = WallField::constant(16, 1.0);
        let (r1, r2) =
            friction_law_residual(&s, &VelocityCoeffs::zeros(12), &SimParams::default(), &g).unwrap();
        assert_eq!((r1, r2), (0.0, 0.0));
    }

    #[test]
    fn table_interpolation() {
        let d = ChannelDomain::new(4.0, 4, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "# s g\n0 1\n2 3\n").unwrap();
        let g = load_g_table(&p, &d).unwrap();
        // nodes at 0.5, 1.5, 2.5, 3.5; periodic segment 2 -> 4 returns to 1
        let expect = [1.5, 2.5, 2.5, 1.5];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        std::fs::write(&p, "0 -1\n").unwrap();
        assert!(load_g_table(&p, &d).is_err());
    }
}
