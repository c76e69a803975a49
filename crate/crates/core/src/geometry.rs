//! Channel geometry, quadrature, and the zero-normal-trace velocity spaces.
//!
//! The domain is `(0, lx) x (0, 1)`, periodic in `x`, with solid walls at
//! `y = 0` and `y = 1`. Cells are indexed row-major with `i` (the periodic
//! direction) running fastest. Interior integrals use the midpoint rule on
//! cell centers; wall integrals use the periodic trapezoid rule on nodes
//! placed below/above each cell center.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform channel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDomain {
    lx: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl ChannelDomain {
    pub fn new(lx: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0) || !lx.is_finite() {
            return Err(Error::Config(format!("lx must be positive, got {lx}")));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::Config(format!(
                "grid needs nx, ny >= 4, got nx={nx}, ny={ny}"
            )));
        }
        Ok(Self {
            lx,
            nx,
            ny,
            dx: lx / nx as f64,
            dy: 1.0 / ny as f64,
        })
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
    pub fn area(&self) -> f64 {
        self.lx
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let i = cell % self.nx;
        let j = cell / self.nx;
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    /// Number of wall quadrature nodes (both walls).
    pub fn wall_nodes(&self) -> usize {
        2 * self.nx
    }

    /// Wall node `w`: bottom wall for `w < nx`, top wall otherwise.
    /// Returns `(x, y, n_y)` where `n_y` is the outward normal's y-component.
    pub fn wall_node(&self, w: usize) -> (f64, f64, f64) {
        let i = w % self.nx;
        let x = (i as f64 + 0.5) * self.dx;
        if w < self.nx {
            (x, 0.0, -1.0)
        } else {
            (x, 1.0, 1.0)
        }
    }

    pub fn wall_weight(&self) -> f64 {
        self.dx
    }

    pub fn interior_weights(&self) -> Vec<f64> {
        vec![self.cell_area(); self.cells()]
    }

    pub fn boundary_weights(&self) -> Vec<f64> {
        vec![self.dx; self.wall_nodes()]
    }

    pub fn scalar_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let data = (0..self.cells())
            .map(|c| {
                let (x, y) = self.cell_center(c);
                f(x, y)
            })
            .collect();
        ScalarField {
            nx: self.nx,
            ny: self.ny,
            data,
        }
    }

    pub fn vector_from_fn(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> VectorField {
        let mut out = VectorField::zeros(self.nx, self.ny);
        for c in 0..self.cells() {
            let (x, y) = self.cell_center(c);
            let v = f(x, y);
            out.x[c] = v[0];
            out.y[c] = v[1];
        }
        out
    }

    pub fn wall_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> WallField {
        let data = (0..self.wall_nodes())
            .map(|w| {
                let (x, y, _) = self.wall_node(w);
                f(x, y)
            })
            .collect();
        WallField { nx: self.nx, data }
    }

    fn check_scalar(&self, f: &ScalarField) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny || f.data.len() != self.cells() {
            return Err(Error::Shape(format!(
                "field is {}x{}, domain is {}x{}",
                f.nx, f.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub(crate) fn check_vector(&self, f: &VectorField) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny || f.x.len() != self.cells() || f.y.len() != self.cells() {
            return Err(Error::Shape(format!(
                "vector field is {}x{}, domain is {}x{}",
                f.nx, f.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    fn check_wall(&self, f: &WallField) -> Result<()> {
        if f.nx != self.nx || f.data.len() != self.wall_nodes() {
            return Err(Error::Shape(format!(
                "wall field has {} nodes, domain has {}",
                f.data.len(),
                self.wall_nodes()
            )));
        }
        Ok(())
    }

    /// Midpoint quadrature of a cell-centered field over the channel.
    pub fn integrate_interior(&self, f: &ScalarField) -> Result<f64> {
        self.check_scalar(f)?;
        Ok(f.data.iter().sum::<f64>() * self.cell_area())
    }

    /// Trapezoid quadrature of `f * g` over both walls.
    pub fn integrate_boundary(&self, f: &WallField, g: &WallField) -> Result<f64> {
        self.check_wall(f)?;
        self.check_wall(g)?;
        Ok(f.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<f64>() * self.dx)
    }
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Self {
            nx,
            ny,
            data: vec![value; nx * ny],
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Cell-centered 2-vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub nx: usize,
    pub ny: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            x: vec![0.0; nx * ny],
            y: vec![0.0; nx * ny],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn at(&self, c: usize) -> [f64; 2] {
        [self.x[c], self.y[c]]
    }
}

/// Cell-centered velocity gradient, `g[a][b] = d u_a / d x_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub nx: usize,
    pub ny: usize,
    pub g: [[Vec<f64>; 2]; 2],
}

impl GradientField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        let z = || vec![0.0; nx * ny];
        Self {
            nx,
            ny,
            g: [[z(), z()], [z(), z()]],
        }
    }

    pub fn at(&self, c: usize) -> [[f64; 2]; 2] {
        [
            [self.g[0][0][c], self.g[0][1][c]],
            [self.g[1][0][c], self.g[1][1][c]],
        ]
    }
}

/// Scalar values on the wall nodes (bottom wall first).
#[derive(Debug, Clone, PartialEq)]
pub struct WallField {
    pub nx: usize,
    pub data: Vec<f64>,
}

impl WallField {
    pub fn constant(nx: usize, value: f64) -> Self {
        Self {
            nx,
            data: vec![value; 2 * nx],
        }
    }
}

/// Velocity trace on the walls. The normal part is zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub tangential: WallField,
    pub normal: WallField,
}

/// Coefficients of a velocity field in a [`GalerkinSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCoeffs(pub Vec<f64>);

impl VelocityCoeffs {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn unit(m: usize, j: usize) -> Self {
        let mut v = vec![0.0; m];
        v[j] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `||v||_{V_m}`; the basis is L2-orthonormal so this is the L2 norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }
}

/// Which velocity component a basis function occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Tangential,
    Normal,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::Tangential => 0,
            Component::Normal => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

/// `sin(pi t)`, exact at integers.
fn sin_pi(t: f64) -> f64 {
    let r = t - 2.0 * (t / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else {
        (PI * r).sin()
    }
}

/// `cos(pi t)`, exact at integers and half-integers.
fn cos_pi(t: f64) -> f64 {
    let r = t - 2.0 * (t / 2.0).round();
    if r == 0.0 {
        1.0
    } else if r.abs() == 1.0 {
        -1.0
    } else if r.abs() == 0.5 {
        0.0
    } else {
        (PI * r).cos()
    }
}

/// One separable basis function `X_p(x) Y_n(y) e_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub component: Component,
    pub parity: Parity,
    pub xwave: usize,
    pub ywave: usize,
    /// Sine profile in `y` for both components (zero full trace).
    pub interior: bool,
}

/// Value and derivatives of the active component of a mode at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModeValue {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dyy: f64,
}

impl Mode {
    fn y_is_sine(&self) -> bool {
        self.interior || self.component == Component::Normal
    }

    fn x_parts(&self, lx: f64, x: f64) -> (f64, f64, f64) {
        if self.xwave == 0 {
            return (1.0 / lx.sqrt(), 0.0, 0.0);
        }
        let c = (2.0 / lx).sqrt();
        let k = 2.0 * PI * self.xwave as f64 / lx;
        // Argument in units of pi so periodic nodes are exact.
        let t = 2.0 * self.xwave as f64 * x / lx;
        let (s, co) = (sin_pi(t), cos_pi(t));
        match self.parity {
            Parity::Cos => (c * co, -c * k * s, -c * k * k * co),
            Parity::Sin => (c * s, c * k * co, -c * k * k * s),
        }
    }

    fn y_parts(&self, y: f64) -> (f64, f64, f64) {
        let n = self.ywave as f64;
        let k = PI * n;
        let r2 = std::f64::consts::SQRT_2;
        if self.y_is_sine() {
            let s = sin_pi(n * y);
            let c = cos_pi(n * y);
            (r2 * s, r2 * k * c, -r2 * k * k * s)
        } else if self.ywave == 0 {
            (1.0, 0.0, 0.0)
        } else {
            let s = sin_pi(n * y);
            let c = cos_pi(n * y);
            (r2 * c, -r2 * k * s, -r2 * k * k * c)
        }
    }

    pub fn eval(&self, lx: f64, x: f64, y: f64) -> ModeValue {
        let (xv, xd, xdd) = self.x_parts(lx, x);
        let (yv, yd, ydd) = self.y_parts(y);
        ModeValue {
            value: xv * yv,
            dx: xd * yv,
            dy: xv * yd,
            dxx: xdd * yv,
            dyy: xv * ydd,
        }
    }

    /// `int_a^b X_p(x) dx`.
    pub fn x_integral(&self, lx: f64, a: f64, b: f64) -> f64 {
        if self.xwave == 0 {
            return (b - a) / lx.sqrt();
        }
        let c = (2.0 / lx).sqrt();
        let k = 2.0 * PI * self.xwave as f64 / lx;
        let ta = 2.0 * self.xwave as f64 * a / lx;
        let tb = 2.0 * self.xwave as f64 * b / lx;
        match self.parity {
            Parity::Cos => c * (sin_pi(tb) - sin_pi(ta)) / k,
            Parity::Sin => c * (cos_pi(ta) - cos_pi(tb)) / k,
        }
    }

    /// `int_a^b Y_n(y) dy`.
    pub fn y_integral(&self, a: f64, b: f64) -> f64 {
        let n = self.ywave as f64;
        let r2 = std::f64::consts::SQRT_2;
        if self.y_is_sine() {
            r2 * (cos_pi(n * a) - cos_pi(n * b)) / (PI * n)
        } else if self.ywave == 0 {
            b - a
        } else {
            r2 * (sin_pi(n * b) - sin_pi(n * a)) / (PI * n)
        }
    }

    fn order_key(&self) -> (usize, Component, Parity, usize) {
        (self.xwave + self.ywave, self.component, self.parity, self.xwave)
    }
}

/// Enumerate the first `m` modes representable with `x`-wavenumber at most
/// `pmax` and `y`-wavenumber at most `nmax`, in the canonical order: total
/// frequency, then component, then cosine-before-sine, then `p`. Returns
/// fewer than `m` modes if the representable family is exhausted.
pub fn enumerate_modes(m: usize, interior: bool, pmax: usize, nmax: usize) -> Vec<Mode> {
    let mut out = Vec::with_capacity(m);
    for s in 0..=(pmax + nmax) {
        let mut shell = Vec::new();
        for component in [Component::Tangential, Component::Normal] {
            for parity in [Parity::Cos, Parity::Sin] {
                for p in 0..=s.min(pmax) {
                    let n = s - p;
                    if n > nmax || (parity == Parity::Sin && p == 0) {
                        continue;
                    }
                    let sine_y = interior || component == Component::Normal;
                    if sine_y && n == 0 {
                        continue;
                    }
                    shell.push(Mode {
                        component,
                        parity,
                        xwave: p,
                        ywave: n,
                        interior,
                    });
                }
            }
        }
        shell.sort_by_key(|md| md.order_key());
        for md in shell {
            if out.len() == m {
                return out;
            }
            out.push(md);
        }
    }
    out
}

/// Face-integrated normal velocity: `x[j*nx+i]` through the face at
/// `x = i*dx` of row `j`, `y[j*nx+i]` through the face at `y = j*dy` of
/// column `i` (`j = 0..=ny`, wall faces are exactly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// The finite-dimensional velocity space: orthonormal, zero normal trace.
#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    domain: ChannelDomain,
    modes: Vec<Mode>,
    interior_only: bool,
    value: Vec<Vec<f64>>,
    grad_x: Vec<Vec<f64>>,
    grad_y: Vec<Vec<f64>>,
    lap: Vec<Vec<f64>>,
    wall_value: Vec<Vec<f64>>,
    wall_dx: Vec<Vec<f64>>,
    wall_dy: Vec<Vec<f64>>,
    xface: Vec<Vec<f64>>,
    yface: Vec<Vec<f64>>,
    cell_div: Vec<Vec<f64>>,
}

impl GalerkinSpace {
    pub fn new(domain: &ChannelDomain, m: usize, interior_only: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("Galerkin dimension m must be >= 1".into()));
        }
        let pmax = domain.nx() / 2 - 1;
        let nmax = domain.ny() - 1;
        let modes = enumerate_modes(m, interior_only, pmax, nmax);
        if modes.len() < m {
            return Err(Error::Config(format!(
                "m={m} too large for a {}x{} grid ({} representable modes)",
                domain.nx(),
                domain.ny(),
                modes.len()
            )));
        }
        let lx = domain.lx();
        let cells = domain.cells();
        let (nx, ny) = (domain.nx(), domain.ny());
        let (dx, dy) = (domain.dx(), domain.dy());
        let mut space = Self {
            domain: domain.clone(),
            modes: modes.clone(),
            interior_only,
            value: Vec::with_capacity(m),
            grad_x: Vec::with_capacity(m),
            grad_y: Vec::with_capacity(m),
            lap: Vec::with_capacity(m),
            wall_value: Vec::with_capacity(m),
            wall_dx: Vec::with_capacity(m),
            wall_dy: Vec::with_capacity(m),
            xface: Vec::with_capacity(m),
            yface: Vec::with_capacity(m),
            cell_div: Vec::with_capacity(m),
        };
        for md in &modes {
            let mut v = vec![0.0; cells];
            let mut gx = vec![0.0; cells];
            let mut gy = vec![0.0; cells];
            let mut lp = vec![0.0; cells];
            for c in 0..cells {
                let (x, y) = domain.cell_center(c);
                let e = md.eval(lx, x, y);
                v[c] = e.value;
                gx[c] = e.dx;
                gy[c] = e.dy;
                lp[c] = e.dxx + e.dyy;
            }
            let mut wv = vec![0.0; domain.wall_nodes()];
            let mut wdx = vec![0.0; domain.wall_nodes()];
            let mut wdy = vec![0.0; domain.wall_nodes()];
            for w in 0..domain.wall_nodes() {
                let (x, y, _) = domain.wall_node(w);
                let e = md.eval(lx, x, y);
                wv[w] = e.value;
                wdx[w] = e.dx;
                wdy[w] = e.dy;
            }
            let mut xf = vec![0.0; cells];
            let mut yf = vec![0.0; nx * (ny + 1)];
            match md.component {
                Component::Tangential => {
                    for j in 0..ny {
                        let yint = md.y_integral(j as f64 * dy, (j + 1) as f64 * dy);
                        for i in 0..nx {
                            let (xv, _, _) = md.x_parts(lx, i as f64 * dx);
                            xf[j * nx + i] = xv * yint;
                        }
                    }
                }
                Component::Normal => {
                    for j in 0..=ny {
                        let (yv, _, _) = md.y_parts(j as f64 * dy);
                        for i in 0..nx {
                            let xint = md.x_integral(lx, i as f64 * dx, (i + 1) as f64 * dx);
                            yf[j * nx + i] = xint * yv;
                        }
                    }
                }
            }
            let mut cd = vec![0.0; cells];
            for j in 0..ny {
                for i in 0..nx {
                    let ip = (i + 1) % nx;
                    cd[j * nx + i] = xf[j * nx + ip] - xf[j * nx + i] + yf[(j + 1) * nx + i]
                        - yf[j * nx + i];
                }
            }
            space.cell_div.push(cd);
            space.value.push(v);
            space.grad_x.push(gx);
            space.grad_y.push(gy);
            space.lap.push(lp);
            space.wall_value.push(wv);
            space.wall_dx.push(wdx);
            space.wall_dy.push(wdy);
            space.xface.push(xf);
            space.yface.push(yf);
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }
    pub fn domain(&self) -> &ChannelDomain {
        &self.domain
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn interior_only(&self) -> bool {
        self.interior_only
    }
    pub fn component(&self, j: usize) -> Component {
        self.modes[j].component
    }
    pub fn values(&self, j: usize) -> &[f64] {
        &self.value[j]
    }
    pub fn grad_x(&self, j: usize) -> &[f64] {
        &self.grad_x[j]
    }
    pub fn grad_y(&self, j: usize) -> &[f64] {
        &self.grad_y[j]
    }
    pub fn laplacian(&self, j: usize) -> &[f64] {
        &self.lap[j]
    }
    /// Active-component values at wall nodes.
    pub fn wall_values(&self, j: usize) -> &[f64] {
        &self.wall_value[j]
    }
    pub fn wall_grad_x(&self, j: usize) -> &[f64] {
        &self.wall_dx[j]
    }
    pub fn wall_grad_y(&self, j: usize) -> &[f64] {
        &self.wall_dy[j]
    }
    pub fn xface_fluxes(&self, j: usize) -> &[f64] {
        &self.xface[j]
    }
    pub fn yface_fluxes(&self, j: usize) -> &[f64] {
        &self.yface[j]
    }
    /// Exact `int_cell div phi_j` (net outward face flux) per cell.
    pub fn cell_divergence(&self, j: usize) -> &[f64] {
        &self.cell_div[j]
    }

    fn check_coeffs(&self, c: &VelocityCoeffs) -> Result<()> {
        if c.len() != self.dim() {
            return Err(Error::Shape(format!(
                "coefficient vector has length {}, space dimension is {}",
                c.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Quadrature Gram matrix `int phi_i . phi_j`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        let a = self.domain.cell_area();
        let mut g = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                if self.component(i) == self.component(j) {
                    g[i][j] = self.value[i]
                        .iter()
                        .zip(&self.value[j])
                        .map(|(p, q)| p * q)
                        .sum::<f64>()
                        * a;
                }
            }
        }
        g
    }

    /// Velocity at cell centers.
    pub fn evaluate(&self, c: &VelocityCoeffs) -> Result<VectorField> {
        self.check_coeffs(c)?;
        let mut out = VectorField::zeros(self.domain.nx(), self.domain.ny());
        for (j, &cj) in c.0.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            let dst = match self.component(j) {
                Component::Tangential => &mut out.x,
                Component::Normal => &mut out.y,
            };
            for (d, v) in dst.iter_mut().zip(&self.value[j]) {
                *d += cj * v;
            }
        }
        Ok(out)
    }

    pub fn gradient(&self, c: &VelocityCoeffs) -> Result<GradientField> {
        self.check_coeffs(c)?;
        let mut out = GradientField::zeros(self.domain.nx(), self.domain.ny());
        for (j, &cj) in c.0.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            let a = self.component(j).index();
            for (d, v) in out.g[a][0].iter_mut().zip(&self.grad_x[j]) {
                *d += cj * v;
            }
            for (d, v) in out.g[a][1].iter_mut().zip(&self.grad_y[j]) {
                *d += cj * v;
            }
        }
        Ok(out)
    }

    pub fn laplacian_field(&self, c: &VelocityCoeffs) -> Result<VectorField> {
        self.check_coeffs(c)?;
        let mut out = VectorField::zeros(self.domain.nx(), self.domain.ny());
        for (j, &cj) in c.0.iter().enumerate() {
            let dst = match self.component(j) {
                Component::Tangential => &mut out.x,
                Component::Normal => &mut out.y,
            };
            for (d, v) in dst.iter_mut().zip(&self.lap[j]) {
                *d += cj * v;
            }
        }
        Ok(out)
    }

    /// Cell-center divergence of the field with coefficients `c`.
    pub fn divergence(&self, c: &VelocityCoeffs) -> Result<ScalarField> {
        let g = self.gradient(c)?;
        let data = g.g[0][0].iter().zip(&g.g[1][1]).map(|(a, b)| a + b).collect();
        Ok(ScalarField {
            nx: self.domain.nx(),
            ny: self.domain.ny(),
            data,
        })
    }

    /// `c_j = int field . phi_j` by midpoint quadrature.
    pub fn project(&self, field: &VectorField) -> Result<VelocityCoeffs> {
        self.domain.check_vector(field)?;
        let a = self.domain.cell_area();
        let coeffs = (0..self.dim())
            .map(|j| {
                let src = match self.component(j) {
                    Component::Tangential => &field.x,
                    Component::Normal => &field.y,
                };
                src.iter().zip(&self.value[j]).map(|(f, p)| f * p).sum::<f64>() * a
            })
            .collect();
        Ok(VelocityCoeffs(coeffs))
    }

    /// Tangential velocity at the wall nodes; the normal part is zero.
    pub fn trace(&self, c: &VelocityCoeffs) -> Result<BoundaryTrace> {
        self.check_coeffs(c)?;
        let nx = self.domain.nx();
        let mut tangential = WallField::constant(nx, 0.0);
        for (j, &cj) in c.0.iter().enumerate() {
            if self.component(j) == Component::Tangential {
                for (d, v) in tangential.data.iter_mut().zip(&self.wall_value[j]) {
                    *d += cj * v;
                }
            }
        }
        Ok(BoundaryTrace {
            tangential,
            normal: WallField::constant(nx, 0.0),
        })
    }

    /// Wall-node velocity gradient `[[du1/dx, du1/dy], [du2/dx, du2/dy]]`.
    pub fn wall_gradient(&self, c: &VelocityCoeffs) -> Result<Vec<[[f64; 2]; 2]>> {
        self.check_coeffs(c)?;
        let mut out = vec![[[0.0; 2]; 2]; self.domain.wall_nodes()];
        for (j, &cj) in c.0.iter().enumerate() {
            let a = self.component(j).index();
            for (w, g) in out.iter_mut().enumerate() {
                g[a][0] += cj * self.wall_dx[j][w];
                g[a][1] += cj * self.wall_dy[j][w];
            }
        }
        Ok(out)
    }

    /// Face-integrated normal velocity of the field `c`.
    pub fn face_fluxes(&self, c: &VelocityCoeffs) -> Result<FaceFluxes> {
        self.check_coeffs(c)?;
        let (nx, ny) = (self.domain.nx(), self.domain.ny());
        let mut x = vec![0.0; nx * ny];
        let mut y = vec![0.0; nx * (ny + 1)];
        for (j, &cj) in c.0.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            match self.component(j) {
                Component::Tangential => {
                    for (d, v) in x.iter_mut().zip(&self.xface[j]) {
                        *d += cj * v;
                    }
                }
                Component::Normal => {
                    for (d, v) in y.iter_mut().zip(&self.yface[j]) {
                        *d += cj * v;
                    }
                }
            }
        }
        Ok(FaceFluxes { x, y })
    }

    /// Orthonormal basis (as coefficient vectors) of the zero-trace
    /// subspace `{ v in V_m : v = 0 on both walls }`.
    pub fn zero_trace_basis(&self) -> Vec<VelocityCoeffs> {
        let m = self.dim();
        let nw = self.domain.wall_nodes();
        let mut tr = nalgebra::DMatrix::<f64>::zeros(nw.max(m), m);
        for j in 0..m {
            if self.component(j) == Component::Tangential {
                for w in 0..nw {
                    tr[(w, j)] = self.wall_value[j][w];
                }
            }
        }
        let svd = tr.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = 1e-10 * smax.max(1.0);
        // The matrix has at least m rows, so V^T is square and complete.
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s <= tol)
            .map(|(r, _)| VelocityCoeffs(vt.row(r).iter().copied().collect()))
            .collect()
    }
}
