//! Direct minimization of the Gross-Pitaevskii energy
//! `E_a(u) = ∫ |∇u|^2 + V u^2 - (a/2) u^4` on the unit L2-sphere.
//!
//! Fields live on a periodic grid with spectral derivatives. The default minimizer is
//! preconditioned Riemannian conjugate gradients on the sphere; a semi-implicit normalized
//! gradient flow is available as a fallback.

use crate::asymptotics::ScaleParameters;
use crate::error::{Error, Result};
use crate::field::{Field2D, Grid2D};
use crate::potential::{find_critical_point, PotentialSpec};
use crate::radial::TownesProfile;
use crate::spectral::Fourier2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// preconditioned Polak-Ribière conjugate gradients along great circles
    ConjugateGradient,
    /// backward Euler in `-Δ`, forward in `V u` and `a u^3`, then renormalize
    GradientFlow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpOptions {
    /// nodes per axis (even)
    pub nodes: usize,
    /// box half width
    pub radius: f64,
    pub method: Method,
    /// max-norm Euler-Lagrange residual at convergence
    pub el_tol: f64,
    /// relative energy decrease per step at convergence (flow only)
    pub e_tol: f64,
    pub max_iter: usize,
    pub dt0: f64,
    pub dt_floor: f64,
    /// allowed energy increase per flow step
    pub step_slack: f64,
    /// minimum number of cells across `ε/λ`
    pub min_cells: f64,
    /// relative margin below `a*`
    pub collapse_margin: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            nodes: 512,
            radius: 4.5,
            method: Method::ConjugateGradient,
            el_tol: 1e-9,
            e_tol: 1e-14,
            max_iter: 5000,
            dt0: 0.1,
            dt_floor: 1e-4,
            step_slack: 1e-12,
            min_cells: 12.0,
            collapse_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState2D {
    pub field: Field2D,
    pub a: f64,
    pub energy: f64,
    /// `e(a) - (a/2) ∫ u^4`
    pub mu: f64,
    /// `⟨-Δu + V u - a u^3, u⟩`
    pub mu_rayleigh: f64,
    pub quartic: f64,
    pub x_max: [f64; 2],
    pub scale: ScaleParameters,
    pub lambda: f64,
    pub iters: usize,
    pub el_residual: f64,
    pub norm: f64,
}

/// One JSON-lines record per solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub a: f64,
    pub eps: f64,
    pub energy: f64,
    pub mu: f64,
    pub x_max: [f64; 2],
    pub iters: usize,
    pub el_residual: f64,
}

impl GroundState2D {
    pub fn record(&self) -> RunRecord {
        RunRecord {
            a: self.a,
            eps: self.scale.eps,
            energy: self.energy,
            mu: self.mu,
            x_max: self.x_max,
            iters: self.iters,
            el_residual: self.el_residual,
        }
    }

    /// `β = 1 + μ ε^2 / λ^2`
    pub fn beta(&self) -> f64 {
        1.0 + self.mu * self.scale.eps * self.scale.eps / (self.lambda * self.lambda)
    }

    /// Writes `x y u` rows.
    pub fn write_csv(&self, path: &std::path::Path, p: f64) -> Result<()> {
        self.field.write_csv(path, "u", p)
    }
}

/// Discretized GP problem on a periodic grid.
pub struct GpProblem {
    pub grid: Grid2D,
    pub a: f64,
    pub a_star: f64,
    pub lambda: f64,
    pub p: f64,
    pub scale: ScaleParameters,
    pub opts: GpOptions,
    v: Vec<f64>,
    k: Vec<f64>,
    k2: Vec<f64>,
    fft: Fourier2D,
}

impl GpProblem {
    pub fn new(spec: &PotentialSpec, townes: &TownesProfile, a: f64, opts: GpOptions) -> Result<Self> {
        let lambda = find_critical_point(spec, townes)?.lambda;
        Self::with_lambda(spec, townes.a_star, lambda, a, opts)
    }

    /// As [`GpProblem::new`] with `λ` supplied by the caller.
    pub fn with_lambda(spec: &PotentialSpec, a_star: f64, lambda: f64, a: f64, opts: GpOptions) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidInput(format!("interaction strength must be >= 0, got {a}")));
        }
        if a >= a_star * (1.0 - opts.collapse_margin) {
            return Err(Error::Collapse { a, a_star });
        }
        let grid = Grid2D::periodic(opts.nodes, opts.radius)?;
        let scale = ScaleParameters::new(a, a_star, spec.p)?;
        let cells = scale.eps / (lambda * grid.step);
        if cells < opts.min_cells {
            return Err(Error::GridTooCoarse { cells, required: opts.min_cells });
        }
        let n = grid.n;
        let fft = Fourier2D::new(n);
        let dk = PI / grid.half_width();
        let k: Vec<f64> = (0..n).map(|i| fft.wavenumber(i) * dk).collect();
        let mut k2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k2[i * n + j] = k[i] * k[i] + k[j] * k[j];
            }
        }
        let v = Field2D::from_fn(grid, |x, y| spec.v(x, y)).values;
        Ok(Self { grid, a, a_star, lambda, p: spec.p, scale, opts, v, k, k2, fft })
    }

    fn to_spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Applies the Fourier multiplier `m(|k|^2)`.
    fn multiplier(&self, u: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut s = self.to_spectrum(u);
        for (z, &k2) in s.iter_mut().zip(&self.k2) {
            *z *= m(k2);
        }
        self.inverse_real(s)
    }

    pub fn laplacian(&self, u: &Field2D) -> Field2D {
        Field2D { grid: self.grid, values: self.multiplier(&u.values, |k2| -k2) }
    }

    /// Spectral gradient.
    pub fn gradient(&self, u: &Field2D) -> (Field2D, Field2D) {
        let n = self.grid.n;
        let s = self.to_spectrum(&u.values);
        let mut sx = s.clone();
        let mut sy = s;
        for i in 0..n {
            for j in 0..n {
                // the Nyquist mode carries no odd part on a real field
                let kx = if 2 * i == n { 0.0 } else { self.k[i] };
                let ky = if 2 * j == n { 0.0 } else { self.k[j] };
                sx[i * n + j] *= Complex64::new(0.0, kx);
                sy[i * n + j] *= Complex64::new(0.0, ky);
            }
        }
        (
            Field2D { grid: self.grid, values: self.inverse_real(sx) },
            Field2D { grid: self.grid, values: self.inverse_real(sy) },
        )
    }

    /// `(E(u), ∫ u^4)`
    pub fn energy_parts(&self, u: &[f64]) -> (f64, f64) {
        let s = self.to_spectrum(u);
        let n2 = (self.grid.n * self.grid.n) as f64;
        let kin: f64 = s.iter().zip(&self.k2).map(|(z, k2)| k2 * z.norm_sqr()).sum::<f64>() / n2;
        let mut pot = 0.0;
        let mut quart = 0.0;
        for (&x, &v) in u.iter().zip(&self.v) {
            let x2 = x * x;
            pot += v * x2;
            quart += x2 * x2;
        }
        let da = self.grid.cell_area();
        let quart = quart * da;
        ((kin + pot) * da - 0.5 * self.a * quart, quart)
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.energy_parts(u).0
    }

    /// `-Δu + V u - a u^3`
    pub fn hamiltonian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.multiplier(u, |k2| k2);
        for ((o, &x), &v) in out.iter_mut().zip(u).zip(&self.v) {
            *o += (v - self.a * x * x) * x;
        }
        out
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.grid.cell_area()
    }

    fn normalize(&self, u: &mut [f64]) -> f64 {
        let n = self.dot(u, u).sqrt();
        for x in u.iter_mut() {
            *x /= n;
        }
        n
    }

    /// `(μ, max |Hu - μ u|, Hu - μ u)`
    fn residual(&self, u: &[f64]) -> (f64, f64, Vec<f64>) {
        let mut r = self.hamiltonian(u);
        let mu = self.dot(&r, u);
        let mut res = 0.0f64;
        for (ri, &x) in r.iter_mut().zip(u) {
            *ri -= mu * x;
            res = res.max(ri.abs());
        }
        (mu, res, r)
    }

    /// Rescaled Townes bubble `(λ/(‖w‖ ε)) w(λ|x - c|/ε)`, normalized on the grid.
    pub fn townes_seed(&self, townes: &TownesProfile, center: [f64; 2]) -> Field2D {
        let l = self.lambda / self.scale.eps;
        let mut u = Field2D::from_fn(self.grid, |x, y| townes.w_at(l * (x - center[0]).hypot(y - center[1])));
        self.normalize(&mut u.values);
        u
    }

    fn check_collapse(&self, u: &[f64], iters: usize) -> Result<()> {
        let peak = u.iter().fold(0.0f64, |m, x| m.max(x * x));
        let mass = peak * self.grid.cell_area();
        if mass > 0.5 || !peak.is_finite() {
            return Err(Error::NoConvergence {
                what: format!("minimization collapsed onto one cell (a = {}, a* = {})", self.a, self.a_star),
                iters,
                residual: mass,
            });
        }
        Ok(())
    }

    pub fn minimize(&self, townes: &TownesProfile) -> Result<GroundState2D> {
        self.minimize_from(townes, self.townes_seed(townes, [0.0, 0.0]))
    }

    pub fn minimize_from(&self, townes: &TownesProfile, init: Field2D) -> Result<GroundState2D> {
        if init.grid != self.grid {
            return Err(Error::InvalidInput("initial field lives on a different grid".into()));
        }
        let mut u = init.values;
        let n0 = self.normalize(&mut u);
        if !(n0 > 0.0) || !n0.is_finite() {
            return Err(Error::ZeroField);
        }
        let iters = match self.opts.method {
            Method::ConjugateGradient => self.run_cg(&mut u)?,
            Method::GradientFlow => self.run_flow(&mut u)?,
        };
        // fix the sign convention u > 0
        if u.iter().sum::<f64>() < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        self.finish(townes, u, iters)
    }

    fn finish(&self, _townes: &TownesProfile, u: Vec<f64>, iters: usize) -> Result<GroundState2D> {
        let (energy, quartic) = self.energy_parts(&u);
        let (mu_rayleigh, el_residual, _) = self.residual(&u);
        let norm = self.dot(&u, &u).sqrt();
        let field = Field2D { grid: self.grid, values: u };
        let x_max = self.locate_max(&field);
        Ok(GroundState2D {
            field,
            a: self.a,
            energy,
            mu: energy - 0.5 * self.a * quartic,
            mu_rayleigh,
            quartic,
            x_max,
            scale: self.scale,
            lambda: self.lambda,
            iters,
            el_residual,
            norm,
        })
    }

    fn run_cg(&self, u: &mut Vec<f64>) -> Result<usize> {
        let shift = (self.lambda / self.scale.eps).powi(2);
        let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut res = f64::INFINITY;
        for it in 0..self.opts.max_iter {
            let (_, r_max, r) = self.residual(u);
            res = r_max;
            if res < self.opts.el_tol {
                return Ok(it);
            }
            self.check_collapse(u, it)?;
            let mut g = self.multiplier(&r, |k2| 1.0 / (k2 + shift));
            let gu = self.dot(&g, u);
            g.iter_mut().zip(u.iter()).for_each(|(gi, &ui)| *gi -= gu * ui);
            let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
            if let Some((g_old, r_old, d_old)) = &prev {
                let num: f64 = g.iter().zip(g_old).zip(&r).map(|((a, b), c)| (a - b) * c).sum();
                let den: f64 = g_old.iter().zip(r_old).map(|(a, b)| a * b).sum();
                let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                for (di, dold) in d.iter_mut().zip(d_old) {
                    *di += beta * dold;
                }
                let du = self.dot(&d, u);
                d.iter_mut().zip(u.iter()).for_each(|(di, &ui)| *di -= du * ui);
                if self.dot(&d, &r) >= 0.0 {
                    d = g.iter().map(|x| -x).collect();
                }
            }
            let nd = self.dot(&d, &d).sqrt();
            if !(nd > 0.0) {
                return Ok(it);
            }
            let dn: Vec<f64> = d.iter().map(|x| x / nd).collect();
            // secant on the directional derivative along the great circle
            let slope = 2.0 * self.dot(&dn, &r);
            let along = |th: f64| -> Vec<f64> {
                let (s, c) = th.sin_cos();
                u.iter().zip(&dn).map(|(a, b)| c * a + s * b).collect()
            };
            let th0 = nd.min(0.5);
            let trial = along(th0);
            let (s0, c0) = th0.sin_cos();
            let tangent: Vec<f64> = u.iter().zip(&dn).map(|(a, b)| -s0 * a + c0 * b).collect();
            let slope1 = 2.0 * self.dot(&self.hamiltonian(&trial), &tangent);
            let th = if slope1 > slope { (th0 * slope / (slope - slope1)).min(0.5) } else { th0 };
            *u = along(th);
            self.normalize(u);
            prev = Some((g, r, d));
        }
        Err(Error::NoConvergence { what: "GP conjugate gradients".into(), iters: self.opts.max_iter, residual: res })
    }

    fn run_flow(&self, u: &mut Vec<f64>) -> Result<usize> {
        let mut dt = self.opts.dt0;
        let mut e = self.energy(u);
        let mut res = f64::INFINITY;
        for it in 0..self.opts.max_iter {
            self.check_collapse(u, it)?;
            // the Rayleigh multiplier makes every fixed point an exact solution of Hu = μu
            let mu = self.dot(&self.hamiltonian(u), u);
            let explicit: Vec<f64> =
                u.iter().zip(&self.v).map(|(&x, &v)| x - dt * (v - self.a * x * x - mu) * x).collect();
            let mut next = self.multiplier(&explicit, |k2| 1.0 / (1.0 + dt * k2));
            self.normalize(&mut next);
            let e_next = self.energy(&next);
            if e_next > e + self.opts.step_slack * e.abs().max(1.0) {
                if dt <= self.opts.dt_floor {
                    return Err(Error::NoConvergence { what: "GP gradient flow (step floor)".into(), iters: it, residual: res });
                }
                dt = (dt * 0.5).max(self.opts.dt_floor);
                continue;
            }
            let decrease = e - e_next;
            *u = next;
            e = e_next;
            if it % 10 == 0 || decrease < self.opts.e_tol * e.abs() {
                let (_, r, _) = self.residual(u);
                res = r;
                if res < self.opts.el_tol && decrease < self.opts.e_tol * e.abs() {
                    return Ok(it + 1);
                }
            }
        }
        Err(Error::NoConvergence { what: "GP gradient flow".into(), iters: self.opts.max_iter, residual: res })
    }

    /// Quadratic fit on the 3x3 stencil around the discrete argmax, polished by Newton steps on
    /// the trigonometric interpolant.
    pub fn locate_max(&self, u: &Field2D) -> [f64; 2] {
        let coarse = quadratic_peak(u);
        let interp = SpectralInterpolant::new(self, u);
        let mut x = coarse;
        for _ in 0..20 {
            let (_, g, h) = interp.eval_with_derivatives(x[0], x[1]);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !(det > 0.0) || h[0][0] >= 0.0 {
                return coarse;
            }
            let dx = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let dy = -(h[0][0] * g[1] - h[1][0] * g[0]) / det;
            if dx.hypot(dy) > self.grid.step {
                return coarse;
            }
            x = [x[0] + dx, x[1] + dy];
            if dx.hypot(dy) < 1e-14 * (1.0 + x[0].hypot(x[1])) {
                break;
            }
        }
        x
    }
}

/// Vertex of the quadratic fitted through the 3x3 stencil around the discrete maximum.
pub fn quadratic_peak(u: &Field2D) -> [f64; 2] {
    let g = u.grid;
    let (i, j) = u.argmax();
    let n = g.n as isize;
    let at = |di: isize, dj: isize| {
        let (ii, jj) = (i as isize + di, j as isize + dj);
        let (ii, jj) = if g.periodic {
            (ii.rem_euclid(n), jj.rem_euclid(n))
        } else {
            (ii.clamp(0, n - 1), jj.clamp(0, n - 1))
        };
        u.at(ii as usize, jj as usize)
    };
    let fx = (at(1, 0) - at(-1, 0)) / 2.0;
    let fy = (at(0, 1) - at(0, -1)) / 2.0;
    let fxx = at(1, 0) - 2.0 * at(0, 0) + at(-1, 0);
    let fyy = at(0, 1) - 2.0 * at(0, 0) + at(0, -1);
    let fxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / 4.0;
    let det = fxx * fyy - fxy * fxy;
    let (mut sx, mut sy) = (0.0, 0.0);
    if det > 0.0 && fxx < 0.0 {
        sx = -(fyy * fx - fxy * fy) / det;
        sy = -(fxx * fy - fxy * fx) / det;
        sx = sx.clamp(-1.0, 1.0);
        sy = sy.clamp(-1.0, 1.0);
    }
    [g.coord(i) + sx * g.step, g.coord(j) + sy * g.step]
}

/// Trigonometric interpolant of a periodic field.
pub struct SpectralInterpolant {
    n: usize,
    x0: f64,
    k: Vec<f64>,
    coef: Vec<Complex64>,
}

impl SpectralInterpolant {
    pub fn new(problem: &GpProblem, u: &Field2D) -> Self {
        let n = problem.grid.n;
        let mut coef = problem.to_spectrum(&u.values);
        let s = 1.0 / (n * n) as f64;
        for (idx, z) in coef.iter_mut().enumerate() {
            // drop the Nyquist row and column so the interpolant is real
            if 2 * (idx / n) == n || 2 * (idx % n) == n {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z *= s;
            }
        }
        Self { n, x0: problem.grid.coord(0), k: problem.k.clone(), coef }
    }

    fn phases(&self, x: f64) -> Vec<Complex64> {
        self.k.iter().map(|&k| Complex64::from_polar(1.0, k * (x - self.x0))).collect()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_with_derivatives(x, y).0
    }

    /// Value, gradient and Hessian.
    pub fn eval_with_derivatives(&self, x: f64, y: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let ex = self.phases(x);
        let ey = self.phases(y);
        let n = self.n;
        let mut acc = [Complex64::new(0.0, 0.0); 6];
        for i in 0..n {
            let mut row = [Complex64::new(0.0, 0.0); 3];
            for j in 0..n {
                let t = self.coef[i * n + j] * ey[j];
                row[0] += t;
                row[1] += t * self.k[j];
                row[2] += t * (self.k[j] * self.k[j]);
            }
            let kx = self.k[i];
            let e = ex[i];
            acc[0] += e * row[0];
            acc[1] += e * row[0] * kx;
            acc[2] += e * row[1];
            acc[3] += e * row[0] * (kx * kx);
            acc[4] += e * row[1] * kx;
            acc[5] += e * row[2];
        }
        let i = Complex64::new(0.0, 1.0);
        let v = acc[0].re;
        let g = [(i * acc[1]).re, (i * acc[2]).re];
        let h = [[-acc[3].re, -acc[4].re], [-acc[4].re, -acc[5].re]];
        (v, g, h)
    }

    /// Samples on the tensor grid `xs × ys`, row-major in `xs`.
    pub fn sample(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let n = self.n;
        let ey: Vec<Vec<Complex64>> = ys.iter().map(|&y| self.phases(y)).collect();
        // T[i][b] = Σ_j c_ij e_y(b)_j
        let mut t = vec![Complex64::new(0.0, 0.0); n * ys.len()];
        for i in 0..n {
            let row = &self.coef[i * n..(i + 1) * n];
            for (b, e) in ey.iter().enumerate() {
                t[i * ys.len() + b] = row.iter().zip(e).map(|(c, e)| c * e).sum();
            }
        }
        let mut out = vec![0.0; xs.len() * ys.len()];
        for (a, &x) in xs.iter().enumerate() {
            let ex = self.phases(x);
            for b in 0..ys.len() {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    s += ex[i] * t[i * ys.len() + b];
                }
                out[a * ys.len() + b] = s.re;
            }
        }
        out
    }
}

/// `minimize` with default seeding at the origin.
pub fn minimize(spec: &PotentialSpec, townes: &TownesProfile, a: f64, opts: GpOptions) -> Result<GroundState2D> {
    GpProblem::new(spec, townes, a, opts)?.minimize(townes)
}

/// `μ = e(a) - (a/2) ∫ u^4`
pub fn extract_mu(state: &GroundState2D) -> f64 {
    state.energy - 0.5 * state.a * state.quartic
}

/// Count of strict local maxima above `rel * max u`.
pub fn count_local_maxima(u: &Field2D, rel: f64) -> usize {
    let g = u.grid;
    let n = g.n as isize;
    let thresh = rel * u.max_abs();
    let get = |i: isize, j: isize| {
        if g.periodic {
            u.at(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize)
        } else if i < 0 || j < 0 || i >= n || j >= n {
            f64::NEG_INFINITY
        } else {
            u.at(i as usize, j as usize)
        }
    };
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            let v = get(i, j);
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'nb: for di in -1..=1 {
                for dj in -1..=1 {
                    if (di, dj) != (0, 0) && get(i + di, j + dj) >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevResidual {
    pub delta: f64,
    pub center: [f64; 2],
    /// `∫_B ∂_j V u^2` minus the boundary flux terms
    pub components: [f64; 2],
    /// sum of the absolute values of the terms entering each component
    pub component_scale: [f64; 2],
    /// mismatch of the `(x - c)·∇u` multiplier identity
    pub virial: f64,
    pub virial_scale: f64,
}

impl PohozaevResidual {
    pub fn max_abs(&self) -> f64 {
        self.components[0].abs().max(self.components[1].abs()).max(self.virial.abs())
    }
}

/// Pohozaev-type balance on `B_δ(x_max)`; interior integrals by polar quadrature, all fields
/// sampled by bilinear interpolation.
pub fn pohozaev_residual(problem: &GpProblem, state: &GroundState2D, spec: &PotentialSpec, delta: f64) -> Result<PohozaevResidual> {
    let c = state.x_max;
    let g = problem.grid;
    let limit = g.half_width() - 2.0 * g.step;
    if !(delta > 0.0) || c[0].abs() + delta > limit || c[1].abs() + delta > limit {
        return Err(Error::BallOutsideGrid { radius: delta, cx: c[0], cy: c[1] });
    }
    let u = &state.field;
    let (ux, uy) = problem.gradient(u);
    let (mu, a) = (state.mu, state.a);
    let n_theta = 512;
    let n_r = 400;
    let dth = 2.0 * PI / n_theta as f64;
    let dr = delta / n_r as f64;

    let mut comp = [0.0; 2];
    let mut scale = [0.0; 2];
    let mut vir = 0.0;
    let mut vir_scale = 0.0;

    // boundary terms
    let mut bnd = [[0.0; 5]; 2];
    let mut vb = [0.0; 3];
    for t in 0..n_theta {
        let th = t as f64 * dth;
        let nu = [th.cos(), th.sin()];
        let (x, y) = (c[0] + delta * nu[0], c[1] + delta * nu[1]);
        let uv = u.bilinear(x, y);
        let gu = [ux.bilinear(x, y), uy.bilinear(x, y)];
        let dnu = gu[0] * nu[0] + gu[1] * nu[1];
        let grad2 = gu[0] * gu[0] + gu[1] * gu[1];
        let v = spec.v(x, y);
        let ds = delta * dth;
        for j in 0..2 {
            bnd[j][0] += -2.0 * gu[j] * dnu * ds;
            bnd[j][1] += grad2 * nu[j] * ds;
            bnd[j][2] += v * uv * uv * nu[j] * ds;
            bnd[j][3] += -mu * uv * uv * nu[j] * ds;
            bnd[j][4] += -0.5 * a * uv.powi(4) * nu[j] * ds;
        }
        // (x - c)·ν = δ
        vb[0] += (-delta * dnu * dnu + 0.5 * delta * grad2) * ds;
        vb[1] += 0.5 * (v - mu) * uv * uv * delta * ds;
        vb[2] += -0.25 * a * uv.powi(4) * delta * ds;
    }

    // interior terms, Simpson in r
    let mut lhs = [0.0; 2];
    let mut vi = [0.0; 2];
    for ir in 0..=n_r {
        let r = ir as f64 * dr;
        let wr = if ir == 0 || ir == n_r { 1.0 } else if ir % 2 == 1 { 4.0 } else { 2.0 };
        let wr = wr * dr / 3.0 * r;
        if wr == 0.0 {
            continue;
        }
        for t in 0..n_theta {
            let th = t as f64 * dth;
            let (x, y) = (c[0] + r * th.cos(), c[1] + r * th.sin());
            let uv = u.bilinear(x, y);
            let u2 = uv * uv;
            let gv = grad_v(spec, x, y);
            let w = wr * dth;
            lhs[0] += gv[0] * u2 * w;
            lhs[1] += gv[1] * u2 * w;
            let rv = (x - c[0]) * gv[0] + (y - c[1]) * gv[1];
            vi[0] += -0.5 * u2 * (2.0 * (spec.v(x, y) - mu) + rv) * w;
            vi[1] += 0.5 * a * u2 * u2 * w;
        }
    }
    for j in 0..2 {
        let rhs: f64 = bnd[j].iter().sum();
        comp[j] = lhs[j] - rhs;
        scale[j] = lhs[j].abs() + bnd[j].iter().map(|v| v.abs()).sum::<f64>();
    }
    vir += vb.iter().sum::<f64>() + vi.iter().sum::<f64>();
    vir_scale += vb.iter().chain(vi.iter()).map(|v| v.abs()).sum::<f64>();
    Ok(PohozaevResidual { delta, center: c, components: comp, component_scale: scale, virial: vir, virial_scale: vir_scale })
}

/// `∇V = ∇(g h)` with the envelope differentiated by central differences.
fn grad_v(spec: &PotentialSpec, x: f64, y: f64) -> [f64; 2] {
    let gh = spec.grad_h(x, y);
    if spec.envelope.taylor().m.is_none() {
        let g = spec.g(x, y);
        return [g * gh[0], g * gh[1]];
    }
    let s = 1e-5;
    let h = spec.h(x, y);
    let g = spec.g(x, y);
    let dgx = (spec.g(x + s, y) - spec.g(x - s, y)) / (2.0 * s);
    let dgy = (spec.g(x, y + s) - spec.g(x, y - s)) / (2.0 * s);
    [g * gh[0] + dgx * h, g * gh[1] + dgy * h]
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub max_distance: f64,
    pub states: Vec<GroundState2D>,
    pub starts: Vec<[f64; 2]>,
    /// largest number of local maxima seen in any converged state
    pub max_local_maxima: usize,
}

/// Minimizes from `n_starts` randomized positive Gaussian bumps and reports the largest pairwise
/// L∞ distance between the converged states.
pub fn uniqueness_probe(
    spec: &PotentialSpec,
    townes: &TownesProfile,
    a: f64,
    n_starts: usize,
    seed: u64,
    opts: GpOptions,
) -> Result<UniquenessReport> {
    if n_starts < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n_starts });
    }
    let problem = GpProblem::new(spec, townes, a, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = 0.5 * problem.scale.eps / problem.lambda * 4.0;
    let mut starts = Vec::with_capacity(n_starts);
    let mut inits = Vec::with_capacity(n_starts);
    for _ in 0..n_starts {
        let c = [rng.random_range(-core..core), rng.random_range(-core..core)];
        let width = problem.scale.eps / problem.lambda * rng.random_range(0.5..2.0);
        inits.push(Field2D::from_fn(problem.grid, |x, y| {
            (-((x - c[0]).powi(2) + (y - c[1]).powi(2)) / (2.0 * width * width)).exp()
        }));
        starts.push(c);
    }
    uniqueness_from(&problem, townes, inits, starts)
}

/// Uniqueness check from caller-supplied initial fields.
pub fn uniqueness_from(problem: &GpProblem, townes: &TownesProfile, inits: Vec<Field2D>, starts: Vec<[f64; 2]>) -> Result<UniquenessReport> {
    let mut states = Vec::with_capacity(inits.len());
    for init in inits {
        states.push(problem.minimize_from(townes, init)?);
    }
    let mut max_distance = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = states[i]
                .field
                .values
                .iter()
                .zip(&states[j].field.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            max_distance = max_distance.max(d);
        }
    }
    let max_local_maxima = states.iter().map(|s| count_local_maxima(&s.field, 1e-3)).max().unwrap_or(0);
    Ok(UniquenessReport { max_distance, states, starts, max_local_maxima })
}

/// Writes one JSON object per line.
pub fn write_jsonl(path: &std::path::Path, records: &[RunRecord]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
