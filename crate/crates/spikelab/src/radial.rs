//! Radial Townes profile: positive ground state of `w'' + w'/r - w + w^3 = 0`.

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::ode::{Dopri, State};
use crate::quad::simpson;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_RADIUS: f64 = 20.0;
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;
pub const DEFAULT_SHOOT_TOL: f64 = 1e-12;
pub const DEFAULT_ODE_TOL: f64 = 1e-12;

/// Uniform radial grid `r_i = i * step`, `i = 0..=count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub step: f64,
    pub count: usize,
}

impl RadialGrid {
    pub fn new(step: f64, radius: f64) -> Result<Self> {
        if !(step > 0.0 && radius > step) {
            return Err(Error::InvalidInput(format!("radial grid needs 0 < step < radius, got {step}, {radius}")));
        }
        Ok(Self { step, count: (radius / step).round() as usize })
    }

    pub fn radius(&self) -> f64 {
        self.count as f64 * self.step
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.step
    }
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self::new(DEFAULT_STEP, DEFAULT_RADIUS).expect("default grid")
    }
}

/// Integrals over the plane of the radial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `∫ w^2`
    pub mass: f64,
    /// `∫ w^4`
    pub quartic: f64,
    /// `∫ |∇w|^2`
    pub kinetic: f64,
    /// `∫ |x|^2 w^2`
    pub second: f64,
}

/// Solver diagnostics kept alongside the profile.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TownesDiagnostics {
    pub bracket: (f64, f64),
    pub bisections: usize,
    pub splice_radius: f64,
    /// relative mismatch of `w'` where the decaying tail is attached
    pub splice_jump: f64,
    /// max-norm residual of the ODE on interior nodes (fourth-order differences)
    pub el_residual: f64,
}

/// Radial Townes profile sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TownesProfile {
    pub grid: RadialGrid,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    pub w0: f64,
    pub a_star: f64,
    pub moments: Moments,
    pub diagnostics: TownesDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TownesOptions {
    pub shoot_tol: f64,
    pub ode_tol: f64,
    pub tail_tol: f64,
    pub bracket: (f64, f64),
}

impl Default for TownesOptions {
    fn default() -> Self {
        Self {
            shoot_tol: DEFAULT_SHOOT_TOL,
            ode_tol: DEFAULT_ODE_TOL,
            tail_tol: DEFAULT_TAIL_TOL,
            bracket: (1.5, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Over,
    Under,
    Undecided,
}

fn rhs(r: f64, y: &State) -> State {
    [y[1], y[0] - y[0] * y[0] * y[0] - y[1] / r]
}

fn second_derivative(r: f64, w: f64, dw: f64, w0: f64) -> f64 {
    if r == 0.0 {
        0.5 * (w0 - w0 * w0 * w0)
    } else {
        w - w * w * w - dw / r
    }
}

/// Taylor start off the origin, `w = w0 + c r^2 + d r^4`.
fn series(w0: f64, r: f64) -> State {
    let c = 0.25 * (w0 - w0 * w0 * w0);
    let d = (1.0 - 3.0 * w0 * w0) * c / 16.0;
    [w0 + c * r * r + d * r.powi(4), 2.0 * c * r + 4.0 * d * r.powi(3)]
}

const SERIES_RADIUS: f64 = 1e-3;

fn classify(w0: f64, r_max: f64, tol: f64) -> Shot {
    let mut y = series(w0, SERIES_RADIUS);
    let mut dp = Dopri::new(tol, 1e-3);
    let mut verdict = Shot::Undecided;
    dp.advance(&rhs, SERIES_RADIUS, r_max, &mut y, |_, y| {
        if y[0] < 0.0 {
            verdict = Shot::Over;
            true
        } else if y[1] > 0.0 {
            verdict = Shot::Under;
            true
        } else {
            false
        }
    });
    verdict
}

/// Samples the trajectory started at `w0` on the grid until it leaves the monotone regime.
fn trajectory(w0: f64, grid: &RadialGrid, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![w0];
    let mut dw = vec![0.0];
    let mut dp = Dopri::new(tol, 1e-3);
    let r1 = grid.r(1);
    let rs = SERIES_RADIUS.min(0.5 * r1);
    let mut y = series(w0, rs);
    let mut t = rs;
    for i in 1..=grid.count {
        let ri = grid.r(i);
        dp.advance(&rhs, t, ri, &mut y, |_, _| false);
        t = ri;
        w.push(y[0]);
        dw.push(y[1]);
        if y[0] <= 0.0 || y[1] >= 0.0 {
            break;
        }
    }
    (w, dw)
}

/// Leading asymptotics of the modified Bessel function K0 and its derivative.
fn k0_asymptotic(r: f64) -> State {
    let z = 8.0 * r;
    let s0 = 1.0 - 1.0 / z + 9.0 / (2.0 * z * z) - 225.0 / (6.0 * z * z * z);
    let s1 = 1.0 + 3.0 / z - 15.0 / (2.0 * z * z) + 315.0 / (6.0 * z * z * z);
    let pre = (PI / (2.0 * r)).sqrt() * (-r).exp();
    [pre * s0, -pre * s1]
}

/// Decaying tail: integrates the full equation inward from far out, amplitude `c`.
fn tail(c: f64, grid: &RadialGrid, from: usize, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let r_far = grid.radius() + 5.0;
    let k = k0_asymptotic(r_far);
    let mut y = [c * k[0], c * k[1]];
    let mut dp = Dopri::new(tol, 1e-2);
    let mut t = r_far;
    let n = grid.count - from + 1;
    let mut w = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for i in (from..=grid.count).rev() {
        let ri = grid.r(i);
        dp.advance(&rhs, t, ri, &mut y, |_, _| false);
        t = ri;
        w[i - from] = y[0];
        dw[i - from] = y[1];
    }
    (w, dw)
}

/// Solves for the Townes profile with default tail tolerance.
pub fn solve_townes(grid: RadialGrid, shoot_tol: f64, ode_tol: f64) -> Result<TownesProfile> {
    solve_townes_with(grid, &TownesOptions { shoot_tol, ode_tol, ..TownesOptions::default() })
}

pub fn solve_townes_with(grid: RadialGrid, opts: &TownesOptions) -> Result<TownesProfile> {
    if !(opts.shoot_tol > 0.0 && opts.ode_tol > 0.0) {
        return Err(Error::InvalidInput("shoot_tol and ode_tol must be positive".into()));
    }
    if grid.radius() < 15.0 - 1e-12 {
        return Err(Error::InvalidInput(format!("grid radius {} < 15", grid.radius())));
    }
    let r_max = grid.radius() + 10.0;
    let (mut lo, mut hi) = opts.bracket;
    if classify(lo, r_max, opts.ode_tol) != Shot::Under || classify(hi, r_max, opts.ode_tol) != Shot::Over {
        return Err(Error::NoBracket { lo, hi });
    }
    // Bisect to the floating-point limit; the profile quality depends on it beyond shoot_tol.
    let mut bisections = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(mid, r_max, opts.ode_tol) {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
                break;
            }
        }
        bisections += 1;
        if bisections > 200 {
            break;
        }
    }
    if hi - lo > opts.shoot_tol {
        return Err(Error::NoConvergence { what: "shooting bisection".into(), iters: bisections, residual: hi - lo });
    }
    let w0 = 0.5 * (lo + hi);
    let (wm, dwm) = trajectory(w0, &grid, opts.ode_tol);
    let (wl, _) = trajectory(lo, &grid, opts.ode_tol);
    let (wh, _) = trajectory(hi, &grid, opts.ode_tol);

    // Trust the forward trajectory while the bracketing shots agree closely.
    let len = wm.len().min(wl.len()).min(wh.len());
    let mut reliable = len - 1;
    for i in 1..len {
        let spread = (wh[i] - wl[i]).abs();
        if wm[i] <= 0.0 || dwm[i] >= 0.0 || spread > 1e-12 * wm[i] {
            reliable = i.saturating_sub(1);
            break;
        }
    }
    let back = (1.0 / grid.step).round() as usize;
    let cap = grid.count - (2.0 / grid.step).round() as usize;
    let m = reliable.saturating_sub(back).min(cap).max(1);

    let mut c = 1.0;
    let (mut tw, mut tdw) = tail(c, &grid, m, opts.ode_tol);
    for _ in 0..8 {
        let ratio = wm[m] / tw[0];
        c *= ratio;
        let next = tail(c, &grid, m, opts.ode_tol);
        tw = next.0;
        tdw = next.1;
        if (ratio - 1.0).abs() < 1e-14 {
            break;
        }
    }
    let splice_jump = ((tdw[0] - dwm[m]) / dwm[m]).abs();

    let mut w = Vec::with_capacity(grid.count + 1);
    let mut dw = Vec::with_capacity(grid.count + 1);
    w.extend_from_slice(&wm[..m]);
    dw.extend_from_slice(&dwm[..m]);
    w.extend_from_slice(&tw);
    dw.extend_from_slice(&tdw);

    let tail_value = w[grid.count].abs();
    if tail_value >= opts.tail_tol {
        return Err(Error::TailNotDecayed { value: tail_value, tol: opts.tail_tol });
    }
    for i in 1..=grid.count {
        if !(dw[i] < 0.0 && w[i] < w[i - 1]) {
            return Err(Error::NoConvergence {
                what: format!("monotone decay at r = {}", grid.r(i)),
                iters: bisections,
                residual: dw[i],
            });
        }
    }
    let mut profile = TownesProfile {
        grid,
        moments: moments(&grid, &w, &dw),
        a_star: 0.0,
        w,
        dw,
        w0,
        diagnostics: TownesDiagnostics {
            bracket: (lo, hi),
            bisections,
            splice_radius: grid.r(m),
            splice_jump,
            el_residual: 0.0,
        },
    };
    profile.a_star = profile.moments.mass;
    profile.diagnostics.el_residual = profile.ode_residual();
    Ok(profile)
}

fn moments(grid: &RadialGrid, w: &[f64], dw: &[f64]) -> Moments {
    let h = grid.step;
    let integrate = |f: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..w.len()).map(f).collect();
        2.0 * PI * simpson(&v, h)
    };
    Moments {
        mass: integrate(&|i| grid.r(i) * w[i] * w[i]),
        quartic: integrate(&|i| grid.r(i) * w[i].powi(4)),
        kinetic: integrate(&|i| grid.r(i) * dw[i] * dw[i]),
        second: integrate(&|i| grid.r(i).powi(3) * w[i] * w[i]),
    }
}

/// Relative residuals of the integral identities satisfied by the profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `(∫|∇w|^2 - ∫w^2) / ∫w^2`
    pub virial_kinetic: f64,
    /// `(∫w^2 - ½∫w^4) / ∫w^2`
    pub virial_quartic: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
}

impl IdentityReport {
    pub fn max_rho(&self) -> f64 {
        self.rho1.abs().max(self.rho2.abs()).max(self.rho3.abs())
    }
}

/// Radial moment identities, each normalized by `∫ r w^2 dr`.
pub fn radial_identity_report(townes: &TownesProfile) -> IdentityReport {
    let g = &townes.grid;
    let (w, dw) = (&townes.w, &townes.dw);
    let int = |f: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..w.len()).map(f).collect();
        simpson(&v, g.step)
    };
    let r3dw2 = int(&|i| g.r(i).powi(3) * dw[i] * dw[i]);
    let r3w2 = int(&|i| g.r(i).powi(3) * w[i] * w[i]);
    let r3w4 = int(&|i| g.r(i).powi(3) * w[i].powi(4));
    let rw2 = int(&|i| g.r(i) * w[i] * w[i]);
    let m = &townes.moments;
    IdentityReport {
        virial_kinetic: (m.kinetic - m.mass) / m.mass,
        virial_quartic: (m.mass - 0.5 * m.quartic) / m.mass,
        rho1: (r3dw2 - (2.0 * r3w2 - r3w4)) / rw2,
        rho2: (r3dw2 - (2.0 * rw2 - r3w2 + r3w4)) / rw2,
        rho3: (2.0 * rw2 - 3.0 * r3w2 + 2.0 * r3w4) / rw2,
    }
}

impl TownesProfile {
    pub fn d2w(&self, i: usize) -> f64 {
        second_derivative(self.grid.r(i), self.w[i], self.dw[i], self.w0)
    }

    fn hermite(&self, r: f64) -> Option<(usize, f64)> {
        let r = r.abs();
        if r >= self.grid.radius() {
            return None;
        }
        let x = r / self.grid.step;
        let i = (x.floor() as usize).min(self.grid.count - 1);
        Some((i, x - i as f64))
    }

    /// Quintic Hermite interpolant of `w`; zero beyond the grid.
    pub fn w_at(&self, r: f64) -> f64 {
        let Some((i, t)) = self.hermite(r) else { return 0.0 };
        let h = self.grid.step;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        self.w[i] * h0
            + h * self.dw[i] * h1
            + h * h * self.d2w(i) * h2
            + h * h * self.d2w(i + 1) * h3
            + h * self.dw[i + 1] * h4
            + self.w[i + 1] * h5
    }

    /// Derivative of the quintic Hermite interpolant, `w'(r)`.
    pub fn dw_at(&self, r: f64) -> f64 {
        let Some((i, t)) = self.hermite(r) else { return 0.0 };
        let h = self.grid.step;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let d0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let d2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        let d3 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        let d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let d5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
        (self.w[i] * d0
            + h * self.dw[i] * d1
            + h * h * self.d2w(i) * d2
            + h * h * self.d2w(i + 1) * d3
            + h * self.dw[i + 1] * d4
            + self.w[i + 1] * d5)
            / h
    }

    /// `w''(r)` from the equation itself.
    pub fn d2w_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.grid.radius() {
            return 0.0;
        }
        let w = self.w_at(r);
        if r < 1e-8 {
            return second_derivative(0.0, w, 0.0, self.w0);
        }
        second_derivative(r, w, self.dw_at(r), self.w0)
    }

    /// Max-norm ODE residual on interior nodes using sixth-order differences of `w'`
    /// (odd reflection of `w'` through the origin).
    pub fn ode_residual(&self) -> f64 {
        let n = self.grid.count;
        let h = self.grid.step;
        let dw = |k: isize| if k < 0 { -self.dw[(-k) as usize] } else { self.dw[k as usize] };
        let mut worst = 0.0f64;
        for i in 1..n - 2 {
            let k = i as isize;
            let d2 = (-dw(k - 3) + 9.0 * dw(k - 2) - 45.0 * dw(k - 1) + 45.0 * dw(k + 1) - 9.0 * dw(k + 2)
                + dw(k + 3))
                / (60.0 * h);
            let r = self.grid.r(i);
            let w = self.w[i];
            let res = d2 + self.dw[i] / r - w + w * w * w;
            worst = worst.max(res.abs());
        }
        worst
    }

    /// Bound on the grid residual: node errors at the integrator tolerance amplified by the
    /// difference stencil, plus its sixth-order truncation error.
    pub fn residual_bound(&self, ode_tol: f64) -> f64 {
        let h = self.grid.step;
        ode_tol * (1.0 + 110.0 / (60.0 * h)) + 1e3 * h.powi(6)
    }

    /// Writes the plain-text profile cache.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# townes dr={} R={} w0={:.17e}", self.grid.step, self.grid.radius(), self.w0)?;
        for i in 0..=self.grid.count {
            writeln!(out, "{:.16e} {:.16e} {:.16e}", self.grid.r(i), self.w[i], self.dw[i])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a cache written by [`TownesProfile::save_cache`], rejecting a grid mismatch.
    pub fn load_cache(path: &Path, grid: RadialGrid) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines.next().ok_or_else(|| Error::Cache("empty file".into()))??;
        let mut dr = None;
        let mut radius = None;
        let mut w0 = None;
        let body = header
            .strip_prefix("# townes ")
            .ok_or_else(|| Error::Cache(format!("bad header '{header}'")))?;
        for tok in body.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Cache(format!("bad header token '{tok}'")))?;
            let v: f64 = v.parse().map_err(|_| Error::Cache(format!("bad number '{v}'")))?;
            match k {
                "dr" => dr = Some(v),
                "R" => radius = Some(v),
                "w0" => w0 = Some(v),
                _ => return Err(Error::Cache(format!("unknown header key '{k}'"))),
            }
        }
        let (dr, radius, w0) = match (dr, radius, w0) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Cache("header lacks dr, R or w0".into())),
        };
        if (dr - grid.step).abs() > 1e-12 * grid.step || (radius - grid.radius()).abs() > 1e-9 {
            return Err(Error::Cache(format!(
                "header dr={dr} R={radius} does not match requested dr={} R={}",
                grid.step,
                grid.radius()
            )));
        }
        let mut w = Vec::with_capacity(grid.count + 1);
        let mut dw = Vec::with_capacity(grid.count + 1);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|c| c.parse::<f64>().map_err(|_| Error::Cache(format!("bad row '{line}'"))))
                .collect::<Result<_>>()?;
            if cols.len() != 3 {
                return Err(Error::Cache(format!("row needs 3 columns: '{line}'")));
            }
            w.push(cols[1]);
            dw.push(cols[2]);
        }
        if w.len() != grid.count + 1 {
            return Err(Error::Cache(format!("expected {} rows, found {}", grid.count + 1, w.len())));
        }
        let m = moments(&grid, &w, &dw);
        let mut profile = TownesProfile {
            grid,
            w,
            dw,
            w0,
            a_star: m.mass,
            moments: m,
            diagnostics: TownesDiagnostics::default(),
        };
        profile.diagnostics.el_residual = profile.ode_residual();
        Ok(profile)
    }

    /// Samples `w(|x|)` on a 2D grid.
    pub fn to_field(&self, grid: crate::field::Grid2D) -> Field2D {
        Field2D::from_fn(grid, |x, y| self.w_at(x.hypot(y)))
    }
}

/// Gagliardo-Nirenberg quotient `a* ∫u^4 / (2 ∫|∇u|^2 ∫u^2)`, at most 1.
pub fn gn_ratio(u: &Field2D, townes: &TownesProfile) -> Result<f64> {
    let mass = u.dot(u);
    if mass == 0.0 {
        return Err(Error::ZeroField);
    }
    let quartic: f64 = u.values.iter().map(|v| v.powi(4)).sum::<f64>() * u.grid.cell_area();
    let (gx, gy) = u.gradient();
    let kinetic = gx.dot(&gx) + gy.dot(&gy);
    if kinetic == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(townes.a_star * quartic / (2.0 * kinetic * mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use std::sync::OnceLock;

    pub(crate) fn profile() -> &'static TownesProfile {
        static P: OnceLock<TownesProfile> = OnceLock::new();
        P.get_or_init(|| solve_townes(RadialGrid::default(), 1e-12, 1e-12).unwrap())
    }

    #[test]
    fn shooting_value_and_critical_mass() {
        let p = profile();
        assert!((p.w0 - 2.206200864650715).abs() < 1e-9, "w0 = {}", p.w0);
        assert!((p.a_star - 11.700896525792).abs() < 1e-7, "a* = {}", p.a_star);
        assert!((p.moments.second - 13.8948616358).abs() < 1e-6);
    }

    #[test]
    fn virial_identities() {
        let r = radial_identity_report(profile());
        assert!(r.virial_kinetic.abs() < 1e-6, "{r:?}");
        assert!(r.virial_quartic.abs() < 1e-6, "{r:?}");
        assert!(r.max_rho() < 1e-5, "{r:?}");
    }

    #[test]
    fn tail_is_smooth_and_decayed() {
        let p = profile();
        assert!(p.w[p.grid.count] < DEFAULT_TAIL_TOL);
        assert!(p.diagnostics.splice_jump < 1e-6, "{:?}", p.diagnostics);
        for i in (5.0 / p.grid.step) as usize..p.grid.count {
            let r = p.grid.r(i);
            let env = p.w[i] * r.sqrt() * r.exp();
            assert!(env < 10.0 && env > 1.0, "envelope {env} at r = {r}");
        }
    }

    #[test]
    fn residual_within_bound() {
        let p = profile();
        assert!(p.diagnostics.el_residual < p.residual_bound(1e-12), "{:?}", p.diagnostics);
    }

    #[test]
    fn hermite_interpolation_matches_nodes_and_equation() {
        let p = profile();
        for &i in &[0usize, 1, 17, 400, 1999] {
            assert!((p.w_at(p.grid.r(i)) - p.w[i]).abs() < 1e-15);
            assert!((p.dw_at(p.grid.r(i)) - p.dw[i]).abs() < 1e-12);
        }
        let r = 1.2345;
        let h = 1e-4;
        let d2 = (p.w_at(r + h) - 2.0 * p.w_at(r) + p.w_at(r - h)) / (h * h);
        assert!((d2 - p.d2w_at(r)).abs() < 1e-5);
    }

    #[test]
    fn small_radius_is_rejected() {
        let g = RadialGrid::new(0.01, 10.0).unwrap();
        assert!(matches!(solve_townes(g, 1e-12, 1e-12), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bad_bracket_is_reported() {
        let opts = TownesOptions { bracket: (2.5, 3.0), ..TownesOptions::default() };
        assert!(matches!(solve_townes_with(RadialGrid::default(), &opts), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn cache_round_trip_and_mismatch() {
        let p = profile();
        let dir = std::env::temp_dir().join(format!("spikelab-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("townes.txt");
        p.save_cache(&path).unwrap();
        let q = TownesProfile::load_cache(&path, p.grid).unwrap();
        assert_eq!(q.w, p.w);
        assert_eq!(q.w0, p.w0);
        let other = RadialGrid::new(0.01, 20.0).unwrap();
        assert!(matches!(TownesProfile::load_cache(&path, other), Err(Error::Cache(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gn_ratio_of_profile_and_gaussian() {
        let p = profile();
        let g = Grid2D::centered(12.0, 0.05).unwrap();
        let w = p.to_field(g);
        assert!((gn_ratio(&w, p).unwrap() - 1.0).abs() < 1e-4);
        let gauss = Field2D::from_fn(g, |x, y| (-(x * x + y * y) / 2.0).exp());
        let r = gn_ratio(&gauss, p).unwrap();
        assert!((r - p.a_star / (4.0 * PI)).abs() < 1e-5, "{r}");
        let dil = Field2D::from_fn(Grid2D::centered(24.0, 0.1).unwrap(), |x, y| p.w_at(0.5 * x.hypot(y)));
        assert!((gn_ratio(&dil, p).unwrap() - 1.0).abs() < 1e-4);
        assert!(matches!(gn_ratio(&Field2D::zeros(g), p), Err(Error::ZeroField)));
    }
}
