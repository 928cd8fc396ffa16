//! Trapping potentials `V = g h` with `h` homogeneous of degree `p`, and the trap
//! energy `H(y) = ∫ h(x+y) w^2` of a Townes bubble centered at `y`.

use crate::error::{Error, Result};
use crate::radial::TownesProfile;
use std::f64::consts::PI;

/// Number of stored samples of the angular factor.
pub const ANGULAR_SAMPLES: usize = 256;

/// Angular factor `h0(θ)` stored as uniform samples and evaluated by trigonometric interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularProfile {
    samples: Vec<f64>,
    /// `(k, a_k, b_k)` for the retained Fourier modes `a_k cos kθ + b_k sin kθ`.
    modes: Vec<(usize, f64, f64)>,
}

impl AngularProfile {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        if n < 3 || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("angular profile needs at least 3 finite samples".into()));
        }
        let mut raw = Vec::new();
        for k in 0..=n / 2 {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, v) in samples.iter().enumerate() {
                let t = 2.0 * PI * (k * j) as f64 / n as f64;
                a += v * t.cos();
                b += v * t.sin();
            }
            let nyquist = n % 2 == 0 && k == n / 2;
            let scale = if k == 0 || nyquist { 1.0 / n as f64 } else { 2.0 / n as f64 };
            raw.push((k, a * scale, if k == 0 || nyquist { 0.0 } else { b * scale }));
        }
        let biggest = raw.iter().fold(0.0f64, |m, &(_, a, b)| m.max(a.abs()).max(b.abs()));
        let cut = 1e-13 * biggest.max(1e-300);
        let modes = raw.into_iter().filter(|&(_, a, b)| a.abs() > cut || b.abs() > cut).collect();
        Ok(Self { samples, modes })
    }

    pub fn from_fn(f: impl Fn(f64) -> f64) -> Self {
        let samples = (0..ANGULAR_SAMPLES).map(|j| f(2.0 * PI * j as f64 / ANGULAR_SAMPLES as f64)).collect();
        Self::from_samples(samples).expect("finite samples")
    }

    /// Named presets: `one`, `cos`, `sin`, `cos+sin`, `cos2`, `sin2`.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "one" => Self::from_fn(|_| 1.0),
            "cos" => Self::from_fn(f64::cos),
            "sin" => Self::from_fn(f64::sin),
            "cos+sin" => Self::from_fn(|t| t.cos() + t.sin()),
            "cos2" => Self::from_fn(|t| (2.0 * t).cos()),
            "sin2" => Self::from_fn(|t| (2.0 * t).sin()),
            other => return Err(Error::InvalidInput(format!("unknown angular preset '{other}'"))),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.modes.iter().map(|&(k, a, b)| {
            let t = k as f64 * theta;
            a * t.cos() + b * t.sin()
        }).sum()
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        self.modes.iter().map(|&(k, a, b)| {
            let kf = k as f64;
            let t = kf * theta;
            kf * (b * t.cos() - a * t.sin())
        }).sum()
    }

    /// True when only even Fourier modes are present, i.e. `h0(θ+π) = h0(θ)`.
    pub fn is_even(&self) -> bool {
        self.modes.iter().all(|&(k, _, _)| k % 2 == 0)
    }

    /// Minimum over a fine angular scan.
    pub fn min_value(&self) -> f64 {
        (0..4096).map(|j| self.eval(2.0 * PI * j as f64 / 4096.0)).fold(f64::INFINITY, f64::min)
    }
}

/// Taylor data of the envelope `g` at the origin: order `m` and `D^α g(0)` for `|α| = m`,
/// ordered `α = (m, 0), (m-1, 1), …, (0, m)`. `m = None` encodes an envelope that is flat to
/// all orders.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTaylor {
    pub m: Option<usize>,
    pub coeffs: Vec<f64>,
}

impl EnvelopeTaylor {
    pub fn flat() -> Self {
        Self { m: None, coeffs: Vec::new() }
    }

    /// `Σ_{|α|=m} x^α / α! D^α g(0)`.
    pub fn polynomial(&self, x: f64, y: f64) -> f64 {
        let Some(m) = self.m else { return 0.0 };
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * x.powi((m - k) as i32) * y.powi(k as i32) / (factorial(m - k) * factorial(k)))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Full envelope evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// `g ≡ c`.
    Constant(f64),
    /// `g(x) = g0 exp(T_m(x) e^{-|x|^2} / g0)`: positive, bounded, with the prescribed
    /// Taylor data at the origin through order `m + 1`.
    Taylor { g0: f64, taylor: EnvelopeTaylor },
}

impl Envelope {
    /// Parses `const:<c>` or `taylor:m=<m>,coeffs=[c0,c1,...]` (optionally `,g0=<v>`).
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(v) = text.strip_prefix("const:") {
            let c: f64 = v.trim().parse().map_err(|_| Error::InvalidInput(format!("bad constant envelope '{v}'")))?;
            if c <= 0.0 {
                return Err(Error::InvalidInput("envelope constant must be positive".into()));
            }
            return Ok(Envelope::Constant(c));
        }
        if let Some(body) = text.strip_prefix("taylor:") {
            let mut m = None;
            let mut coeffs = None;
            let mut g0 = 1.0;
            let mut rest = body.trim();
            while !rest.is_empty() {
                let (key, after) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidInput(format!("bad taylor envelope '{text}'")))?;
                let key = key.trim().trim_start_matches(',').trim();
                let after = after.trim_start();
                let (value, next) = if let Some(list) = after.strip_prefix('[') {
                    let end = list.find(']').ok_or_else(|| Error::InvalidInput("unclosed coefficient list".into()))?;
                    (&list[..end], &list[end + 1..])
                } else {
                    match after.find(',') {
                        Some(i) => (&after[..i], &after[i..]),
                        None => (after, ""),
                    }
                };
                match key {
                    "m" => {
                        m = Some(if value.trim() == "inf" {
                            None
                        } else {
                            Some(value.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad order '{value}'")))?)
                        })
                    }
                    "coeffs" => {
                        let list: Result<Vec<f64>> = value
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad coefficient '{s}'"))))
                            .collect();
                        coeffs = Some(list?);
                    }
                    "g0" => {
                        g0 = value.trim().parse().map_err(|_| Error::InvalidInput(format!("bad g0 '{value}'")))?;
                    }
                    other => return Err(Error::InvalidInput(format!("unknown taylor key '{other}'"))),
                }
                rest = next.trim_start_matches(',').trim();
            }
            let m = m.ok_or_else(|| Error::InvalidInput("taylor envelope needs m".into()))?;
            let coeffs = coeffs.unwrap_or_default();
            if let Some(m) = m {
                if m < 1 {
                    return Err(Error::InvalidInput("envelope order m must be at least 1".into()));
                }
                if coeffs.len() != m + 1 {
                    return Err(Error::InvalidInput(format!("order {m} needs {} coefficients, got {}", m + 1, coeffs.len())));
                }
            }
            if g0 <= 0.0 {
                return Err(Error::InvalidInput("g0 must be positive".into()));
            }
            return Ok(Envelope::Taylor { g0, taylor: EnvelopeTaylor { m, coeffs } });
        }
        Err(Error::InvalidInput(format!("unknown envelope '{text}'")))
    }

    pub fn g0(&self) -> f64 {
        match self {
            Envelope::Constant(c) => *c,
            Envelope::Taylor { g0, .. } => *g0,
        }
    }

    pub fn taylor(&self) -> EnvelopeTaylor {
        match self {
            Envelope::Constant(_) => EnvelopeTaylor::flat(),
            Envelope::Taylor { taylor, .. } => taylor.clone(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Envelope::Constant(c) => *c,
            Envelope::Taylor { g0, taylor } => {
                let t = taylor.polynomial(x, y) * (-(x * x + y * y)).exp();
                g0 * (t / g0).exp()
            }
        }
    }
}

/// `V = g h` with `h(x) = |x|^p [1 + δ h0(θ)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub p: f64,
    pub delta: f64,
    pub angular: AngularProfile,
    pub envelope: Envelope,
}

impl PotentialSpec {
    pub fn new(p: f64, delta: f64, angular: AngularProfile, envelope: Envelope) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::InvalidInput(format!("degree p must be >= 2, got {p}")));
        }
        let spec = Self { p, delta, angular, envelope };
        if 1.0 + delta * spec.angular.min_value() < -1e-12 {
            return Err(Error::InvalidInput("1 + δ h0(θ) must be nonnegative".into()));
        }
        Ok(spec)
    }

    /// `h = |x|^p`, `g ≡ 1`.
    pub fn radial(p: f64) -> Self {
        Self::new(p, 0.0, AngularProfile::preset("one").expect("preset"), Envelope::Constant(1.0)).expect("valid radial potential")
    }

    /// `h = |x|^2 (1 + δ cos θ)`, `g ≡ 1`.
    pub fn tilted(delta: f64) -> Result<Self> {
        Self::new(2.0, delta, AngularProfile::preset("cos")?, Envelope::Constant(1.0))
    }

    pub fn g0(&self) -> f64 {
        self.envelope.g0()
    }

    #[inline]
    pub fn h(&self, x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        if r == 0.0 {
            return 0.0;
        }
        let ang = if self.delta == 0.0 { 1.0 } else { 1.0 + self.delta * self.angular.eval(y.atan2(x)) };
        r.powf(self.p) * ang
    }

    /// Analytic gradient of `h` in polar form.
    #[inline]
    pub fn grad_h(&self, x: f64, y: f64) -> [f64; 2] {
        let r = x.hypot(y);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let (c, s) = (x / r, y / r);
        let rp1 = r.powf(self.p - 1.0);
        let (ang, dang) = if self.delta == 0.0 {
            (1.0, 0.0)
        } else {
            let t = y.atan2(x);
            (1.0 + self.delta * self.angular.eval(t), self.delta * self.angular.derivative(t))
        };
        let dr = self.p * rp1 * ang;
        let dt = rp1 * dang;
        [dr * c - dt * s, dr * s + dt * c]
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.envelope.eval(x, y)
    }

    pub fn v(&self, x: f64, y: f64) -> f64 {
        self.g(x, y) * self.h(x, y)
    }

    /// `h(-x) = h(x)`.
    pub fn is_even(&self) -> bool {
        self.delta == 0.0 || self.angular.is_even()
    }
}

/// Result of locating the critical point of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialAnalysis {
    pub y0: [f64; 2],
    /// `H(y0)`
    pub h0: f64,
    pub hess: [[f64; 2]; 2],
    /// `p g(0)/2 · H(y0)`, the `(2+p)`-th power of λ
    pub lambda_pow: f64,
    pub lambda: f64,
    pub nondegenerate: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    pub p: f64,
}

impl PotentialAnalysis {
    /// `λ^{2+p}`
    pub fn lambda_2p(&self) -> f64 {
        self.lambda_pow
    }

    /// `λ^{1+p}`
    pub fn lambda_1p(&self) -> f64 {
        self.lambda_pow / self.lambda
    }

    pub fn hess_det(&self) -> f64 {
        self.hess[0][0] * self.hess[1][1] - self.hess[0][1] * self.hess[1][0]
    }
}

/// Quadrature settings for integrals against the radial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarQuadrature {
    pub radius: f64,
    pub angles: usize,
    pub stride: usize,
}

impl Default for PolarQuadrature {
    fn default() -> Self {
        Self { radius: f64::INFINITY, angles: 128, stride: 1 }
    }
}

/// `∫ F(x, r, w, w') dx` with `w` radial, Simpson in `r` and the periodic trapezoid rule in `θ`.
pub fn integrate_polar<const K: usize>(
    townes: &TownesProfile,
    quad: PolarQuadrature,
    f: impl Fn(f64, f64, f64, f64, f64) -> [f64; K],
) -> [f64; K] {
    let g = &townes.grid;
    let step = g.step * quad.stride as f64;
    let mut nr = ((quad.radius.min(g.radius()) / step).floor() as usize).max(2);
    if nr % 2 == 1 {
        nr -= 1;
    }
    let dth = 2.0 * PI / quad.angles as f64;
    let trig: Vec<(f64, f64)> = (0..quad.angles).map(|k| ((k as f64 * dth).cos(), (k as f64 * dth).sin())).collect();
    let mut total = [0.0; K];
    for i in 1..=nr {
        let idx = i * quad.stride;
        let r = g.r(idx);
        let w = townes.w[idx];
        let dw = townes.dw[idx];
        let simpson = if i == nr { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let weight = simpson * step / 3.0 * r * dth;
        let mut ring = [0.0; K];
        for &(c, s) in &trig {
            let v = f(r * c, r * s, r, w, dw);
            for k in 0..K {
                ring[k] += v[k];
            }
        }
        for k in 0..K {
            total[k] += weight * ring[k];
        }
    }
    total
}

/// `H(y) = ∫ h(x+y) w^2`.
pub fn eval_h(spec: &PotentialSpec, townes: &TownesProfile, y: [f64; 2]) -> f64 {
    integrate_polar(townes, PolarQuadrature::default(), |x1, x2, _, w, _| [spec.h(x1 + y[0], x2 + y[1]) * w * w])[0]
}

/// `∇H(y) = ∫ ∇h(x+y) w^2`.
pub fn grad_h_integral(spec: &PotentialSpec, townes: &TownesProfile, y: [f64; 2]) -> [f64; 2] {
    integrate_polar(townes, PolarQuadrature::default(), |x1, x2, _, w, _| {
        let g = spec.grad_h(x1 + y[0], x2 + y[1]);
        [g[0] * w * w, g[1] * w * w]
    })
}

/// Hessian of `H` through one integration by parts: `-∫ ∂_i h(x+y) ∂_j(w^2)`.
pub fn hess_h_integral(spec: &PotentialSpec, townes: &TownesProfile, y: [f64; 2]) -> [[f64; 2]; 2] {
    let v = integrate_polar(townes, PolarQuadrature::default(), |x1, x2, r, w, dw| {
        let g = spec.grad_h(x1 + y[0], x2 + y[1]);
        let d = 2.0 * w * dw / r;
        [-g[0] * d * x1, -g[0] * d * x2, -g[1] * d * x1, -g[1] * d * x2]
    });
    let off = 0.5 * (v[1] + v[2]);
    [[v[0], off], [off, v[3]]]
}

pub const GRAD_TOL: f64 = 1e-11;
pub const ND_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 60;

/// Newton iteration on `∇H = 0` from the origin, with an Armijo gradient fallback.
pub fn find_critical_point(spec: &PotentialSpec, townes: &TownesProfile) -> Result<PotentialAnalysis> {
    let mut y = [0.0, 0.0];
    let mut iterations = 0;
    let h_scale = eval_h(spec, townes, y).abs().max(1e-300);
    let mut grad = grad_h_integral(spec, townes, y);
    if spec.is_even() {
        grad = [0.0, 0.0];
    } else {
        while grad[0].hypot(grad[1]) > GRAD_TOL * h_scale {
            if iterations >= MAX_NEWTON {
                return Err(Error::NoConvergence {
                    what: "critical point of H".into(),
                    iters: iterations,
                    residual: grad[0].hypot(grad[1]),
                });
            }
            iterations += 1;
            let hs = hess_h_integral(spec, townes, y);
            let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
            let scale = hs[0][0].abs().max(hs[1][1].abs()).max(1e-300);
            let step = if det.abs() > 1e-10 * scale * scale {
                [
                    -(hs[1][1] * grad[0] - hs[0][1] * grad[1]) / det,
                    -(-hs[1][0] * grad[0] + hs[0][0] * grad[1]) / det,
                ]
            } else {
                [-grad[0] / scale, -grad[1] / scale]
            };
            // Armijo-type safeguard on |∇H|
            let g0 = grad[0].hypot(grad[1]);
            let mut t = 1.0;
            loop {
                let trial = [y[0] + t * step[0], y[1] + t * step[1]];
                let gt = grad_h_integral(spec, townes, trial);
                if gt[0].hypot(gt[1]) < (1.0 - 1e-4 * t) * g0 || t < 1e-6 {
                    y = trial;
                    grad = gt;
                    break;
                }
                t *= 0.5;
            }
        }
    }
    let h0 = eval_h(spec, townes, y);
    let hess = hess_h_integral(spec, townes, y);
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    let lambda_pow = spec.p * spec.g0() / 2.0 * h0;
    if lambda_pow <= 0.0 {
        return Err(Error::InvalidInput("∫ h w^2 must be positive".into()));
    }
    Ok(PotentialAnalysis {
        y0: y,
        h0,
        hess,
        lambda_pow,
        lambda: lambda_pow.powf(1.0 / (2.0 + spec.p)),
        nondegenerate: det.abs() > ND_TOL * h0 * h0,
        grad_norm: grad[0].hypot(grad[1]),
        iterations,
        p: spec.p,
    })
}

/// `(⟨∂_1 w, h(·+y) w⟩, ⟨∂_2 w, h(·+y) w⟩)`; equals `-½ ∇H(y)`.
pub fn kernel_pairing(spec: &PotentialSpec, townes: &TownesProfile, y: [f64; 2]) -> [f64; 2] {
    integrate_polar(townes, PolarQuadrature::default(), |x1, x2, r, w, dw| {
        let hw = spec.h(x1 + y[0], x2 + y[1]) * w;
        [dw * x1 / r * hw, dw * x2 / r * hw]
    })
}

/// Kernel pairing at the computed critical point; both components vanish there.
pub fn check_kernel_orthogonality(spec: &PotentialSpec, analysis: &PotentialAnalysis, townes: &TownesProfile) -> [f64; 2] {
    kernel_pairing(spec, townes, analysis.y0)
}

/// `∫ w^2 (x+y)·∇h(x+y)`, which equals `p H(y)` by homogeneity.
pub fn euler_integral(spec: &PotentialSpec, townes: &TownesProfile, y: [f64; 2]) -> f64 {
    integrate_polar(townes, PolarQuadrature::default(), |x1, x2, _, w, _| {
        let (a, b) = (x1 + y[0], x2 + y[1]);
        let g = spec.grad_h(a, b);
        [(a * g[0] + b * g[1]) * w * w]
    })[0]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::radial::{solve_townes, RadialGrid};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    pub(crate) fn townes() -> &'static TownesProfile {
        static P: OnceLock<TownesProfile> = OnceLock::new();
        P.get_or_init(|| solve_townes(RadialGrid::default(), 1e-12, 1e-12).unwrap())
    }

    #[test]
    fn radial_trap_energy_is_the_second_moment() {
        let t = townes();
        let spec = PotentialSpec::radial(2.0);
        let h0 = eval_h(&spec, t, [0.0, 0.0]);
        assert!((h0 - t.moments.second).abs() < 1e-8 * h0);
        let y = [0.3, -0.7];
        let hy = eval_h(&spec, t, y);
        assert!((hy - (h0 + (y[0] * y[0] + y[1] * y[1]) * t.a_star)).abs() < 1e-8 * hy);
    }

    #[test]
    fn cosine_perturbation_averages_out_at_origin() {
        let t = townes();
        let spec = PotentialSpec::new(2.0, 0.1, AngularProfile::preset("cos").unwrap(), Envelope::Constant(1.0)).unwrap();
        let a = eval_h(&spec, t, [0.0, 0.0]);
        assert!((a - t.moments.second).abs() < 1e-10 * a, "{a} {}", t.moments.second);
    }

    #[test]
    fn even_potential_sits_at_origin() {
        let t = townes();
        for p in [2.0, 3.0, 4.0] {
            let spec = PotentialSpec::radial(p);
            let an = find_critical_point(&spec, t).unwrap();
            assert_eq!(an.y0, [0.0, 0.0]);
            assert!(an.nondegenerate);
        }
    }

    #[test]
    fn lambda_for_harmonic_trap() {
        let t = townes();
        let an = find_critical_point(&PotentialSpec::radial(2.0), t).unwrap();
        assert!((an.lambda - t.moments.second.powf(0.25)).abs() < 1e-10, "{} {}", an.lambda, t.moments.second.powf(0.25));
        assert!((an.lambda - 1.93069448).abs() < 1e-7);
    }

    #[test]
    fn tilted_trap_critical_point() {
        let t = townes();
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        assert!(an.y0[0] < -0.03 && an.y0[0] > -0.04, "{:?}", an.y0);
        assert!(an.y0[1].abs() < 1e-12);
        assert!(an.hess_det() > 0.0 && an.nondegenerate);
        let k = check_kernel_orthogonality(&spec, &an, t);
        assert!(k[0].abs() < 1e-6 * an.h0 && k[1].abs() < 1e-6 * an.h0, "{k:?}");
        // finite differences of H
        let d = 1e-4;
        for j in 0..2 {
            let mut yp = an.y0;
            let mut ym = an.y0;
            yp[j] += d;
            ym[j] -= d;
            let fd = (eval_h(&spec, t, yp) - eval_h(&spec, t, ym)) / (2.0 * d);
            assert!(fd.abs() < 1e-6 * an.h0, "fd gradient {fd}");
        }
    }

    #[test]
    fn wrong_center_breaks_orthogonality() {
        let t = townes();
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        let y = [an.y0[0] + 0.1, an.y0[1]];
        let k = kernel_pairing(&spec, t, y);
        let d = 1e-4;
        let fd = (eval_h(&spec, t, [y[0] + d, y[1]]) - eval_h(&spec, t, [y[0] - d, y[1]])) / (2.0 * d);
        assert!(k[0].abs() > 1e-2);
        assert!((k[0] + 0.5 * fd).abs() < 1e-6 * fd.abs(), "{} vs {}", k[0], -0.5 * fd);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let t = townes();
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let y = [0.2, -0.1];
        let hs = hess_h_integral(&spec, t, y);
        let d = 1e-4;
        for j in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[j] += d;
            ym[j] -= d;
            let gp = grad_h_integral(&spec, t, yp);
            let gm = grad_h_integral(&spec, t, ym);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * d);
                assert!((fd - hs[i][j]).abs() < 1e-5 * hs[0][0].abs(), "{i}{j}: {fd} vs {}", hs[i][j]);
            }
        }
    }

    #[test]
    fn euler_relation() {
        let t = townes();
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        let e = euler_integral(&spec, t, an.y0);
        assert!((e - spec.p * an.h0).abs() < 1e-4 * an.h0);
    }

    #[test]
    fn envelope_parsing() {
        assert_eq!(Envelope::parse("const:2").unwrap(), Envelope::Constant(2.0));
        let e = Envelope::parse("taylor:m=2,coeffs=[0, 1, 0]").unwrap();
        let t = e.taylor();
        assert_eq!(t.m, Some(2));
        assert!((t.polynomial(2.0, 3.0) - 6.0).abs() < 1e-14);
        assert!((e.eval(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!(Envelope::parse("taylor:m=3,coeffs=[1,2]").is_err());
        assert!(Envelope::parse("taylor:m=0,coeffs=[1]").is_err());
        assert_eq!(Envelope::parse("taylor:m=1,coeffs=[1,0]").unwrap().taylor().m, Some(1));
        assert!(Envelope::parse("const:-1").is_err());
        assert!(Envelope::parse("gauss").is_err());
        let inf = Envelope::parse("taylor:m=inf").unwrap();
        assert_eq!(inf.taylor().m, None);
    }

    #[test]
    fn taylor_envelope_reproduces_its_data() {
        let e = Envelope::parse("taylor:m=2,coeffs=[1.0, 0.5, -0.3]").unwrap();
        let d = 1e-3;
        // second derivatives at the origin by central differences
        let gxx = (e.eval(d, 0.0) - 2.0 * e.eval(0.0, 0.0) + e.eval(-d, 0.0)) / (d * d);
        let gyy = (e.eval(0.0, d) - 2.0 * e.eval(0.0, 0.0) + e.eval(0.0, -d)) / (d * d);
        let gxy = (e.eval(d, d) - e.eval(d, -d) - e.eval(-d, d) + e.eval(-d, -d)) / (4.0 * d * d);
        assert!((gxx - 1.0).abs() < 1e-4 && (gxy - 0.5).abs() < 1e-4 && (gyy + 0.3).abs() < 1e-4);
    }

    #[test]
    fn angular_profile_interpolates_and_detects_parity() {
        let a = AngularProfile::preset("cos+sin").unwrap();
        assert!((a.eval(0.3) - (0.3f64.cos() + 0.3f64.sin())).abs() < 1e-13);
        assert!((a.derivative(0.3) - (0.3f64.cos() - 0.3f64.sin())).abs() < 1e-13);
        assert!(!a.is_even());
        assert!(AngularProfile::preset("cos2").unwrap().is_even());
        assert!(AngularProfile::preset("one").unwrap().is_even());
        assert!(AngularProfile::preset("tan").is_err());
        assert!(PotentialSpec::new(2.0, 2.0, AngularProfile::preset("cos").unwrap(), Envelope::Constant(1.0)).is_err());
        assert!(PotentialSpec::new(1.5, 0.0, AngularProfile::preset("one").unwrap(), Envelope::Constant(1.0)).is_err());
    }

    proptest! {
        #[test]
        fn homogeneity(x in -3.0f64..3.0, y in -3.0f64..3.0, t in prop::sample::select(vec![0.5f64, 2.0, 3.0]),
                       p in 2.0f64..5.0, delta in -0.5f64..0.5) {
            let spec = PotentialSpec::new(p, delta, AngularProfile::preset("cos+sin").unwrap(), Envelope::Constant(1.0)).unwrap();
            let lhs = spec.h(t * x, t * y);
            let rhs = t.powf(p) * spec.h(x, y);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }

        #[test]
        fn euler_identity_pointwise(x in -3.0f64..3.0, y in -3.0f64..3.0, p in 2.0f64..5.0, delta in -0.5f64..0.5) {
            prop_assume!(x.hypot(y) > 1e-3);
            let spec = PotentialSpec::new(p, delta, AngularProfile::preset("cos").unwrap(), Envelope::Constant(1.0)).unwrap();
            let g = spec.grad_h(x, y);
            let lhs = x * g[0] + y * g[1];
            prop_assert!((lhs - p * spec.h(x, y)).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
