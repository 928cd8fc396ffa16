//! Expansion constants and closed-form predictors for `e(a)`, `μ_a`, `u_a` and the spike location.

use crate::error::{Error, Result};
use crate::field::{Field2D, Grid2D};
use crate::linearized::CorrectionSet;
use crate::potential::{integrate_polar, PolarQuadrature, PotentialAnalysis, PotentialSpec};
use crate::radial::TownesProfile;
use serde::{Deserialize, Serialize};

/// Relative threshold below which `S` counts as zero, measured against `∫ |T| h w^2`.
pub const S_ZERO_TOL: f64 = 1e-8;
/// `C*` below this magnitude is flagged.
pub const C_STAR_FLOOR: f64 = 1e-6;

/// Which branch of the envelope-order dispatch applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    /// `m > 2+p`, including the flat envelope `m = ∞`
    HighOrder,
    /// `m ≤ 2+p`, `m` odd
    OddLow,
    /// `m < 2+p`, `m` even, `S = 0`
    EvenLowZeroS,
    /// `m < 2+p`, `m` even, `S ≠ 0`
    EvenLowNonzeroS,
    /// `m = 2+p`, `m` even
    EvenCritical,
}

impl CaseTag {
    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::HighOrder => "m>2+p",
            CaseTag::OddLow => "m<=2+p_odd",
            CaseTag::EvenLowZeroS => "m<2+p_even_S=0",
            CaseTag::EvenLowNonzeroS => "m<2+p_even_S!=0",
            CaseTag::EvenCritical => "m=2+p_even",
        }
    }
}

/// Dispatches on `(p, m, S)`; `m = None` is the flat envelope.
pub fn classify_case(p: f64, m: Option<usize>, s_nonzero: bool) -> CaseTag {
    let Some(m) = m else { return CaseTag::HighOrder };
    let mf = m as f64;
    let crit = 2.0 + p;
    if (mf - crit).abs() < 1e-12 {
        if m % 2 == 1 { CaseTag::OddLow } else { CaseTag::EvenCritical }
    } else if mf > crit {
        CaseTag::HighOrder
    } else if m % 2 == 1 {
        CaseTag::OddLow
    } else if s_nonzero {
        CaseTag::EvenLowNonzeroS
    } else {
        CaseTag::EvenLowZeroS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub p: f64,
    pub m: Option<usize>,
    pub lambda: f64,
    pub c_star: f64,
    pub c1_star: Option<f64>,
    pub c2_star: Option<f64>,
    pub s_val: Option<f64>,
    pub i_val: f64,
    pub ii_val: f64,
    /// first component of `I₅`
    pub i5_val: f64,
    pub i5: [f64; 2],
    pub w_psi1: f64,
    pub w_psi2: f64,
    pub w3_psi1: f64,
    /// `2∫wψ₃ + ∫ψ₁²`
    pub c_star_numerator: f64,
    /// `2∫wφ`
    pub two_w_phi: f64,
    pub case_tag: CaseTag,
    /// `|C*| < C_STAR_FLOOR`
    pub c_star_flagged: bool,
}

impl AsymptoticConstants {
    /// `β` as a multiple of the branch's gauge: `C*`, `C₁*` or `C₂*`.
    pub fn beta_constant(&self) -> f64 {
        match self.case_tag {
            CaseTag::EvenLowNonzeroS => self.c1_star.unwrap_or(f64::NAN),
            CaseTag::EvenCritical => self.c2_star.unwrap_or(f64::NAN),
            _ => self.c_star,
        }
    }

    /// `p, m, case, lambda, C*, C1*, C2*, S, I, II, I5`
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        format!(
            "{},{},{},{:.12e},{:.12e},{},{},{},{:.6e},{:.12e},{:.6e}",
            self.p,
            self.m.map(|m| m.to_string()).unwrap_or_else(|| "inf".into()),
            self.case_tag.label(),
            self.lambda,
            self.c_star,
            opt(self.c1_star),
            opt(self.c2_star),
            opt(self.s_val),
            self.i_val,
            self.ii_val,
            self.i5_val
        )
    }

    pub const CSV_HEADER: &'static str = "p,m,case,lambda,C*,C1*,C2*,S,I,II,I5";
}

/// `S = Σ_{|α|=m} ∫ (x^α/α!) D^α g(0) h(x) w^2` by polar quadrature, with the absolute scale
/// `∫ |T| h w^2`. Returns `(0, 0)` for a flat envelope.
pub fn compute_s_with_scale(spec: &PotentialSpec, townes: &TownesProfile) -> (f64, f64) {
    let taylor = spec.envelope.taylor();
    if taylor.m.is_none() {
        return (0.0, 0.0);
    }
    let v = integrate_polar(townes, PolarQuadrature::default(), |x, y, _, w, _| {
        let t = taylor.polynomial(x, y);
        let hw = spec.h(x, y) * w * w;
        [t * hw, t.abs() * hw]
    });
    (v[0], v[1])
}

pub fn compute_s(spec: &PotentialSpec, townes: &TownesProfile) -> f64 {
    compute_s_with_scale(spec, townes).0
}

/// All expansion constants from a correction set.
pub fn compute_constants(
    corrections: &CorrectionSet,
    townes: &TownesProfile,
    analysis: &PotentialAnalysis,
    spec: &PotentialSpec,
) -> AsymptoticConstants {
    let grid = corrections.grid;
    let p = spec.p;
    let w = townes.to_field(grid);
    let c = corrections;
    let w_psi1 = w.dot(&c.psi1);
    let w_psi2 = w.dot(&c.psi2);
    let i_val = 2.0 * w.dot(&c.psi4) + c.psi2.dot(&c.psi2);
    let ii_val = 2.0 * w.dot(&c.psi5) + 2.0 * c.psi1.dot(&c.psi2);
    let w3_psi1 = w.map(|v| v * v * v).dot(&c.psi1);
    let numerator = 2.0 * w.dot(&c.psi3) + c.psi1.dot(&c.psi1);
    let c_star = 2.0 / (2.0 + p) * numerator;
    let two_w_phi = 2.0 * w.dot(&c.phi);

    let y0 = analysis.y0;
    let k = [
        Field2D::from_fn(grid, |x, y| {
            let r = x.hypot(y);
            if r == 0.0 { 0.0 } else { townes.dw_at(r) * x / r }
        }),
        Field2D::from_fn(grid, |x, y| {
            let r = x.hypot(y);
            if r == 0.0 { 0.0 } else { townes.dw_at(r) * y / r }
        }),
    ];
    let coef = spec.g0() / analysis.lambda_2p();
    let mut integrand = Field2D::zeros(grid);
    for (idx, v) in integrand.values.iter_mut().enumerate() {
        let i = idx / grid.n;
        let j = idx % grid.n;
        let (x, y) = (grid.coord(i), grid.coord(j));
        let (wv, p1) = (w.values[idx], c.psi1.values[idx]);
        *v = 3.0 / townes.a_star * wv * wv * p1 + coef * spec.h(x + y0[0], y + y0[1]) * p1 - 3.0 * wv * p1 * p1;
    }
    let i5 = [k[0].dot(&integrand), k[1].dot(&integrand)];

    let taylor = spec.envelope.taylor();
    let (s_raw, s_scale) = compute_s_with_scale(spec, townes);
    let s_nonzero = taylor.m.is_some() && s_raw.abs() > S_ZERO_TOL * s_scale.max(1e-300);
    let case_tag = classify_case(p, taylor.m, s_nonzero);
    let lam = analysis.lambda;
    let (s_val, c1_star, c2_star) = match taylor.m {
        None => (None, None, None),
        Some(m) => {
            let s = if s_nonzero { s_raw } else { 0.0 };
            let lpm = analysis.lambda_2p() * lam.powi(m as i32);
            let c1 = -(m as f64 + p) * s / ((2.0 + p) * lpm);
            let c2 = 2.0 / (2.0 + p) * (numerator + two_w_phi);
            (Some(s), Some(c1), Some(c2))
        }
    };
    AsymptoticConstants {
        p,
        m: taylor.m,
        lambda: lam,
        c_star,
        c1_star,
        c2_star,
        s_val,
        i_val,
        ii_val,
        i5_val: i5[0],
        i5,
        w_psi1,
        w_psi2,
        w3_psi1,
        c_star_numerator: numerator,
        two_w_phi,
        case_tag,
        c_star_flagged: c_star.abs() < C_STAR_FLOOR,
    }
}

/// `ε = (a*-a)^{1/(2+p)}`, `α = a*-a`, `β = 1 + με²/λ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParameters {
    pub a: f64,
    pub eps: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
}

impl ScaleParameters {
    pub fn new(a: f64, a_star: f64, p: f64) -> Result<Self> {
        if !(a < a_star) || !a.is_finite() {
            return Err(Error::InvalidInput(format!("need a < a* = {a_star}, got {a}")));
        }
        let alpha = a_star - a;
        Ok(Self { a, eps: alpha.powf(1.0 / (2.0 + p)), alpha, beta: None })
    }

    pub fn with_mu(mut self, mu: f64, lambda: f64) -> Self {
        self.beta = Some(1.0 + mu * self.eps * self.eps / (lambda * lambda));
        self
    }
}

/// Predicted `β` in the branch selected by the case tag.
pub fn predict_beta(constants: &AsymptoticConstants, scale: &ScaleParameters) -> f64 {
    match constants.case_tag {
        CaseTag::EvenLowNonzeroS => constants.c1_star.unwrap_or(f64::NAN) * scale.eps.powi(constants.m.unwrap_or(0) as i32),
        _ => constants.beta_constant() * scale.alpha,
    }
}

/// `μ = -λ²/ε² + λ² C* ε^p` for the flat-envelope case.
pub fn predict_mu(constants: &AsymptoticConstants, analysis: &PotentialAnalysis, scale: &ScaleParameters) -> Result<f64> {
    if constants.m.is_some() {
        return Err(Error::WrongCase { expected: "flat envelope".into(), actual: constants.case_tag.label().into() });
    }
    let l2 = analysis.lambda * analysis.lambda;
    Ok(-l2 / (scale.eps * scale.eps) + l2 * constants.c_star * scale.eps.powf(analysis.p))
}

/// `μ = (β - 1) λ²/ε²` with `β` from [`predict_beta`]; valid in every branch.
pub fn predict_mu_any(constants: &AsymptoticConstants, analysis: &PotentialAnalysis, scale: &ScaleParameters) -> f64 {
    let l2 = analysis.lambda * analysis.lambda;
    (predict_beta(constants, scale) - 1.0) * l2 / (scale.eps * scale.eps)
}

/// `e = (λ²/a*) ((p+2)/p) (a*-a)^{p/(2+p)}`.
pub fn predict_energy(analysis: &PotentialAnalysis, scale: &ScaleParameters, a_star: f64) -> f64 {
    let p = analysis.p;
    analysis.lambda * analysis.lambda / a_star * (p + 2.0) / p * scale.alpha.powf(p / (2.0 + p))
}

/// Truncation level of a profile prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    /// rescaled Townes bubble only
    Leading,
    /// plus the first correction (`ψ₁`, `ψ₂` terms)
    First,
    /// plus the second corrections (`ψ₃…ψ₅`, `φ`)
    Second,
}

#[derive(Debug, Clone)]
pub struct ExpansionPrediction {
    pub u_pred: Field2D,
    pub mu_pred: f64,
    pub e_pred: f64,
    pub x_pred: [f64; 2],
    pub order: Truncation,
    /// `‖u_pred‖₂` before projection onto the unit sphere
    pub norm_before: f64,
}

/// Predicted `λ x_a / ε`.
pub fn predict_location_scaled(
    constants: &AsymptoticConstants,
    corrections: &CorrectionSet,
    analysis: &PotentialAnalysis,
    scale: &ScaleParameters,
) -> [f64; 2] {
    let y0 = analysis.y0;
    match constants.m {
        None => {
            let beta = predict_beta(constants, scale);
            let s = scale.alpha * analysis.lambda;
            [
                y0[0] * (1.0 + beta / 2.0) + s * corrections.y_sup[0],
                y0[1] * (1.0 + beta / 2.0) + s * corrections.y_sup[1],
            ]
        }
        Some(m) => {
            let em = scale.eps.powi(m as i32);
            [em * corrections.x0[0], em * corrections.x0[1]]
        }
    }
}

/// Combination of correction fields entering the profile at each order, as `(coefficient, field)`.
fn correction_terms<'a>(
    constants: &AsymptoticConstants,
    c: &'a CorrectionSet,
    scale: &ScaleParameters,
    order: Truncation,
) -> Vec<(f64, &'a Field2D)> {
    let p = constants.p;
    let e = scale.eps;
    let mut terms = Vec::new();
    if order == Truncation::Leading {
        return terms;
    }
    let e1 = e.powf(1.0 + p);
    let e3 = e.powf(3.0 + 2.0 * p);
    let m = constants.m.unwrap_or(0) as i32;
    match constants.case_tag {
        CaseTag::EvenLowNonzeroS => {
            let c1 = constants.c1_star.unwrap_or(0.0);
            terms.push((e.powi(m - 1) * c1, &c.psi2));
            terms.push((e1, &c.psi1));
            if order == Truncation::Second {
                terms.push((e.powi(2 * m - 1) * c1 * c1, &c.psi4));
            }
        }
        tag => {
            let cs = constants.beta_constant();
            terms.push((e1, &c.psi1));
            terms.push((e1 * cs, &c.psi2));
            if order == Truncation::Second {
                terms.push((e3, &c.psi3));
                terms.push((e3 * cs * cs, &c.psi4));
                terms.push((e3 * cs, &c.psi5));
                match tag {
                    CaseTag::EvenCritical => terms.push((e3, &c.phi)),
                    CaseTag::OddLow | CaseTag::EvenLowZeroS => terms.push((e.powf(1.0 + m as f64 + p), &c.phi)),
                    _ => {}
                }
            }
        }
    }
    terms
}

/// Assembles `u_pred` on `target` and projects it onto the unit sphere.
#[allow(clippy::too_many_arguments)]
pub fn predict_profile(
    constants: &AsymptoticConstants,
    corrections: &CorrectionSet,
    analysis: &PotentialAnalysis,
    townes: &TownesProfile,
    scale: &ScaleParameters,
    order: Truncation,
    target: Grid2D,
) -> Result<ExpansionPrediction> {
    let lam = analysis.lambda;
    let eps = scale.eps;
    let loc = predict_location_scaled(constants, corrections, analysis, scale);
    let x_pred = [loc[0] * eps / lam, loc[1] * eps / lam];
    let pref = lam / townes.a_star.sqrt();
    let terms = correction_terms(constants, corrections, scale, order);
    let mut u = Field2D::from_fn(target, |x, y| {
        let z = [lam * (x - x_pred[0]) / eps, lam * (y - x_pred[1]) / eps];
        let mut v = townes.w_at(z[0].hypot(z[1])) / eps;
        for (c, f) in &terms {
            v += c * f.cubic(z[0], z[1]);
        }
        pref * v
    });
    let norm_before = u.norm_l2();
    if !(norm_before > 0.0) {
        return Err(Error::ZeroField);
    }
    u = u.scale(1.0 / norm_before);
    let mu_pred = predict_mu_any(constants, analysis, scale);
    let e_pred = predict_energy(analysis, scale, townes.a_star);
    Ok(ExpansionPrediction { u_pred: u, mu_pred, e_pred, x_pred, order, norm_before })
}

/// Correction to `w` in the rescaled frame, `Σ c_i ψ_i` evaluated on the corrections grid.
pub fn predicted_remainder(constants: &AsymptoticConstants, corrections: &CorrectionSet, scale: &ScaleParameters, order: Truncation) -> Field2D {
    let terms = correction_terms(constants, corrections, scale, order);
    let mut out = Field2D::zeros(corrections.grid);
    // the rescaled profile is ε^{-1}(…) times ε, so each term loses one power of ε
    for (c, f) in terms {
        out = out.axpy(c * scale.eps, f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::tests::townes;
    use crate::potential::{find_critical_point, AngularProfile, Envelope};

    #[test]
    fn dispatch_covers_all_branches() {
        assert_eq!(classify_case(2.0, None, false), CaseTag::HighOrder);
        assert_eq!(classify_case(2.0, Some(5), false), CaseTag::HighOrder);
        assert_eq!(classify_case(2.0, Some(6), true), CaseTag::HighOrder);
        assert_eq!(classify_case(2.0, Some(3), false), CaseTag::OddLow);
        assert_eq!(classify_case(3.0, Some(5), false), CaseTag::OddLow);
        assert_eq!(classify_case(2.0, Some(2), false), CaseTag::EvenLowZeroS);
        assert_eq!(classify_case(2.0, Some(2), true), CaseTag::EvenLowNonzeroS);
        assert_eq!(classify_case(2.0, Some(4), true), CaseTag::EvenCritical);
        assert_eq!(classify_case(2.0, Some(4), false), CaseTag::EvenCritical);
        assert_eq!(classify_case(2.5, Some(4), true), CaseTag::EvenLowNonzeroS);
        // totality: every (p, m, S) maps to exactly one tag with the right parity/order
        for p in [2.0, 2.5, 3.0, 4.0] {
            for m in 2..12usize {
                for s in [false, true] {
                    let tag = classify_case(p, Some(m), s);
                    let mf = m as f64;
                    let ok = match tag {
                        CaseTag::HighOrder => mf > 2.0 + p,
                        CaseTag::OddLow => m % 2 == 1 && mf <= 2.0 + p,
                        CaseTag::EvenLowZeroS => m % 2 == 0 && mf < 2.0 + p && !s,
                        CaseTag::EvenLowNonzeroS => m % 2 == 0 && mf < 2.0 + p && s,
                        CaseTag::EvenCritical => m % 2 == 0 && mf == 2.0 + p,
                    };
                    assert!(ok, "p={p} m={m} s={s} -> {tag:?}");
                }
            }
        }
    }

    #[test]
    fn s_vanishes_for_zero_coefficients_and_matches_monomials() {
        let t = townes();
        let zero = PotentialSpec::new(2.0, 0.0, AngularProfile::preset("one").unwrap(), Envelope::parse("taylor:m=2,coeffs=[0,0,0]").unwrap()).unwrap();
        assert_eq!(compute_s(&zero, t), 0.0);
        // g_xx = g_yy = 1: T = (x² + y²)/2, S = ½∫|x|⁴ w²
        let id = PotentialSpec::new(2.0, 0.0, AngularProfile::preset("one").unwrap(), Envelope::parse("taylor:m=2,coeffs=[1,0,1]").unwrap()).unwrap();
        let fourth: Vec<f64> = (0..=t.grid.count).map(|i| t.grid.r(i).powi(5) * t.w[i] * t.w[i]).collect();
        let oracle = 0.5 * 2.0 * std::f64::consts::PI * crate::quad::simpson(&fourth, t.grid.step);
        let s = compute_s(&id, t);
        assert!((s - oracle).abs() < 1e-9 * oracle, "{s} vs {oracle}");
        // mixed term x y integrates to zero against a radial weight
        let mixed = PotentialSpec::new(2.0, 0.0, AngularProfile::preset("one").unwrap(), Envelope::parse("taylor:m=2,coeffs=[0,1,0]").unwrap()).unwrap();
        assert!(compute_s(&mixed, t).abs() < 1e-12);
    }

    #[test]
    fn energy_predictor_scaling() {
        let t = townes();
        let an = find_critical_point(&PotentialSpec::radial(2.0), t).unwrap();
        let e = |a: f64| predict_energy(&an, &ScaleParameters::new(a, t.a_star, 2.0).unwrap(), t.a_star);
        let (a1, a2) = (t.a_star - 1e-2, t.a_star - 1e-4);
        let slope = (e(a1).ln() - e(a2).ln()) / (1e-2f64.ln() - 1e-4f64.ln());
        assert!((slope - 0.5).abs() < 1e-12);
        assert!((e(a1) / 0.1 - 2.0 * an.lambda * an.lambda / t.a_star).abs() < 1e-12);
        assert!(e(t.a_star - 1e-14) < 1e-6);
        // doubling h scales λ² by 2^{2/(2+p)}
        let mut an2 = an.clone();
        an2.lambda_pow *= 2.0;
        an2.lambda = an2.lambda_pow.powf(0.25);
        let s = ScaleParameters::new(a1, t.a_star, 2.0).unwrap();
        let ratio = predict_energy(&an2, &s, t.a_star) / predict_energy(&an, &s, t.a_star);
        assert!((ratio - 2f64.powf(0.5)).abs() < 1e-12);
        assert!(ScaleParameters::new(t.a_star, t.a_star, 2.0).is_err());
    }

    fn fake_constants(c_star: f64) -> AsymptoticConstants {
        AsymptoticConstants {
            p: 2.0,
            m: None,
            lambda: 1.9,
            c_star,
            c1_star: None,
            c2_star: None,
            s_val: None,
            i_val: 0.0,
            ii_val: -2.0,
            i5_val: 0.0,
            i5: [0.0; 2],
            w_psi1: 0.0,
            w_psi2: 0.0,
            w3_psi1: 1.5,
            c_star_numerator: 2.0 * c_star,
            two_w_phi: 0.0,
            case_tag: CaseTag::HighOrder,
            c_star_flagged: c_star.abs() < C_STAR_FLOOR,
        }
    }

    #[test]
    fn mu_predictor() {
        let t = townes();
        let an = find_critical_point(&PotentialSpec::radial(2.0), t).unwrap();
        let s = ScaleParameters::new(t.a_star - 1e-4, t.a_star, 2.0).unwrap();
        let l2 = an.lambda * an.lambda;
        let c = fake_constants(0.34);
        let mu = predict_mu(&c, &an, &s).unwrap();
        assert!((mu - (-l2 * 1e2 + l2 * 0.34 * 1e-2)).abs() < 1e-9 * mu.abs());
        assert!((predict_mu_any(&c, &an, &s) - mu).abs() < 1e-9 * mu.abs());
        let zero = fake_constants(0.0);
        assert!(zero.c_star_flagged);
        assert_eq!(predict_mu(&zero, &an, &s).unwrap(), -l2 / (s.eps * s.eps));
        let mut env = fake_constants(0.3);
        env.m = Some(2);
        env.case_tag = CaseTag::EvenLowNonzeroS;
        assert!(matches!(predict_mu(&env, &an, &s), Err(Error::WrongCase { .. })));
        // β-balance: -(2+p)/2 β + α (2∫wψ₃ + ∫ψ₁²) = 0
        let beta = predict_beta(&c, &s);
        assert!((-(2.0 + 2.0) / 2.0 * beta + s.alpha * c.c_star_numerator).abs() < 1e-15);
    }

    #[test]
    fn csv_row_has_all_columns() {
        let row = fake_constants(0.34).csv_row();
        assert_eq!(row.split(',').count(), AsymptoticConstants::CSV_HEADER.split(',').count());
    }
}
