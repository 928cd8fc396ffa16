//! Run configuration: `[section]` headers with `key = value` lines (TOML syntax).
//! Unknown sections or keys are errors.

use crate::error::{Error, Result};
use crate::gp2d::{GpOptions, Method};
use crate::linearized::LinearOptions;
use crate::potential::{AngularProfile, Envelope, PotentialSpec};
use crate::radial::{RadialGrid, TownesOptions, DEFAULT_ODE_TOL, DEFAULT_RADIUS, DEFAULT_SHOOT_TOL, DEFAULT_STEP, DEFAULT_TAIL_TOL};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialSection {
    pub step: f64,
    pub radius: f64,
    pub shoot_tol: f64,
    pub ode_tol: f64,
    pub tail_tol: f64,
}

impl Default for RadialSection {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            radius: DEFAULT_RADIUS,
            shoot_tol: DEFAULT_SHOOT_TOL,
            ode_tol: DEFAULT_ODE_TOL,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub p: f64,
    pub delta: f64,
    /// preset name (`one`, `cos`, `sin`, `cos+sin`, `cos2`, `sin2`)
    pub angular: String,
    /// `const:<c>` or `taylor:m=<m|inf>,coeffs=[...],g0=<g0>`
    pub envelope: String,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { p: 2.0, delta: 0.0, angular: "one".into(), envelope: "const:1".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSection {
    pub step: f64,
    pub radius: f64,
    pub solve_tol: f64,
    pub max_iter: usize,
    pub orth_tol: f64,
}

impl Default for LinearSection {
    fn default() -> Self {
        let d = LinearOptions::default();
        Self { step: d.step, radius: d.radius, solve_tol: d.solve_tol, max_iter: d.max_iter, orth_tol: d.orth_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub nodes: usize,
    pub radius: f64,
    /// `cg` or `flow`
    pub method: String,
    pub el_tol: f64,
    pub e_tol: f64,
    pub max_iter: usize,
    pub dt0: f64,
    pub dt_floor: f64,
    pub min_cells: f64,
    pub collapse_margin: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        let d = GpOptions::default();
        Self {
            nodes: d.nodes,
            radius: d.radius,
            method: "cg".into(),
            el_tol: d.el_tol,
            e_tol: d.e_tol,
            max_iter: d.max_iter,
            dt0: d.dt0,
            dt_floor: d.dt_floor,
            min_cells: d.min_cells,
            collapse_margin: d.collapse_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// values of `a/a*`
    pub fractions: Vec<f64>,
    /// weight given to the two coarsest points in every fit
    pub coarse_weight: f64,
    /// half width of the window compared in the profile study
    pub profile_window: f64,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { fractions: vec![0.9, 0.97, 0.99, 0.997], coarse_weight: 1.0, profile_window: 8.0, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessSection {
    pub fraction: f64,
    pub starts: usize,
    pub nodes: usize,
    pub radius: f64,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        Self { fraction: 0.95, starts: 8, nodes: 256, radius: 4.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PohozaevSection {
    pub fraction: f64,
    pub radius: f64,
    pub coarse_nodes: usize,
    pub fine_nodes: usize,
    /// ball radius in units of `ε/λ`
    pub delta_cells: f64,
}

impl Default for PohozaevSection {
    fn default() -> Self {
        Self { fraction: 0.97, radius: 4.0, coarse_nodes: 256, fine_nodes: 512, delta_cells: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub exponent: f64,
    pub prefactor: f64,
    pub mu_final: f64,
    pub c_star: f64,
    pub profile_first: f64,
    /// allowed deviation of the fitted remainder order from 2
    pub profile_order: f64,
    pub location: f64,
    /// the location error must decay in ε with order at least `2 + p - location_rate_slack`
    pub location_rate_slack: f64,
    pub unique: f64,
    pub pohozaev_gain: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exponent: 0.02,
            prefactor: 0.05,
            mu_final: 0.05,
            c_star: 0.15,
            profile_first: 0.15,
            profile_order: 0.3,
            location: 0.05,
            location_rate_slack: 0.5,
            unique: 1e-6,
            pohozaev_gain: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub seed: u64,
    /// write `x y u` dumps of every converged state
    pub dump_fields: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("spikelab-out"), seed: 20240917, dump_fields: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub radial: RadialSection,
    pub potential: PotentialSection,
    pub linear: LinearSection,
    pub gp: GpSection,
    pub sweep: SweepSection,
    pub uniqueness: UniquenessSection,
    pub pohozaev: PohozaevSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            Error::Config { line, msg: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("validated configs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.sweep.fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return bad(format!("sweep fractions must lie in (0, 1): {:?}", self.sweep.fractions));
        }
        if !(self.uniqueness.fraction > 0.0 && self.uniqueness.fraction < 1.0) {
            return bad(format!("uniqueness fraction must lie in (0, 1), got {}", self.uniqueness.fraction));
        }
        if !(self.pohozaev.fraction > 0.0 && self.pohozaev.fraction < 1.0) {
            return bad(format!("pohozaev fraction must lie in (0, 1), got {}", self.pohozaev.fraction));
        }
        if self.output.seed > i64::MAX as u64 {
            return bad(format!("seed must be at most {}, got {}", i64::MAX, self.output.seed));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("exponent", t.exponent),
            ("prefactor", t.prefactor),
            ("mu_final", t.mu_final),
            ("c_star", t.c_star),
            ("profile_first", t.profile_first),
            ("profile_order", t.profile_order),
            ("location", t.location),
            ("unique", t.unique),
            ("pohozaev_gain", t.pohozaev_gain),
            ("location_rate_slack", t.location_rate_slack),
            ("gp.el_tol", self.gp.el_tol),
            ("linear.solve_tol", self.linear.solve_tol),
            ("radial.shoot_tol", self.radial.shoot_tol),
            ("radial.ode_tol", self.radial.ode_tol),
        ] {
            if !(v > 0.0) {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if !(self.sweep.coarse_weight > 0.0 && self.sweep.coarse_weight <= 1.0) {
            return bad(format!("coarse_weight must lie in (0, 1], got {}", self.sweep.coarse_weight));
        }
        if self.uniqueness.starts < 2 {
            return bad("uniqueness needs at least two starts".into());
        }
        self.method()?;
        self.potential_spec()?;
        Ok(())
    }

    pub fn radial_grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.radial.step, self.radial.radius)
    }

    pub fn townes_options(&self) -> TownesOptions {
        TownesOptions {
            shoot_tol: self.radial.shoot_tol,
            ode_tol: self.radial.ode_tol,
            tail_tol: self.radial.tail_tol,
            ..TownesOptions::default()
        }
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let p = &self.potential;
        PotentialSpec::new(p.p, p.delta, AngularProfile::preset(&p.angular)?, Envelope::parse(&p.envelope)?)
    }

    pub fn linear_options(&self) -> LinearOptions {
        let l = &self.linear;
        LinearOptions { step: l.step, radius: l.radius, solve_tol: l.solve_tol, max_iter: l.max_iter, orth_tol: l.orth_tol }
    }

    fn method(&self) -> Result<Method> {
        match self.gp.method.as_str() {
            "cg" => Ok(Method::ConjugateGradient),
            "flow" => Ok(Method::GradientFlow),
            other => Err(Error::InvalidInput(format!("unknown gp method `{other}` (cg | flow)"))),
        }
    }

    pub fn gp_options(&self) -> Result<GpOptions> {
        let g = &self.gp;
        Ok(GpOptions {
            nodes: g.nodes,
            radius: g.radius,
            method: self.method()?,
            el_tol: g.el_tol,
            e_tol: g.e_tol,
            max_iter: g.max_iter,
            dt0: g.dt0,
            dt_floor: g.dt_floor,
            min_cells: g.min_cells,
            collapse_margin: g.collapse_margin,
            ..GpOptions::default()
        })
    }
}
