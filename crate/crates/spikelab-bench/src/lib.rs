//! Shared fixtures for the benchmarks.

use spikelab::gp2d::{GpOptions, GpProblem};
use spikelab::{solve_townes_with, PotentialSpec, RadialGrid, TownesOptions, TownesProfile};
use std::sync::OnceLock;

pub fn townes() -> &'static TownesProfile {
    static P: OnceLock<TownesProfile> = OnceLock::new();
    P.get_or_init(|| solve_townes_with(RadialGrid::default(), &TownesOptions::default()).expect("Townes profile"))
}

/// Harmonic-trap problem at `a/a* = fraction` on an `nodes²` periodic grid.
pub fn harmonic_problem(nodes: usize, fraction: f64) -> GpProblem {
    let t = townes();
    let opts = GpOptions { nodes, radius: 4.5, ..GpOptions::default() };
    GpProblem::new(&PotentialSpec::radial(2.0), t, fraction * t.a_star, opts).expect("GP problem")
}
