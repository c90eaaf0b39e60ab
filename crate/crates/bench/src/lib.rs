//! Deterministic inputs shared by the benchmarks.

use netmorph_core::graph::{random_balanced_sources, random_connected_network};
use netmorph_core::meso::{balance_sources, sample_sources, DirectionalField, Grid};
use netmorph_core::mms::{minimize_q_given_c, MeasurePair};
use netmorph_core::{FluxEnergyMode, FluxProblem, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected network with balanced sources and conductivities in `[0.5, 2]`.
pub fn network(n: usize, extra_edge_prob: f64, seed: u64) -> (Network, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_connected_network(&mut rng, n, extra_edge_prob, 0.5, 2.0);
    let s = random_balanced_sources(&mut rng, n, 1.0);
    let net = net.with_sources(s).expect("balanced sources");
    let c = (0..net.n_edges()).map(|_| rng.random_range(0.5..2.0)).collect();
    (net, c)
}

pub fn gilbert_problem(n: usize, seed: u64) -> FluxProblem {
    let (net, _) = network(n, 0.5, seed);
    FluxProblem::new(net, 0.5, 1.0, FluxEnergyMode::Gilbert).expect("valid parameters")
}

/// Smooth balanced source on an `n x n` grid of the unit square.
pub fn grid_source(n: usize, dirs: usize) -> (Grid, Vec<f64>) {
    let grid = Grid::rect(n, n, 1.0, 1.0, dirs).expect("valid grid");
    let mut s = sample_sources(&grid, |x| (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos());
    balance_sources(&grid, &mut s);
    (grid, s)
}

/// Starting pair for one minimizing-movement step.
pub fn mms_start(grid: &Grid, s: &[f64], c0: f64) -> MeasurePair {
    let c = DirectionalField::constant(grid, 1.0);
    let q = minimize_q_given_c(grid, &c, s, c0, 1e-9).expect("uniform C reaches every node").q;
    MeasurePair { c, q }
}
