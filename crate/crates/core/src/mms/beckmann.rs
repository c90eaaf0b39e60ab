use serde::{Deserialize, Serialize};

use super::{energy_pressureless, minimize_q_given_c, prox_sqrt_conductivity, update_c_given_q, MeasurePair, MmsParams};
use crate::error::{Error, Result};
use crate::linalg::solve_semidefinite;
use crate::meso::{load_vector, DirectionalField, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeckmannParams {
    pub c0: f64,
    /// Proximal step; large values approach reweighted least squares.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once the relative decrease of both values per sweep is below this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Cells with `|q*| > threshold * max |q*|` enter the direction check,
    /// except cells touching the support of `S`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_tau() -> f64 {
    1e4
}

fn default_max_iter() -> usize {
    3000
}

fn default_tol() -> f64 {
    1e-10
}

fn default_threshold() -> f64 {
    1e-6
}

impl BeckmannParams {
    pub fn new(c0: f64) -> Self {
        Self { c0, tau: default_tau(), max_iter: default_max_iter(), tol: default_tol(), threshold: default_threshold() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeckmannReport {
    pub directional_value: f64,
    pub beckmann_value: f64,
    /// `|directional - beckmann| / beckmann`.
    pub relative_gap: f64,
    /// Largest angular spread of `C` about `q* / |q*|` over checked cells.
    pub max_spread: f64,
    /// Quadrature spacing `pi / M`.
    pub spacing: f64,
    pub cells_checked: usize,
    pub directional_iterations: usize,
    pub beckmann_iterations: usize,
    pub directional: MeasurePair,
    /// Scalar conductivity per cell.
    pub c_bar: Vec<f64>,
    /// Cell-mean Beckmann flux.
    pub q_star: Vec<[f64; 2]>,
}

/// Root-mean-square angle (modulo pi) between the quadrature directions and
/// `target`, weighted by `w_m C_m`.
pub fn angular_spread(grid: &Grid, c: &[f64], target: [f64; 2]) -> f64 {
    let t = target[1].atan2(target[0]);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((d, w), v) in grid.dirs().iter().zip(grid.weights()).zip(c) {
        let mut a = (d[1].atan2(d[0]) - t).rem_euclid(std::f64::consts::PI);
        if a > std::f64::consts::FRAC_PI_2 {
            a = std::f64::consts::PI - a;
        }
        num += w * v * a * a;
        den += w * v;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn beckmann_energy(grid: &Grid, c_bar: &[f64], a: &[f64], c0: f64) -> f64 {
    let vol = grid.cell_volume();
    c_bar
        .iter()
        .zip(a)
        .map(|(&c, &a)| {
            let kin = if c > 0.0 {
                c0 * c0 * a / c
            } else if a == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            vol * (kin + c)
        })
        .sum()
}

/// Solves the directional problem at `gamma = 1` and the Beckmann problem
/// with a scalar conductivity and vector flux on the same grid, and compares
/// their optimal values and the concentration of `C` about `q* / |q*|`.
pub fn beckmann_check(grid: &Grid, s: &[f64], params: &BeckmannParams) -> Result<BeckmannReport> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParameter("Beckmann check needs a 2D grid".into()));
    }
    let nd = grid.n_dirs();
    let epc = grid.elements_per_cell();
    let mms = MmsParams::new(params.tau, 1.0, params.c0);

    // Directional problem.
    let mut pair = MeasurePair { c: DirectionalField::constant(grid, 1.0), q: vec![0.0; grid.n_elements() * nd] };
    let mut dir_value = f64::INFINITY;
    let mut directional_iterations = 0;
    let mut dir_done = false;
    // Beckmann problem.
    let mut c_bar = vec![1.0; grid.n_cells()];
    let mut q_el = vec![[0.0; 2]; grid.n_elements()];
    let mut beck_value = f64::INFINITY;
    let mut beckmann_iterations = 0;
    let mut beck_done = false;
    let b = load_vector(grid, s);

    for _ in 0..params.max_iter {
        if !dir_done {
            let sub = minimize_q_given_c(grid, &pair.c, s, params.c0, 1e-9)?;
            let c = update_c_given_q(grid, &pair.c, &sub.q, &mms);
            pair = MeasurePair { c, q: sub.q };
            let v = energy_pressureless(grid, &pair, 1.0, params.c0);
            directional_iterations += 1;
            dir_done = (dir_value - v).abs() <= params.tol * v.abs() || v == 0.0;
            dir_value = v;
        }
        if !beck_done {
            let k = grid.assemble_stiffness(|e| {
                let c = c_bar[e / epc];
                [c, 0.0, c]
            });
            let sol = solve_semidefinite(&k, &b, 1e-9)?;
            if sol.relative_residual > 1e-9 {
                return Err(Error::NoConvergence(format!("Beckmann flux solve residual {:e}", sol.relative_residual)));
            }
            let grads = grid.gradients(&sol.x);
            for e in 0..grid.n_elements() {
                let c = c_bar[e / epc];
                q_el[e] = [c * grads[e][0], c * grads[e][1]];
            }
            let a: Vec<f64> = (0..grid.n_cells())
                .map(|cell| (cell * epc..(cell + 1) * epc).map(|e| q_el[e][0].powi(2) + q_el[e][1].powi(2)).sum::<f64>() / epc as f64)
                .collect();
            c_bar = c_bar
                .iter()
                .zip(&a)
                .map(|(&c, &a)| prox_sqrt_conductivity(c.sqrt(), a, params.c0, 1.0, params.tau).powi(2))
                .collect();
            let v = beckmann_energy(grid, &c_bar, &a, params.c0);
            beckmann_iterations += 1;
            beck_done = (beck_value - v).abs() <= params.tol * v.abs() || v == 0.0;
            beck_value = v;
        }
        if dir_done && beck_done {
            break;
        }
    }

    let q_star: Vec<[f64; 2]> = (0..grid.n_cells())
        .map(|cell| {
            let mut m = [0.0; 2];
            for e in cell * epc..(cell + 1) * epc {
                m[0] += q_el[e][0] / epc as f64;
                m[1] += q_el[e][1] / epc as f64;
            }
            m
        })
        .collect();
    let qmax = q_star.iter().map(|q| q[0].hypot(q[1])).fold(0.0, f64::max);
    let mut max_spread = 0.0_f64;
    let mut cells_checked = 0;
    if qmax > 0.0 {
        for (cell, q) in q_star.iter().enumerate() {
            let (i, j) = grid.cell_ij(cell);
            let at_source = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)].iter().any(|&(a, b)| s[grid.node_index(a, b)] != 0.0);
            if !at_source && q[0].hypot(q[1]) > params.threshold * qmax {
                cells_checked += 1;
                max_spread = max_spread.max(angular_spread(grid, pair.c.cell(cell), *q));
            }
        }
    }
    let relative_gap = if beck_value == 0.0 {
        dir_value.abs()
    } else {
        (dir_value - beck_value).abs() / beck_value
    };
    Ok(BeckmannReport {
        directional_value: dir_value,
        beckmann_value: beck_value,
        relative_gap,
        max_spread,
        spacing: std::f64::consts::PI / nd as f64,
        cells_checked,
        directional_iterations,
        beckmann_iterations,
        directional: pair,
        c_bar,
        q_star,
    })
}
