//! Monokinetic field model: directional conductivity `C(x, theta)` on a grid
//! coupled to the anisotropic Poisson problem `-div(P grad p) = S` with
//! `P = r I + sum_m w_m C_m theta_m theta_m^T`.

mod grid;
pub mod particles;
pub mod stationary;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_semidefinite};

pub use grid::{half_circle_quadrature, Grid, Stencil};

/// Cell-by-direction samples, index `cell * n_dirs + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalField {
    pub n_dirs: usize,
    pub values: Vec<f64>,
}

impl DirectionalField {
    pub fn constant(grid: &Grid, v: f64) -> Self {
        Self { n_dirs: grid.n_dirs(), values: vec![v; grid.n_cells() * grid.n_dirs()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells() * grid.n_dirs());
        for c in 0..grid.n_cells() {
            let x = grid.cell_center(c);
            for t in grid.dirs() {
                values.push(f(x, *t));
            }
        }
        Self { n_dirs: grid.n_dirs(), values }
    }

    pub fn get(&self, cell: usize, m: usize) -> f64 {
        self.values[cell * self.n_dirs + m]
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_dirs..(cell + 1) * self.n_dirs]
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.n_dirs != grid.n_dirs() || self.values.len() != grid.n_cells() * grid.n_dirs() {
            return Err(Error::InvalidParameter("directional field does not match the grid".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("directional field has invalid value {v}")));
        }
        Ok(())
    }

    /// Cells and directions with positive conductivity.
    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.0).collect()
    }

    /// `sum vol w C`.
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        let vol = grid.cell_volume();
        self.values.iter().enumerate().map(|(i, v)| vol * grid.weights()[i % self.n_dirs] * v).sum()
    }
}

/// Nodal source density sampled from a function.
pub fn sample_sources(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..grid.n_nodes()).map(|n| f(grid.node_pos(n))).collect()
}

/// Subtracts the volume-weighted mean so that `sum S_i vol_i = 0`.
pub fn balance_sources(grid: &Grid, s: &mut [f64]) {
    let vol = grid.node_volumes();
    let total: f64 = vol.iter().sum();
    let mean = s.iter().zip(&vol).map(|(a, b)| a * b).sum::<f64>() / total;
    s.iter_mut().for_each(|x| *x -= mean);
}

/// Point masses placed on the nearest nodes as densities `mass / vol`.
pub fn point_sources(grid: &Grid, points: &[([f64; 2], f64)]) -> Vec<f64> {
    let vol = grid.node_volumes();
    let mut s = vec![0.0; grid.n_nodes()];
    for &(x, mass) in points {
        let n = grid.nearest_node(x);
        s[n] += mass / vol[n];
    }
    s
}

/// Load vector `b_i = S_i vol_i`.
pub fn load_vector(grid: &Grid, s: &[f64]) -> Vec<f64> {
    grid.node_volumes().iter().zip(s).map(|(v, x)| v * x).collect()
}

fn check_sources(grid: &Grid, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != grid.n_nodes() {
        return Err(Error::InvalidParameter(format!("{} source values for {} nodes", s.len(), grid.n_nodes())));
    }
    let b = load_vector(grid, s);
    let total: f64 = b.iter().sum();
    let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(Error::InfeasibleSources(format!("integral of S is {total:e}")));
    }
    Ok(b)
}

/// Per-cell tensor `[xx, xy, yy]` of `r I + sum_m w_m C_m theta_m theta_m^T`.
pub fn assemble_permeability(grid: &Grid, c: &DirectionalField, r: f64) -> Vec<[f64; 3]> {
    (0..grid.n_cells())
        .map(|cell| {
            let mut t = [r, 0.0, r];
            for ((d, w), &v) in grid.dirs().iter().zip(grid.weights()).zip(c.cell(cell)) {
                let a = w * v;
                t[0] += a * d[0] * d[0];
                t[1] += a * d[0] * d[1];
                t[2] += a * d[1] * d[1];
            }
            t
        })
        .collect()
}

/// Eigenvalues (ascending) of a symmetric 2x2 tensor `[xx, xy, yy]`.
pub fn tensor_eigenvalues(t: [f64; 3]) -> [f64; 2] {
    let m = 0.5 * (t[0] + t[2]);
    let d = (0.25 * (t[0] - t[2]).powi(2) + t[1] * t[1]).sqrt();
    [m - d, m + d]
}

fn min_eig(grid: &Grid, t: [f64; 3]) -> f64 {
    if grid.dim() == 1 {
        t[0]
    } else {
        tensor_eigenvalues(t)[0]
    }
}

/// Mean of `p` weighted by nodal volumes.
pub fn mean_nodal(grid: &Grid, p: &[f64]) -> f64 {
    let vol = grid.node_volumes();
    p.iter().zip(&vol).map(|(a, b)| a * b).sum::<f64>() / vol.iter().sum::<f64>()
}

/// Solves `-div(P grad p) = S` with no-flux boundary; `p` has zero mean.
/// Cells whose tensor is singular are rejected, not regularized.
pub fn solve_poisson(grid: &Grid, perm: &[[f64; 3]], s: &[f64], tol: f64) -> Result<Vec<f64>> {
    if perm.len() != grid.n_cells() {
        return Err(Error::InvalidParameter("permeability field does not match the grid".into()));
    }
    let b = check_sources(grid, s)?;
    let scale = perm.iter().map(|t| if grid.dim() == 1 { t[0] } else { t[0] + t[2] }).fold(0.0, f64::max);
    for (cell, t) in perm.iter().enumerate() {
        let ev = min_eig(grid, *t);
        if !(ev > 1e-12 * scale) {
            return Err(Error::DegeneratePermeability { cell, min_eig: ev });
        }
    }
    let a = grid.assemble_stiffness(|e| perm[grid.cell_of_element(e)]);
    let sol = solve_semidefinite(&a, &b, tol)?;
    if sol.relative_residual > tol {
        return Err(Error::SingularSystem { residual: sol.relative_residual });
    }
    let mut p = sol.x;
    let m = mean_nodal(grid, &p);
    p.iter_mut().for_each(|x| *x -= m);
    Ok(p)
}

/// `sum_i (A p - b)_i`, which vanishes for no-flux discretizations.
pub fn poisson_conservation_defect(grid: &Grid, perm: &[[f64; 3]], s: &[f64], p: &[f64]) -> f64 {
    let a = grid.assemble_stiffness(|e| perm[grid.cell_of_element(e)]);
    let ap = a.mul(p);
    ap.iter().zip(load_vector(grid, s)).map(|(x, y)| x - y).sum()
}

/// `mean over the elements of a cell of (theta_m . grad p)^2`, per cell and direction.
pub fn directional_gradient_sq(grid: &Grid, p: &[f64]) -> Vec<f64> {
    let epc = grid.elements_per_cell();
    let nd = grid.n_dirs();
    let grads = grid.gradients(p);
    let mut out = vec![0.0; grid.n_cells() * nd];
    for cell in 0..grid.n_cells() {
        for (m, d) in grid.dirs().iter().enumerate() {
            let mut acc = 0.0;
            for e in cell * epc..(cell + 1) * epc {
                let z = d[0] * grads[e][0] + d[1] * grads[e][1];
                acc += z * z;
            }
            out[cell * nd + m] = acc / epc as f64;
        }
    }
    out
}

/// One explicit step `C' = C + dt (c0^2 C |theta . grad p|^2 - C^gamma)` on
/// the support `mask`, clamped at zero. Entries outside the mask are kept.
pub fn step_monokinetic(
    grid: &Grid,
    c: &DirectionalField,
    mask: &[bool],
    p: &[f64],
    c0: f64,
    gamma: f64,
    dt: f64,
) -> DirectionalField {
    let g2 = directional_gradient_sq(grid, p);
    let values = c
        .values
        .iter()
        .zip(&g2)
        .zip(mask)
        .map(|((&ci, &gi), &on)| {
            if !on || ci <= 0.0 {
                return ci;
            }
            (ci + dt * (c0 * c0 * ci * gi - ci.powf(gamma))).max(0.0)
        })
        .collect();
    DirectionalField { n_dirs: c.n_dirs, values }
}

/// `E[C] = c0^2 b.p + sum vol w C^gamma / gamma` for the pressure `p` that
/// solves the Poisson problem with load `b`.
pub fn monokinetic_energy(grid: &Grid, c: &DirectionalField, s: &[f64], p: &[f64], c0: f64, gamma: f64) -> f64 {
    let pump: f64 = load_vector(grid, s).iter().zip(p).map(|(a, b)| a * b).sum();
    let vol = grid.cell_volume();
    let nd = c.n_dirs;
    let metabolic: f64 =
        c.values.iter().enumerate().map(|(i, v)| vol * grid.weights()[i % nd] * v.powf(gamma) / gamma).sum();
    c0 * c0 * pump + metabolic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary1d {
    /// Cumulative source `B` on each cell.
    pub b: Vec<f64>,
    /// `(c0 |B|)^{2/(gamma+1)}` on each cell.
    pub c: Vec<f64>,
    /// `-(1+gamma) (c0^2 B^2)^{(gamma-1)/(gamma+1)}` on each cell.
    pub indicator: Vec<f64>,
}

/// Cumulative source on each 1D cell: `B_k = sum_{j <= k} S_j vol_j`.
pub fn cumulative_source(grid: &Grid, s: &[f64]) -> Vec<f64> {
    let b = load_vector(grid, s);
    let mut acc = 0.0;
    (0..grid.n_cells())
        .map(|k| {
            acc += b[k];
            acc
        })
        .collect()
}

/// Stationary state of the 1D monokinetic model and its linear stability
/// indicator.
pub fn stationary_1d(grid: &Grid, s: &[f64], c0: f64, gamma: f64) -> Result<Stationary1d> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("stationary_1d needs a 1D grid".into()));
    }
    check_sources(grid, s)?;
    let b = cumulative_source(grid, s);
    let c = b.iter().map(|&x| (c0 * x.abs()).powf(2.0 / (gamma + 1.0))).collect();
    let indicator = b
        .iter()
        .map(|&x| {
            let base = c0 * c0 * x * x;
            let ex = (gamma - 1.0) / (gamma + 1.0);
            if base == 0.0 && ex < 0.0 {
                f64::NEG_INFINITY
            } else {
                -(1.0 + gamma) * base.powf(ex)
            }
        })
        .collect();
    Ok(Stationary1d { b, c, indicator })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesoParams {
    pub c0: f64,
    pub gamma: f64,
    pub r: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_poisson_tol")]
    pub tol: f64,
    /// Stop once `max |dC/dt| / max C` drops below this.
    #[serde(default)]
    pub steady_tol: f64,
}

fn default_poisson_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoTrajectory {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub c: DirectionalField,
    pub p: Vec<f64>,
    pub steps: usize,
}

/// Explicit time stepping of the monokinetic model from `c_init`; the
/// support of `c_init` is the fixed network mask.
pub fn simulate_meso(grid: &Grid, c_init: &DirectionalField, s: &[f64], params: &MesoParams) -> Result<MesoTrajectory> {
    c_init.check(grid)?;
    if !(params.dt > 0.0) || !(params.gamma > 0.0) || !(params.r >= 0.0) {
        return Err(Error::InvalidParameter(format!("meso parameters out of range: {params:?}")));
    }
    let mask = c_init.support();
    let mut c = c_init.clone();
    let mut t = 0.0;
    let mut times = Vec::new();
    let mut energy = Vec::new();
    let mut steps = 0;
    loop {
        let perm = assemble_permeability(grid, &c, params.r);
        let p = solve_poisson(grid, &perm, s, params.tol)?;
        times.push(t);
        energy.push(monokinetic_energy(grid, &c, s, &p, params.c0, params.gamma));
        if t >= params.t_end * (1.0 - 1e-12) {
            return Ok(MesoTrajectory { times, energy, c, p, steps });
        }
        let dt = params.dt.min(params.t_end - t);
        let next = step_monokinetic(grid, &c, &mask, &p, params.c0, params.gamma, dt);
        let change = next.values.iter().zip(&c.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let cmax = c.values.iter().fold(0.0_f64, |m, v| m.max(*v));
        c = next;
        t += dt;
        steps += 1;
        if params.steady_tol > 0.0 && change / dt <= params.steady_tol * cmax.max(f64::MIN_POSITIVE) {
            let perm = assemble_permeability(grid, &c, params.r);
            let p = solve_poisson(grid, &perm, s, params.tol)?;
            times.push(t);
            energy.push(monokinetic_energy(grid, &c, s, &p, params.c0, params.gamma));
            return Ok(MesoTrajectory { times, energy, c, p, steps });
        }
    }
}

/// Relative Poisson residual `||A p - b|| / ||b||`.
pub fn poisson_residual(grid: &Grid, perm: &[[f64; 3]], s: &[f64], p: &[f64]) -> f64 {
    let a = grid.assemble_stiffness(|e| perm[grid.cell_of_element(e)]);
    let b = load_vector(grid, s);
    let r: Vec<f64> = a.mul(p).iter().zip(&b).map(|(x, y)| x - y).collect();
    norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn step_source(x: f64) -> f64 {
        if x < 0.5 {
            2.0
        } else if x > 0.5 {
            -2.0
        } else {
            0.0
        }
    }

    #[test]
    fn permeability_examples() {
        let g = Grid::rect(1, 1, 1.0, 1.0, 16).unwrap();
        let iso = assemble_permeability(&g, &DirectionalField::constant(&g, 2.0), 0.0)[0];
        assert!((iso[0] - PI).abs() < 1e-12 && iso[1].abs() < 1e-12 && (iso[2] - PI).abs() < 1e-12);
        let bg = assemble_permeability(&g, &DirectionalField::constant(&g, 0.0), 0.3)[0];
        assert_eq!(bg, [0.3, 0.0, 0.3]);
        let mut one = DirectionalField::constant(&g, 0.0);
        one.values[8] = 5.0 / g.weights()[8];
        let t = assemble_permeability(&g, &one, 0.0)[0];
        assert!((t[0] - 5.0).abs() < 1e-12 && t[1].abs() < 1e-12 && t[2].abs() < 1e-12);
    }

    #[test]
    fn zero_source_gives_zero_pressure() {
        let g = Grid::rect(6, 6, 1.0, 1.0, 4).unwrap();
        let perm = assemble_permeability(&g, &DirectionalField::constant(&g, 1.0), 0.0);
        let p = solve_poisson(&g, &perm, &vec![0.0; g.n_nodes()], 1e-12).unwrap();
        assert!(p.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn degenerate_permeability_is_an_error() {
        let g = Grid::rect(3, 3, 1.0, 1.0, 8).unwrap();
        let mut c = DirectionalField::constant(&g, 0.0);
        for cell in 0..g.n_cells() {
            c.values[cell * 8 + 4] = 1.0;
        }
        let perm = assemble_permeability(&g, &c, 0.0);
        let mut s = sample_sources(&g, |x| x[0] - 0.5);
        balance_sources(&g, &mut s);
        assert!(matches!(solve_poisson(&g, &perm, &s, 1e-10), Err(Error::DegeneratePermeability { .. })));
    }

    #[test]
    fn one_dimensional_flux_is_cumulative_source() {
        let g = Grid::line(64, 1.0).unwrap();
        let s = sample_sources(&g, |x| step_source(x[0]));
        let c = DirectionalField::from_fn(&g, |x, _| 1.0 + x[0]);
        let p = solve_poisson(&g, &assemble_permeability(&g, &c, 0.0), &s, 1e-12).unwrap();
        let b = cumulative_source(&g, &s);
        for k in 0..g.n_cells() {
            let dp = g.element_gradient(k, &p)[0];
            assert!((c.values[k] * dp + b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_1d_example() {
        let g = Grid::line(64, 1.0).unwrap();
        let s = sample_sources(&g, |x| step_source(x[0]));
        let st = stationary_1d(&g, &s, 1.0, 1.0).unwrap();
        for k in 0..32 {
            let x = g.cell_center(k)[0];
            assert!((st.c[k] - 2.0 * x).abs() < 1e-12);
            assert!((st.c[63 - k] - 2.0 * x).abs() < 1e-12);
        }
        assert!(st.indicator.iter().all(|v| *v <= 0.0));
        let scaled = stationary_1d(&g, &s, 3.0, 0.5).unwrap();
        let base = stationary_1d(&g, &s, 1.0, 0.5).unwrap();
        for (a, b) in scaled.c.iter().zip(&base.c) {
            assert!((a - 3f64.powf(2.0 / 1.5) * b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn stationary_profile_is_a_fixed_point_of_the_step() {
        let g = Grid::line(64, 1.0).unwrap();
        let s = sample_sources(&g, |x| step_source(x[0]));
        for gamma in [0.5, 1.0, 2.0] {
            let st = stationary_1d(&g, &s, 1.3, gamma).unwrap();
            let c = DirectionalField { n_dirs: 1, values: st.c.clone() };
            let p = solve_poisson(&g, &assemble_permeability(&g, &c, 0.0), &s, 1e-13).unwrap();
            let next = step_monokinetic(&g, &c, &c.support(), &p, 1.3, gamma, 0.1);
            for (a, b) in next.values.iter().zip(&c.values) {
                assert!((a - b).abs() < 1e-9 * b.max(1.0), "gamma {gamma}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pure_decay_without_gradient() {
        let g = Grid::rect(2, 2, 1.0, 1.0, 4).unwrap();
        let c = DirectionalField::constant(&g, 0.5);
        let p = vec![0.0; g.n_nodes()];
        let next = step_monokinetic(&g, &c, &c.support(), &p, 1.0, 1.5, 0.1);
        for v in next.values {
            assert!((v - (0.5 - 0.1 * 0.5f64.powf(1.5))).abs() < 1e-15);
        }
    }

    #[test]
    fn energy_decreases_along_the_flow() {
        let g = Grid::rect(12, 12, 1.0, 1.0, 8).unwrap();
        let mut s = sample_sources(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
        balance_sources(&g, &mut s);
        let c = DirectionalField::from_fn(&g, |x, t| 1.0 + 0.5 * (3.0 * x[0] + t[1]).sin());
        let params = MesoParams { c0: 1.0, gamma: 1.5, r: 1e-3, dt: 0.01, t_end: 1.0, tol: 1e-12, steady_tol: 0.0 };
        let tr = simulate_meso(&g, &c, &s, &params).unwrap();
        assert!(tr.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }

    #[test]
    fn conservation_defect_vanishes() {
        let g = Grid::rect(10, 7, 1.0, 0.7, 8).unwrap();
        let mut s = sample_sources(&g, |x| x[0] * x[1] - 0.1);
        balance_sources(&g, &mut s);
        let c = DirectionalField::from_fn(&g, |x, t| 1.0 + x[0] * t[0].powi(2));
        let perm = assemble_permeability(&g, &c, 1e-3);
        let p = solve_poisson(&g, &perm, &s, 1e-12).unwrap();
        assert!(poisson_conservation_defect(&g, &perm, &s, &p).abs() < 1e-12);
        assert!(poisson_residual(&g, &perm, &s, &p) < 1e-12);
    }
}
