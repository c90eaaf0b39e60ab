//! Particle representation of the mesoscopic measure: each particle is an
//! edge element with fixed position and direction whose conductivity adapts.

use serde::{Deserialize, Serialize};

use super::{solve_poisson, DirectionalField, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: [f64; 2],
    pub theta: [f64; 2],
    pub c: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    /// Tent kernel radius in cells.
    #[serde(default = "default_radius")]
    pub deposit_radius: f64,
}

fn default_radius() -> f64 {
    2.0
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<Particle>) -> Self {
        Self { particles, deposit_radius: default_radius() }
    }

    /// `n` equally weighted particles at the midpoints of a straight segment
    /// from `a` to `b`, aligned with it.
    pub fn segment(a: [f64; 2], b: [f64; 2], n: usize, c: f64) -> Self {
        let t = super::stationary::half_circle_direction([b[0] - a[0], b[1] - a[1]]);
        let particles = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                Particle { x: [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], theta: t, c, weight: 1.0 / n as f64 }
            })
            .collect();
        Self::new(particles)
    }

    pub fn check(&self) -> Result<()> {
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if !self.particles.is_empty() && (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("particle weights sum to {total}, not 1")));
        }
        for p in &self.particles {
            if !(p.weight > 0.0) || !(p.c >= 0.0) || p.theta[0] < 0.0 || (p.theta[0].hypot(p.theta[1]) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("invalid particle {p:?}")));
            }
        }
        if !(self.deposit_radius > 0.0) {
            return Err(Error::InvalidParameter("deposit radius must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized tent weights of a point over cell centres.
fn tent_weights(grid: &Grid, x: [f64; 2], radius: f64) -> Vec<(usize, f64)> {
    let [hx, hy] = grid.h();
    let o = grid.origin();
    let (rx, ry) = (radius * hx, radius * hy);
    let span = radius.ceil() as isize + 1;
    let ci = ((x[0] - o[0]) / hx).floor() as isize;
    let cj = ((x[1] - o[1]) / hy).floor() as isize;
    let mut out = Vec::new();
    for j in cj - span..=cj + span {
        if grid.dim() == 1 && j != 0 {
            continue;
        }
        if j < 0 || j >= grid.ny() as isize {
            continue;
        }
        for i in ci - span..=ci + span {
            if i < 0 || i >= grid.nx() as isize {
                continue;
            }
            let c = grid.cell_index(i as usize, j as usize);
            let cc = grid.cell_center(c);
            let kx = (1.0 - (cc[0] - x[0]).abs() / rx).max(0.0);
            let ky = if grid.dim() == 1 { 1.0 } else { (1.0 - (cc[1] - x[1]).abs() / ry).max(0.0) };
            if kx * ky > 0.0 {
                out.push((c, kx * ky));
            }
        }
    }
    let total: f64 = out.iter().map(|(_, k)| k).sum();
    if total == 0.0 {
        return vec![(grid.locate_cell(x), 1.0)];
    }
    out.iter_mut().for_each(|(_, k)| *k /= total);
    out
}

/// Cell permeability tensors `r I + sum weight C theta theta^T K / vol`.
pub fn deposit_permeability(grid: &Grid, ens: &ParticleEnsemble, r: f64) -> Vec<[f64; 3]> {
    let vol = grid.cell_volume();
    let mut perm = vec![[r, 0.0, r]; grid.n_cells()];
    for p in &ens.particles {
        let a = p.weight * p.c / vol;
        if a == 0.0 {
            continue;
        }
        let t = p.theta;
        for (c, k) in tent_weights(grid, p.x, ens.deposit_radius) {
            perm[c][0] += a * k * t[0] * t[0];
            perm[c][1] += a * k * t[0] * t[1];
            perm[c][2] += a * k * t[1] * t[1];
        }
    }
    perm
}

/// Nodal source densities for point masses spread with the deposition
/// kernel: each cell share is split evenly over the cell's nodes.
pub fn kernel_sources(grid: &Grid, points: &[([f64; 2], f64)], radius: f64) -> Vec<f64> {
    let mut mass = vec![0.0; grid.n_nodes()];
    for &(x, m) in points {
        for (c, k) in tent_weights(grid, x, radius) {
            let (i, j) = grid.cell_ij(c);
            let corners: Vec<usize> = if grid.dim() == 1 {
                vec![i, i + 1]
            } else {
                vec![grid.node_index(i, j), grid.node_index(i + 1, j), grid.node_index(i, j + 1), grid.node_index(i + 1, j + 1)]
            };
            let share = m * k / corners.len() as f64;
            for n in corners {
                mass[n] += share;
            }
        }
    }
    mass.iter().zip(grid.node_volumes()).map(|(m, v)| m / v).collect()
}

/// Mean element gradient per cell.
pub fn cell_gradients(grid: &Grid, p: &[f64]) -> Vec<[f64; 2]> {
    let epc = grid.elements_per_cell();
    let g = grid.gradients(p);
    (0..grid.n_cells())
        .map(|c| {
            let mut s = [0.0; 2];
            for gr in &g[c * epc..(c + 1) * epc] {
                s[0] += gr[0] / epc as f64;
                s[1] += gr[1] / epc as f64;
            }
            s
        })
        .collect()
}

/// Bilinear interpolation of cell-centred values, constant beyond the
/// outermost centres.
pub fn interpolate_cells(grid: &Grid, v: &[[f64; 2]], x: [f64; 2]) -> [f64; 2] {
    let [hx, hy] = grid.h();
    let o = grid.origin();
    let axis = |t: f64, n: usize| -> (usize, usize, f64) {
        let u = (t - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (u.floor() as usize).min(n.saturating_sub(2));
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, if i1 == i0 { 0.0 } else { u - i0 as f64 })
    };
    let (i0, i1, fx) = axis((x[0] - o[0]) / hx, grid.nx());
    if grid.dim() == 1 {
        let (a, b) = (v[i0], v[i1]);
        return [a[0] + fx * (b[0] - a[0]), a[1] + fx * (b[1] - a[1])];
    }
    let (j0, j1, fy) = axis((x[1] - o[1]) / hy, grid.ny());
    let at = |i, j| v[grid.cell_index(i, j)];
    let mut out = [0.0; 2];
    for k in 0..2 {
        let lo = at(i0, j0)[k] * (1.0 - fx) + at(i1, j0)[k] * fx;
        let hi = at(i0, j1)[k] * (1.0 - fx) + at(i1, j1)[k] * fx;
        out[k] = lo * (1.0 - fy) + hi * fy;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleParams {
    pub c0: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub r: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleTrajectory {
    pub times: Vec<f64>,
    /// Conductivity of every particle at every recorded time.
    pub c: Vec<Vec<f64>>,
    pub final_state: ParticleEnsemble,
    pub p: Vec<f64>,
}

/// Explicit stepping of `dC/dt = (c0^2 (theta . grad p)^2 - C^{gamma-1}) C`
/// per particle with fixed positions, directions and weights.
pub fn simulate_particles(
    grid: &Grid,
    ens: &ParticleEnsemble,
    s: &[f64],
    params: &ParticleParams,
) -> Result<ParticleTrajectory> {
    ens.check()?;
    if !(params.r > 0.0) || !(params.dt > 0.0) || !(params.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("particle parameters out of range: {params:?}")));
    }
    let mut state = ens.clone();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut cs = vec![state.particles.iter().map(|p| p.c).collect::<Vec<_>>()];
    loop {
        let perm = deposit_permeability(grid, &state, params.r);
        let p = solve_poisson(grid, &perm, s, params.tol)?;
        if t >= params.t_end * (1.0 - 1e-12) {
            return Ok(ParticleTrajectory { times, c: cs, final_state: state, p });
        }
        let dt = params.dt.min(params.t_end - t);
        let grads = cell_gradients(grid, &p);
        for q in state.particles.iter_mut() {
            if q.c <= 0.0 {
                continue;
            }
            let g = interpolate_cells(grid, &grads, q.x);
            let z = q.theta[0] * g[0] + q.theta[1] * g[1];
            let rate = params.c0 * params.c0 * z * z - q.c.powf(params.gamma - 1.0);
            q.c = (q.c + dt * rate * q.c).max(0.0);
        }
        t += dt;
        times.push(t);
        cs.push(state.particles.iter().map(|p| p.c).collect());
    }
}

/// `m(cell) = sum weight sqrt(C) theta` over the particles located in a cell.
pub fn conductance_moment(grid: &Grid, ens: &ParticleEnsemble) -> Vec<[f64; 2]> {
    let mut m = vec![[0.0; 2]; grid.n_cells()];
    for p in &ens.particles {
        let c = grid.locate_cell(p.x);
        let a = p.weight * p.c.sqrt();
        m[c][0] += a * p.theta[0];
        m[c][1] += a * p.theta[1];
    }
    m
}

/// `m(cell) = sum_m w_m sqrt(C_m) theta_m` for a directional field.
pub fn field_conductance_moment(grid: &Grid, c: &DirectionalField) -> Vec<[f64; 2]> {
    (0..grid.n_cells())
        .map(|cell| {
            let mut m = [0.0; 2];
            for ((d, w), v) in grid.dirs().iter().zip(grid.weights()).zip(c.cell(cell)) {
                m[0] += w * v.sqrt() * d[0];
                m[1] += w * v.sqrt() * d[1];
            }
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meso::{balance_sources, point_sources};

    #[test]
    fn single_particle_moment() {
        let g = Grid::rect(4, 4, 1.0, 1.0, 4).unwrap();
        let ens = ParticleEnsemble::new(vec![Particle { x: [0.3, 0.6], theta: [1.0, 0.0], c: 4.0, weight: 1.0 }]);
        let m = conductance_moment(&g, &ens);
        let c = g.locate_cell([0.3, 0.6]);
        assert_eq!(m[c], [2.0, 0.0]);
        assert_eq!(m.iter().filter(|v| **v != [0.0; 2]).count(), 1);
        assert!(field_conductance_moment(&g, &DirectionalField::constant(&g, 0.0)).iter().all(|v| *v == [0.0; 2]));
    }

    #[test]
    fn deposit_is_conservative() {
        let g = Grid::rect(16, 16, 1.0, 1.0, 4).unwrap();
        let ens = ParticleEnsemble::new(vec![Particle { x: [0.02, 0.51], theta: [1.0, 0.0], c: 3.0, weight: 1.0 }]);
        let perm = deposit_permeability(&g, &ens, 0.0);
        let total: f64 = perm.iter().map(|t| t[0] * g.cell_volume()).sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_sources_keep_mass() {
        let g = Grid::rect(16, 8, 2.0, 1.0, 1).unwrap();
        let s = kernel_sources(&g, &[([0.5, 0.5], 1.0), ([1.5, 0.5], -1.0)], 2.0);
        assert!(g.integrate_nodal(&s).abs() < 1e-14);
        let pos: f64 = s.iter().zip(g.node_volumes()).filter(|(x, _)| **x > 0.0).map(|(x, v)| x * v).sum();
        assert!((pos - 1.0).abs() < 1e-14);
    }

    #[test]
    fn isolated_particle_decays() {
        let g = Grid::rect(8, 8, 1.0, 1.0, 4).unwrap();
        let ens = ParticleEnsemble::new(vec![Particle { x: [0.5, 0.5], theta: [0.0, 1.0], c: 1.0, weight: 1.0 }]);
        let params = ParticleParams { c0: 1.0, gamma: 1.0, dt: 0.1, t_end: 20.0, r: 1e-2, tol: 1e-10 };
        let tr = simulate_particles(&g, &ens, &vec![0.0; g.n_nodes()], &params).unwrap();
        let last = tr.final_state.particles[0].c;
        assert!(last < 1e-8, "{last}");
        assert_eq!(tr.final_state.particles[0].weight, 1.0);
    }

    #[test]
    fn moment_direction_is_preserved() {
        let g = Grid::rect(32, 16, 2.0, 1.0, 4).unwrap();
        let mut s = point_sources(&g, &[([0.5, 0.5], 1.0), ([1.5, 0.5], -1.0)]);
        balance_sources(&g, &mut s);
        let t = [0.8f64.sqrt(), 0.2f64.sqrt()];
        let mut parts = Vec::new();
        for k in 0..64 {
            let x = [0.1 + 1.8 * (k % 16) as f64 / 16.0, 0.1 + 0.8 * (k / 16) as f64 / 4.0];
            parts.push(Particle { x, theta: t, c: 0.5 + 0.01 * k as f64, weight: 1.0 / 64.0 });
        }
        let ens = ParticleEnsemble::new(parts);
        let params = ParticleParams { c0: 1.0, gamma: 1.0, dt: 0.05, t_end: 1.0, r: 1e-2, tol: 1e-10 };
        let tr = simulate_particles(&g, &ens, &s, &params).unwrap();
        for (a, b) in conductance_moment(&g, &ens).iter().zip(conductance_moment(&g, &tr.final_state)) {
            if b[0].hypot(b[1]) > 0.0 {
                assert!((a[0] * b[1] - a[1] * b[0]).abs() < 1e-12 * a[0].hypot(a[1]) * b[0].hypot(b[1]).max(1.0));
            }
        }
    }
}
