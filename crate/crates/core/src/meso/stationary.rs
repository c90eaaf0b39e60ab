//! Stationary states of the monokinetic model: the uniformly convex
//! elliptic problem for `gamma > 1` and the explicit construction for
//! `gamma = 1` from an irrotational field.

use serde::{Deserialize, Serialize};

use super::{load_vector, mean_nodal, DirectionalField, Grid};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, solve_semidefinite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticSolution {
    /// Nodal pressure with zero mean.
    pub p: Vec<f64>,
    /// `(c0^2 |theta . grad p|^2)^{1/(gamma-1)}` per cell and direction,
    /// averaged over the elements of the cell.
    pub c: DirectionalField,
    /// Objective value after every line-search step, starting at `p = 0`.
    /// Steps whose decrease is below round-off are not recorded.
    pub objective: Vec<f64>,
    /// Final `||grad F|| / ||b||`.
    pub gradient_norm: f64,
    pub iterations: usize,
}

struct Elliptic<'a> {
    grid: &'a Grid,
    b: Vec<f64>,
    k: f64,
    q: f64,
    gamma: f64,
}

impl Elliptic<'_> {
    // Phi(z) = (gamma-1)/(2 gamma) k |z|^q with q = 2 gamma / (gamma - 1).
    fn phi(&self, z: f64) -> f64 {
        (self.gamma - 1.0) / (2.0 * self.gamma) * self.k * z.abs().powf(self.q)
    }

    fn dphi(&self, z: f64) -> f64 {
        self.k * z.abs().powf(self.q - 2.0) * z
    }

    fn ddphi(&self, z: f64) -> f64 {
        self.k * (self.q - 1.0) * z.abs().powf(self.q - 2.0)
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let g = self.grid;
        let area = g.element_area();
        let mut f = 0.0;
        for e in 0..g.n_elements() {
            let gr = g.element_gradient(e, p);
            for (d, w) in g.dirs().iter().zip(g.weights()) {
                f += area * w * self.phi(d[0] * gr[0] + d[1] * gr[1]);
            }
        }
        f - dot(&self.b, p)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let grads = g.gradients(p);
        let mut r = g.weak_divergence(|e| {
            let mut v = [0.0; 2];
            for (d, w) in g.dirs().iter().zip(g.weights()) {
                let s = w * self.dphi(d[0] * grads[e][0] + d[1] * grads[e][1]);
                v[0] += s * d[0];
                v[1] += s * d[1];
            }
            v
        });
        r.iter_mut().zip(&self.b).for_each(|(x, y)| *x -= y);
        r
    }

    fn hessian_tensors(&self, p: &[f64]) -> Vec<[f64; 3]> {
        let g = self.grid;
        g.gradients(p)
            .iter()
            .map(|gr| {
                let mut t = [0.0; 3];
                for (d, w) in g.dirs().iter().zip(g.weights()) {
                    let s = w * self.ddphi(d[0] * gr[0] + d[1] * gr[1]);
                    t[0] += s * d[0] * d[0];
                    t[1] += s * d[0] * d[1];
                    t[2] += s * d[1] * d[1];
                }
                t
            })
            .collect()
    }
}

/// Minimizes `F[p] = sum_e |e| sum_m w_m Phi(theta_m . grad p) - b.p` with
/// `Phi(z) = (gamma-1)/(2 gamma) c0^{2/(gamma-1)} |z|^{2 gamma/(gamma-1)}`
/// by a regularized Newton descent with Armijo backtracking. Stops when
/// `||grad F|| <= tol ||b||`.
pub fn stationary_gamma_gt1(grid: &Grid, s: &[f64], c0: f64, gamma: f64, tol: f64) -> Result<EllipticSolution> {
    if !(gamma > 1.0) || !(c0 > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("need gamma > 1, c0 > 0, tol > 0 (got {gamma}, {c0}, {tol})")));
    }
    if s.len() != grid.n_nodes() {
        return Err(Error::InvalidParameter("source does not match the grid".into()));
    }
    let b = load_vector(grid, s);
    let total: f64 = b.iter().sum();
    if total.abs() > 1e-10 * b.iter().map(|x| x.abs()).sum::<f64>().max(1.0) {
        return Err(Error::InfeasibleSources(format!("integral of S is {total:e}")));
    }
    let n = grid.n_nodes();
    let bnorm = norm2(&b);
    let k = c0.powf(2.0 / (gamma - 1.0));
    let prob = Elliptic { grid, b, k, q: 2.0 * gamma / (gamma - 1.0), gamma };
    let mut p = vec![0.0; n];
    let mut f = prob.objective(&p);
    let mut objective = vec![f];
    if bnorm == 0.0 {
        let c = DirectionalField::constant(grid, 0.0);
        return Ok(EllipticSolution { p, c, objective, gradient_norm: 0.0, iterations: 0 });
    }
    let mut mu = k;
    let mut iterations = 0;
    let max_iter = 500;
    loop {
        let g = prob.gradient(&p);
        let gn = norm2(&g) / bnorm;
        if gn <= tol {
            let c = field_from_pressure(grid, &p, c0, gamma);
            return Ok(EllipticSolution { p, c, objective, gradient_norm: gn, iterations });
        }
        if iterations == max_iter {
            return Err(Error::NoConvergence(format!("elliptic descent stopped at gradient {gn:e} after {max_iter} steps")));
        }
        iterations += 1;
        let tensors = prob.hessian_tensors(&p);
        let scale = tensors.iter().map(|t| t[0] + t[2]).fold(0.0, f64::max);
        let mut accepted = false;
        let mut silent = false;
        for _ in 0..60 {
            let reg = mu.max(1e-14 * scale);
            let h = grid.assemble_stiffness(|e| {
                let t = tensors[e];
                [t[0] + reg, t[1], t[2] + reg]
            });
            let neg: Vec<f64> = g.iter().map(|x| -x).collect();
            let mut d = solve_semidefinite(&h, &neg, 1e-12)?.x;
            let md = mean_nodal(grid, &d);
            d.iter_mut().for_each(|x| *x -= md);
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                mu *= 10.0;
                continue;
            }
            // Below round-off of the objective a full step is judged by the
            // gradient alone.
            if -slope <= 1e-13 * f.abs() {
                let trial: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + b).collect();
                if norm2(&prob.gradient(&trial)) < gn * bnorm {
                    p = trial;
                    accepted = true;
                    silent = true;
                    break;
                }
            }
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let ft = prob.objective(&trial);
                if ft <= f + 1e-4 * t * slope && ft < f {
                    p = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                mu = if t == 1.0 { (mu * 0.1).max(1e-16 * k) } else { mu * 4.0 };
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            return Err(Error::NoConvergence(format!("line search failed at gradient {gn:e}")));
        }
        if !silent {
            objective.push(f);
        }
    }
}

fn field_from_pressure(grid: &Grid, p: &[f64], c0: f64, gamma: f64) -> DirectionalField {
    let epc = grid.elements_per_cell();
    let grads = grid.gradients(p);
    let mut c = DirectionalField::constant(grid, 0.0);
    for cell in 0..grid.n_cells() {
        for (m, d) in grid.dirs().iter().enumerate() {
            let mut acc = 0.0;
            for gr in &grads[cell * epc..(cell + 1) * epc] {
                let z = d[0] * gr[0] + d[1] * gr[1];
                acc += (c0 * c0 * z * z).powf(1.0 / (gamma - 1.0));
            }
            c.values[cell * grid.n_dirs() + m] = acc / epc as f64;
        }
    }
    c
}

/// Weak residual of `-div(sum_m w_m C_m theta_m theta_m^T grad p) = S`
/// against a nodal test function `phi`, relative to `||b|| ||phi||`, with
/// `C` evaluated elementwise from `p`.
pub fn elliptic_weak_residual(grid: &Grid, s: &[f64], p: &[f64], c0: f64, gamma: f64, phi: &[f64]) -> f64 {
    let b = load_vector(grid, s);
    let prob = Elliptic { grid, b, k: c0.powf(2.0 / (gamma - 1.0)), q: 2.0 * gamma / (gamma - 1.0), gamma };
    let g = prob.gradient(p);
    dot(&g, phi).abs() / (norm2(&prob.b) * norm2(phi)).max(f64::MIN_POSITIVE)
}

/// Closed-form 1D derivative `p'` of the stationary problem:
/// `|p'| = (|B| / c0^{2/(gamma-1)})^{(gamma-1)/(gamma+1)}` with sign of `-B`.
pub fn closed_form_gradient_1d(b: &[f64], c0: f64, gamma: f64) -> Vec<f64> {
    let k = c0.powf(2.0 / (gamma - 1.0));
    b.iter().map(|&x| -x.signum() * (x.abs() / k).powf((gamma - 1.0) / (gamma + 1.0))).collect()
}

/// Representative of `+-v` on the right half circle (`theta_1 > 0`, or
/// `theta_2 >= 0` when `theta_1 = 0`).
pub fn half_circle_direction(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    let u = [v[0] / n, v[1] / n];
    if u[0] > 0.0 || (u[0] == 0.0 && u[1] >= 0.0) {
        u
    } else {
        [-u[0], -u[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracConstruction {
    /// Weight `c0 |w|` of the Dirac in direction per cell.
    pub alpha: Vec<f64>,
    /// Direction per cell on the half circle (zero outside the support).
    pub theta: Vec<[f64; 2]>,
    /// Nodal pressure with zero mean.
    pub p: Vec<f64>,
    /// Nodal source `-div w` as densities.
    pub s: Vec<f64>,
    /// The Dirac field lumped onto the nearest quadrature direction.
    pub c: DirectionalField,
    /// Largest discrete curl of `w` and of `w / |w|`, scaled by `h / max |w|`.
    pub curl: f64,
    /// `max | |c0 grad p| - 1 |` over elements in the support.
    pub unit_gradient_defect: f64,
    /// `||sum_e |e| (P grad p - w) . grad phi_i|| / ||b||`.
    pub poisson_residual: f64,
}

/// Discrete curl of a cell field at interior nodes, from the four cells
/// around each node. Nodes touching a cell where `skip` holds are ignored.
fn max_curl(grid: &Grid, v: &[[f64; 2]], skip: impl Fn(usize) -> bool) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let [hx, hy] = grid.h();
    let mut worst = 0.0_f64;
    for j in 1..ny {
        for i in 1..nx {
            let cells = [
                grid.cell_index(i - 1, j - 1),
                grid.cell_index(i, j - 1),
                grid.cell_index(i - 1, j),
                grid.cell_index(i, j),
            ];
            if cells.iter().any(|&c| skip(c)) {
                continue;
            }
            let [sw, se, nw, ne] = cells.map(|c| v[c]);
            let dv2dx = (se[1] + ne[1] - sw[1] - nw[1]) / (2.0 * hx);
            let dv1dy = (nw[0] + ne[0] - sw[0] - se[0]) / (2.0 * hy);
            worst = worst.max((dv2dx - dv1dy).abs());
        }
    }
    worst
}

/// Stationary state for `gamma = 1` from an irrotational cell field `w`
/// with `w . n = 0` on the boundary: `C = c0 |w| delta(theta - w/|w|)`,
/// `grad p = w / (c0 |w|)` and `S = -div w`.
pub fn stationary_gamma_eq1(grid: &Grid, w: &[[f64; 2]], c0: f64, tol: f64) -> Result<DiracConstruction> {
    if grid.dim() != 2 || w.len() != grid.n_cells() {
        return Err(Error::InvalidParameter("need a 2D grid and one vector per cell".into()));
    }
    if !(c0 > 0.0) {
        return Err(Error::InvalidParameter(format!("c0 must be positive, got {c0}")));
    }
    let wmax = w.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let n = grid.n_nodes();
    if wmax == 0.0 {
        return Ok(DiracConstruction {
            alpha: vec![0.0; grid.n_cells()],
            theta: vec![[0.0; 2]; grid.n_cells()],
            p: vec![0.0; n],
            s: vec![0.0; n],
            c: DirectionalField::constant(grid, 0.0),
            curl: 0.0,
            unit_gradient_defect: 0.0,
            poisson_residual: 0.0,
        });
    }
    let h = grid.h()[0].min(grid.h()[1]);
    let thresh = 1e-12 * wmax;
    let on = |c: usize| w[c][0].hypot(w[c][1]) > thresh;
    let unit: Vec<[f64; 2]> = w
        .iter()
        .enumerate()
        .map(|(c, v)| {
            if on(c) {
                let r = v[0].hypot(v[1]);
                [v[0] / r, v[1] / r]
            } else {
                [0.0; 2]
            }
        })
        .collect();
    let curl_w = max_curl(grid, w, |_| false) * h / wmax;
    let curl_u = max_curl(grid, &unit, |c| !on(c)) * h;
    let curl = curl_w.max(curl_u);
    if curl > tol {
        return Err(Error::RotationalInput(curl));
    }
    let epc = grid.elements_per_cell();
    let b = grid.weak_divergence(|e| w[grid.cell_of_element(e)]);
    let vol = grid.node_volumes();
    let s: Vec<f64> = b.iter().zip(&vol).map(|(x, v)| x / v).collect();
    let alpha: Vec<f64> = w.iter().map(|v| c0 * v[0].hypot(v[1])).collect();
    let theta: Vec<[f64; 2]> =
        (0..grid.n_cells()).map(|c| if on(c) { half_circle_direction(w[c]) } else { [0.0; 2] }).collect();
    // Least-squares potential of w / (c0 |w|) over the support.
    let lap = grid.assemble_stiffness(|e| if on(grid.cell_of_element(e)) { [1.0, 0.0, 1.0] } else { [0.0; 3] });
    let rhs = grid.weak_divergence(|e| {
        let u = unit[grid.cell_of_element(e)];
        [u[0] / c0, u[1] / c0]
    });
    let mut p = solve_semidefinite(&lap, &rhs, 1e-13)?.x;
    let m = mean_nodal(grid, &p);
    p.iter_mut().for_each(|x| *x -= m);
    let grads = grid.gradients(&p);
    let mut unit_gradient_defect = 0.0_f64;
    for e in 0..grid.n_elements() {
        if on(e / epc) {
            unit_gradient_defect = unit_gradient_defect.max((c0 * grads[e][0].hypot(grads[e][1]) - 1.0).abs());
        }
    }
    let r = grid.weak_divergence(|e| {
        let c = e / epc;
        let t = theta[c];
        let z = t[0] * grads[e][0] + t[1] * grads[e][1];
        [alpha[c] * z * t[0] - w[c][0], alpha[c] * z * t[1] - w[c][1]]
    });
    let poisson_residual = norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE);
    let mut field = DirectionalField::constant(grid, 0.0);
    for c in 0..grid.n_cells() {
        if !on(c) {
            continue;
        }
        let t = theta[c];
        let (mi, _) = grid
            .dirs()
            .iter()
            .enumerate()
            .map(|(i, d)| (i, (d[0] * t[0] + d[1] * t[1]).abs()))
            .fold((0, -1.0), |a, x| if x.1 > a.1 { x } else { a });
        field.values[c * grid.n_dirs() + mi] = alpha[c] / grid.weights()[mi];
    }
    Ok(DiracConstruction { alpha, theta, p, s, c: field, curl, unit_gradient_defect, poisson_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meso::{balance_sources, cumulative_source, sample_sources};
    use std::f64::consts::PI;

    #[test]
    fn zero_source_gives_zero_pressure() {
        let g = Grid::rect(4, 4, 1.0, 1.0, 4).unwrap();
        let sol = stationary_gamma_gt1(&g, &vec![0.0; g.n_nodes()], 1.0, 2.0, 1e-10).unwrap();
        assert!(sol.p.iter().all(|x| *x == 0.0));
        assert!(sol.c.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn one_dimensional_closed_form() {
        let g = Grid::line(64, 1.0).unwrap();
        let mut s = sample_sources(&g, |x| (2.0 * PI * x[0]).cos() + 0.3);
        balance_sources(&g, &mut s);
        let sol = stationary_gamma_gt1(&g, &s, 1.2, 2.0, 1e-10).unwrap();
        let exact = closed_form_gradient_1d(&cumulative_source(&g, &s), 1.2, 2.0);
        for (e, ex) in exact.iter().enumerate() {
            assert!((g.element_gradient(e, &sol.p)[0] - ex).abs() < 1e-6);
        }
        assert!(sol.objective.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn half_circle_direction_flips() {
        assert_eq!(half_circle_direction([-2.0, 0.0]), [1.0, 0.0]);
        assert_eq!(half_circle_direction([0.0, -3.0]), [0.0, 1.0]);
        let t = half_circle_direction([-1.0, 1.0]);
        assert!((t[0] - 0.5f64.sqrt()).abs() < 1e-15 && (t[1] + 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_potential_construction() {
        let g = Grid::rect(16, 16, 1.0, 1.0, 8).unwrap();
        let w: Vec<[f64; 2]> = (0..g.n_cells()).map(|c| [-PI * (PI * g.cell_center(c)[0]).sin(), 0.0]).collect();
        let r = stationary_gamma_eq1(&g, &w, 1.5, 1e-10).unwrap();
        assert!(r.unit_gradient_defect < 1e-10);
        assert!(r.poisson_residual < 1e-10);
        assert!(r.theta.iter().all(|t| *t == [1.0, 0.0]));
    }

    #[test]
    fn rotational_field_is_rejected() {
        let g = Grid::rect(8, 8, 1.0, 1.0, 8).unwrap();
        let w: Vec<[f64; 2]> = (0..g.n_cells())
            .map(|c| {
                let x = g.cell_center(c);
                [-(x[1] - 0.5), x[0] - 0.5]
            })
            .collect();
        assert!(matches!(stationary_gamma_eq1(&g, &w, 1.0, 1e-6), Err(Error::RotationalInput(_))));
    }

    #[test]
    fn zero_field_gives_zero_construction() {
        let g = Grid::rect(4, 4, 1.0, 1.0, 8).unwrap();
        let r = stationary_gamma_eq1(&g, &vec![[0.0; 2]; 16], 1.0, 1e-10).unwrap();
        assert!(r.c.values.iter().all(|x| *x == 0.0));
    }
}
