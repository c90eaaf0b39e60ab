use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandedSym;

/// Box grid in one or two dimensions with a half-circle direction quadrature.
///
/// Pressures and sources live on grid nodes; conductivities live on cells.
/// In 2D every cell is split along its anti-diagonal into a lower and an
/// upper triangle, and gradients are taken per triangle. In 1D the single
/// element of a cell is the cell itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: [f64; 2],
    dirs: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

/// Nodes of one element with the gradients of their hat functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub nodes: [usize; 3],
    pub grads: [[f64; 2]; 3],
    pub len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        (0..self.len).map(move |a| (self.nodes[a], self.grads[a]))
    }
}

/// `M` equally spaced directions `phi_m = -pi/2 + m pi / M` with weights
/// `pi / M`; first coordinates are nonnegative.
pub fn half_circle_quadrature(m: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let w = std::f64::consts::PI / m as f64;
    let dirs = (0..m)
        .map(|k| {
            let phi = -std::f64::consts::FRAC_PI_2 + k as f64 * w;
            [phi.cos().max(0.0), phi.sin()]
        })
        .collect();
    (dirs, vec![w; m])
}

impl Grid {
    /// Interval `[0, length]` with `n` cells and the single direction `+1`.
    pub fn line(n: usize, length: f64) -> Result<Self> {
        if n == 0 || !(length > 0.0) {
            return Err(Error::InvalidParameter(format!("line grid needs n > 0 and length > 0, got {n}, {length}")));
        }
        Ok(Self {
            dim: 1,
            nx: n,
            ny: 1,
            hx: length / n as f64,
            hy: 1.0,
            origin: [0.0, 0.0],
            dirs: vec![[1.0, 0.0]],
            weights: vec![1.0],
        })
    }

    /// Rectangle `[0, lx] x [0, ly]` with `nx * ny` cells and `n_dirs`
    /// quadrature directions.
    pub fn rect(nx: usize, ny: usize, lx: f64, ly: f64, n_dirs: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || n_dirs == 0 || !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rectangular grid needs positive sizes, got {nx}x{ny} cells on {lx}x{ly} with {n_dirs} directions"
            )));
        }
        let (dirs, weights) = half_circle_quadrature(n_dirs);
        Ok(Self { dim: 2, nx, ny, hx: lx / nx as f64, hy: ly / ny as f64, origin: [0.0, 0.0], dirs, weights })
    }

    pub fn with_origin(mut self, x0: f64, y0: f64) -> Self {
        self.origin = [x0, y0];
        self
    }

    /// Replaces the direction quadrature (2D only).
    pub fn with_directions(mut self, dirs: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if self.dim != 2 || dirs.len() != weights.len() || dirs.is_empty() {
            return Err(Error::InvalidParameter("direction set must be nonempty and match its weights".into()));
        }
        for d in &dirs {
            if (d[0].hypot(d[1]) - 1.0).abs() > 1e-12 || d[0] < 0.0 {
                return Err(Error::InvalidParameter(format!("direction {d:?} is not on the right half circle")));
            }
        }
        self.dirs = dirs;
        self.weights = weights;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.ny
        }
    }

    pub fn h(&self) -> [f64; 2] {
        [self.hx, self.hy]
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn lengths(&self) -> [f64; 2] {
        [self.hx * self.nx as f64, if self.dim == 1 { 0.0 } else { self.hy * self.ny as f64 }]
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny()
    }

    pub fn n_nodes(&self) -> usize {
        if self.dim == 1 {
            self.nx + 1
        } else {
            (self.nx + 1) * (self.ny + 1)
        }
    }

    pub fn elements_per_cell(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            2
        }
    }

    pub fn n_elements(&self) -> usize {
        self.n_cells() * self.elements_per_cell()
    }

    pub fn n_dirs(&self) -> usize {
        self.dirs.len()
    }

    pub fn dirs(&self) -> &[[f64; 2]] {
        &self.dirs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.hx
        } else {
            self.hx * self.hy
        }
    }

    pub fn element_area(&self) -> f64 {
        self.cell_volume() / self.elements_per_cell() as f64
    }

    pub fn cell_of_element(&self, e: usize) -> usize {
        e / self.elements_per_cell()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    pub fn node_pos(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(n);
        if self.dim == 1 {
            [self.origin[0] + i as f64 * self.hx, 0.0]
        } else {
            [self.origin[0] + i as f64 * self.hx, self.origin[1] + j as f64 * self.hy]
        }
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        if self.dim == 1 {
            [self.origin[0] + (i as f64 + 0.5) * self.hx, 0.0]
        } else {
            [self.origin[0] + (i as f64 + 0.5) * self.hx, self.origin[1] + (j as f64 + 0.5) * self.hy]
        }
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        if self.dim == 1 {
            return self.cell_center(e);
        }
        let (i, j) = self.cell_ij(e / 2);
        let (fx, fy) = if e % 2 == 0 { (1.0 / 3.0, 1.0 / 3.0) } else { (2.0 / 3.0, 2.0 / 3.0) };
        [self.origin[0] + (i as f64 + fx) * self.hx, self.origin[1] + (j as f64 + fy) * self.hy]
    }

    /// Half bandwidth of nodal matrices.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.nx + 1
        }
    }

    pub fn stencil(&self, e: usize) -> Stencil {
        let (hx, hy) = (self.hx, self.hy);
        if self.dim == 1 {
            return Stencil { nodes: [e, e + 1, 0], grads: [[-1.0 / hx, 0.0], [1.0 / hx, 0.0], [0.0; 2]], len: 2 };
        }
        let (i, j) = self.cell_ij(e / 2);
        let n00 = self.node_index(i, j);
        let n10 = n00 + 1;
        let n01 = self.node_index(i, j + 1);
        let n11 = n01 + 1;
        if e % 2 == 0 {
            Stencil { nodes: [n00, n10, n01], grads: [[-1.0 / hx, -1.0 / hy], [1.0 / hx, 0.0], [0.0, 1.0 / hy]], len: 3 }
        } else {
            Stencil { nodes: [n01, n11, n10], grads: [[-1.0 / hx, 0.0], [1.0 / hx, 1.0 / hy], [0.0, -1.0 / hy]], len: 3 }
        }
    }

    pub fn element_gradient(&self, e: usize, p: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (n, d) in self.stencil(e).iter() {
            g[0] += d[0] * p[n];
            g[1] += d[1] * p[n];
        }
        g
    }

    pub fn gradients(&self, p: &[f64]) -> Vec<[f64; 2]> {
        (0..self.n_elements()).map(|e| self.element_gradient(e, p)).collect()
    }

    /// Lumped nodal control volumes (sum equals the domain measure).
    pub fn node_volumes(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_nodes()];
        let share = self.element_area() / self.stencil(0).len as f64;
        for e in 0..self.n_elements() {
            for (n, _) in self.stencil(e).iter() {
                v[n] += share;
            }
        }
        v
    }

    /// Stiffness `A_ij = sum_e |e| grad(phi_i) . K_e grad(phi_j)` for the
    /// symmetric tensors `K_e = [xx, xy, yy]`.
    pub fn assemble_stiffness(&self, tensor: impl Fn(usize) -> [f64; 3]) -> BandedSym {
        let mut a = BandedSym::zeros(self.n_nodes(), self.bandwidth());
        let area = self.element_area();
        for e in 0..self.n_elements() {
            let k = tensor(e);
            if k == [0.0; 3] {
                continue;
            }
            let st = self.stencil(e);
            for x in 0..st.len {
                let gx = st.grads[x];
                let kg = [k[0] * gx[0] + k[1] * gx[1], k[1] * gx[0] + k[2] * gx[1]];
                for y in 0..=x {
                    let gy = st.grads[y];
                    let v = area * (kg[0] * gy[0] + kg[1] * gy[1]);
                    if v != 0.0 {
                        a.add(st.nodes[x], st.nodes[y], v);
                    }
                }
            }
        }
        a
    }

    /// Weak divergence `r_i = sum_e |e| v_e . grad(phi_i)` of an element-wise
    /// vector field. For `v = K grad p` this equals `A p`.
    pub fn weak_divergence(&self, v: impl Fn(usize) -> [f64; 2]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_nodes()];
        let area = self.element_area();
        for e in 0..self.n_elements() {
            let ve = v(e);
            for (n, d) in self.stencil(e).iter() {
                r[n] += area * (ve[0] * d[0] + ve[1] * d[1]);
            }
        }
        r
    }

    pub fn nearest_node(&self, x: [f64; 2]) -> usize {
        let i = ((x[0] - self.origin[0]) / self.hx).round().clamp(0.0, self.nx as f64) as usize;
        if self.dim == 1 {
            return i;
        }
        let j = ((x[1] - self.origin[1]) / self.hy).round().clamp(0.0, self.ny as f64) as usize;
        self.node_index(i, j)
    }

    pub fn locate_cell(&self, x: [f64; 2]) -> usize {
        let i = (((x[0] - self.origin[0]) / self.hx).floor().max(0.0) as usize).min(self.nx - 1);
        if self.dim == 1 {
            return i;
        }
        let j = (((x[1] - self.origin[1]) / self.hy).floor().max(0.0) as usize).min(self.ny - 1);
        self.cell_index(i, j)
    }

    /// `sum_i v_i vol_i`.
    pub fn integrate_nodal(&self, v: &[f64]) -> f64 {
        self.node_volumes().iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_on_half_circle() {
        let (d, w) = half_circle_quadrature(16);
        assert!((w.iter().sum::<f64>() - std::f64::consts::PI).abs() < 1e-14);
        for t in d {
            assert!(t[0] >= 0.0);
            assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn node_volumes_sum_to_area() {
        let g = Grid::rect(5, 3, 2.0, 1.5, 4).unwrap();
        assert!((g.node_volumes().iter().sum::<f64>() - 3.0).abs() < 1e-14);
        let l = Grid::line(7, 2.0).unwrap();
        let v = l.node_volumes();
        assert!((v.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((v[0] - l.h()[0] / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_exact_on_linear_functions() {
        let g = Grid::rect(4, 3, 1.0, 1.0, 4).unwrap();
        let p: Vec<f64> = (0..g.n_nodes()).map(|n| {
            let x = g.node_pos(n);
            2.0 * x[0] - 3.0 * x[1] + 1.0
        }).collect();
        for gr in g.gradients(&p) {
            assert!((gr[0] - 2.0).abs() < 1e-12 && (gr[1] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let g = Grid::rect(4, 4, 1.0, 1.0, 4).unwrap();
        let a = g.assemble_stiffness(|e| [1.0 + e as f64, 0.3, 2.0]);
        let y = a.mul(&vec![1.0; g.n_nodes()]);
        assert!(y.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn weak_divergence_matches_stiffness() {
        let g = Grid::rect(3, 4, 1.0, 2.0, 4).unwrap();
        let k = |e: usize| [1.0 + (e % 3) as f64, 0.2, 1.5];
        let a = g.assemble_stiffness(k);
        let p: Vec<f64> = (0..g.n_nodes()).map(|n| (n as f64 * 0.37).sin()).collect();
        let grads = g.gradients(&p);
        let r = g.weak_divergence(|e| {
            let (t, gr) = (k(e), grads[e]);
            [t[0] * gr[0] + t[1] * gr[1], t[1] * gr[0] + t[2] * gr[1]]
        });
        for (x, y) in r.iter().zip(a.mul(&p)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
