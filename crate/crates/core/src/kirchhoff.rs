//! Nodal pressures from conductivities, fluxes from pressures, and the
//! reverse construction of `(C, P)` from a loop-free flux.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{default_flux_tol, detect_flux_loops, Network};
use crate::linalg::{cg_laplacian, norm2, Csr};

/// Conductivities below this are treated as absent from the Kirchhoff support.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// Components up to this size are solved by dense Cholesky.
pub const DENSE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    /// Each component of the conductive support has zero mean pressure.
    ZeroMeanPerComponent,
    /// Pressure fixed to zero at a root vertex of each traversal tree.
    RootAnchored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureVector {
    pub p: Vec<f64>,
    pub gauge: Gauge,
}

/// Solves `sum_j C_ij (P_i - P_j) / L_ij = S_i` on every component of the
/// subgraph `{C > SUPPORT_FLOOR}`. Residual is at most `tol * ||S||`.
pub fn solve_kirchhoff(net: &Network, c: &[f64], tol: f64) -> Result<PressureVector> {
    if c.len() != net.n_edges() {
        return Err(Error::InvalidParameter(format!("{} conductivities for {} edges", c.len(), net.n_edges())));
    }
    if let Some(k) = c.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("conductivity on edge {k} is {}", c[k])));
    }
    let s = net.sources();
    let snorm = norm2(s);
    let (ncomp, label) = net.components_where(|k| c[k] > SUPPORT_FLOOR);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (i, &l) in label.iter().enumerate() {
        members[l].push(i);
    }
    let mut p = vec![0.0; net.n_vertices()];
    for (comp, verts) in members.iter().enumerate() {
        let sum: f64 = verts.iter().map(|&i| s[i]).sum();
        let scale: f64 = verts.iter().map(|&i| s[i].abs()).sum::<f64>().max(snorm);
        if sum.abs() > 1e-12 * scale.max(1.0) {
            return Err(Error::UnbalancedComponent { component: comp, sum });
        }
        if verts.len() == 1 || verts.iter().all(|&i| s[i] == 0.0) {
            continue;
        }
        let local = solve_component(net, c, verts, tol)?;
        for (&i, pi) in verts.iter().zip(local) {
            p[i] = pi;
        }
    }
    let resid = norm2(&nodal_residual(net, c, &p));
    if resid > tol * snorm.max(f64::MIN_POSITIVE) && resid > 1e-14 {
        return Err(Error::SingularSystem { residual: resid / snorm.max(f64::MIN_POSITIVE) });
    }
    Ok(PressureVector { p, gauge: Gauge::ZeroMeanPerComponent })
}

fn solve_component(net: &Network, c: &[f64], verts: &[usize], tol: f64) -> Result<Vec<f64>> {
    let n = verts.len();
    let mut local = vec![usize::MAX; net.n_vertices()];
    for (a, &i) in verts.iter().enumerate() {
        local[i] = a;
    }
    let mut triplets = Vec::new();
    for (k, e) in net.edges().iter().enumerate() {
        if c[k] <= SUPPORT_FLOOR {
            continue;
        }
        let (a, b) = (local[e.u], local[e.v]);
        if a == usize::MAX {
            continue;
        }
        let w = c[k] / e.length;
        triplets.extend([(a, a, w), (b, b, w), (a, b, -w), (b, a, -w)]);
    }
    let rhs: Vec<f64> = verts.iter().map(|&i| net.sources()[i]).collect();
    let mut x = if n <= DENSE_LIMIT {
        // Ground the last vertex; the reduced Laplacian is SPD.
        let m = n - 1;
        let mut a = DMatrix::<f64>::zeros(m, m);
        for &(i, j, v) in &triplets {
            if i < m && j < m {
                a[(i, j)] += v;
            }
        }
        let b = DVector::from_iterator(m, rhs[..m].iter().copied());
        let chol = a.cholesky().ok_or(Error::SingularSystem { residual: f64::NAN })?;
        let y = chol.solve(&b);
        let mut x: Vec<f64> = y.iter().copied().collect();
        x.push(0.0);
        x
    } else {
        let a = Csr::from_triplets(n, triplets);
        cg_laplacian(&a, &rhs, tol.min(1e-10), 20 * n + 100)?
    };
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    Ok(x)
}

/// `Q_uv = C_uv (P_u - P_v) / L_uv` for every edge (stored with `u < v`).
pub fn fluxes_from_pressures(net: &Network, c: &[f64], p: &[f64]) -> Vec<f64> {
    net.edges().iter().zip(c).map(|(e, &ce)| ce * (p[e.u] - p[e.v]) / e.length).collect()
}

/// Kirchhoff residual `sum_j C_ij (P_i - P_j)/L_ij - S_i` per vertex.
pub fn nodal_residual(net: &Network, c: &[f64], p: &[f64]) -> Vec<f64> {
    net.nodal_residual(&fluxes_from_pressures(net, c, p))
}

/// Reverse construction for a loop-free, conservative flux: conductivities
/// `C = (Q^2/nu)^{1/(gamma+1)}` and pressures by traversal with
/// `P_j = P_j0 - Q L / C` along carrying edges and `P_j = P_j0` across
/// zero-flux edges.
pub fn pressures_from_tree_flux(net: &Network, q: &[f64], gamma: f64, nu: f64) -> Result<(Vec<f64>, PressureVector)> {
    if !(gamma > 0.0) || !(nu > 0.0) {
        return Err(Error::InvalidParameter("gamma and nu must be positive".into()));
    }
    let tol = default_flux_tol(q);
    let loops = detect_flux_loops(net, q, tol);
    if !loops.is_empty() {
        return Err(Error::LoopyFlux(loops.len()));
    }
    let c: Vec<f64> = q
        .iter()
        .map(|&qe| if qe.abs() > tol { (qe * qe / nu).powf(1.0 / (gamma + 1.0)) } else { 0.0 })
        .collect();
    let n = net.n_vertices();
    let mut p = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    // Carrying edges first so each flux-connected piece gets consistent drops,
    // then stitch pieces together across zero-flux edges.
    for pass_support in [true, false] {
        for root in 0..n {
            if seen[root] {
                continue;
            }
            if pass_support && !net.neighbours(root).iter().any(|&(_, k)| c[k] > 0.0) {
                continue;
            }
            seen[root] = true;
            queue.push_back(root);
            while let Some(i) = queue.pop_front() {
                for &(j, k) in net.neighbours(i) {
                    if seen[j] {
                        continue;
                    }
                    let e = net.edge(k);
                    if c[k] > 0.0 {
                        // Q is oriented u -> v; drop along u -> v is Q L / C.
                        let drop = q[k] * e.length / c[k];
                        p[j] = p[i] - drop * e.orientation_from(i);
                    } else if pass_support {
                        continue;
                    } else {
                        p[j] = p[i];
                    }
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok((c, PressureVector { p, gauge: Gauge::RootAnchored }))
}
