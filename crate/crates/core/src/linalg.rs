//! Small linear-algebra kernels: symmetric banded storage with a Cholesky
//! factorization, a semidefinite solve built on it, and Jacobi-preconditioned
//! conjugate gradients for sparse graph Laplacians.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Symmetric matrix stored as its lower band: entry `(i, j)` with
/// `i - bw <= j <= i` lives at `data[i * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[i * (self.bw + 1)]
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.diag(i)).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.bw + 1;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for k in 1..w.min(i + 1) {
                let a = row[k];
                if a != 0.0 {
                    let j = i - k;
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                }
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }
}

/// Cholesky factor `L` of a banded SPD matrix, same band layout.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors `a + shift * I`. Fails if a pivot is not positive.
    pub fn factor(a: &BandedSym, shift: f64) -> Result<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.data.clone();
        for i in 0..n {
            l[i * w] += shift;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (i - j)];
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::SingularSystem { residual: f64::NAN });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + w).min(self.n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

/// Outcome of a semidefinite solve.
#[derive(Debug, Clone)]
pub struct SemidefiniteSolution {
    pub x: Vec<f64>,
    /// `||b - A x|| / ||b||` (absolute when `b = 0`).
    pub relative_residual: f64,
    pub refinements: usize,
}

/// Solves `A x = b` for symmetric positive semidefinite `A` with `b` in the
/// range of `A`. Factors `A + delta I` with `delta` relative to the largest
/// diagonal entry and removes the shift bias by iterative refinement. The
/// returned residual tells the caller whether `b` was actually in the range.
pub fn solve_semidefinite(a: &BandedSym, b: &[f64], tol: f64) -> Result<SemidefiniteSolution> {
    solve_semidefinite_shifted(a, b, tol, 1e-12)
}

/// As [`solve_semidefinite`] with the factorization shift `shift * max diag`.
pub fn solve_semidefinite_shifted(a: &BandedSym, b: &[f64], tol: f64, shift: f64) -> Result<SemidefiniteSolution> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(SemidefiniteSolution { x: vec![0.0; n], relative_residual: 0.0, refinements: 0 });
    }
    let scale = a.max_diag();
    if scale <= 0.0 {
        return Ok(SemidefiniteSolution { x: vec![0.0; n], relative_residual: 1.0, refinements: 0 });
    }
    let chol = BandedCholesky::factor(a, shift.max(1e-14) * scale)?;
    let mut x = b.to_vec();
    chol.solve_in_place(&mut x);
    let mut r = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut refinements = 0;
    let relative_residual = loop {
        a.matvec(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let rel = norm2(&r) / bnorm;
        if rel <= 1e-3 * tol || rel >= 0.5 * prev || refinements == 40 {
            break rel;
        }
        prev = rel;
        refinements += 1;
        chol.solve_in_place(&mut r);
        x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
    };
    Ok(SemidefiniteSolution { x, relative_residual, refinements })
}

/// Compressed sparse row matrix, just enough for CG on graph Laplacians.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Jacobi-preconditioned CG for a connected weighted graph Laplacian
/// (constant null space). Iterates are kept zero-mean.
pub fn cg_laplacian(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let mut rhs = b.to_vec();
    remove_mean(&mut rhs);
    let bnorm = norm2(&rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut r = rhs;
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    remove_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        if norm2(&r) <= tol * bnorm {
            remove_mean(&mut x);
            return Ok(x);
        }
        z.iter_mut().zip(r.iter().zip(&dinv)).for_each(|(zi, (ri, di))| *zi = ri * di);
        remove_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::SingularSystem { residual: norm2(&r) / bnorm })
}
