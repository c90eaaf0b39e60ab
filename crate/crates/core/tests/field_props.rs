use nalgebra::{DMatrix, DVector};
use netmorph_core::meso::stationary::{half_circle_direction, stationary_gamma_eq1};
use netmorph_core::meso::{assemble_permeability, balance_sources, sample_sources, tensor_eigenvalues, DirectionalField, Grid};
use netmorph_core::mms::{bb_integrand, constraint_residual, fisher_rao_distance, minimize_q_given_c};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> DirectionalField {
    let mut c = DirectionalField::constant(grid, 0.0);
    c.values.iter_mut().for_each(|v| *v = rng.random_range(lo..hi));
    c
}

fn smooth_source(grid: &Grid) -> Vec<f64> {
    let mut s = sample_sources(grid, |x| (3.0 * x[0]).sin() + (2.0 * x[1] + 0.3).cos() * x[0]);
    balance_sources(grid, &mut s);
    s
}

/// Constraint matrix `A` with `A q - b = constraint_residual(q)`, and `b`.
fn constraint_matrix(grid: &Grid, s: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let nq = grid.n_elements() * grid.n_dirs();
    let zero = vec![0.0; nq];
    let b = DVector::from_vec(constraint_residual(grid, &zero, s).iter().map(|x| -x).collect());
    let mut a = DMatrix::zeros(grid.n_nodes(), nq);
    for j in 0..nq {
        let mut e = zero.clone();
        e[j] = 1.0;
        let col = constraint_residual(grid, &e, s);
        for i in 0..grid.n_nodes() {
            a[(i, j)] = col[i] + b[i];
        }
    }
    (a, b)
}

/// Per-unknown weights `d` of the objective `sum d_j q_j^2`.
fn objective_weights(grid: &Grid, c: &DirectionalField, c0: f64) -> Vec<f64> {
    let nd = grid.n_dirs();
    let epc = grid.elements_per_cell();
    (0..grid.n_elements() * nd)
        .map(|j| grid.element_area() * grid.weights()[j % nd] * c0 * c0 / c.get(j / nd / epc, j % nd))
        .collect()
}

fn objective(d: &[f64], q: &[f64]) -> f64 {
    d.iter().zip(q).map(|(d, q)| d * q * q).sum()
}

#[test]
fn flux_subproblem_matches_dense_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (nx, ny, m) in [(3, 3, 4), (4, 2, 3), (2, 3, 6)] {
        let grid = Grid::rect(nx, ny, 1.0, 0.8, m).unwrap();
        let c = random_field(&grid, &mut rng, 0.3, 2.0);
        let s = smooth_source(&grid);
        let c0 = 1.3;
        let sub = minimize_q_given_c(&grid, &c, &s, c0, 1e-11).unwrap();
        let (a, b) = constraint_matrix(&grid, &s);
        let d = objective_weights(&grid, &c, c0);
        // q = D^-1 A^T mu with A D^-1 A^T mu = b.
        let dinv = DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|x| 1.0 / x)));
        let schur = &a * &dinv * a.transpose();
        let mu = schur.svd(true, true).solve(&b, 1e-10).unwrap();
        let q = &dinv * a.transpose() * mu;
        let scale = q.amax();
        for (x, y) in sub.q.iter().zip(q.iter()) {
            assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
        }
        let obj = objective(&d, q.as_slice());
        assert!((sub.objective - obj).abs() <= 1e-9 * obj);
    }
}

#[test]
fn flux_subproblem_beats_random_circulations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = Grid::rect(3, 3, 1.0, 1.0, 4).unwrap();
    let c = random_field(&grid, &mut rng, 0.2, 3.0);
    let s = smooth_source(&grid);
    let sub = minimize_q_given_c(&grid, &c, &s, 1.0, 1e-11).unwrap();
    let (a, _) = constraint_matrix(&grid, &s);
    let d = objective_weights(&grid, &c, 1.0);
    let base = objective(&d, &sub.q);
    let svd = a.clone().svd(true, true);
    let pinv = svd.pseudo_inverse(1e-12).unwrap();
    let nq = d.len();
    for _ in 0..100 {
        let z = DVector::from_iterator(nq, (0..nq).map(|_| rng.random_range(-1.0..1.0)));
        let circ = &z - &pinv * (&a * &z);
        assert!((&a * &circ).amax() < 1e-10);
        let eps = rng.random_range(-0.5..0.5);
        let moved: Vec<f64> = sub.q.iter().zip(circ.iter()).map(|(q, c)| q + eps * c).collect();
        let r = constraint_residual(&grid, &moved, &s);
        assert!(r.iter().all(|x| x.abs() < 1e-9));
        assert!(objective(&d, &moved) >= base - 1e-12 * base);
    }
}

#[test]
fn fisher_rao_is_a_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = Grid::rect(4, 3, 1.0, 1.0, 5).unwrap();
    for _ in 0..100 {
        let a = random_field(&grid, &mut rng, 0.0, 2.0);
        let b = random_field(&grid, &mut rng, 0.0, 2.0);
        let c = random_field(&grid, &mut rng, 0.0, 2.0);
        let (ab, ba, bc, ac) =
            (fisher_rao_distance(&grid, &a, &b), fisher_rao_distance(&grid, &b, &a), fisher_rao_distance(&grid, &b, &c), fisher_rao_distance(&grid, &a, &c));
        assert_eq!(fisher_rao_distance(&grid, &a, &a), 0.0);
        assert!(ab > 0.0);
        assert!((ab - ba).abs() <= 1e-15 * ab);
        assert!(ac <= ab + bc + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bb_is_jointly_convex(x1 in 1e-3f64..10.0, y1 in -10.0f64..10.0, x2 in 1e-3f64..10.0, y2 in -10.0f64..10.0, t in 0.0f64..1.0) {
        let mid = bb_integrand(t * x1 + (1.0 - t) * x2, t * y1 + (1.0 - t) * y2);
        let chord = t * bb_integrand(x1, y1) + (1.0 - t) * bb_integrand(x2, y2);
        prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
        let k = 1.0 + t * 3.0;
        prop_assert!((bb_integrand(k * x1, k * y1) - k * bb_integrand(x1, y1)).abs() <= 1e-12 * k * bb_integrand(x1, y1).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permeability_is_positive_semidefinite(seed in any::<u64>(), m in 1usize..12, r in 0.0f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::rect(3, 3, 1.0, 1.0, m).unwrap();
        let c = random_field(&grid, &mut rng, 0.0, 5.0);
        for t in assemble_permeability(&grid, &c, r) {
            let [lo, hi] = tensor_eigenvalues(t);
            prop_assert!(lo >= r - 1e-12 * hi.max(1.0));
            prop_assert!((t[0] + t[2] - lo - hi).abs() <= 1e-12 * hi.max(1.0));
        }
    }
}

/// Quarter turn of the unit square: cell `(i, j)` goes to `(n-1-j, i)`.
fn rotate_cell(n: usize, grid: &Grid, c: usize) -> usize {
    let (i, j) = grid.cell_ij(c);
    grid.cell_index(n - 1 - j, i)
}

/// Half turn, which also maps the triangulation to itself.
fn flip_node(n: usize, grid: &Grid, k: usize) -> usize {
    let (i, j) = grid.node_ij(k);
    grid.node_index(n - i, n - j)
}

#[test]
fn gamma_one_construction_is_rotation_equivariant() {
    let n = 12;
    let grid = Grid::rect(n, n, 1.0, 1.0, 8).unwrap();
    // Gradient of a smooth potential with a distinguished direction.
    let w: Vec<[f64; 2]> = (0..grid.n_cells())
        .map(|c| {
            let x = grid.cell_center(c);
            [x[0] - 0.3 + 0.4 * x[1], x[1] - 0.6 + 0.4 * x[0]]
        })
        .collect();
    let mut wr = vec![[0.0; 2]; grid.n_cells()];
    for c in 0..grid.n_cells() {
        wr[rotate_cell(n, &grid, c)] = [-w[c][1], w[c][0]];
    }
    let a = stationary_gamma_eq1(&grid, &w, 1.2, 1.0).unwrap();
    let b = stationary_gamma_eq1(&grid, &wr, 1.2, 1.0).unwrap();
    for c in 0..grid.n_cells() {
        let rc = rotate_cell(n, &grid, c);
        assert!((a.alpha[c] - b.alpha[rc]).abs() <= 1e-12 * a.alpha[c].max(1.0));
        if a.alpha[c] > 0.0 {
            let t = a.theta[c];
            let expect = half_circle_direction([-t[1], t[0]]);
            let got = b.theta[rc];
            assert!((expect[0] - got[0]).abs() < 1e-12 && (expect[1] - got[1]).abs() < 1e-12);
        }
    }
    let mut wf = vec![[0.0; 2]; grid.n_cells()];
    for c in 0..grid.n_cells() {
        wf[rotate_cell(n, &grid, rotate_cell(n, &grid, c))] = [-w[c][0], -w[c][1]];
    }
    let f = stationary_gamma_eq1(&grid, &wf, 1.2, 1.0).unwrap();
    let sa = a.s.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for k in 0..grid.n_nodes() {
        let fk = flip_node(n, &grid, k);
        assert!((a.s[k] - f.s[fk]).abs() <= 1e-10 * sa);
        assert!((a.p[k] - f.p[fk]).abs() <= 1e-9 * (1.0 + a.p[k].abs()));
    }
}
