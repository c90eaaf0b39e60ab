//! Pressureless network energy `F[Q]` under nodal mass conservation and its
//! minimization: exhaustive spanning-tree search, descent in the cycle space,
//! and randomized multistart.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    cycle_basis, default_flux_tol, detect_flux_loops, random_balanced_sources, random_connected_network, Cycle,
    Network, Violation,
};

/// Default cap on the number of spanning trees `TreeEnum` will visit.
pub const TREE_CAP: usize = 1_000_000;

/// Smoothing width for `|s|^p` in Newton-based descent.
pub const HUBER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxEnergyMode {
    /// Per-edge cost is the envelope `min_C (Q^2/C + nu/gamma C^gamma)`.
    #[default]
    Gilbert,
    /// Per-edge cost `(gamma + 1) Q^2`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxProblem {
    pub net: Network,
    pub gamma: f64,
    pub nu: f64,
    pub mode: FluxEnergyMode,
}

/// `(gamma + 1) |s|^{2 gamma / (gamma + 1)}`.
pub fn f_gamma(s: f64, gamma: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    (gamma + 1.0) * s.abs().powf(2.0 * gamma / (gamma + 1.0))
}

/// `sum (Q^2/C + nu/gamma C^gamma) L`; `+inf` when some edge has `C = 0`
/// and `Q != 0`.
pub fn energy_relaxed(net: &Network, c: &[f64], q: &[f64], gamma: f64, nu: f64) -> f64 {
    let mut e = 0.0;
    for (k, edge) in net.edges().iter().enumerate() {
        let pump = if c[k] > 0.0 {
            q[k] * q[k] / c[k]
        } else if q[k] == 0.0 {
            0.0
        } else {
            return f64::INFINITY;
        };
        e += (pump + nu / gamma * c[k].powf(gamma)) * edge.length;
    }
    e
}

/// Pointwise minimizer `C = (Q^2/nu)^{1/(gamma+1)}` of the relaxed energy.
pub fn optimal_c_given_q(q: &[f64], gamma: f64, nu: f64) -> Vec<f64> {
    q.iter().map(|&x| (x * x / nu).powf(1.0 / (gamma + 1.0))).collect()
}

impl FluxProblem {
    pub fn new(net: Network, gamma: f64, nu: f64, mode: FluxEnergyMode) -> Result<Self> {
        if !(gamma > 0.0) || !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma}, nu = {nu} must be positive")));
        }
        Ok(Self { net, gamma, nu, mode })
    }

    /// Per-unit-length cost of carrying flux `s`.
    pub fn cost(&self, s: f64) -> f64 {
        match self.mode {
            FluxEnergyMode::Gilbert => f_gamma(s, self.gamma) / self.gamma * self.nu.powf(1.0 / (self.gamma + 1.0)),
            FluxEnergyMode::Quadratic => (self.gamma + 1.0) * s * s,
        }
    }

    /// Exponent `p` and coefficient `a` with `cost(s) = a |s|^p`.
    fn power_law(&self) -> (f64, f64) {
        match self.mode {
            FluxEnergyMode::Gilbert => (
                2.0 * self.gamma / (self.gamma + 1.0),
                (self.gamma + 1.0) / self.gamma * self.nu.powf(1.0 / (self.gamma + 1.0)),
            ),
            FluxEnergyMode::Quadratic => (2.0, self.gamma + 1.0),
        }
    }

    /// `F[Q] = sum_e cost(Q_e) L_e`.
    pub fn energy(&self, q: &[f64]) -> f64 {
        self.net.edges().iter().zip(q).map(|(e, &x)| self.cost(x) * e.length).sum()
    }

    fn is_concave(&self) -> bool {
        self.mode == FluxEnergyMode::Gilbert && self.gamma <= 1.0
    }

    fn check_feasible(&self) -> Result<()> {
        match self.net.validate().violations.into_iter().next() {
            None => Ok(()),
            Some(Violation::UnbalancedSources { sum }) => {
                Err(Error::InfeasibleSources(format!("sum of sources is {sum:e}")))
            }
            Some(other) => Err(Error::InvalidNetwork(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    TreeEnum,
    CycleDescent,
    Multistart { starts: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    /// Global minimizer of `F` over all conservative fluxes.
    Global,
    /// Stationary or locally minimal; no global claim.
    Local,
    /// Best among spanning-tree fluxes only.
    TreeRestricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub method: Method,
    pub optimality: Optimality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees_examined: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSolution {
    pub q: Vec<f64>,
    pub energy: f64,
    pub certificate: Certificate,
    pub loops: Vec<Cycle>,
}

pub fn minimize_f(problem: &FluxProblem, method: Method) -> Result<FluxSolution> {
    problem.check_feasible()?;
    let (q, optimality, trees) = match method {
        Method::TreeEnum => {
            let (q, count) = tree_enum(problem, TREE_CAP)?;
            // Without cycles the conservative flux is unique.
            let forest = cycle_basis(&problem.net).cycles.is_empty();
            let opt = if problem.is_concave() || forest { Optimality::Global } else { Optimality::TreeRestricted };
            (q, opt, Some(count))
        }
        Method::CycleDescent => {
            let (q, opt) = cycle_descent(problem, None)?;
            (q, opt, None)
        }
        Method::Multistart { starts, seed } => {
            let (q, opt) = multistart(problem, starts, seed)?;
            (q, opt, None)
        }
    };
    let energy = problem.energy(&q);
    let loops = detect_flux_loops(&problem.net, &q, default_flux_tol(&q));
    Ok(FluxSolution { q, energy, certificate: Certificate { method, optimality, trees_examined: trees }, loops })
}

/// Number of spanning trees by the matrix-tree theorem.
pub fn spanning_tree_count(net: &Network) -> f64 {
    let n = net.n_vertices();
    if n <= 1 {
        return 1.0;
    }
    let mut a = DMatrix::<f64>::zeros(n - 1, n - 1);
    for e in net.edges() {
        for (i, j) in [(e.u, e.v), (e.v, e.u)] {
            if i < n - 1 {
                a[(i, i)] += 1.0;
                if j < n - 1 {
                    a[(i, j)] -= 1.0;
                }
            }
        }
    }
    a.determinant().round().max(0.0)
}

#[derive(Clone)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// The unique conservative flux supported on a spanning tree, by repeatedly
/// peeling leaves.
pub fn tree_flux(net: &Network, tree_edges: &[usize]) -> Vec<f64> {
    let n = net.n_vertices();
    let mut q = vec![0.0; net.n_edges()];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &k in tree_edges {
        let e = net.edge(k);
        incident[e.u].push(k);
        incident[e.v].push(k);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut used = vec![false; net.n_edges()];
    let mut excess = net.sources().to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    while let Some(i) = stack.pop() {
        if degree[i] != 1 {
            continue;
        }
        let k = *incident[i].iter().find(|&&k| !used[k]).expect("leaf has an open edge");
        used[k] = true;
        let e = net.edge(k);
        let j = e.other(i);
        // Leaf i pushes its whole excess towards j.
        q[k] = excess[i] * e.orientation_from(i);
        excess[j] += excess[i];
        excess[i] = 0.0;
        degree[i] = 0;
        degree[j] -= 1;
        if degree[j] == 1 {
            stack.push(j);
        }
    }
    q
}

/// Visits spanning trees in lexicographic order of their sorted edge lists.
fn for_each_spanning_tree(net: &Network, mut visit: impl FnMut(&[usize])) {
    let n = net.n_vertices();
    let m = net.n_edges();
    let need = n.saturating_sub(1);
    let mut chosen = Vec::with_capacity(need);
    fn rec(
        net: &Network,
        k: usize,
        need: usize,
        uf: &UnionFind,
        chosen: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == need {
            visit(chosen);
            return;
        }
        let m = net.n_edges();
        if m - k < need - chosen.len() {
            return;
        }
        let e = net.edge(k);
        let mut with = uf.clone();
        if with.union(e.u, e.v) {
            chosen.push(k);
            rec(net, k + 1, need, &with, chosen, visit);
            chosen.pop();
        }
        rec(net, k + 1, need, uf, chosen, visit);
    }
    if m >= need {
        rec(net, 0, need, &UnionFind::new(n), &mut chosen, &mut visit);
    }
}

/// Best spanning-tree flux; ties go to the lexicographically first tree.
fn tree_enum(problem: &FluxProblem, cap: usize) -> Result<(Vec<f64>, usize)> {
    let count = spanning_tree_count(&problem.net);
    if count > cap as f64 {
        return Err(Error::TooManyTrees { count, cap });
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut visited = 0;
    for_each_spanning_tree(&problem.net, |tree| {
        visited += 1;
        let q = tree_flux(&problem.net, tree);
        let f = problem.energy(&q);
        let better = match &best {
            None => true,
            Some((fb, _)) => f < fb - 1e-13 * fb.abs().max(1.0),
        };
        if better {
            best = Some((f, q));
        }
    });
    let (_, q) = best.ok_or_else(|| Error::InvalidNetwork("network has no spanning tree".into()))?;
    Ok((q, visited))
}

/// A conservative flux on a BFS spanning tree, used as the particular
/// solution for cycle-space descent.
pub fn particular_flux(net: &Network) -> Vec<f64> {
    let tree: Vec<usize> = {
        let mut uf = UnionFind::new(net.n_vertices());
        let mut t = Vec::new();
        let mut order: Vec<usize> = Vec::new();
        let mut seen = vec![false; net.n_vertices()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, k) in net.neighbours(i) {
                if !seen[j] {
                    seen[j] = true;
                    order.push(k);
                    queue.push_back(j);
                }
            }
        }
        for k in order {
            let e = net.edge(k);
            if uf.union(e.u, e.v) {
                t.push(k);
            }
        }
        t
    };
    tree_flux(net, &tree)
}

fn add_along(q: &mut [f64], cycle: &Cycle, t: f64) {
    for &(k, s) in &cycle.edges {
        q[k] += t * s;
    }
}

fn cycle_cost(problem: &FluxProblem, q: &[f64], cycle: &Cycle, t: f64) -> f64 {
    cycle
        .edges
        .iter()
        .map(|&(k, s)| problem.cost(q[k] + t * s) * problem.net.edge(k).length)
        .sum()
}

/// Moves by `t` along the cycle and snaps the edges whose breakpoint is `t`
/// to an exact zero.
fn move_to_breakpoint(q: &mut [f64], cycle: &Cycle, t: f64) {
    let before: Vec<f64> = cycle.edges.iter().map(|&(k, _)| q[k]).collect();
    add_along(q, cycle, t);
    for (&(k, s), q0) in cycle.edges.iter().zip(before) {
        if (-q0 / s - t).abs() <= 1e-14 * t.abs().max(q0.abs()).max(1e-300) {
            q[k] = 0.0;
        }
    }
}

/// Exact line minimization of a per-edge concave cost along a cycle: the
/// minimum over the line sits at a breakpoint `t = -Q_e / s_e`.
fn best_breakpoint(problem: &FluxProblem, q: &[f64], cycle: &Cycle) -> (f64, f64) {
    let base = cycle_cost(problem, q, cycle, 0.0);
    let mut best = (0.0, base);
    for &(k, s) in &cycle.edges {
        let t = -q[k] / s;
        if t == 0.0 {
            continue;
        }
        let f = cycle_cost(problem, q, cycle, t);
        if f < best.1 - 1e-14 * base.abs().max(1.0) {
            best = (t, f);
        }
    }
    best
}

/// Removes loops from the support of `q` without increasing a concave `F`:
/// along a supported loop the cost is concave on the segment around `t = 0`,
/// so one of the segment ends is no worse.
fn eliminate_loops(problem: &FluxProblem, q: &mut [f64]) {
    loop {
        let loops = detect_flux_loops(&problem.net, q, default_flux_tol(q));
        let Some(cycle) = loops.first() else { break };
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for &(k, s) in &cycle.edges {
            let t = -q[k] / s;
            if t > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
        }
        let t = if cycle_cost(problem, q, cycle, lo) <= cycle_cost(problem, q, cycle, hi) { lo } else { hi };
        move_to_breakpoint(q, cycle, t);
        for &(k, _) in &cycle.edges {
            if q[k].abs() <= default_flux_tol(q) {
                q[k] = 0.0;
            }
        }
    }
}

fn concave_descent(problem: &FluxProblem, mut q: Vec<f64>, cycles: &[Cycle]) -> Vec<f64> {
    for _sweep in 0..1000 {
        let mut improved = false;
        for cycle in cycles {
            let (t, _) = best_breakpoint(problem, &q, cycle);
            if t != 0.0 {
                move_to_breakpoint(&mut q, cycle, t);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    eliminate_loops(problem, &mut q);
    q
}

/// Cycle matrix `Z` with one column per basis cycle.
fn cycle_matrix(m: usize, cycles: &[Cycle]) -> DMatrix<f64> {
    let mut z = DMatrix::<f64>::zeros(m, cycles.len());
    for (c, cycle) in cycles.iter().enumerate() {
        for &(k, s) in &cycle.edges {
            z[(k, c)] += s;
        }
    }
    z
}

/// Weighted least squares `min sum_e w_e (q0 + Z a)_e^2`.
fn quadratic_optimum(problem: &FluxProblem, q0: &[f64], cycles: &[Cycle]) -> Result<Vec<f64>> {
    if cycles.is_empty() {
        return Ok(q0.to_vec());
    }
    let m = q0.len();
    let z = cycle_matrix(m, cycles);
    let w = DVector::from_iterator(m, problem.net.edges().iter().map(|e| e.length));
    let wz = DMatrix::from_fn(m, cycles.len(), |i, j| w[i] * z[(i, j)]);
    let h = z.transpose() * &wz;
    let g = wz.transpose() * DVector::from_column_slice(q0);
    let a = h.cholesky().ok_or(Error::SingularSystem { residual: f64::NAN })?.solve(&(-g));
    Ok((DVector::from_column_slice(q0) + z * a).iter().copied().collect())
}

/// Damped Newton on the smoothed convex objective `sum a L (s^2 + eps^2)^{p/2}`.
fn smooth_newton(problem: &FluxProblem, q0: &[f64], cycles: &[Cycle]) -> Vec<f64> {
    if cycles.is_empty() {
        return q0.to_vec();
    }
    let (p, coef) = problem.power_law();
    let m = q0.len();
    let z = cycle_matrix(m, cycles);
    let lens: Vec<f64> = problem.net.edges().iter().map(|e| coef * e.length).collect();
    let eps2 = HUBER_EPS * HUBER_EPS;
    let obj = |q: &DVector<f64>| -> f64 { q.iter().zip(&lens).map(|(s, w)| w * (s * s + eps2).powf(p / 2.0)).sum() };
    let mut q = DVector::from_column_slice(q0);
    let mut f = obj(&q);
    for _ in 0..500 {
        let d1 = DVector::from_fn(m, |i, _| lens[i] * p * q[i] * (q[i] * q[i] + eps2).powf(p / 2.0 - 1.0));
        let d2: Vec<f64> = (0..m)
            .map(|i| {
                let r = q[i] * q[i] + eps2;
                lens[i] * p * r.powf(p / 2.0 - 2.0) * ((p - 1.0) * q[i] * q[i] + eps2)
            })
            .collect();
        let g = z.transpose() * d1;
        let gnorm = g.norm();
        if gnorm <= 1e-14 * f.max(1.0) {
            break;
        }
        let dz = DMatrix::from_fn(m, cycles.len(), |i, j| d2[i] * z[(i, j)]);
        let mut h = z.transpose() * dz;
        let shift = 1e-14 * h.diagonal().max().max(1.0);
        for i in 0..cycles.len() {
            h[(i, i)] += shift;
        }
        let dir = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let dq = &z * &dir;
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &q + &dq * step;
            let ft = obj(&trial);
            if ft <= f + 1e-4 * step * slope {
                q = trial;
                accepted = ft < f;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    q.iter().copied().collect()
}

fn descend_from(problem: &FluxProblem, q0: Vec<f64>, cycles: &[Cycle]) -> Result<(Vec<f64>, Optimality)> {
    match problem.mode {
        FluxEnergyMode::Quadratic => Ok((quadratic_optimum(problem, &q0, cycles)?, Optimality::Global)),
        FluxEnergyMode::Gilbert if problem.gamma <= 1.0 => Ok((concave_descent(problem, q0, cycles), Optimality::Local)),
        FluxEnergyMode::Gilbert => Ok((smooth_newton(problem, &q0, cycles), Optimality::Global)),
    }
}

/// Descent over `Q = Q_particular + sum_k a_k z_k` starting from `a`
/// (zero when `None`).
pub fn cycle_descent(problem: &FluxProblem, start: Option<&[f64]>) -> Result<(Vec<f64>, Optimality)> {
    problem.check_feasible()?;
    let cycles = cycle_basis(&problem.net).cycles;
    let mut q0 = particular_flux(&problem.net);
    if let Some(a) = start {
        for (cycle, &ak) in cycles.iter().zip(a) {
            add_along(&mut q0, cycle, ak);
        }
    }
    descend_from(problem, q0, &cycles)
}

fn multistart(problem: &FluxProblem, starts: usize, seed: u64) -> Result<(Vec<f64>, Optimality)> {
    problem.check_feasible()?;
    let cycles = cycle_basis(&problem.net).cycles;
    let scale = problem.net.sources().iter().fold(1.0_f64, |m, s| m.max(s.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>, Optimality)> = None;
    for i in 0..starts.max(1) {
        let a: Vec<f64> = if i == 0 {
            vec![0.0; cycles.len()]
        } else {
            (0..cycles.len()).map(|_| rng.random_range(-2.0 * scale..2.0 * scale)).collect()
        };
        let (q, opt) = cycle_descent(problem, Some(&a))?;
        let f = problem.energy(&q);
        if best.as_ref().is_none_or(|(fb, _, _)| f < *fb) {
            best = Some((f, q, opt));
        }
    }
    let (_, q, opt) = best.expect("at least one start");
    Ok((q, opt))
}

/// Every descent run from random starts, for the tree-theorem check.
pub fn multistart_all(problem: &FluxProblem, starts: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let cycles = cycle_basis(&problem.net).cycles;
    let scale = problem.net.sources().iter().fold(1.0_f64, |m, s| m.max(s.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..starts)
        .map(|_| {
            let a: Vec<f64> = (0..cycles.len()).map(|_| rng.random_range(-2.0 * scale..2.0 * scale)).collect();
            cycle_descent(problem, Some(&a)).map(|(q, _)| q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub optimum: f64,
    pub trees_examined: usize,
    pub perturbations: usize,
    /// Smallest `F(Q* +- eps z) - F(Q*)` over all basis cycles.
    pub min_increase: f64,
    pub multistart_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTheoremReport {
    pub instances: Vec<InstanceReport>,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeTheoremConfig {
    pub trials: usize,
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub gamma: f64,
    pub nu: f64,
    pub extra_edge_prob: f64,
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for TreeTheoremConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            min_vertices: 4,
            max_vertices: 6,
            gamma: 0.5,
            nu: 1.0,
            extra_edge_prob: 0.5,
            multistarts: 8,
            seed: 0,
        }
    }
}

/// Checks one instance: the enumerated optimum is loop-free, no descent run
/// beats it, and `+-eps` circulations around every basis cycle strictly
/// increase `F`.
pub fn verify_tree_theorem_on(problem: &FluxProblem, multistarts: usize, seed: u64) -> Result<InstanceReport> {
    if !(problem.gamma < 1.0) || problem.mode != FluxEnergyMode::Gilbert {
        return Err(Error::InvalidParameter("tree property needs gilbert mode with gamma < 1".into()));
    }
    let sol = minimize_f(problem, Method::TreeEnum)?;
    if !sol.loops.is_empty() {
        return Err(Error::CounterexampleFound(format!("enumerated optimum has {} loop(s)", sol.loops.len())));
    }
    let fstar = sol.energy;
    let tol = 1e-9 * fstar.abs().max(1.0);
    let mut ms_best = f64::INFINITY;
    for q in multistart_all(problem, multistarts, seed)? {
        let f = problem.energy(&q);
        ms_best = ms_best.min(f);
        if f < fstar - tol {
            return Err(Error::CounterexampleFound(format!("descent found F = {f} below tree optimum {fstar}")));
        }
        if f <= fstar + tol && !detect_flux_loops(&problem.net, &q, default_flux_tol(&q)).is_empty() {
            return Err(Error::CounterexampleFound(format!("optimal descent result at F = {f} has a loop")));
        }
    }
    let eps = 1e-6 * sol.q.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let basis = cycle_basis(&problem.net).cycles;
    let mut min_increase = f64::INFINITY;
    for cycle in &basis {
        for sign in [1.0, -1.0] {
            let mut q = sol.q.clone();
            add_along(&mut q, cycle, sign * eps);
            let d = problem.energy(&q) - fstar;
            min_increase = min_increase.min(d);
            if !(d > 0.0) {
                return Err(Error::CounterexampleFound(format!("circulation {} eps on a cycle changes F by {d:e}", sign)));
            }
        }
    }
    Ok(InstanceReport {
        n_vertices: problem.net.n_vertices(),
        n_edges: problem.net.n_edges(),
        optimum: fstar,
        trees_examined: sol.certificate.trees_examined.unwrap_or(0),
        perturbations: 2 * basis.len(),
        min_increase,
        multistart_best: ms_best,
    })
}

/// Random connected networks with balanced random sources, each checked by
/// [`verify_tree_theorem_on`]. Stops at the first counterexample.
pub fn verify_tree_theorem(cfg: &TreeTheoremConfig) -> Result<TreeTheoremReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let n = rng.random_range(cfg.min_vertices..=cfg.max_vertices);
        let net = random_connected_network(&mut rng, n, cfg.extra_edge_prob, 0.5, 2.0);
        let s = random_balanced_sources(&mut rng, n, 1.0);
        let problem = FluxProblem::new(net.with_sources(s)?, cfg.gamma, cfg.nu, FluxEnergyMode::Gilbert)?;
        instances.push(verify_tree_theorem_on(&problem, cfg.multistarts, cfg.seed.wrapping_add(t as u64))?);
    }
    Ok(TreeTheoremReport { instances, counterexamples: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortestPathReport {
    /// Vertices of the optimal support path from source to sink.
    pub path: Vec<usize>,
    pub path_length: f64,
    pub dijkstra_length: f64,
    pub matches: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Dijkstra distance between two vertices by edge length.
pub fn shortest_path_length(net: &Network, from: usize, to: usize) -> f64 {
    let mut dist = vec![f64::INFINITY; net.n_vertices()];
    dist[from] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem(0.0, from)]);
    while let Some(HeapItem(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == to {
            return d;
        }
        for &(j, k) in net.neighbours(i) {
            let nd = d + net.edge(k).length;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(HeapItem(nd, j));
            }
        }
    }
    dist[to]
}

/// Minimizes `F` for a unit source at `source` and unit sink at `sink` and
/// checks that the support is a path of minimal total length.
pub fn shortest_path_check(net: &Network, source: usize, sink: usize, gamma: f64) -> Result<ShortestPathReport> {
    if !(gamma < 1.0) {
        return Err(Error::InvalidParameter("shortest path property needs gamma < 1".into()));
    }
    let n = net.n_vertices();
    if source >= n || sink >= n || source == sink {
        return Err(Error::InvalidParameter("source and sink must be distinct vertices".into()));
    }
    let mut s = vec![0.0; n];
    s[source] = 1.0;
    s[sink] = -1.0;
    let problem = FluxProblem::new(net.with_sources(s)?, gamma, 1.0, FluxEnergyMode::Gilbert)?;
    let sol = minimize_f(&problem, Method::TreeEnum)?;
    let tol = default_flux_tol(&sol.q);
    // Follow the unit flow from source to sink.
    let mut path = vec![source];
    let mut length = 0.0;
    let mut at = source;
    let mut used = vec![false; net.n_edges()];
    while at != sink {
        let next = net.neighbours(at).iter().find(|&&(_, k)| {
            !used[k] && sol.q[k].abs() > tol && sol.q[k] * net.edge(k).orientation_from(at) > 0.0
        });
        let Some(&(j, k)) = next else {
            return Err(Error::NoConvergence("optimal flux does not form a source-sink path".into()));
        };
        used[k] = true;
        length += net.edge(k).length;
        path.push(j);
        at = j;
    }
    let support = sol.q.iter().filter(|x| x.abs() > tol).count();
    let dijkstra = shortest_path_length(net, source, sink);
    let matches = support == path.len() - 1 && (length - dijkstra).abs() <= 1e-12 * dijkstra.max(1.0);
    Ok(ShortestPathReport { path, path_length: length, dijkstra_length: dijkstra, matches })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_net(s: Vec<f64>, third_edge: bool) -> Network {
        let mut e = vec![(0, 1, 1.0), (1, 2, 1.0)];
        if third_edge {
            e.push((0, 2, 1.0));
        }
        Network::from_edges(3, &e, s).unwrap()
    }

    #[test]
    fn f_gamma_values() {
        assert_eq!(f_gamma(0.0, 0.5), 0.0);
        for g in [0.3, 1.0, 2.0] {
            assert!((f_gamma(1.0, g) - (g + 1.0)).abs() < 1e-15);
        }
        assert!((f_gamma(2.0, 2.0) - 3.0 * 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
        assert!((f_gamma(2.0, 2.0) - 7.5595).abs() < 1e-4);
    }

    #[test]
    fn relaxed_energy_cases() {
        let net = Network::from_edges(2, &[(0, 1, 1.0)], vec![1.0, -1.0]).unwrap();
        assert!((energy_relaxed(&net, &[2.0], &[1.0], 1.0, 1.0) - 2.5).abs() < 1e-15);
        assert_eq!(energy_relaxed(&net, &[0.0], &[0.0], 1.0, 1.0), 0.0);
        assert_eq!(energy_relaxed(&net, &[0.0], &[1.0], 1.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn optimal_c_examples() {
        assert_eq!(optimal_c_given_q(&[0.0], 0.5, 1.0), vec![0.0]);
        assert!((optimal_c_given_q(&[1.0], 0.7, 1.0)[0] - 1.0).abs() < 1e-15);
        assert!((optimal_c_given_q(&[8.0], 1.0 / 3.0, 1.0)[0] - 22.627416997969522).abs() < 1e-10);
    }

    #[test]
    fn tree_counts() {
        assert_eq!(spanning_tree_count(&example_net(vec![0.0; 3], false)), 1.0);
        assert_eq!(spanning_tree_count(&example_net(vec![0.0; 3], true)), 3.0);
        let mut e = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                e.push((i, j, 1.0));
            }
        }
        let k5 = Network::from_edges(5, &e, vec![0.0; 5]).unwrap();
        assert_eq!(spanning_tree_count(&k5), 125.0);
        let mut n = 0;
        for_each_spanning_tree(&k5, |_| n += 1);
        assert_eq!(n, 125);
    }

    #[test]
    fn example_one_quadratic() {
        let p = FluxProblem::new(example_net(vec![-1.0, 2.0, -1.0], false), 2.0, 1.0, FluxEnergyMode::Quadratic).unwrap();
        let sol = minimize_f(&p, Method::TreeEnum).unwrap();
        assert!((sol.energy - 6.0).abs() < 1e-12);
        let p3 = FluxProblem { net: example_net(vec![-1.0, 2.0, -1.0], true), ..p };
        let sol = minimize_f(&p3, Method::CycleDescent).unwrap();
        assert!((sol.energy - 6.0).abs() < 1e-12);
        assert!(sol.q[2].abs() < 1e-12);
    }

    #[test]
    fn example_two_quadratic() {
        let p = FluxProblem::new(example_net(vec![-1.0, 3.0, -2.0], true), 2.0, 1.0, FluxEnergyMode::Quadratic).unwrap();
        let sol = minimize_f(&p, Method::CycleDescent).unwrap();
        assert!((sol.energy - 14.0).abs() < 1e-12);
        assert!((sol.q[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(sol.loops.len(), 1);
        assert_eq!(sol.loops[0].edge_set(), vec![0, 1, 2]);
    }

    #[test]
    fn triangle_prefers_direct_edge() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], vec![1.0, 0.0, -1.0]).unwrap();
        let p = FluxProblem::new(net, 0.5, 1.0, FluxEnergyMode::Gilbert).unwrap();
        let sol = minimize_f(&p, Method::TreeEnum).unwrap();
        assert_eq!(sol.certificate.optimality, Optimality::Global);
        assert!(sol.q[0].abs() < 1e-15 && sol.q[1].abs() < 1e-15);
        assert!((sol.q[2] - 1.0).abs() < 1e-15);
        let cd = minimize_f(&p, Method::Multistart { starts: 6, seed: 3 }).unwrap();
        assert!((cd.energy - sol.energy).abs() < 1e-12);
    }

    #[test]
    fn too_many_trees_is_reported() {
        let mut e = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                e.push((i, j, 1.0));
            }
        }
        let net = Network::from_edges(10, &e, vec![0.0; 10]).unwrap();
        let p = FluxProblem::new(net, 0.5, 1.0, FluxEnergyMode::Gilbert).unwrap();
        assert!(matches!(minimize_f(&p, Method::TreeEnum), Err(Error::TooManyTrees { .. })));
    }

    #[test]
    fn unbalanced_sources_are_infeasible() {
        let p = FluxProblem::new(example_net(vec![1.0, 0.0, 0.0], false), 0.5, 1.0, FluxEnergyMode::Gilbert).unwrap();
        assert!(matches!(minimize_f(&p, Method::TreeEnum), Err(Error::InfeasibleSources(_))));
    }

    #[test]
    fn convex_gilbert_newton_matches_dense_search() {
        let net = example_net(vec![-1.0, 3.0, -2.0], true);
        let p = FluxProblem::new(net, 2.0, 1.0, FluxEnergyMode::Gilbert).unwrap();
        let sol = minimize_f(&p, Method::CycleDescent).unwrap();
        // Brute-force the one-parameter family.
        let q0 = particular_flux(&p.net);
        let cyc = &cycle_basis(&p.net).cycles[0];
        let mut best = f64::INFINITY;
        for i in -40000..=40000 {
            let mut q = q0.clone();
            add_along(&mut q, cyc, i as f64 * 1e-4);
            best = best.min(p.energy(&q));
        }
        assert!(sol.energy <= best + 1e-9);
        assert!(sol.energy >= best - 1e-6);
    }

    #[test]
    fn parallel_routes_pick_the_shorter() {
        let net =
            Network::from_edges(4, &[(0, 1, 1.0), (1, 3, 1.0), (0, 2, 1.0), (2, 3, 2.0)], vec![0.0; 4]).unwrap();
        let r = shortest_path_check(&net, 0, 3, 0.5).unwrap();
        assert!(r.matches);
        assert_eq!(r.path, vec![0, 1, 3]);
    }

    #[test]
    fn small_tree_theorem_run() {
        let rep = verify_tree_theorem(&TreeTheoremConfig { trials: 5, ..Default::default() }).unwrap();
        assert_eq!(rep.instances.len(), 5);
        assert!(rep.instances.iter().all(|i| i.min_increase > 0.0));
    }
}
