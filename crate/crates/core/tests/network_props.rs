use netmorph_core::graph::{random_balanced_sources, random_connected_network};
use netmorph_core::kirchhoff::nodal_residual;
use netmorph_core::{
    cycle_basis, detect_flux_loops, energy_relaxed, fluxes_from_pressures, minimize_f, optimal_c_given_q,
    shortest_path_check, solve_kirchhoff, FluxEnergyMode, FluxProblem, Method, Network,
};
use petgraph::algo::dijkstra;
use petgraph::graph::UnGraph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(seed: u64, n: usize, extra: f64) -> (Network, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_connected_network(&mut rng, n, extra, 0.5, 2.0);
    let s = random_balanced_sources(&mut rng, n, 1.0);
    (net.with_sources(s).unwrap(), rng)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let r = self.find(self.0[i]);
            self.0[i] = r;
        }
        self.0[i]
    }

    /// False when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

fn support_cycle_rank(net: &Network, q: &[f64], tol: f64) -> usize {
    let mut uf = UnionFind((0..net.n_vertices()).collect());
    let mut rank = 0;
    for (k, e) in net.edges().iter().enumerate() {
        if q[k].abs() > tol && !uf.union(e.u, e.v) {
            rank += 1;
        }
    }
    rank
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cycle_basis_has_full_rank(seed in any::<u64>(), n in 2usize..10, extra in 0.0f64..0.8) {
        let (net, _) = random_net(seed, n, extra);
        let basis = cycle_basis(&net);
        prop_assert_eq!(basis.cycles.len(), net.n_edges() + 1 - net.n_vertices());
        let zero = net.with_sources(vec![0.0; n]).unwrap();
        for c in &basis.cycles {
            let r = zero.nodal_residual(&c.circulation(net.n_edges()));
            prop_assert!(r.iter().all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn loop_detection_matches_union_find(seed in any::<u64>(), n in 3usize..9) {
        let (net, mut rng) = random_net(seed, n, 0.6);
        let q: Vec<f64> = (0..net.n_edges())
            .map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let loops = detect_flux_loops(&net, &q, 1e-12);
        prop_assert_eq!(loops.len(), support_cycle_rank(&net, &q, 1e-12));
        for c in &loops {
            prop_assert!(c.edges.iter().all(|&(k, _)| q[k].abs() > 1e-12));
        }
    }

    #[test]
    fn kirchhoff_round_trip(seed in any::<u64>(), n in 2usize..12, shift in -5.0f64..5.0) {
        let (net, mut rng) = random_net(seed, n, 0.4);
        let c: Vec<f64> = (0..net.n_edges()).map(|_| rng.random_range(0.1..3.0)).collect();
        let pv = solve_kirchhoff(&net, &c, 1e-12).unwrap();
        let scale = net.sources().iter().map(|s| s.abs()).fold(1.0, f64::max);
        let q = fluxes_from_pressures(&net, &c, &pv.p);
        prop_assert!(net.nodal_residual(&q).iter().all(|r| r.abs() <= 1e-9 * scale));
        prop_assert!(nodal_residual(&net, &c, &pv.p).iter().all(|r| r.abs() <= 1e-9 * scale));
        let shifted: Vec<f64> = pv.p.iter().map(|p| p + shift).collect();
        let q2 = fluxes_from_pressures(&net, &c, &shifted);
        for (a, b) in q.iter().zip(&q2) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs() + shift.abs()));
        }
    }

    #[test]
    fn envelope_identity(seed in any::<u64>(), n in 2usize..8, gamma in 0.2f64..2.5, nu in 0.3f64..3.0) {
        let (net, mut rng) = random_net(seed, n, 0.4);
        let q: Vec<f64> = (0..net.n_edges()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let problem = FluxProblem::new(net.clone(), gamma, nu, FluxEnergyMode::Gilbert).unwrap();
        let c = optimal_c_given_q(&q, gamma, nu);
        let at_opt = energy_relaxed(&net, &c, &q, gamma, nu);
        let f = problem.energy(&q);
        prop_assert!((at_opt - f).abs() <= 1e-10 * f.abs().max(1.0));
        for _ in 0..5 {
            let cp: Vec<f64> = c.iter().map(|x| x * rng.random_range(0.5..2.0)).collect();
            prop_assert!(energy_relaxed(&net, &cp, &q, gamma, nu) >= at_opt - 1e-10 * at_opt.abs().max(1.0));
        }
    }

    #[test]
    fn optimum_is_feasible(seed in any::<u64>(), n in 3usize..7, gamma in 0.2f64..0.9) {
        let (net, _) = random_net(seed, n, 0.5);
        let problem = FluxProblem::new(net.clone(), gamma, 1.0, FluxEnergyMode::Gilbert).unwrap();
        let sol = minimize_f(&problem, Method::TreeEnum).unwrap();
        prop_assert!(net.nodal_residual(&sol.q).iter().all(|r| r.abs() < 1e-10));
        prop_assert!(sol.loops.is_empty());
        let descent = minimize_f(&problem, Method::CycleDescent).unwrap();
        prop_assert!(net.nodal_residual(&descent.q).iter().all(|r| r.abs() < 1e-9));
        prop_assert!(descent.energy >= sol.energy * (1.0 - 1e-9));
    }

    #[test]
    fn gilbert_cost_is_concave_below_one(gamma in 0.1f64..0.95, a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.0f64..1.0) {
        let net = Network::from_edges(2, &[(0, 1, 1.0)], vec![0.0, 0.0]).unwrap();
        let problem = FluxProblem::new(net, gamma, 1.0, FluxEnergyMode::Gilbert).unwrap();
        let (a, b) = if a.signum() == b.signum() { (a, b) } else { (a.abs(), b.abs()) };
        let mid = problem.cost(t * a + (1.0 - t) * b);
        prop_assert!(mid >= t * problem.cost(a) + (1.0 - t) * problem.cost(b) - 1e-12);
    }

    #[test]
    fn shortest_path_agrees_with_dijkstra(seed in any::<u64>(), n in 3usize..8, gamma in 0.2f64..0.9) {
        let (net, mut rng) = random_net(seed, n, 0.5);
        let source = rng.random_range(0..n);
        let sink = (source + rng.random_range(1..n)) % n;
        let rep = shortest_path_check(&net, source, sink, gamma).unwrap();
        let mut g = UnGraph::<(), f64>::new_undirected();
        let idx: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for e in net.edges() {
            g.add_edge(idx[e.u], idx[e.v], e.length);
        }
        let d = dijkstra(&g, idx[source], Some(idx[sink]), |e| *e.weight())[&idx[sink]];
        prop_assert!((rep.dijkstra_length - d).abs() < 1e-12);
        prop_assert!(rep.path_length >= d - 1e-12);
        if rep.matches {
            prop_assert!((rep.path_length - d).abs() < 1e-9);
        }
    }
}

#[test]
fn tree_enumeration_on_a_tree_is_global() {
    let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], vec![-1.0, 2.0, -1.0]).unwrap();
    let problem = FluxProblem::new(net, 2.0, 1.0, FluxEnergyMode::Quadratic).unwrap();
    let sol = minimize_f(&problem, Method::TreeEnum).unwrap();
    assert_eq!(sol.certificate.optimality, netmorph_core::Optimality::Global);
    assert!((sol.energy - 6.0).abs() < 1e-12);
}
