//! Embedded transport graphs: validation, cycle space and flux loops.
//!
//! Edges are stored once per unordered vertex pair with `u < v` (vertex
//! indices, which follow ascending vertex id). A per-edge flux `Q_e > 0`
//! means flow from `u` to `v`; the reverse orientation is implied.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(S)` for a network to count as balanced.
pub const SOURCE_BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

impl Edge {
    /// The endpoint opposite to `from`.
    pub fn other(&self, from: usize) -> usize {
        if from == self.u {
            self.v
        } else {
            self.u
        }
    }

    /// `+1` when traversing `from -> other` follows the stored orientation.
    pub fn orientation_from(&self, from: usize) -> f64 {
        if from == self.u {
            1.0
        } else {
            -1.0
        }
    }
}

/// Immutable embedded graph with nodal sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    ids: Vec<i64>,
    positions: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    sources: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Per-edge conductivities and oriented fluxes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeState {
    pub c: Vec<f64>,
    pub q: Vec<f64>,
}

impl Network {
    /// Builds a network from vertex ids and positions, edges given as id
    /// pairs, and per-vertex sources. Only structural problems (unknown ids,
    /// self loops, non-finite data) are rejected here; the modelling
    /// invariants are reported by [`Network::validate`].
    pub fn new(
        vertices: Vec<(i64, Vec<f64>)>,
        edges: Vec<(i64, i64, f64)>,
        sources: BTreeMap<i64, f64>,
    ) -> Result<Self> {
        let mut vertices = vertices;
        vertices.sort_by_key(|(id, _)| *id);
        for w in vertices.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidNetwork(format!("duplicate vertex id {}", w[0].0)));
            }
        }
        let index: BTreeMap<i64, usize> = vertices.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
        let lookup = |id: i64| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::InvalidNetwork(format!("unknown vertex id {id}")))
        };
        let mut out_edges = Vec::with_capacity(edges.len());
        for (a, b, length) in edges {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if a == b {
                return Err(Error::InvalidNetwork(format!("self loop at vertex {}", vertices[a].0)));
            }
            if !length.is_finite() {
                return Err(Error::InvalidNetwork("non-finite edge length".into()));
            }
            out_edges.push(Edge { u: a.min(b), v: a.max(b), length });
        }
        let mut s = vec![0.0; vertices.len()];
        for (id, val) in sources {
            if !val.is_finite() {
                return Err(Error::InvalidNetwork(format!("non-finite source at vertex {id}")));
            }
            s[lookup(id)?] = val;
        }
        let (ids, positions) = vertices.into_iter().unzip();
        Ok(Self::from_indexed(ids, positions, out_edges, s))
    }

    /// Builds directly from index-based data; ids are `0..n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], sources: Vec<f64>) -> Result<Self> {
        if sources.len() != n {
            return Err(Error::InvalidNetwork(format!("{} sources for {n} vertices", sources.len())));
        }
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b, length) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidNetwork(format!("bad edge ({a}, {b})")));
            }
            out.push(Edge { u: a.min(b), v: a.max(b), length });
        }
        Ok(Self::from_indexed((0..n as i64).collect(), vec![Vec::new(); n], out, sources))
    }

    fn from_indexed(ids: Vec<i64>, positions: Vec<Vec<f64>>, edges: Vec<Edge>, sources: Vec<f64>) -> Self {
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, k));
            adjacency[e.v].push((e.u, k));
        }
        Self { ids, positions, edges, sources, adjacency }
    }

    pub fn n_vertices(&self) -> usize {
        self.ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn sources(&self) -> &[f64] {
        &self.sources
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    /// `(neighbour, edge index)` pairs of vertex `i`.
    pub fn neighbours(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }

    pub fn edge_label(&self, k: usize) -> String {
        let e = &self.edges[k];
        format!("{}-{}", self.ids[e.u], self.ids[e.v])
    }

    /// Index of the edge joining `a` and `b`, if any.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|(n, _)| *n == b).map(|&(_, k)| k)
    }

    /// Same graph with different sources.
    pub fn with_sources(&self, sources: Vec<f64>) -> Result<Self> {
        if sources.len() != self.n_vertices() {
            return Err(Error::InvalidNetwork("source vector has wrong length".into()));
        }
        Ok(Self { sources, ..self.clone() })
    }

    /// Same graph plus one extra edge.
    pub fn with_edge(&self, a: usize, b: usize, length: f64) -> Result<Self> {
        if a >= self.n_vertices() || b >= self.n_vertices() || a == b {
            return Err(Error::InvalidNetwork(format!("bad edge ({a}, {b})")));
        }
        let mut edges = self.edges.clone();
        edges.push(Edge { u: a.min(b), v: a.max(b), length });
        Ok(Self::from_indexed(self.ids.clone(), self.positions.clone(), edges, self.sources.clone()))
    }

    /// Connected-component label per vertex, counting only edges for which
    /// `active(edge)` holds. Labels are dense and ordered by smallest vertex.
    pub fn components_where(&self, active: impl Fn(usize) -> bool) -> (usize, Vec<usize>) {
        let n = self.n_vertices();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for &(j, k) in &self.adjacency[i] {
                    if label[j] == usize::MAX && active(k) {
                        label[j] = count;
                        queue.push_back(j);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    /// Net outflow minus source at every vertex: `sum_j Q_ij - S_i`.
    pub fn nodal_residual(&self, q: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.sources.iter().map(|s| -s).collect();
        for (e, &qe) in self.edges.iter().zip(q) {
            r[e.u] += qe;
            r[e.v] -= qe;
        }
        r
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (ncomp, _) = self.components_where(|_| true);
        if self.n_vertices() == 0 {
            violations.push(Violation::Empty);
        } else if ncomp > 1 {
            violations.push(Violation::Disconnected { components: ncomp });
        }
        let mut seen = BTreeMap::new();
        for (k, e) in self.edges.iter().enumerate() {
            if let Some(first) = seen.insert((e.u, e.v), k) {
                violations.push(Violation::DuplicateEdge { first, second: k });
            }
            if !(e.length > 0.0) {
                violations.push(Violation::NonpositiveLength { edge: k, length: e.length });
            }
        }
        let sum: f64 = self.sources.iter().sum();
        if sum.abs() > SOURCE_BALANCE_TOL {
            violations.push(Violation::UnbalancedSources { sum });
        }
        ValidationReport { violations }
    }

    pub fn to_json(&self) -> NetworkJson {
        NetworkJson {
            vertices: self.ids.iter().zip(&self.positions).map(|(&id, pos)| VertexJson { id, pos: pos.clone() }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson { u: self.ids[e.u], v: self.ids[e.v], length: Some(e.length) })
                .collect(),
            sources: self
                .ids
                .iter()
                .zip(&self.sources)
                .filter(|(_, s)| **s != 0.0)
                .map(|(id, s)| (id.to_string(), *s))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    Disconnected { components: usize },
    DuplicateEdge { first: usize, second: usize },
    NonpositiveLength { edge: usize, length: f64 },
    UnbalancedSources { sum: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Empty => write!(f, "network has no vertices"),
            Violation::Disconnected { components } => write!(f, "disconnected ({components} components)"),
            Violation::DuplicateEdge { first, second } => write!(f, "duplicate edge (edges {first} and {second})"),
            Violation::NonpositiveLength { edge, length } => write!(f, "nonpositive length {length} on edge {edge}"),
            Violation::UnbalancedSources { sum } => write!(f, "sum of sources is {sum:e}, not 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msg: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidNetwork(msg.join("; ")))
        }
    }
}

/// A closed walk given as oriented edges; `sign = +1` follows `u -> v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub edges: Vec<(usize, f64)>,
}

impl Cycle {
    /// Dense per-edge circulation vector with unit strength.
    pub fn circulation(&self, n_edges: usize) -> Vec<f64> {
        let mut c = vec![0.0; n_edges];
        for &(k, s) in &self.edges {
            c[k] += s;
        }
        c
    }

    pub fn edge_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().map(|&(k, _)| k).collect();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CycleBasis {
    pub cycles: Vec<Cycle>,
}

/// Fundamental cycles of the subgraph spanned by the `active` edges, with
/// respect to a BFS spanning forest of that subgraph.
fn fundamental_cycles(net: &Network, active: impl Fn(usize) -> bool) -> Vec<Cycle> {
    let n = net.n_vertices();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut tree_edge = vec![false; net.n_edges()];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for &(j, k) in net.neighbours(i) {
                if active(k) && depth[j] == usize::MAX {
                    depth[j] = depth[i] + 1;
                    parent[j] = Some((i, k));
                    tree_edge[k] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    let mut cycles = Vec::new();
    for (k, e) in net.edges().iter().enumerate() {
        if !active(k) || tree_edge[k] {
            continue;
        }
        // Walk u -> v along the edge, then v back to u through the tree.
        let mut head = vec![(k, 1.0)];
        let mut tail = Vec::new();
        let (mut a, mut b) = (e.v, e.u);
        while a != b {
            if depth[a] >= depth[b] {
                let (pa, ka) = parent[a].expect("tree parent");
                head.push((ka, net.edge(ka).orientation_from(a)));
                a = pa;
            } else {
                let (pb, kb) = parent[b].expect("tree parent");
                tail.push((kb, net.edge(kb).orientation_from(pb)));
                b = pb;
            }
        }
        tail.reverse();
        head.extend(tail);
        cycles.push(Cycle { edges: head });
    }
    cycles
}

/// Fundamental cycle basis of the whole graph.
pub fn cycle_basis(net: &Network) -> CycleBasis {
    CycleBasis { cycles: fundamental_cycles(net, |_| true) }
}

/// Scale-aware "nonzero flux" threshold: `1e-9 * max(1, max|Q|)`.
pub fn default_flux_tol(q: &[f64]) -> f64 {
    1e-9 * q.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
}

/// Loops of the flux support `{e : |Q_e| > tol}`, returned as a basis of its
/// cycle space. Empty exactly when the support is a forest.
pub fn detect_flux_loops(net: &Network, q: &[f64], tol: f64) -> Vec<Cycle> {
    fundamental_cycles(net, |k| q[k].abs() > tol)
}

/// Random connected network on `n` vertices: a random spanning tree plus each
/// remaining pair with probability `extra_edge_prob`. Lengths are uniform in
/// `[min_len, max_len]`; sources are zero.
pub fn random_connected_network<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    extra_edge_prob: f64,
    min_len: f64,
    max_len: f64,
) -> Network {
    let mut edges = Vec::new();
    let mut present = vec![vec![false; n]; n];
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((i, j, rng.random_range(min_len..=max_len)));
        present[i][j] = true;
        present[j][i] = true;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !present[i][j] && rng.random::<f64>() < extra_edge_prob {
                edges.push((i, j, rng.random_range(min_len..=max_len)));
            }
        }
    }
    Network::from_edges(n, &edges, vec![0.0; n]).expect("generated edges are valid")
}

/// Random balanced source vector (zero sum up to rounding, then corrected on
/// the last vertex).
pub fn random_balanced_sources<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    s.iter_mut().for_each(|x| *x -= mean);
    let rest: f64 = s[..n - 1].iter().sum();
    s[n - 1] = -rest;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexJson {
    pub id: i64,
    #[serde(default)]
    pub pos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub u: i64,
    pub v: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

/// On-disk network format. Missing edge lengths default to the Euclidean
/// distance between the endpoint positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub vertices: Vec<VertexJson>,
    pub edges: Vec<EdgeJson>,
    #[serde(default)]
    pub sources: BTreeMap<String, f64>,
}

impl NetworkJson {
    pub fn into_network(self) -> Result<Network> {
        let pos: BTreeMap<i64, &Vec<f64>> = self.vertices.iter().map(|v| (v.id, &v.pos)).collect();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let length = match e.length {
                Some(l) => l,
                None => {
                    let (a, b) = match (pos.get(&e.u), pos.get(&e.v)) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(Error::InvalidNetwork(format!("edge {}-{} references unknown vertex", e.u, e.v))),
                    };
                    if a.len() != b.len() || a.is_empty() {
                        return Err(Error::InvalidNetwork(format!(
                            "edge {}-{} has no length and endpoint positions are unusable",
                            e.u, e.v
                        )));
                    }
                    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
                }
            };
            edges.push((e.u, e.v, length));
        }
        let mut sources = BTreeMap::new();
        for (k, v) in self.sources {
            let id: i64 = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidNetwork(format!("source key {k:?} is not an integer id")))?;
            sources.insert(id, v);
        }
        Network::new(self.vertices.into_iter().map(|v| (v.id, v.pos)).collect(), edges, sources)
    }
}

pub fn network_from_json_str(s: &str) -> Result<Network> {
    let raw: NetworkJson = serde_json::from_str(s).map_err(|e| Error::InvalidNetwork(e.to_string()))?;
    raw.into_network()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3(s: [f64; 3]) -> Network {
        Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], s.to_vec()).unwrap()
    }

    fn triangle() -> Network {
        Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], vec![1.0, 0.0, -1.0]).unwrap()
    }

    fn k4() -> Network {
        let mut e = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                e.push((i, j, 1.0));
            }
        }
        Network::from_edges(4, &e, vec![0.0; 4]).unwrap()
    }

    #[test]
    fn balanced_path_is_valid() {
        assert!(path3([1.0, 0.0, -1.0]).validate().is_valid());
    }

    #[test]
    fn imbalance_is_reported() {
        let r = path3([1.0, 0.0, 0.0]).validate();
        assert_eq!(r.violations, vec![Violation::UnbalancedSources { sum: 1.0 }]);
    }

    #[test]
    fn two_components_are_reported() {
        let net = Network::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)], vec![0.0; 4]).unwrap();
        assert_eq!(net.validate().violations, vec![Violation::Disconnected { components: 2 }]);
    }

    #[test]
    fn duplicate_and_nonpositive_edges_are_reported() {
        let net = Network::from_edges(2, &[(0, 1, 1.0), (1, 0, -2.0)], vec![0.0; 2]).unwrap();
        let v = net.validate().violations;
        assert!(v.contains(&Violation::DuplicateEdge { first: 0, second: 1 }));
        assert!(v.contains(&Violation::NonpositiveLength { edge: 1, length: -2.0 }));
    }

    #[test]
    fn basis_sizes_for_small_graphs() {
        assert!(cycle_basis(&path3([0.0; 3])).cycles.is_empty());
        let tri = cycle_basis(&triangle());
        assert_eq!(tri.cycles.len(), 1);
        assert_eq!(tri.cycles[0].len(), 3);
        assert_eq!(cycle_basis(&k4()).cycles.len(), 3);
    }

    #[test]
    fn basis_cycles_are_closed() {
        let net = k4();
        for c in cycle_basis(&net).cycles {
            let circ = c.circulation(net.n_edges());
            let with_zero_sources = net.with_sources(vec![0.0; 4]).unwrap();
            assert!(with_zero_sources.nodal_residual(&circ).iter().all(|r| r.abs() < 1e-15));
        }
    }

    #[test]
    fn circulation_on_triangle_is_a_loop() {
        let net = triangle();
        let c = cycle_basis(&net).cycles[0].circulation(3);
        let loops = detect_flux_loops(&net, &c, 1e-9);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].edge_set(), vec![0, 1, 2]);
    }

    #[test]
    fn path_never_has_loops() {
        let net = path3([1.0, 0.0, -1.0]);
        assert!(detect_flux_loops(&net, &[3.0, -7.0], 1e-9).is_empty());
    }

    #[test]
    fn json_lengths_default_to_euclidean() {
        let s = r#"{"vertices":[{"id":1,"pos":[0,0]},{"id":2,"pos":[3,4]}],
                    "edges":[{"u":2,"v":1}], "sources":{"1":1.0,"2":-1.0}}"#;
        let net = network_from_json_str(s).unwrap();
        assert_eq!(net.edges()[0], Edge { u: 0, v: 1, length: 5.0 });
        assert_eq!(net.sources(), &[1.0, -1.0]);
        let back = net.to_json().into_network().unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn json_unknown_vertex_is_rejected() {
        let s = r#"{"vertices":[{"id":1}],"edges":[{"u":1,"v":9,"length":1}]}"#;
        assert!(matches!(network_from_json_str(s), Err(Error::InvalidNetwork(_))));
    }
}
