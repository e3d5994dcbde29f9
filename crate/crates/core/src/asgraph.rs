//! The AS peering graph: PFP generation, text I/O and shortest AS paths.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type AsId = usize;

/// Undirected simple graph over ASes `0..node_count`. Adjacency lists are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsGraph {
    adj: Vec<Vec<AsId>>,
    edge_count: usize,
}

impl AsGraph {
    pub fn new(node_count: usize) -> Self {
        AsGraph {
            adj: vec![Vec::new(); node_count],
            edge_count: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn add_edge(&mut self, u: AsId, v: AsId) -> Result<()> {
        let n = self.node_count();
        if u >= n || v >= n {
            return Err(Error::param(format!("edge ({u}, {v}) out of range for {n} nodes")));
        }
        if u == v {
            return Err(Error::param(format!("self-loop on {u}")));
        }
        match self.adj[u].binary_search(&v) {
            Ok(_) => Err(Error::param(format!("duplicate edge ({u}, {v})"))),
            Err(pos) => {
                self.adj[u].insert(pos, v);
                let pos = self.adj[v].binary_search(&u).unwrap_err();
                self.adj[v].insert(pos, u);
                self.edge_count += 1;
                Ok(())
            }
        }
    }

    pub fn has_edge(&self, u: AsId, v: AsId) -> bool {
        self.adj
            .get(u)
            .is_some_and(|nbrs| nbrs.binary_search(&v).is_ok())
    }

    pub fn neighbors(&self, v: AsId) -> &[AsId] {
        &self.adj[v]
    }

    pub fn degree(&self, v: AsId) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (AsId, AsId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, nbrs)| {
            nbrs.iter().copied().filter(move |&v| v > u).map(move |v| (u, v))
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count() == 0 {
            return true;
        }
        self.bfs(0).dist.iter().all(|d| d.is_some())
    }

    /// Breadth-first tree from `source`. Neighbors are expanded in increasing id order,
    /// so each node's parent is the smallest-id node in the previous layer that reaches it
    /// first.
    pub fn bfs(&self, source: AsId) -> BfsTree {
        let n = self.node_count();
        let mut dist = vec![None; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        BfsTree {
            source,
            dist,
            parent,
        }
    }

    /// Minimal-hop AS path from `from` to `to`, both ends included.
    pub fn shortest_as_path(&self, from: AsId, to: AsId) -> Result<Vec<AsId>> {
        let n = self.node_count();
        if from >= n || to >= n {
            return Err(Error::param(format!("AS id out of range for {n} nodes")));
        }
        self.bfs(from).path_to(to)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut graph: Option<AsGraph> = None;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let id = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(lineno, format!("bad id `{s}`")))
            };
            match (toks[0], graph.as_mut()) {
                ("nodes", None) if toks.len() == 2 => graph = Some(AsGraph::new(id(toks[1])?)),
                ("nodes", Some(_)) => return Err(Error::format(lineno, "repeated `nodes` line")),
                ("edge", Some(g)) if toks.len() == 3 => {
                    let (u, v) = (id(toks[1])?, id(toks[2])?);
                    g.add_edge(u, v).map_err(|e| match e {
                        Error::Parameter(msg) => Error::format(lineno, msg),
                        other => other,
                    })?;
                }
                ("edge", None) => {
                    return Err(Error::format(lineno, "`edge` before `nodes` line"))
                }
                _ => return Err(Error::format(lineno, format!("malformed line `{line}`"))),
            }
        }
        graph.ok_or_else(|| Error::format(0, "missing `nodes` line"))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nodes {}", self.node_count())?;
        for (u, v) in self.edges() {
            writeln!(w, "edge {u} {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BfsTree {
    source: AsId,
    dist: Vec<Option<usize>>,
    parent: Vec<Option<AsId>>,
}

impl BfsTree {
    pub fn source(&self) -> AsId {
        self.source
    }

    pub fn hops(&self, to: AsId) -> Option<usize> {
        self.dist.get(to).copied().flatten()
    }

    pub fn path_to(&self, to: AsId) -> Result<Vec<AsId>> {
        if self.hops(to).is_none() {
            return Err(Error::NoPath {
                from: self.source,
                to,
            });
        }
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }
}

/// Parameters of the positive-feedback-preference generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfpParams {
    pub node_count: usize,
    /// Probability of one new node on one host plus one host-peer link.
    pub p: f64,
    /// Probability of one new node on one host plus two host-peer links.
    pub q: f64,
    /// Exponent of the nonlinear preference `k^(1 + delta * log10 k)`.
    pub delta: f64,
    /// Size of the initial ring (3 gives a triangle).
    pub seed_nodes: usize,
}

impl Default for PfpParams {
    fn default() -> Self {
        PfpParams {
            node_count: 2000,
            p: 0.40,
            q: 0.11,
            delta: 0.048,
            seed_nodes: 3,
        }
    }
}

impl PfpParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !prob(self.p) || !prob(self.q) || self.p + self.q > 1.0 {
            return Err(Error::param(format!(
                "need 0 <= p, q and p + q <= 1 (p = {}, q = {})",
                self.p, self.q
            )));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::param(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.seed_nodes < 3 {
            return Err(Error::param("seed graph needs at least 3 nodes"));
        }
        if self.node_count < self.seed_nodes {
            return Err(Error::param(format!(
                "node_count {} smaller than seed graph {}",
                self.node_count, self.seed_nodes
            )));
        }
        Ok(())
    }
}

/// Nonlinear preference weight of a node with degree `k`.
pub fn pfp_weight(k: usize, delta: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    k.powf(1.0 + delta * k.log10())
}

/// Fenwick tree over non-negative weights, supporting point updates and
/// sampling proportional to weight.
#[derive(Debug, Clone)]
struct WeightTree {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightTree {
    fn new(len: usize) -> Self {
        WeightTree {
            tree: vec![0.0; len + 1],
            weights: vec![0.0; len],
        }
    }

    fn set(&mut self, idx: usize, w: f64) {
        let delta = w - self.weights[idx];
        self.weights[idx] = w;
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut i = self.weights.len();
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Index whose cumulative range contains `target` (0 <= target < total).
    fn find(&self, mut target: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        // Guard against float drift landing on a zero-weight slot or past the end.
        let mut idx = pos.min(n - 1);
        while self.weights[idx] == 0.0 && idx > 0 {
            idx -= 1;
        }
        idx
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.total();
        self.find(rng.gen::<f64>() * total)
    }
}

struct PfpState {
    graph: AsGraph,
    tree: WeightTree,
    delta: f64,
}

const MAX_REDRAWS: usize = 64;

impl PfpState {
    fn refresh(&mut self, v: AsId) {
        let w = pfp_weight(self.graph.degree(v), self.delta);
        self.tree.set(v, w);
    }

    fn link(&mut self, u: AsId, v: AsId) {
        self.graph.add_edge(u, v).expect("generator only adds fresh edges");
        self.refresh(u);
        self.refresh(v);
    }

    fn pick_host<R: Rng>(&self, rng: &mut R) -> AsId {
        self.tree.sample(rng)
    }

    /// Preferentially chosen node that is neither `host` nor already linked to it.
    fn pick_peer<R: Rng>(&self, rng: &mut R, host: AsId) -> Option<AsId> {
        (0..MAX_REDRAWS)
            .map(|_| self.tree.sample(rng))
            .find(|&c| c != host && !self.graph.has_edge(host, c))
    }

    fn pick_second_host<R: Rng>(&self, rng: &mut R, first: AsId) -> Option<AsId> {
        (0..MAX_REDRAWS)
            .map(|_| self.tree.sample(rng))
            .find(|&c| c != first)
    }
}

/// Grows a PFP topology from a ring of `seed_nodes` nodes. Every step adds exactly
/// one new node, so the result is connected. Peer draws that would duplicate an
/// edge are redrawn a bounded number of times and then skipped.
pub fn generate_pfp(params: &PfpParams, seed: u64) -> Result<AsGraph> {
    params.validate()?;
    let n = params.node_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = PfpState {
        graph: AsGraph::new(n),
        tree: WeightTree::new(n),
        delta: params.delta,
    };
    let m = params.seed_nodes;
    for i in 0..m {
        st.link(i, (i + 1) % m);
    }

    for new in m..n {
        let r: f64 = rng.gen();
        let host = st.pick_host(&mut rng);
        if r < params.p {
            let peer = st.pick_peer(&mut rng, host);
            st.link(new, host);
            if let Some(peer) = peer {
                st.link(host, peer);
            }
        } else if r < params.p + params.q {
            let first = st.pick_peer(&mut rng, host);
            if let Some(first) = first {
                st.link(host, first);
            }
            let second = st.pick_peer(&mut rng, host);
            st.link(new, host);
            if let Some(second) = second {
                st.link(host, second);
            }
        } else {
            let second_host = st.pick_second_host(&mut rng, host);
            let peer = st.pick_peer(&mut rng, host);
            st.link(new, host);
            if let Some(h2) = second_host {
                st.link(new, h2);
            }
            if let Some(peer) = peer {
                if !st.graph.has_edge(host, peer) {
                    st.link(host, peer);
                }
            }
        }
    }
    Ok(st.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring(n: usize) -> AsGraph {
        let mut g = AsGraph::new(n);
        for i in 0..n {
            g.add_edge(i, (i + 1) % n).unwrap();
        }
        g
    }

    #[test]
    fn three_nodes_is_seed_triangle() {
        let g = generate_pfp(
            &PfpParams {
                node_count: 3,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn rejects_bad_probabilities() {
        for (p, q) in [(0.7, 0.5), (-0.1, 0.2), (0.2, f64::NAN)] {
            let params = PfpParams {
                p,
                q,
                ..Default::default()
            };
            assert!(matches!(generate_pfp(&params, 1), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn pfp_is_deterministic_and_simple() {
        let params = PfpParams::default();
        let a = generate_pfp(&params, 42).unwrap();
        let b = generate_pfp(&params, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert_eq!(a.degrees().iter().sum::<usize>(), 2 * a.edge_count());
        let c = generate_pfp(&params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weight_tree_samples_only_positive() {
        let mut t = WeightTree::new(5);
        t.set(1, 2.0);
        t.set(3, 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hits = [0usize; 5];
        for _ in 0..20_000 {
            hits[t.sample(&mut rng)] += 1;
        }
        assert_eq!(hits[0] + hits[2] + hits[4], 0);
        let frac = hits[3] as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    #[test]
    fn preference_weight() {
        assert_eq!(pfp_weight(1, 0.048), 1.0);
        let w = pfp_weight(100, 0.048);
        assert!((w - 100f64.powf(1.096)).abs() < 1e-9);
    }

    #[test]
    fn paths() {
        let g = ring(5);
        assert_eq!(g.shortest_as_path(3, 3).unwrap(), vec![3]);
        assert_eq!(g.shortest_as_path(0, 2).unwrap(), vec![0, 1, 2]);
        assert_eq!(g.shortest_as_path(0, 3).unwrap(), vec![0, 4, 3]);

        let mut tri = AsGraph::new(3);
        tri.add_edge(0, 1).unwrap();
        tri.add_edge(1, 2).unwrap();
        tri.add_edge(0, 2).unwrap();
        assert_eq!(tri.shortest_as_path(0, 2).unwrap(), vec![0, 2]);

        // 4-cycle: both 0-1-2 and 0-3-2 have two hops; the smaller id wins.
        let sq = ring(4);
        assert_eq!(sq.shortest_as_path(0, 2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn unreachable() {
        let mut g = AsGraph::new(4);
        g.add_edge(0, 1).unwrap();
        g.add_edge(2, 3).unwrap();
        assert!(!g.is_connected());
        assert_eq!(
            g.shortest_as_path(0, 3),
            Err(Error::NoPath { from: 0, to: 3 })
        );
    }

    #[test]
    fn read_k2_and_errors() {
        let g = AsGraph::read("nodes 2\nedge 0 1\n".as_bytes()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 0));

        let cases = [
            ("nodes 2\nedge 0 0\n", 2),
            ("nodes 2\nedge 0 1\nedge 1 0\n", 3),
            ("nodes 2\n\nedge 0 5\n", 3),
            ("nodes 2\nvertex 1\n", 2),
            ("edge 0 1\n", 1),
            ("nodes x\n", 1),
        ];
        for (text, line) in cases {
            match AsGraph::read(text.as_bytes()) {
                Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn pfp_round_trip() {
        let g = generate_pfp(&PfpParams::default(), 7).unwrap();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        assert_eq!(AsGraph::read(buf.as_slice()).unwrap(), g);
    }

    /// Shortest hop count by exhaustive simple-path enumeration.
    fn brute_hops(g: &AsGraph, from: AsId, to: AsId) -> Option<usize> {
        fn go(g: &AsGraph, cur: AsId, to: AsId, seen: &mut Vec<bool>, len: usize, best: &mut Option<usize>) {
            if cur == to {
                *best = Some(best.map_or(len, |b| b.min(len)));
                return;
            }
            if best.is_some_and(|b| len >= b) {
                return;
            }
            for &n in g.neighbors(cur) {
                if !seen[n] {
                    seen[n] = true;
                    go(g, n, to, seen, len + 1, best);
                    seen[n] = false;
                }
            }
        }
        let mut seen = vec![false; g.node_count()];
        seen[from] = true;
        let mut best = None;
        go(g, from, to, &mut seen, 0, &mut best);
        best
    }

    proptest! {
        #[test]
        fn bfs_matches_enumeration(n in 2usize..12, edges in proptest::collection::vec((0usize..12, 0usize..12), 0..30)) {
            let mut g = AsGraph::new(n);
            for (u, v) in edges {
                let (u, v) = (u % n, v % n);
                let _ = g.add_edge(u, v);
            }
            for a in 0..n {
                for b in 0..n {
                    let expected = brute_hops(&g, a, b);
                    match g.shortest_as_path(a, b) {
                        Ok(path) => {
                            prop_assert_eq!(Some(path.len() - 1), expected);
                            prop_assert_eq!(path[0], a);
                            prop_assert_eq!(*path.last().unwrap(), b);
                            for w in path.windows(2) {
                                prop_assert!(g.has_edge(w[0], w[1]));
                            }
                        }
                        Err(_) => prop_assert_eq!(expected, None),
                    }
                }
            }
        }
    }
}
