//! Port-numbered directed multigraphs.
//!
//! Nodes are `0..n` internally (the text format uses `1..=n`); ports are
//! always `1..=d`. A [`PortDigraph`] is structurally valid on construction:
//! each node's in-ports and out-ports form bijections onto `1..=d_in` and
//! `1..=d_out`. Strong connectivity is a separate check because the
//! enumerator and the tests need to talk about graphs that fail it.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or enumerating graphs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node {node} out of range for a graph on {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {node}: {kind} ports are not a bijection onto 1..={degree}")]
    PortsNotBijective {
        node: usize,
        kind: PortKind,
        degree: usize,
    },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("graph must have at least one node")]
    Empty,
    #[error("enumeration of {requested} items exceeds the cap of {cap}")]
    Capacity { requested: u128, cap: u128 },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("permutation is not an automorphism preserving port labels")]
    NotAutomorphism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortKind {
    In,
    Out,
}

impl fmt::Display for PortKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PortKind::In => "in",
            PortKind::Out => "out",
        })
    }
}

/// One directed link with its `(out-port of src, in-port of dst)` label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub out_port: usize,
    pub in_port: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDigraph {
    n: usize,
    edges: Vec<Edge>,
    // out_adj[v][p - 1] is the index of the edge leaving v on out-port p.
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl PortDigraph {
    /// Builds a graph from fully labelled edges, validating the port maps.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut out_adj: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
        let mut in_adj: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for e in &edges {
            for node in [e.src, e.dst] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            out_deg[e.src] += 1;
            in_deg[e.dst] += 1;
        }
        for v in 0..n {
            out_adj[v] = vec![None; out_deg[v]];
            in_adj[v] = vec![None; in_deg[v]];
        }
        for (idx, e) in edges.iter().enumerate() {
            let slot = e
                .out_port
                .checked_sub(1)
                .and_then(|p| out_adj[e.src].get_mut(p))
                .filter(|s| s.is_none())
                .ok_or(GraphError::PortsNotBijective {
                    node: e.src,
                    kind: PortKind::Out,
                    degree: out_deg[e.src],
                })?;
            *slot = Some(idx);
            let slot = e
                .in_port
                .checked_sub(1)
                .and_then(|p| in_adj[e.dst].get_mut(p))
                .filter(|s| s.is_none())
                .ok_or(GraphError::PortsNotBijective {
                    node: e.dst,
                    kind: PortKind::In,
                    degree: in_deg[e.dst],
                })?;
            *slot = Some(idx);
        }
        // Every slot is filled: counts match and no slot was used twice.
        let unwrap_all = |adj: Vec<Vec<Option<usize>>>| -> Vec<Vec<usize>> {
            adj.into_iter()
                .map(|ports| ports.into_iter().map(|p| p.unwrap_or(usize::MAX)).collect())
                .collect()
        };
        Ok(Self {
            n,
            edges,
            out_adj: unwrap_all(out_adj),
            in_adj: unwrap_all(in_adj),
        })
    }

    /// Builds a graph from `(src, dst)` pairs using the canonical numbering:
    /// each node numbers its incident edges by `(neighbour, edge index)`.
    pub fn with_canonical_ports(n: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for &(s, d) in pairs {
            for node in [s, d] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
        }
        let mut edges: Vec<Edge> = pairs
            .iter()
            .map(|&(src, dst)| Edge {
                src,
                dst,
                out_port: 0,
                in_port: 0,
            })
            .collect();
        for v in 0..n {
            let mut outs: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].src == v).collect();
            outs.sort_by_key(|&i| (edges[i].dst, i));
            for (p, &i) in outs.iter().enumerate() {
                edges[i].out_port = p + 1;
            }
            let mut ins: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].dst == v).collect();
            ins.sort_by_key(|&i| (edges[i].src, i));
            for (p, &i) in ins.iter().enumerate() {
                edges[i].in_port = p + 1;
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn d_in(&self, v: usize) -> usize {
        self.in_adj[v].len()
    }

    pub fn d_out(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    /// Edge leaving `v` through out-port `port` (1-based).
    pub fn out_edge(&self, v: usize, port: usize) -> &Edge {
        &self.edges[self.out_adj[v][port - 1]]
    }

    /// Edge entering `v` through in-port `port` (1-based).
    pub fn in_edge(&self, v: usize, port: usize) -> &Edge {
        &self.edges[self.in_adj[v][port - 1]]
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            let next: Vec<usize> = if forward {
                self.out_adj[v].iter().map(|&e| self.edges[e].dst).collect()
            } else {
                self.in_adj[v].iter().map(|&e| self.edges[e].src).collect()
            };
            for w in next {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.reach(0, true).iter().all(Option::is_some)
            && self.reach(0, false).iter().all(Option::is_some)
    }

    pub fn ensure_strongly_connected(&self) -> Result<(), GraphError> {
        if self.is_strongly_connected() {
            Ok(())
        } else {
            Err(GraphError::NotStronglyConnected)
        }
    }

    /// Longest shortest directed path over all ordered node pairs.
    pub fn diameter(&self) -> Result<usize, GraphError> {
        let mut best = 0;
        for v in 0..self.n {
            for d in self.reach(v, true) {
                best = best.max(d.ok_or(GraphError::NotStronglyConnected)?);
            }
        }
        Ok(best)
    }

    /// True if `perm` (node `v` maps to `perm[v]`) preserves edges and labels.
    pub fn is_automorphism(&self, perm: &[usize]) -> bool {
        if perm.len() != self.n {
            return false;
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        let mut ours = self.edges.clone();
        let mut mapped: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..*e
            })
            .collect();
        ours.sort();
        mapped.sort();
        ours == mapped
    }

    /// Product of `d_in! * d_out!` over all nodes.
    pub fn numbering_count(&self) -> u128 {
        (0..self.n)
            .map(|v| factorial(self.d_in(v)).saturating_mul(factorial(self.d_out(v))))
            .fold(1u128, |acc, x| acc.saturating_mul(x))
    }

    /// The `index`-th port numbering in the order used by
    /// [`enumerate_port_numberings`]. Index 0 is the current numbering.
    pub fn numbering(&self, index: u128) -> PortDigraph {
        let mut rest = index;
        let mut edges = self.edges.clone();
        for v in 0..self.n {
            for kind in [PortKind::Out, PortKind::In] {
                let adj = match kind {
                    PortKind::Out => &self.out_adj[v],
                    PortKind::In => &self.in_adj[v],
                };
                let radix = factorial(adj.len());
                let perm = nth_permutation(adj.len(), rest % radix);
                rest /= radix;
                for (slot, &e) in adj.iter().enumerate() {
                    let port = perm[slot] + 1;
                    match kind {
                        PortKind::Out => edges[e].out_port = port,
                        PortKind::In => edges[e].in_port = port,
                    }
                }
            }
        }
        PortDigraph::new(self.n, edges).expect("permuting ports keeps them bijective")
    }
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

// Lexicographic permutation of 0..k with the given rank.
fn nth_permutation(k: usize, mut rank: u128) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..k).collect();
    let mut out = Vec::with_capacity(k);
    for i in (0..k).rev() {
        let f = factorial(i);
        let pick = (rank / f) as usize;
        rank %= f;
        out.push(pool.remove(pick));
    }
    out
}

/// Default ceiling on candidate graphs or numberings visited by an enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 22;

/// Options for [`enumerate_graphs_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    /// Cap on parallel edges from one node to another distinct node.
    pub max_multiplicity: usize,
    /// Cap on self-loops per node (0 disables them).
    pub max_self_loops: usize,
    /// Cap on the number of candidate multigraphs visited.
    pub cap: u128,
}

impl EnumerationOptions {
    pub fn new(max_multiplicity: usize) -> Self {
        Self {
            max_multiplicity,
            max_self_loops: 0,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Every strongly connected digraph on `n` nodes with at most
/// `max_multiplicity` parallel edges per ordered pair and no self-loops,
/// each with its canonical port numbering. Deterministic order.
pub fn enumerate_graphs(
    n: usize,
    max_multiplicity: usize,
) -> Result<GraphEnumerator, GraphError> {
    enumerate_graphs_with(n, EnumerationOptions::new(max_multiplicity))
}

pub fn enumerate_graphs_with(
    n: usize,
    options: EnumerationOptions,
) -> Result<GraphEnumerator, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d {
                slots.push((s, d, options.max_multiplicity));
            } else if options.max_self_loops > 0 {
                slots.push((s, d, options.max_self_loops));
            }
        }
    }
    let requested = slots
        .iter()
        .fold(1u128, |acc, &(_, _, cap)| acc.saturating_mul(cap as u128 + 1));
    if requested > options.cap {
        return Err(GraphError::Capacity {
            requested,
            cap: options.cap,
        });
    }
    Ok(GraphEnumerator {
        n,
        counter: vec![0; slots.len()],
        slots,
        done: false,
    })
}

/// Iterator returned by [`enumerate_graphs`].
pub struct GraphEnumerator {
    n: usize,
    slots: Vec<(usize, usize, usize)>,
    counter: Vec<usize>,
    done: bool,
}

impl GraphEnumerator {
    fn advance(&mut self) {
        for (i, c) in self.counter.iter_mut().enumerate() {
            if *c < self.slots[i].2 {
                *c += 1;
                return;
            }
            *c = 0;
        }
        self.done = true;
    }
}

impl Iterator for GraphEnumerator {
    type Item = PortDigraph;

    fn next(&mut self) -> Option<PortDigraph> {
        while !self.done {
            let mut pairs = Vec::new();
            for (i, &(s, d, _)) in self.slots.iter().enumerate() {
                for _ in 0..self.counter[i] {
                    pairs.push((s, d));
                }
            }
            self.advance();
            if pairs.is_empty() {
                continue;
            }
            let g = PortDigraph::with_canonical_ports(self.n, &pairs)
                .expect("enumerated pairs are in range");
            if g.is_strongly_connected() {
                return Some(g);
            }
        }
        None
    }
}

/// Every distinct port numbering of `g`, starting with `g`'s own.
/// Fails when the count `∏ d_in!·d_out!` exceeds `cap`.
pub fn enumerate_port_numberings(
    g: &PortDigraph,
    cap: u128,
) -> Result<impl Iterator<Item = PortDigraph> + '_, GraphError> {
    let requested = g.numbering_count();
    if requested > cap {
        return Err(GraphError::Capacity { requested, cap });
    }
    Ok((0..requested).map(move |i| g.numbering(i)))
}

/// One graph per isomorphism class of [`enumerate_graphs`]'s output: the
/// member whose multiplicity matrix (row-major) is lexicographically least
/// over all relabelings of the nodes.
pub fn enumerate_isomorphism_classes(
    n: usize,
    max_multiplicity: usize,
) -> Result<impl Iterator<Item = PortDigraph>, GraphError> {
    let perms = permutations(n);
    Ok(enumerate_graphs(n, max_multiplicity)?.filter(move |g| is_least_relabeling(g, &perms)))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // Next permutation in lexicographic order.
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

fn is_least_relabeling(g: &PortDigraph, perms: &[Vec<usize>]) -> bool {
    let n = g.n();
    let mut counts = vec![0u16; n * n];
    for e in g.edges() {
        counts[e.src * n + e.dst] += 1;
    }
    let mut relabeled = vec![0u16; n * n];
    perms.iter().all(|p| {
        for s in 0..n {
            for d in 0..n {
                relabeled[p[s] * n + p[d]] = counts[s * n + d];
            }
        }
        relabeled >= counts
    })
}

/// `count` numberings drawn uniformly (with replacement) from all of `g`'s.
pub fn sample_port_numberings<R: Rng>(
    g: &PortDigraph,
    count: usize,
    rng: &mut R,
) -> Vec<(u128, PortDigraph)> {
    let total = g.numbering_count();
    (0..count)
        .map(|_| {
            let idx = rng.gen_range(0..total);
            (idx, g.numbering(idx))
        })
        .collect()
}

/// Directed `n`-cycle `v -> v+1`, every port labelled 1.
pub fn ring(n: usize) -> PortDigraph {
    let edges = (0..n)
        .map(|v| Edge {
            src: v,
            dst: (v + 1) % n,
            out_port: 1,
            in_port: 1,
        })
        .collect();
    PortDigraph::new(n, edges).expect("ring ports are trivially bijective")
}

/// Complete digraph on `n` nodes with canonical ports.
pub fn complete(n: usize) -> PortDigraph {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
        .collect();
    PortDigraph::with_canonical_ports(n, &pairs).expect("complete graph pairs are in range")
}

// Four parties on a bidirected square: 0 upper-left, 1 upper-right,
// 2 lower-right, 3 lower-left. Clockwise edges v -> v+1, counter-clockwise
// edges v+1 -> v.
fn square(ll_clockwise_port: usize) -> PortDigraph {
    let mut edges = Vec::new();
    for v in 0..4 {
        let cw = (v + 1) % 4;
        let ccw = (v + 3) % 4;
        let (cw_port, ccw_port) = if v == 3 {
            (ll_clockwise_port, 3 - ll_clockwise_port)
        } else {
            (1, 2)
        };
        edges.push(Edge {
            src: v,
            dst: cw,
            out_port: cw_port,
            in_port: 1,
        });
        edges.push(Edge {
            src: v,
            dst: ccw,
            out_port: ccw_port,
            in_port: 2,
        });
    }
    PortDigraph::new(4, edges).expect("square ports are bijective")
}

/// Four-node network on which the edge-label game has a unique winner
/// (party 0, one point).
pub fn example1a() -> PortDigraph {
    square(2)
}

/// Same underlying graph as [`example1a`] with a rotation-symmetric
/// numbering: every party scores zero.
pub fn example1b() -> PortDigraph {
    square(1)
}

/// Looks up `example1a`, `example1b`, `ring(n)` or `complete(n)`.
pub fn fixture(name: &str) -> Result<PortDigraph, GraphError> {
    let name = name.trim();
    let unknown = || GraphError::UnknownFixture(name.into());
    match name {
        "example1a" => return Ok(example1a()),
        "example1b" => return Ok(example1b()),
        _ => {}
    }
    let (kind, rest) = name.split_once('(').ok_or_else(unknown)?;
    let arg: usize = rest
        .strip_suffix(')')
        .and_then(|s| s.trim().parse().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(unknown)?;
    match kind {
        "ring" => Ok(ring(arg)),
        "complete" if arg >= 2 => Ok(complete(arg)),
        _ => Err(unknown()),
    }
}

/// Score of each party in the edge-label game: +1 for every incoming edge
/// `(i, j)` with `i > j`, -1 when `i < j`.
pub fn label_game_scores(g: &PortDigraph) -> Vec<i64> {
    let mut scores = vec![0i64; g.n()];
    for e in g.edges() {
        scores[e.dst] += match e.out_port.cmp(&e.in_port) {
            core::cmp::Ordering::Greater => 1,
            core::cmp::Ordering::Equal => 0,
            core::cmp::Ordering::Less => -1,
        };
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> PortDigraph {
        PortDigraph::with_canonical_ports(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn connectivity_examples() {
        assert!(ring(3).is_strongly_connected());
        assert!(!path3().is_strongly_connected());
        let loop1 = PortDigraph::with_canonical_ports(1, &[(0, 0)]).unwrap();
        assert!(loop1.is_strongly_connected());
    }

    #[test]
    fn malformed_ports_rejected() {
        let bad = PortDigraph::new(
            2,
            vec![
                Edge { src: 0, dst: 1, out_port: 1, in_port: 1 },
                Edge { src: 1, dst: 0, out_port: 2, in_port: 1 },
            ],
        );
        assert!(matches!(bad, Err(GraphError::PortsNotBijective { node: 1, .. })));
        let dup = PortDigraph::new(
            2,
            vec![
                Edge { src: 0, dst: 1, out_port: 1, in_port: 1 },
                Edge { src: 0, dst: 1, out_port: 1, in_port: 2 },
            ],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn diameters() {
        for n in 1..7 {
            assert_eq!(ring(n).diameter().unwrap(), n - 1);
        }
        assert_eq!(complete(3).diameter().unwrap(), 1);
        assert_eq!(path3().diameter(), Err(GraphError::NotStronglyConnected));
    }

    fn bfs_oracle_diameter(g: &PortDigraph) -> usize {
        // Floyd–Warshall as an independent route.
        let n = g.n();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for v in 0..n {
            d[v][v] = 0;
        }
        for e in g.edges() {
            if e.src != e.dst {
                d[e.src][e.dst] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d.iter().flatten().copied().max().unwrap()
    }

    #[test]
    fn example1_diameter_matches_oracle() {
        let oracle = bfs_oracle_diameter(&example1a());
        assert_eq!(oracle, 2);
        assert_eq!(example1a().diameter().unwrap(), oracle);
        assert_eq!(example1b().diameter().unwrap(), oracle);
    }

    fn brute_force_sc_count(n: usize) -> usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
            .collect();
        let mut count = 0;
        for mask in 0u32..(1 << pairs.len()) {
            // Warshall closure on an adjacency bitmatrix.
            let mut reach = vec![vec![false; n]; n];
            for (i, &(s, d)) in pairs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    reach[s][d] = true;
                }
            }
            for v in 0..n {
                reach[v][v] = true;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if reach[i][k] && reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
            if reach.iter().all(|row| row.iter().all(|&b| b)) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_graphs(2, 1).unwrap().count(), 1);
        let oracle = brute_force_sc_count(3);
        assert_eq!(oracle, 18);
        assert_eq!(enumerate_graphs(3, 1).unwrap().count(), oracle);
        assert_eq!(enumerate_graphs(4, 1).unwrap().count(), brute_force_sc_count(4));
        assert_eq!(enumerate_graphs(1, 1).unwrap().count(), 0);
        let mut with_loops = EnumerationOptions::new(1);
        with_loops.max_self_loops = 1;
        assert_eq!(enumerate_graphs_with(1, with_loops).unwrap().count(), 1);
        assert!(matches!(
            enumerate_graphs(7, 1),
            Err(GraphError::Capacity { .. })
        ));
    }

    #[test]
    fn isomorphism_class_counts() {
        // Unlabeled strongly connected digraphs: 1, 5, 83 for n = 2, 3, 4.
        for (n, want) in [(2, 1), (3, 5), (4, 83)] {
            assert_eq!(enumerate_isomorphism_classes(n, 1).unwrap().count(), want);
        }
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn enumerated_graphs_are_valid_and_distinct() {
        let all: Vec<_> = enumerate_graphs(3, 2).unwrap().collect();
        for g in &all {
            assert!(g.is_strongly_connected());
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn numbering_counts() {
        assert_eq!(enumerate_port_numberings(&ring(3), 100).unwrap().count(), 1);
        let g = PortDigraph::with_canonical_ports(2, &[(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(g.numbering_count(), 4);
        let all: Vec<_> = enumerate_port_numberings(&g, 100).unwrap().collect();
        assert_eq!(all.len(), 4);
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(all[0], g);
        assert!(enumerate_port_numberings(&complete(4), 10).is_err());
    }

    #[test]
    fn example1_numberings_contain_both_fixtures() {
        let a = example1a();
        let b = example1b();
        let all: Vec<_> = enumerate_port_numberings(&a, 1 << 20).unwrap().collect();
        assert_eq!(all.len(), 256);
        assert!(all.contains(&a));
        assert!(all.contains(&b));
    }

    #[test]
    fn label_game_on_fixtures() {
        assert_eq!(label_game_scores(&example1b()), vec![0, 0, 0, 0]);
        let a = label_game_scores(&example1a());
        assert_eq!(a[0], 1);
        assert!(a[1..].iter().all(|&s| s == 0 || s == -1));
    }

    #[test]
    fn fixture_lookup() {
        assert_eq!(fixture("ring(4)").unwrap(), ring(4));
        for e in fixture("ring(4)").unwrap().edges() {
            assert_eq!((e.out_port, e.in_port), (1, 1));
        }
        assert_eq!(fixture("example1b").unwrap(), example1b());
        assert!(fixture("torus(3)").is_err());
        assert!(fixture("ring(x)").is_err());
    }

    #[test]
    fn automorphisms() {
        assert!(ring(4).is_automorphism(&[1, 2, 3, 0]));
        assert!(example1b().is_automorphism(&[1, 2, 3, 0]));
        assert!(!example1a().is_automorphism(&[1, 2, 3, 0]));
        assert!(!ring(3).is_automorphism(&[1, 0, 2]));
    }
}
