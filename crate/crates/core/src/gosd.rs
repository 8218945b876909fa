// SPDX-License-Identifier: MIT OR Apache-2.0

//! Graph of strong dependence, connected-subgraph enumeration and the expanded graph.

use rayon::prelude::*;

use crate::sparsify::SparsifiedPair;

/// Undirected graph over `0..p` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Gosd {
    adj: Vec<Vec<usize>>,
    delta: f64,
}

impl Gosd {
    /// Graph from an edge list; duplicate edges and self-loops are dropped.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); p];
        for &(a, b) in edges {
            assert!(a < p && b < p, "edge ({a}, {b}) out of range for p = {p}");
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Self { adj, delta: 0.0 }
    }

    pub fn from_adjacency(mut adj: Vec<Vec<usize>>, delta: f64) -> Self {
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Self { adj, delta }
    }

    pub fn p(&self) -> usize {
        self.adj.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, l) in self.adj.iter().enumerate() {
            for &j in l {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `hist[k]` is the number of nodes with degree `k`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.max_degree() + 1];
        for l in &self.adj {
            hist[l.len()] += 1;
        }
        hist
    }
}

/// GOSD of `sp` at threshold `delta`.
pub fn build_gosd(sp: &SparsifiedPair, delta: f64) -> Gosd {
    if delta == sp.delta() {
        let adj = (0..sp.p()).map(|i| sp.neighbors(i).to_vec()).collect();
        return Gosd::from_adjacency(adj, delta);
    }
    if delta > sp.delta() {
        let adj = (0..sp.p())
            .into_par_iter()
            .map(|i| {
                sp.neighbors(i)
                    .iter()
                    .copied()
                    .filter(|&j| sp.b(i, j).abs() > delta || sp.b(j, i).abs() > delta || sp.h(i, j).abs() > delta)
                    .collect()
            })
            .collect();
        return Gosd::from_adjacency(adj, delta);
    }
    Gosd::from_adjacency(sp.compute_neighbors(delta), delta)
}

/// Connected node sets of size at most `m`, sorted by size and then lexicographically.
pub type SubgraphList = Vec<Vec<usize>>;

/// All connected node sets of size `<= m` (ESU enumeration, each set produced once).
pub fn enumerate_connected_subgraphs(g: &Gosd, m: usize) -> SubgraphList {
    assert!(m >= 1, "m must be positive");
    let mut all: Vec<Vec<usize>> = (0..g.p())
        .into_par_iter()
        .flat_map_iter(|v| {
            let mut out = Vec::new();
            let mut sub = vec![v];
            let ext: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| u > v).collect();
            out.push(vec![v]);
            extend(g, m, v, &mut sub, ext, &mut out);
            out
        })
        .collect();
    for s in all.iter_mut() {
        s.sort_unstable();
    }
    all.par_sort_unstable_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all
}

fn extend(g: &Gosd, m: usize, v: usize, sub: &mut Vec<usize>, mut ext: Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if sub.len() == m {
        return;
    }
    while let Some(w) = ext.pop() {
        let mut next = ext.clone();
        for &u in g.neighbors(w) {
            if u > v && !sub.contains(&u) && !next.contains(&u) && u != w && !sub.iter().any(|&s| g.has_edge(s, u)) {
                next.push(u);
            }
        }
        sub.push(w);
        out.push(sub.clone());
        extend(g, m, v, sub, next, out);
        sub.pop();
    }
}

/// Number of connected sets of each size `1..=m`.
pub fn subgraph_counts(g: &Gosd, m: usize) -> Vec<usize> {
    let mut counts = vec![0; m + 1];
    for s in enumerate_connected_subgraphs(g, m) {
        counts[s.len()] += 1;
    }
    counts
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Groups of positions, each sorted, ordered by their smallest member.
    fn groups(mut self, n: usize) -> Vec<Vec<usize>> {
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

fn normalize(nodes: &[usize]) -> Vec<usize> {
    let mut v = nodes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Connected components of the subgraph of `g` induced by `nodes`,
/// each sorted and listed in order of their smallest node.
pub fn components_of_subset(g: &Gosd, nodes: &[usize]) -> Vec<Vec<usize>> {
    let nodes = normalize(nodes);
    let mut uf = UnionFind::new(nodes.len());
    for (a, &i) in nodes.iter().enumerate() {
        for &j in g.neighbors(i) {
            if j > i {
                if let Ok(b) = nodes.binary_search(&j) {
                    uf.union(a, b);
                }
            }
        }
    }
    uf.groups(nodes.len()).into_iter().map(|grp| grp.into_iter().map(|k| nodes[k]).collect()).collect()
}

/// Expanded graph: `i ~ j` when some node within `radius` of `i` is adjacent in the base
/// graph to some node within `radius` of `j`. Kept implicit because it is dense-ish
/// for large radii.
#[derive(Debug, Clone)]
pub struct ExpandedGraph<'a> {
    base: &'a Gosd,
    radius: usize,
}

impl<'a> ExpandedGraph<'a> {
    pub fn new(base: &'a Gosd, radius: usize) -> Self {
        Self { base, radius }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn base(&self) -> &Gosd {
        self.base
    }

    /// Sorted, merged closed intervals of nodes reachable from `i` (may include `i`).
    pub fn reach(&self, i: usize) -> Vec<(usize, usize)> {
        let p = self.base.p();
        let l = self.radius;
        let lo = i.saturating_sub(l);
        let hi = (i + l).min(p - 1);
        let mut iv: Vec<(usize, usize)> = Vec::new();
        for k in lo..=hi {
            for &kk in self.base.neighbors(k) {
                iv.push((kk.saturating_sub(l), (kk + l).min(p - 1)));
            }
        }
        iv.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(iv.len());
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (a, b) in self.reach(i) {
            for j in a..=b {
                if j != i {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Components of the subgraph induced by `nodes`.
    pub fn components_of(&self, nodes: &[usize]) -> Vec<Vec<usize>> {
        let nodes = normalize(nodes);
        let mut uf = UnionFind::new(nodes.len());
        for (a, &i) in nodes.iter().enumerate() {
            for (lo, hi) in self.reach(i) {
                let start = nodes.partition_point(|&x| x < lo);
                for (b, &j) in nodes.iter().enumerate().skip(start) {
                    if j > hi {
                        break;
                    }
                    if j != i {
                        uf.union(a, b);
                    }
                }
            }
        }
        uf.groups(nodes.len()).into_iter().map(|grp| grp.into_iter().map(|k| nodes[k]).collect()).collect()
    }

    pub fn materialize(&self) -> Gosd {
        let adj = (0..self.base.p()).into_par_iter().map(|i| self.neighbors(i)).collect();
        Gosd::from_adjacency(adj, self.base.delta())
    }
}

/// Materialized expanded graph.
pub fn build_expanded_graph(g: &Gosd, l_pe: usize) -> Gosd {
    ExpandedGraph::new(g, l_pe).materialize()
}
