use std::collections::{BTreeSet, HashMap};

use super::CellPos;
use crate::error::{Error, Result};

/// Undirected graph over lattice cells with an edge between every pair of
/// cells at L1 distance one. Node `i` stands for `cells[i]`.
///
/// Abstract graphs (no backing cells) can be built with
/// [`ConnectivityGraph::from_edges`]; the algorithms below only look at the
/// adjacency lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConnectivityGraph {
    cells: Vec<CellPos>,
    adjacency: Vec<Vec<usize>>,
}

impl ConnectivityGraph {
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::domain(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b || adjacency[a].contains(&b) {
                continue;
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(ConnectivityGraph { cells: Vec::new(), adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a).is_some_and(|l| l.binary_search(&b).is_ok())
    }

    pub fn cell(&self, node: usize) -> Option<CellPos> {
        self.cells.get(node).copied()
    }

    pub fn cells(&self) -> &[CellPos] {
        &self.cells
    }

    /// Edge list with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }
}

pub fn build_connectivity_graph(cells: &[CellPos]) -> Result<ConnectivityGraph> {
    let mut index = HashMap::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        if index.insert(*c, i).is_some() {
            return Err(Error::domain(format!("duplicate cell {c}")));
        }
    }
    let adjacency = cells
        .iter()
        .map(|c| {
            let mut list: Vec<usize> = c
                .axis_neighbors(super::Dim::Three)
                .filter_map(|n| index.get(&n).copied())
                .collect();
            list.sort_unstable();
            list
        })
        .collect();
    Ok(ConnectivityGraph { cells: cells.to_vec(), adjacency })
}

/// Maximal connected node sets. Each set is sorted and the sets are ordered
/// by their smallest node.
pub fn connected_components(g: &ConnectivityGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Cut vertices, via an iterative DFS low-link computation.
pub fn articulation_points(g: &ConnectivityGraph) -> BTreeSet<usize> {
    let n = g.node_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut cut = vec![false; n];
    let mut timer = 0usize;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        let mut root_children = 0usize;
        // (node, parent, next neighbor index)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(frame) = stack.last_mut() {
            let (v, parent, idx) = *frame;
            if let Some(&w) = g.neighbors(v).get(idx) {
                frame.2 += 1;
                if w == parent {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, v, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    if parent != root && low[v] >= disc[parent] {
                        cut[parent] = true;
                    }
                }
            }
        }
        if root_children >= 2 {
            cut[root] = true;
        }
    }
    (0..n).filter(|&v| cut[v]).collect()
}
