use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Undirected adjacency graph of a sparse matrix pattern; no self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl AdjacencyGraph {
    /// Graph of the nonzero pattern of a square matrix. Stored entries count as edges even
    /// when their value is zero; an unsymmetric pattern is symmetrized.
    pub fn from_matrix(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::DimensionMismatch {
                context: "adjacency graph of non-square matrix",
                expected: a.n_rows(),
                found: a.n_cols(),
            });
        }
        let n = a.n_rows();
        let mut edges = Vec::with_capacity(a.nnz());
        for i in 0..n {
            for &j in a.row(i).0 {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Builds from an undirected edge list; duplicates and self-loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            let bad = if u >= n { Some(u) } else if v >= n { Some(v) } else { None };
            if let Some(index) = bad {
                return Err(Error::IndexOutOfRange { index, bound: n });
            }
            if u != v {
                lists[u].push(v);
                lists[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are in range")
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Hop distances from `source`; unreachable vertices get `usize::MAX`.
    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        self.multi_source_bfs(&[source])
    }

    pub fn multi_source_bfs(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == usize::MAX {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v] + 1;
            for &w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = d;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected components, each sorted ascending, ordered by smallest vertex.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_vertices();
        let mut label = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let v = members[head];
                head += 1;
                for &w in self.neighbors(v) {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        members.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }
}
