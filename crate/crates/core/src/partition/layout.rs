use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::AdjacencyGraph;

/// Index sets of one subdomain: the owned interior, the distance-one ring around it
/// and the next ring outside the overlapping set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Subdomain {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub halo: Vec<usize>,
    #[serde(skip)]
    overlapping: Vec<usize>,
    #[serde(skip)]
    extended: Vec<usize>,
}

impl Subdomain {
    fn new(interior: Vec<usize>, boundary: Vec<usize>, halo: Vec<usize>) -> Self {
        let overlapping: Vec<usize> = interior.iter().chain(&boundary).copied().collect();
        let extended: Vec<usize> = overlapping.iter().chain(&halo).copied().collect();
        Self {
            interior,
            boundary,
            halo,
            overlapping,
            extended,
        }
    }

    /// Interior followed by boundary, in that order.
    pub fn overlapping(&self) -> &[usize] {
        &self.overlapping
    }

    /// Interior, boundary, then halo.
    pub fn extended(&self) -> &[usize] {
        &self.extended
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_overlapping(&self) -> usize {
        self.overlapping.len()
    }

    pub fn n_extended(&self) -> usize {
        self.extended.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubdomainLayout {
    n: usize,
    subdomains: Vec<Subdomain>,
}

impl SubdomainLayout {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, i: usize) -> &Subdomain {
        &self.subdomains[i]
    }

    /// For each vertex, the subdomains whose overlapping set contains it (ascending).
    pub fn multiplicity_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n];
        for (i, s) in self.subdomains.iter().enumerate() {
            for &v in s.overlapping() {
                lists[v].push(i);
            }
        }
        lists
    }

    /// Owning subdomain of every vertex.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n];
        for (i, s) in self.subdomains.iter().enumerate() {
            for &v in &s.interior {
                owner[v] = i;
            }
        }
        owner
    }

    /// Human-readable dump, 1-based indices, one block per subdomain.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| (x + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (i, s) in self.subdomains.iter().enumerate() {
            let _ = writeln!(out, "# subdomain {}", i + 1);
            let _ = writeln!(out, "interior: {}", join(&s.interior));
            let _ = writeln!(out, "boundary: {}", join(&s.boundary));
            let _ = writeln!(out, "halo: {}", join(&s.halo));
        }
        out
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Computes boundary and halo rings for disjoint interiors that cover the graph.
pub fn build_layout(graph: &AdjacencyGraph, interiors: Vec<Vec<usize>>) -> Result<SubdomainLayout> {
    let n = graph.n_vertices();
    let mut owner = vec![usize::MAX; n];
    for (p, part) in interiors.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidArgument(format!("subdomain {p} is empty")));
        }
        for &v in part {
            if v >= n {
                return Err(Error::IndexOutOfRange { index: v, bound: n });
            }
            if owner[v] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "vertex {v} belongs to subdomains {} and {p}",
                    owner[v]
                )));
            }
            owner[v] = p;
        }
    }
    if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::InvalidArgument(format!(
            "vertex {v} is not in any subdomain"
        )));
    }

    // 0 = outside, 1 = interior, 2 = boundary, 3 = halo; reset after each subdomain
    let mut mark = vec![0u8; n];
    let mut subdomains = Vec::with_capacity(interiors.len());
    for mut interior in interiors {
        interior.sort_unstable();
        for &v in &interior {
            mark[v] = 1;
        }
        let mut boundary = Vec::new();
        for &v in &interior {
            for &w in graph.neighbors(v) {
                if mark[w] == 0 {
                    mark[w] = 2;
                    boundary.push(w);
                }
            }
        }
        boundary.sort_unstable();
        let mut halo = Vec::new();
        for &v in &boundary {
            for &w in graph.neighbors(v) {
                if mark[w] == 0 {
                    mark[w] = 3;
                    halo.push(w);
                }
            }
        }
        halo.sort_unstable();
        for v in interior.iter().chain(&boundary).chain(&halo) {
            mark[*v] = 0;
        }
        subdomains.push(Subdomain::new(interior, boundary, halo));
    }
    Ok(SubdomainLayout { n, subdomains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::partition::partition_graph;
    use proptest::prelude::*;

    #[test]
    fn path_of_six() {
        let g = AdjacencyGraph::path(6);
        let layout = build_layout(&g, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let s = layout.subdomain(0);
        assert_eq!(s.boundary, vec![3]);
        assert_eq!(s.halo, vec![4]);
        assert_eq!(s.overlapping(), &[0, 1, 2, 3]);
        assert_eq!(s.extended(), &[0, 1, 2, 3, 4]);
        let t = layout.subdomain(1);
        assert_eq!(t.boundary, vec![2]);
        assert_eq!(t.halo, vec![1]);
        assert_eq!(t.overlapping(), &[3, 4, 5, 2]);
    }

    #[test]
    fn rejects_bad_interiors() {
        let g = AdjacencyGraph::path(4);
        assert!(build_layout(&g, vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(build_layout(&g, vec![vec![0, 1], vec![2]]).is_err());
        assert!(build_layout(&g, vec![vec![0, 1, 2, 3], vec![]]).is_err());
        assert!(build_layout(&g, vec![vec![0, 1, 2, 3, 4]]).is_err());
    }

    #[test]
    fn text_dump_is_one_based() {
        let g = AdjacencyGraph::path(4);
        let layout = build_layout(&g, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(layout
            .to_text()
            .starts_with("# subdomain 1\ninterior: 1 2\nboundary: 3\nhalo: 4\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rings_match_bfs_distances(nx in 3usize..12, ny in 3usize..12, parts in 1usize..9, seed in 0u64..100) {
            let g = AdjacencyGraph::from_matrix(&gen::laplace_2d(nx, ny)).unwrap();
            let interiors = partition_graph(&g, parts.min(nx * ny), seed).unwrap();
            let layout = build_layout(&g, interiors).unwrap();
            for s in layout.subdomains() {
                let dist = g.multi_source_bfs(&s.interior);
                let ring = |d: usize| -> Vec<usize> {
                    (0..g.n_vertices()).filter(|&v| dist[v] == d).collect()
                };
                prop_assert_eq!(&s.boundary, &ring(1));
                prop_assert_eq!(&s.halo, &ring(2));
            }
        }
    }
}
