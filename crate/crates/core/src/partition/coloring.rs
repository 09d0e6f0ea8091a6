use serde::Serialize;

use super::SubdomainLayout;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub n_colors: usize,
    /// Largest number of neighbors of any subdomain.
    pub max_degree: usize,
}

/// Subdomains `i, j` are neighbors when their overlapping sets intersect or an edge of
/// the graph joins them, which is the same as `Ω̃_i ∩ Ω_j ≠ ∅`.
pub fn subdomain_adjacency(layout: &SubdomainLayout) -> Vec<Vec<usize>> {
    let members = layout.multiplicity_lists();
    layout
        .subdomains()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut nb: Vec<usize> = s
                .extended()
                .iter()
                .flat_map(|&v| members[v].iter().copied())
                .filter(|&j| j != i)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect()
}

/// Greedy coloring, largest degree first (ties by index), smallest free color.
pub fn color_subdomains(layout: &SubdomainLayout) -> Coloring {
    let adj = subdomain_adjacency(layout);
    let n = adj.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| adj[b].len().cmp(&adj[a].len()).then(a.cmp(&b)));
    let mut colors = vec![usize::MAX; n];
    let mut used = Vec::new();
    for i in order {
        used.clear();
        used.resize(adj[i].len() + 1, false);
        for &j in &adj[i] {
            if colors[j] < used.len() {
                used[colors[j]] = true;
            }
        }
        colors[i] = used.iter().position(|&u| !u).unwrap();
    }
    Coloring {
        n_colors: colors.iter().map(|c| c + 1).max().unwrap_or(0),
        max_degree: adj.iter().map(Vec::len).max().unwrap_or(0),
        colors,
    }
}
