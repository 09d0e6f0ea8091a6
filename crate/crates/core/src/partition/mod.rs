//! Graph partitioning into nonoverlapping subdomains, overlap/halo layouts, algebraic
//! partitions of unity and subdomain coloring.

mod coloring;
mod layout;
mod pou;

pub use coloring::{color_subdomains, Coloring};
pub use layout::{build_layout, Subdomain, SubdomainLayout};
pub use pou::{build_partition_of_unity, PartitionOfUnity, PouScheme};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::AdjacencyGraph;

/// Center-recomputation sweeps applied after the initial growth.
const REFINEMENT_SWEEPS: usize = 4;

/// Balance target for connected graphs: `max size <= ceil(BALANCE_FACTOR · n / N)`.
pub const BALANCE_FACTOR: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionQuality {
    pub n_parts: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// `max_size / (n / N)`
    pub imbalance: f64,
    pub edge_cut: usize,
    pub within_balance_target: bool,
}

pub fn partition_quality(graph: &AdjacencyGraph, interiors: &[Vec<usize>]) -> PartitionQuality {
    let n = graph.n_vertices();
    let mut owner = vec![usize::MAX; n];
    for (p, part) in interiors.iter().enumerate() {
        for &v in part {
            owner[v] = p;
        }
    }
    let edge_cut = (0..n)
        .map(|v| {
            graph
                .neighbors(v)
                .iter()
                .filter(|&&w| w > v && owner[w] != owner[v])
                .count()
        })
        .sum();
    let sizes: Vec<usize> = interiors.iter().map(Vec::len).collect();
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    let min_size = sizes.iter().copied().min().unwrap_or(0);
    let n_parts = interiors.len().max(1);
    let target = (BALANCE_FACTOR * n as f64 / n_parts as f64).ceil() as usize;
    PartitionQuality {
        n_parts: interiors.len(),
        min_size,
        max_size,
        imbalance: max_size as f64 * n_parts as f64 / n.max(1) as f64,
        edge_cut,
        within_balance_target: max_size <= target,
    }
}

/// Splits the vertices into `n_parts` nonempty, disjoint interiors covering the graph.
///
/// Seeds are placed by farthest-point sampling and regions grow breadth-first, the
/// currently smallest region first; a few sweeps then move each seed to its region's
/// center and regrow. Parts come back sorted ascending and ordered by smallest vertex.
/// The `seed` only chooses where farthest-point sampling starts.
pub fn partition_graph(
    graph: &AdjacencyGraph,
    n_parts: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = graph.n_vertices();
    if n_parts == 0 {
        return Err(Error::InvalidArgument("number of subdomains must be >= 1".into()));
    }
    if n_parts > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} vertices into {n_parts} nonempty subdomains"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let components = graph.connected_components();

    let mut parts: Vec<Vec<usize>> = if n_parts < components.len() {
        pack_components(&components, n_parts)
    } else {
        let quota = allocate_parts(&components, n_parts);
        let mut parts = Vec::with_capacity(n_parts);
        for (comp, &k) in components.iter().zip(&quota) {
            parts.extend(grow_regions(graph, comp, k, &mut rng));
        }
        parts
    };
    for p in &mut parts {
        p.sort_unstable();
    }
    parts.sort_by_key(|p| p[0]);
    Ok(parts)
}

/// More components than parts: whole components go, largest first, to the currently
/// smallest group.
fn pack_components(components: &[Vec<usize>], n_parts: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| {
        components[b]
            .len()
            .cmp(&components[a].len())
            .then(components[a][0].cmp(&components[b][0]))
    });
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_parts];
    for c in order {
        let target = (0..n_parts).min_by_key(|&g| (groups[g].len(), g)).unwrap();
        groups[target].extend_from_slice(&components[c]);
    }
    groups
}

/// Parts per component, proportional to size (highest-averages rule), at least one each.
fn allocate_parts(components: &[Vec<usize>], n_parts: usize) -> Vec<usize> {
    let mut quota = vec![1usize; components.len()];
    for _ in components.len()..n_parts {
        let best = (0..components.len())
            .filter(|&c| quota[c] < components[c].len())
            .max_by(|&a, &b| {
                let qa = components[a].len() as f64 / quota[a] as f64;
                let qb = components[b].len() as f64 / quota[b] as f64;
                qa.partial_cmp(&qb).unwrap().then(b.cmp(&a))
            })
            .expect("n_parts <= n guarantees room");
        quota[best] += 1;
    }
    quota
}

/// Farthest vertex from `sources` inside the component (ties: smallest index).
fn farthest(graph: &AdjacencyGraph, component: &[usize], sources: &[usize]) -> usize {
    let dist = graph.multi_source_bfs(sources);
    *component
        .iter()
        .max_by(|&&a, &&b| dist[a].cmp(&dist[b]).then(b.cmp(&a)))
        .unwrap()
}

fn grow_regions(
    graph: &AdjacencyGraph,
    component: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![component.to_vec()];
    }
    if k == component.len() {
        return component.iter().map(|&v| vec![v]).collect();
    }
    let start = component[rng.gen_range(0..component.len())];
    let mut seeds = vec![farthest(graph, component, &[start])];
    while seeds.len() < k {
        seeds.push(farthest(graph, component, &seeds));
    }

    let mut best = grow_from(graph, component, &seeds);
    let mut best_max = best.iter().map(Vec::len).max().unwrap();
    for _ in 0..REFINEMENT_SWEEPS {
        let centers: Vec<usize> = best.iter().map(|r| region_center(graph, r)).collect();
        if centers == seeds {
            break;
        }
        let regrown = grow_from(graph, component, &centers);
        let regrown_max = regrown.iter().map(Vec::len).max().unwrap();
        if regrown_max > best_max {
            break;
        }
        seeds = centers;
        best = regrown;
        best_max = regrown_max;
    }
    let target = (BALANCE_FACTOR * component.len() as f64 / k as f64).ceil() as usize;
    let balanced = |regions: &[Vec<usize>]| regions.iter().all(|r| r.len() <= target && !r.is_empty());
    if balanced(&best) {
        return best;
    }
    let mut compact = best.clone();
    rebalance(graph, component, &mut compact, true);
    for _ in 0..REFINEMENT_SWEEPS {
        if !absorb_fragments(graph, component, &mut compact) {
            break;
        }
        rebalance(graph, component, &mut compact, true);
    }
    if balanced(&compact) {
        return compact;
    }
    rebalance(graph, component, &mut best, false);
    best
}

/// Keeps the largest connected piece of every region and hands the other pieces to the
/// adjacent region sharing the most edges with them. Returns whether anything moved.
fn absorb_fragments(graph: &AdjacencyGraph, component: &[usize], regions: &mut [Vec<usize>]) -> bool {
    let n = graph.n_vertices();
    let mut owner = vec![usize::MAX; n];
    for (r, region) in regions.iter().enumerate() {
        for &v in region {
            owner[v] = r;
        }
    }
    let mut piece = vec![usize::MAX; n];
    let mut moved = false;
    for r in 0..regions.len() {
        let mut pieces: Vec<Vec<usize>> = Vec::new();
        for &s in &regions[r] {
            if piece[s] != usize::MAX {
                continue;
            }
            let id = pieces.len();
            piece[s] = id;
            let mut members = vec![s];
            let mut head = 0;
            while head < members.len() {
                let v = members[head];
                head += 1;
                for &w in graph.neighbors(v) {
                    if owner[w] == r && piece[w] == usize::MAX {
                        piece[w] = id;
                        members.push(w);
                    }
                }
            }
            pieces.push(members);
        }
        if pieces.len() < 2 {
            continue;
        }
        let keep = (0..pieces.len()).max_by_key(|&p| (pieces[p].len(), usize::MAX - p)).unwrap();
        for (p, members) in pieces.iter().enumerate() {
            if p == keep {
                continue;
            }
            let mut shared: Vec<(usize, usize)> = Vec::new();
            for &v in members {
                for &w in graph.neighbors(v) {
                    let q = owner[w];
                    if q != r {
                        match shared.iter_mut().find(|c| c.0 == q) {
                            Some(c) => c.1 += 1,
                            None => shared.push((q, 1)),
                        }
                    }
                }
            }
            if let Some(&(q, _)) = shared.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))) {
                for &v in members {
                    owner[v] = q;
                }
                moved = true;
            }
        }
    }
    if moved {
        for region in regions.iter_mut() {
            region.clear();
        }
        for &v in component {
            regions[owner[v]].push(v);
        }
    }
    moved
}

/// Moves boundary vertices from larger into smaller adjacent regions (size gap of at
/// least two). With `compact`, a vertex only moves when it has at least as many
/// neighbors in the target. Each move lowers the sum of squared sizes, so this terminates.
fn rebalance(
    graph: &AdjacencyGraph,
    component: &[usize],
    regions: &mut [Vec<usize>],
    compact: bool,
) {
    let n = graph.n_vertices();
    let mut owner = vec![usize::MAX; n];
    let mut size: Vec<usize> = regions.iter().map(Vec::len).collect();
    for (r, region) in regions.iter().enumerate() {
        for &v in region {
            owner[v] = r;
        }
    }
    let mut counts: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut moved = false;
        for &v in component {
            let r = owner[v];
            if size[r] == 1 {
                continue;
            }
            counts.clear();
            for &w in graph.neighbors(v) {
                let q = owner[w];
                match counts.iter_mut().find(|c| c.0 == q) {
                    Some(c) => c.1 += 1,
                    None => counts.push((q, 1)),
                }
            }
            let own = counts.iter().find(|c| c.0 == r).map_or(0, |c| c.1);
            let target = counts
                .iter()
                .filter(|&&(q, c)| q != r && size[q] + 2 <= size[r] && (!compact || c >= own))
                .min_by_key(|&&(q, _)| (size[q], q));
            if let Some(&(q, _)) = target {
                owner[v] = q;
                size[r] -= 1;
                size[q] += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    for region in regions.iter_mut() {
        region.clear();
    }
    for &v in component {
        regions[owner[v]].push(v);
    }
}

/// Simultaneous BFS growth from `seeds`, always extending the smallest region that can
/// still grow.
fn grow_from(graph: &AdjacencyGraph, component: &[usize], seeds: &[usize]) -> Vec<Vec<usize>> {
    let n = graph.n_vertices();
    let k = seeds.len();
    let mut owner = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); k];
    for (r, &s) in seeds.iter().enumerate() {
        owner[s] = r;
        regions[r].push(s);
        queues[r].extend(graph.neighbors(s).iter().copied());
    }
    let mut assigned = k;
    while assigned < component.len() {
        let mut progressed = false;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&r| (regions[r].len(), r));
        for r in order {
            let mut claimed = None;
            while let Some(v) = queues[r].pop_front() {
                if owner[v] == usize::MAX {
                    claimed = Some(v);
                    break;
                }
            }
            if let Some(v) = claimed {
                owner[v] = r;
                regions[r].push(v);
                queues[r].extend(graph.neighbors(v).iter().copied().filter(|&w| owner[w] == usize::MAX));
                assigned += 1;
                progressed = true;
                break;
            }
        }
        assert!(progressed, "connected component must be fully reachable");
    }
    regions
}

/// Approximate graph center of a region via a double BFS sweep restricted to it.
fn region_center(graph: &AdjacencyGraph, region: &[usize]) -> usize {
    let mut inside = std::collections::HashMap::with_capacity(region.len());
    for (p, &v) in region.iter().enumerate() {
        inside.insert(v, p);
    }
    let local_bfs = |src: usize| -> Vec<usize> {
        let mut dist = vec![usize::MAX; region.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[inside[&src]] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = dist[inside[&v]] + 1;
            for w in graph.neighbors(v) {
                if let Some(&q) = inside.get(w) {
                    if dist[q] == usize::MAX {
                        dist[q] = d;
                        queue.push_back(*w);
                    }
                }
            }
        }
        dist
    };
    let pick_far = |dist: &[usize]| -> usize {
        let (p, _) = dist
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != usize::MAX)
            .max_by(|a, b| a.1.cmp(b.1).then(region[b.0].cmp(&region[a.0])))
            .unwrap();
        region[p]
    };
    let min_vertex = *region.iter().min().unwrap();
    let a = pick_far(&local_bfs(min_vertex));
    let da = local_bfs(a);
    let b = pick_far(&da);
    let db = local_bfs(b);
    let (p, _) = (0..region.len())
        .map(|p| (p, da[p].max(db[p])))
        .min_by(|x, y| x.1.cmp(&y.1).then(region[x.0].cmp(&region[y.0])))
        .unwrap();
    region[p]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    fn check_cover(parts: &[Vec<usize>], n: usize) {
        let mut seen = vec![0; n];
        for p in parts {
            assert!(!p.is_empty());
            for &v in p {
                seen[v] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn path_bisection() {
        let g = AdjacencyGraph::path(8);
        for seed in 0..5 {
            let parts = partition_graph(&g, 2, seed).unwrap();
            assert_eq!(parts, vec![(0..4).collect::<Vec<_>>(), (4..8).collect()]);
        }
    }

    #[test]
    fn trivial_counts() {
        let a = gen::laplace_2d(5, 4);
        let g = AdjacencyGraph::from_matrix(&a).unwrap();
        assert_eq!(partition_graph(&g, 1, 0).unwrap(), vec![(0..20).collect::<Vec<_>>()]);
        let singles = partition_graph(&g, 20, 0).unwrap();
        assert_eq!(singles, (0..20).map(|v| vec![v]).collect::<Vec<_>>());
        assert!(partition_graph(&g, 21, 0).is_err());
        assert!(partition_graph(&g, 0, 0).is_err());
    }

    #[test]
    fn grid_partitions_are_balanced() {
        for (nx, parts) in [(32usize, 4usize), (32, 16), (64, 16), (64, 64)] {
            let g = AdjacencyGraph::from_matrix(&gen::laplace_2d(nx, nx)).unwrap();
            let p = partition_graph(&g, parts, 7).unwrap();
            check_cover(&p, nx * nx);
            let q = partition_quality(&g, &p);
            assert!(q.within_balance_target, "{nx}x{nx}/{parts}: {q:?}");
        }
    }

    #[test]
    fn disconnected_graph_gets_parts_per_component() {
        // two paths of length 6 and 2, plus an isolated vertex
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (6, 7)];
        let g = AdjacencyGraph::from_edges(9, &edges).unwrap();
        let parts = partition_graph(&g, 4, 0).unwrap();
        check_cover(&parts, 9);
        assert_eq!(parts.len(), 4);
        // fewer parts than components: whole components are packed
        let parts = partition_graph(&g, 2, 0).unwrap();
        check_cover(&parts, 9);
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = AdjacencyGraph::from_matrix(&gen::laplace_2d(20, 17)).unwrap();
        assert_eq!(
            partition_graph(&g, 6, 3).unwrap(),
            partition_graph(&g, 6, 3).unwrap()
        );
    }
}
