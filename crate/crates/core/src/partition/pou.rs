use serde::Serialize;

use super::SubdomainLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PouScheme {
    /// Weight 1 on the interior, 0 on the boundary ring.
    #[default]
    Boolean,
    /// Weight `1 / m(j)` where `m(j)` counts the overlapping sets containing `j`.
    Multiplicity,
}

impl std::str::FromStr for PouScheme {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "boolean" => Ok(PouScheme::Boolean),
            "multiplicity" => Ok(PouScheme::Multiplicity),
            _ => Err(crate::error::Error::Config(format!(
                "unknown partition of unity '{s}' (boolean, multiplicity)"
            ))),
        }
    }
}

/// Diagonal weights `D_i`, stored per subdomain in overlapping-set order.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionOfUnity {
    scheme: PouScheme,
    weights: Vec<Vec<f64>>,
}

pub fn build_partition_of_unity(layout: &SubdomainLayout, scheme: PouScheme) -> PartitionOfUnity {
    let weights = match scheme {
        PouScheme::Boolean => layout
            .subdomains()
            .iter()
            .map(|s| {
                let mut w = vec![0.0; s.n_overlapping()];
                w[..s.n_interior()].fill(1.0);
                w
            })
            .collect(),
        PouScheme::Multiplicity => {
            let mut count = vec![0usize; layout.n()];
            for s in layout.subdomains() {
                for &v in s.overlapping() {
                    count[v] += 1;
                }
            }
            layout
                .subdomains()
                .iter()
                .map(|s| s.overlapping().iter().map(|&v| 1.0 / count[v] as f64).collect())
                .collect()
        }
    };
    PartitionOfUnity { scheme, weights }
}

impl PartitionOfUnity {
    pub fn scheme(&self) -> PouScheme {
        self.scheme
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    /// `Σ_i R_iᵀ D_i R_i u`, summed in subdomain order.
    pub fn apply_sum(&self, layout: &SubdomainLayout, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (s, w) in layout.subdomains().iter().zip(&self.weights) {
            for (&v, &d) in s.overlapping().iter().zip(w) {
                out[v] += d * u[v];
            }
        }
        out
    }

    /// `max_j |Σ_i (R_iᵀ d_i)_j − 1|`.
    pub fn identity_defect(&self, layout: &SubdomainLayout) -> f64 {
        let total = self.apply_sum(layout, &vec![1.0; layout.n()]);
        total.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::partition::{build_layout, partition_graph};
    use crate::sparse::{AdjacencyGraph, CsrMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn multiplicity_on_path() {
        let g = AdjacencyGraph::path(6);
        let layout = build_layout(&g, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let pou = build_partition_of_unity(&layout, PouScheme::Multiplicity);
        // global index 3 (1-based 4) is in both overlapping sets
        assert_eq!(pou.weights(0), &[1.0, 1.0, 0.5, 0.5]);
        assert_eq!(pou.weights(1), &[0.5, 1.0, 1.0, 0.5]);
        let b = build_partition_of_unity(&layout, PouScheme::Boolean);
        assert_eq!(b.weights(0), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn no_overlap_schemes_coincide() {
        let g = AdjacencyGraph::from_matrix(&CsrMatrix::identity(5)).unwrap();
        let layout = build_layout(&g, vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
        let a = build_partition_of_unity(&layout, PouScheme::Boolean);
        let b = build_partition_of_unity(&layout, PouScheme::Multiplicity);
        assert_eq!(a.weights, b.weights);
        assert!(a.weights.iter().flatten().all(|&w| w == 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn sum_is_identity(nx in 2usize..14, ny in 2usize..14, parts in 1usize..12, seed in 0u64..1000) {
            let g = AdjacencyGraph::from_matrix(&gen::laplace_2d(nx, ny)).unwrap();
            let n = nx * ny;
            let layout = build_layout(&g, partition_graph(&g, parts.min(n), seed).unwrap()).unwrap();
            let boolean = build_partition_of_unity(&layout, PouScheme::Boolean);
            let mult = build_partition_of_unity(&layout, PouScheme::Multiplicity);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let sb = boolean.apply_sum(&layout, &u);
                prop_assert_eq!(&sb, &u);
                let sm = mult.apply_sum(&layout, &u);
                let err = sm.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let umax = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                prop_assert!(err <= 4.0 * f64::EPSILON * layout.n_subdomains() as f64 * umax.max(1.0));
            }
        }
    }
}
