//! Choosing the output mesh from an optimised population.

use serde::Serialize;

use crate::coarse2fine::{Algorithm, LevelSnapshot};
use crate::evolution::{Individual, Population};
use crate::ffd::{ControlMesh, LatticeConfig};
use crate::objectives::GroupPartition;
use crate::{Error, Result};

/// Index of the member with the smallest objective sum (ties to the lower index).
pub fn select_best(pop: &Population) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, m) in pop.members.iter().enumerate() {
        let s = m.objective_sum().ok_or(Error::Unevaluated(k))?;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::EmptyPopulation)
}

/// Mesh assembled from the per-group optima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub genes: Vec<f64>,
    /// Member index that supplied each group's control points.
    pub provenance: Vec<usize>,
}

/// Pareto post-processing.
///
/// For each group the member minimising that group's objective supplies the
/// control points in the group's support (the union of its patches' 4x4
/// windows). Points claimed by several groups take the unweighted mean.
pub fn aggregate_pareto(pop: &Population, part: &GroupPartition, cfg: &LatticeConfig) -> Result<Aggregate> {
    let objs = pop.objective_matrix()?;
    if objs.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if objs[0].len() != part.n_groups {
        return Err(Error::LengthMismatch(objs[0].len(), part.n_groups));
    }
    let provenance: Vec<usize> = (0..part.n_groups)
        .map(|g| {
            (0..objs.len())
                .reduce(|a, b| if objs[b][g] < objs[a][g] { b } else { a })
                .expect("non-empty")
        })
        .collect();
    let meshes = provenance
        .iter()
        .map(|&k| ControlMesh::from_genes(*cfg, &pop.members[k].genes))
        .collect::<Result<Vec<_>>>()?;
    let supports = (0..part.n_groups)
        .map(|g| part.group_support(g, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut out = ControlMesh::zeros(*cfg);
    for j in 0..cfg.n_y {
        for i in 0..cfg.n_x {
            let p = j * cfg.n_x + i;
            let contributions: Vec<[f64; 2]> = (0..part.n_groups)
                .filter(|&g| supports[g][p])
                .map(|g| meshes[g].get(i, j))
                .collect();
            let d = match contributions.as_slice() {
                [] => {
                    return Err(Error::InvalidLattice(format!(
                        "control point ({i}, {j}) is not covered by any group"
                    )))
                }
                [only] => *only,
                many => {
                    let n = many.len() as f64;
                    let sx: f64 = many.iter().map(|d| d[0]).sum();
                    let sy: f64 = many.iter().map(|d| d[1]).sum();
                    [sx / n, sy / n]
                }
            };
            out.set(i, j, d);
        }
    }
    Ok(Aggregate {
        genes: out.to_genes(),
        provenance,
    })
}

/// RMSE/MEDE of one output solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionMetrics {
    pub rmse: f64,
    pub mede: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub best: SolutionMetrics,
    pub post_processed: SolutionMetrics,
}

/// Everything a coarse-to-fine run produces.
#[derive(Debug, Clone, Serialize)]
pub struct RegistrationResult {
    pub algorithm: Algorithm,
    pub n_groups: usize,
    pub seed: u64,
    /// Lattice of the finest level.
    pub lattice: LatticeConfig,
    pub final_population: Population,
    /// `F_1` of the final population.
    pub pareto_front: Vec<usize>,
    pub best_index: usize,
    pub best: Individual,
    /// Aggregated mesh, evaluated on the finest level.
    pub post_processed: Individual,
    pub provenance: Vec<usize>,
    pub per_level_history: Vec<LevelSnapshot>,
    pub metrics: Option<Metrics>,
}

impl RegistrationResult {
    pub fn best_mesh(&self) -> ControlMesh {
        ControlMesh::from_genes(self.lattice, &self.best.genes).expect("genes match lattice")
    }

    pub fn post_processed_mesh(&self) -> ControlMesh {
        ControlMesh::from_genes(self.lattice, &self.post_processed.genes).expect("genes match lattice")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Bounds;
    use crate::objectives::partition_groups;

    fn pop_with(objs: &[&[f64]], genes: Vec<Vec<f64>>) -> Population {
        let n = genes[0].len();
        Population {
            members: genes
                .into_iter()
                .zip(objs)
                .map(|(g, o)| Individual {
                    genes: g,
                    objectives: Some(o.to_vec()),
                })
                .collect(),
            bounds: Bounds::symmetric(n, 100.0).unwrap(),
            generation: 0,
        }
    }

    #[test]
    fn best_by_sum() {
        let p = pop_with(&[&[5.0], &[3.0], &[7.0]], vec![vec![0.0]; 3]);
        assert_eq!(select_best(&p).unwrap(), 1);
        let p = pop_with(&[&[1.0, 2.0], &[2.0, 1.0], &[0.5, 3.0]], vec![vec![0.0]; 3]);
        assert_eq!(select_best(&p).unwrap(), 0);
        let single = pop_with(&[&[9.0]], vec![vec![1.0]]);
        assert_eq!(select_best(&single).unwrap(), 0);

        let mut shifted = p.clone();
        for m in &mut shifted.members {
            for v in m.objectives.as_mut().unwrap() {
                *v += 4.25;
            }
        }
        assert_eq!(select_best(&shifted).unwrap(), select_best(&p).unwrap());

        let mut bad = p;
        bad.members[2].objectives = None;
        assert!(matches!(select_best(&bad), Err(Error::Unevaluated(2))));
    }

    #[test]
    fn two_group_aggregation_averages_center_columns() {
        let cfg = LatticeConfig::new(7, 7, 160, 160).unwrap();
        let part = partition_groups(&cfg, 2).unwrap();
        let left = ControlMesh::uniform(cfg, [2.0, -4.0]);
        let right = ControlMesh::uniform(cfg, [6.0, 0.0]);
        let pop = pop_with(&[&[1.0, 9.0], &[9.0, 1.0]], vec![left.to_genes(), right.to_genes()]);
        let agg = aggregate_pareto(&pop, &part, &cfg).unwrap();
        assert_eq!(agg.provenance, vec![0, 1]);
        let out = ControlMesh::from_genes(cfg, &agg.genes).unwrap();
        for j in 0..7 {
            for i in 0..7 {
                let want = match i {
                    0 | 1 => [2.0, -4.0],
                    2..=4 => [4.0, -2.0],
                    _ => [6.0, 0.0],
                };
                assert_eq!(out.get(i, j), want, "point ({i}, {j})");
            }
        }
    }

    #[test]
    fn single_group_is_best_verbatim() {
        let cfg = LatticeConfig::new(5, 5, 40, 40).unwrap();
        let part = partition_groups(&cfg, 1).unwrap();
        let genes: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..cfg.n_genes()).map(|g| (g as f64 - 20.0) * 0.1 * (k as f64 - 1.0)).collect())
            .collect();
        let pop = pop_with(&[&[4.0], &[2.0], &[3.0]], genes);
        let agg = aggregate_pareto(&pop, &part, &cfg).unwrap();
        let best = select_best(&pop).unwrap();
        let a: Vec<u64> = agg.genes.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = pop.members[best].genes.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_members_and_idempotence() {
        let cfg = LatticeConfig::new(7, 7, 160, 160).unwrap();
        let part = partition_groups(&cfg, 4).unwrap();
        let mesh = ControlMesh::from_fn(cfg, |i, j| [i as f64 * 0.3, j as f64 - 2.0]);
        let pop = pop_with(&[&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]], vec![mesh.to_genes(); 2]);
        let agg = aggregate_pareto(&pop, &part, &cfg).unwrap();
        assert_eq!(ControlMesh::from_genes(cfg, &agg.genes).unwrap(), mesh);
        let again = pop_with(&[&[1.0, 1.0, 1.0, 1.0], &[2.0, 2.0, 2.0, 2.0]], vec![agg.genes.clone(); 2]);
        assert_eq!(aggregate_pareto(&again, &part, &cfg).unwrap().genes, agg.genes);
    }

    #[test]
    fn permutation_invariance() {
        let cfg = LatticeConfig::new(7, 7, 160, 160).unwrap();
        let part = partition_groups(&cfg, 2).unwrap();
        let genes: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..cfg.n_genes()).map(|g| ((g * 7 + k * 13) % 11) as f64 - 5.0).collect())
            .collect();
        let objs: [&[f64]; 4] = [&[3.0, 1.0], &[1.0, 3.0], &[2.0, 2.0], &[4.0, 0.5]];
        let a = aggregate_pareto(&pop_with(&objs, genes.clone()), &part, &cfg).unwrap();
        let rev_objs: Vec<&[f64]> = objs.iter().rev().copied().collect();
        let rev_genes: Vec<Vec<f64>> = genes.into_iter().rev().collect();
        let b = aggregate_pareto(&pop_with(&rev_objs, rev_genes), &part, &cfg).unwrap();
        assert_eq!(a.genes, b.genes);
    }

    #[test]
    fn unevaluated_members_error() {
        let cfg = LatticeConfig::new(4, 4, 10, 10).unwrap();
        let part = partition_groups(&cfg, 1).unwrap();
        let mut pop = pop_with(&[&[1.0], &[2.0]], vec![vec![0.0; cfg.n_genes()]; 2]);
        pop.members[0].objectives = None;
        assert!(matches!(aggregate_pareto(&pop, &part, &cfg), Err(Error::Unevaluated(0))));
    }
}
