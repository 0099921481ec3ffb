//! Coarse-to-fine schedule over image pyramids.
//!
//! Level `l + 1` uses a `(2 N^l - 3)`-point lattice with the same spacing as
//! level `l`, so one refined patch covers a quarter of a coarse one. After
//! each level the population is refined by Catmull–Clark subdivision,
//! displacements are doubled, and the result seeds the next level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{aggregate_pareto, select_best, RegistrationResult};
use crate::evolution::{random_population_with, run_simple_ga, Bounds, Individual, Population, VariationConfig};
use crate::ffd::{ControlMesh, Displacement, LatticeConfig};
use crate::image::{GrayImage, ImagePyramid};
use crate::moea::{das_dennis_points, divisions_for_count, fast_nondominated_sort, run_nsga, FrontRecord, Survival};
use crate::objectives::{partition_for_level, Evaluator, ObjectiveVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ga,
    Nsga2,
    Nsga3,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ga => "ga",
            Algorithm::Nsga2 => "nsga2",
            Algorithm::Nsga3 => "nsga3",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the evaluation budget is scoped across pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetScope {
    /// Every level gets the full budget.
    #[default]
    PerLevel,
    /// The budget is split evenly; the finest level takes the remainder.
    Total,
}

#[derive(Debug, Clone)]
pub struct LevelPlan {
    /// 1-based, 1 = coarsest.
    pub level: usize,
    pub template: GrayImage,
    pub target: GrayImage,
    pub lattice: LatticeConfig,
    /// Symmetric decision range `[-range, range]` for every gene.
    pub range: f64,
    pub eval_budget: usize,
}

impl LevelPlan {
    pub fn bounds(&self) -> Bounds {
        Bounds::symmetric(self.lattice.n_genes(), self.range).expect("finite range")
    }
}

/// Builds the per-level schedule. Coarser lattices are back-solved from
/// `N^l = (N^{l+1} + 3) / 2`, and decision ranges halve per level up.
pub fn plan_levels(
    final_lattice: (usize, usize),
    n_levels: usize,
    template_pyr: &ImagePyramid,
    target_pyr: &ImagePyramid,
    final_range: f64,
    eval_budget: usize,
    scope: BudgetScope,
) -> Result<Vec<LevelPlan>> {
    if n_levels == 0 || template_pyr.len() != n_levels || target_pyr.len() != n_levels {
        return Err(Error::Config(format!(
            "expected {n_levels} pyramid levels, got {} and {}",
            template_pyr.len(),
            target_pyr.len()
        )));
    }
    if !(final_range.is_finite() && final_range >= 0.0) {
        return Err(Error::Config(format!("invalid decision range {final_range}")));
    }
    let mut lattices = vec![final_lattice];
    for _ in 1..n_levels {
        let (nx, ny) = *lattices.last().unwrap();
        let back = |n: usize| -> Result<usize> {
            if !(n + 3).is_multiple_of(2) || (n + 3) / 2 < 4 {
                return Err(Error::NotSubdividable(format!(
                    "{}x{} over {n_levels} levels",
                    final_lattice.0, final_lattice.1
                )));
            }
            Ok((n + 3) / 2)
        };
        lattices.push((back(nx)?, back(ny)?));
    }
    if final_lattice.0 < 4 || final_lattice.1 < 4 {
        return Err(Error::NotSubdividable(format!(
            "{}x{} has fewer than 4 points per axis",
            final_lattice.0, final_lattice.1
        )));
    }
    lattices.reverse();

    let budgets: Vec<usize> = match scope {
        BudgetScope::PerLevel => vec![eval_budget; n_levels],
        BudgetScope::Total => {
            let share = eval_budget / n_levels;
            let mut b = vec![share; n_levels];
            b[n_levels - 1] += eval_budget - share * n_levels;
            b
        }
    };

    lattices
        .into_iter()
        .enumerate()
        .map(|(k, (nx, ny))| {
            let level = k + 1;
            let template = template_pyr.level(level).unwrap().clone();
            let target = target_pyr.level(level).unwrap().clone();
            let lattice = LatticeConfig::new(nx, ny, template.width(), template.height())?;
            Ok(LevelPlan {
                level,
                template,
                target,
                lattice,
                range: final_range / f64::powi(2.0, (n_levels - level) as i32),
                eval_budget: budgets[k],
            })
        })
        .collect()
}

/// Catmull–Clark refinement of the displacement lattice, without doubling.
///
/// The outermost ring of the refined control net needs neighbours that do not
/// exist, so only the interior `(2N_x - 3) x (2N_y - 3)` window is produced:
/// new even indices are face/edge points of old cells, odd indices are the
/// updated old interior vertices.
pub fn catmull_clark_interior(mesh: &ControlMesh) -> Result<(usize, usize, Vec<Displacement>)> {
    let cfg = mesh.config();
    let (nx, ny) = (cfg.n_x, cfg.n_y);
    if nx < 4 || ny < 4 {
        return Err(Error::InvalidLattice(format!("{nx}x{ny} is too small to subdivide")));
    }
    let d = |i: usize, j: usize| mesh.get(i, j);
    let avg = |pts: &[Displacement]| {
        let n = pts.len() as f64;
        [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ]
    };
    // Face point of cell (c, r), spanning old points c..=c+1 x r..=r+1.
    let face = |c: usize, r: usize| avg(&[d(c, r), d(c + 1, r), d(c, r + 1), d(c + 1, r + 1)]);
    let mid = |a: Displacement, b: Displacement| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];

    let (mx, my) = (2 * nx - 3, 2 * ny - 3);
    let mut out = Vec::with_capacity(mx * my);
    for b in 0..my {
        for a in 0..mx {
            let p = match (a % 2, b % 2) {
                (0, 0) => face(a / 2, b / 2),
                (1, 0) => {
                    // Vertical edge between old (k, r) and (k, r + 1).
                    let (k, r) = (a.div_ceil(2), b / 2);
                    avg(&[face(k - 1, r), face(k, r), d(k, r), d(k, r + 1)])
                }
                (0, 1) => {
                    // Horizontal edge between old (c, k) and (c + 1, k).
                    let (c, k) = (a / 2, b.div_ceil(2));
                    avg(&[face(c, k - 1), face(c, k), d(c, k), d(c + 1, k)])
                }
                _ => {
                    let (k, m) = (a.div_ceil(2), b.div_ceil(2));
                    let f = avg(&[face(k - 1, m - 1), face(k, m - 1), face(k - 1, m), face(k, m)]);
                    let v = d(k, m);
                    let e = avg(&[
                        mid(v, d(k - 1, m)),
                        mid(v, d(k + 1, m)),
                        mid(v, d(k, m - 1)),
                        mid(v, d(k, m + 1)),
                    ]);
                    [
                        0.25 * f[0] + 0.5 * e[0] + 0.25 * v[0],
                        0.25 * f[1] + 0.5 * e[1] + 0.25 * v[1],
                    ]
                }
            };
            out.push(p);
        }
    }
    Ok((mx, my, out))
}

/// Subdivides onto the explicit next-level lattice and doubles all displacements.
pub fn subdivide_into(mesh: &ControlMesh, next: &LatticeConfig) -> Result<ControlMesh> {
    let (mx, my, pts) = catmull_clark_interior(mesh)?;
    if (next.n_x, next.n_y) != (mx, my) {
        return Err(Error::NotSubdividable(format!(
            "{}x{} refines to {mx}x{my}, not {}x{}",
            mesh.config().n_x,
            mesh.config().n_y,
            next.n_x,
            next.n_y
        )));
    }
    ControlMesh::new(*next, pts.into_iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect())
}

/// Subdivision onto a lattice with the same spacing over a template of twice
/// the size, displacements doubled.
pub fn subdivide_mesh(mesh: &ControlMesh) -> Result<ControlMesh> {
    let c = mesh.config();
    let next = LatticeConfig::with_spacing(2 * c.n_x - 3, 2 * c.n_y - 3, c.s_x, c.s_y, 2 * c.image_w, 2 * c.image_h)?;
    subdivide_into(mesh, &next)
}

/// Refines every member onto `to`, clamps to `bounds`, and drops cached objectives.
pub fn inherit_population(
    pop: &Population,
    from: &LatticeConfig,
    to: &LatticeConfig,
    bounds: &Bounds,
) -> Result<Population> {
    if bounds.len() != to.n_genes() {
        return Err(Error::LengthMismatch(bounds.len(), to.n_genes()));
    }
    let members = pop
        .members
        .iter()
        .map(|m| {
            let mesh = ControlMesh::from_genes(*from, &m.genes)?;
            let genes = subdivide_into(&mesh, to)?
                .to_genes()
                .into_iter()
                .enumerate()
                .map(|(i, g)| bounds.clamp(i, g))
                .collect();
            Ok(Individual::new(genes))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        members,
        bounds: bounds.clone(),
        generation: 0,
    })
}

/// Optimiser settings shared by every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub population_size: usize,
    /// Target sampling stride for the objectives, at every level.
    pub stride: usize,
    pub variation: VariationConfig,
    /// NSGA-III reference-point count; `None` uses 100 for two objectives,
    /// 120 for four, and 12 divisions otherwise.
    pub reference_points: Option<usize>,
    pub record_fronts: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            population_size: 100,
            stride: 5,
            variation: VariationConfig::default(),
            reference_points: None,
            record_fronts: false,
        }
    }
}

impl RunSettings {
    pub fn reference_divisions(&self, n_obj: usize) -> usize {
        match (self.reference_points, n_obj) {
            (Some(count), _) => divisions_for_count(n_obj, count),
            (None, 1) => 1,
            (None, 2) => divisions_for_count(2, 100),
            (None, 4) => divisions_for_count(4, 120),
            (None, _) => 12,
        }
    }
}

/// Population state at the end of one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSnapshot {
    pub level: usize,
    pub lattice: LatticeConfig,
    pub range: f64,
    pub evaluations: usize,
    pub genes: Vec<Vec<f64>>,
    pub objectives: Vec<ObjectiveVector>,
    /// Per-generation fronts when recording is on; dumped separately as CSV.
    #[serde(skip)]
    pub fronts: Vec<FrontRecord>,
}

/// Runs `algorithm` level by level. Level 1 starts from a random population
/// drawn from `seed` alone, so every algorithm shares it for a given seed.
pub fn run_coarse_to_fine(
    algorithm: Algorithm,
    plans: &[LevelPlan],
    n_groups: usize,
    seed: u64,
    settings: &RunSettings,
) -> Result<RegistrationResult> {
    let first = plans.first().ok_or_else(|| Error::Config("no pyramid levels planned".into()))?;
    if algorithm == Algorithm::Ga && n_groups != 1 {
        return Err(Error::Config(format!("ga needs exactly one group, got {n_groups}")));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop = random_population_with(settings.population_size, &first.bounds(), &mut init_rng)?;
    let mut history = Vec::with_capacity(plans.len());
    let survival = match algorithm {
        Algorithm::Ga => None,
        Algorithm::Nsga2 => Some(Survival::Nsga2),
        Algorithm::Nsga3 => Some(Survival::Nsga3(das_dennis_points(
            n_groups,
            settings.reference_divisions(n_groups),
        )?)),
    };

    for (k, plan) in plans.iter().enumerate() {
        if k > 0 {
            pop = inherit_population(&pop, &plans[k - 1].lattice, &plan.lattice, &plan.bounds())?;
        }
        let part = partition_for_level(&plan.lattice, n_groups)?;
        let ev = Evaluator::new(&plan.template, &plan.target, &part, plan.lattice, settings.stride)?;
        let cfg = plan.lattice;
        let eval = |g: &[f64]| ev.evaluate(&ControlMesh::from_genes(cfg, g).expect("gene count matches"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(plan.level as u64);

        let (next, evaluations, fronts) = match &survival {
            None => {
                let out = run_simple_ga(|g| eval(g)[0], pop, plan.eval_budget, &settings.variation, &mut rng)?;
                (out.population, out.evaluations, Vec::new())
            }
            Some(s) => {
                let out = run_nsga(
                    eval,
                    pop,
                    plan.eval_budget,
                    s,
                    &settings.variation,
                    &mut rng,
                    settings.record_fronts,
                )?;
                (out.population, out.evaluations, out.front_log)
            }
        };
        pop = next;
        history.push(LevelSnapshot {
            level: plan.level,
            lattice: plan.lattice,
            range: plan.range,
            evaluations,
            genes: pop.members.iter().map(|m| m.genes.clone()).collect(),
            objectives: pop.objective_matrix()?,
            fronts,
        });
    }

    let finest = plans.last().unwrap();
    let part = partition_for_level(&finest.lattice, n_groups)?;
    let best_index = select_best(&pop)?;
    let agg = aggregate_pareto(&pop, &part, &finest.lattice)?;
    let ev = Evaluator::new(&finest.template, &finest.target, &part, finest.lattice, settings.stride)?;
    let post_objectives = ev.evaluate_genes(&agg.genes)?;
    let pareto_front = fast_nondominated_sort(&pop.objective_matrix()?).fronts.swap_remove(0);

    Ok(RegistrationResult {
        algorithm,
        n_groups,
        seed,
        lattice: finest.lattice,
        best: pop.members[best_index].clone(),
        best_index,
        post_processed: Individual {
            genes: agg.genes,
            objectives: Some(post_objectives),
        },
        provenance: agg.provenance,
        pareto_front,
        final_population: pop,
        per_level_history: history,
        metrics: None,
    })
}
