//! Real-coded genotypes, SBX crossover, polynomial mutation and the elitist
//! simple GA. All fitness values are minimised.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objectives::ObjectiveVector;
use crate::{Error, Result};

/// Per-gene `[lo, hi]` ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::LengthMismatch(lo.len(), hi.len()));
        }
        for (index, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidBounds { index, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    /// `[-range, range]` for every gene.
    pub fn symmetric(n: usize, range: f64) -> Result<Self> {
        Self::uniform(n, -range, range)
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.lo[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.hi[i]
    }

    #[inline]
    pub fn clamp(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lo[i], self.hi[i])
    }

    pub fn contains(&self, genes: &[f64]) -> bool {
        genes.len() == self.len()
            && genes
                .iter()
                .enumerate()
                .all(|(i, &g)| g >= self.lo[i] && g <= self.hi[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub objectives: Option<ObjectiveVector>,
}

impl Individual {
    pub fn new(genes: Vec<f64>) -> Self {
        Self {
            genes,
            objectives: None,
        }
    }

    /// Sum of the cached objectives, if evaluated.
    pub fn objective_sum(&self) -> Option<f64> {
        self.objectives.as_ref().map(|o| o.iter().sum())
    }

    fn fitness(&self) -> f64 {
        self.objective_sum().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Individual>,
    pub bounds: Bounds,
    pub generation: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Objective vectors of all members; fails on the first unevaluated one.
    pub fn objective_matrix(&self) -> Result<Vec<ObjectiveVector>> {
        self.members
            .iter()
            .enumerate()
            .map(|(k, m)| m.objectives.clone().ok_or(Error::Unevaluated(k)))
            .collect()
    }
}

/// Variation operator settings. Defaults: SBX with probability 1 and index 15,
/// polynomial mutation with probability `1 / n_genes` and index 20.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationConfig {
    pub sbx_prob: f64,
    pub sbx_eta: f64,
    /// `None` means `1 / n_genes`.
    pub pm_prob: Option<f64>,
    pub pm_eta: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            sbx_prob: 1.0,
            sbx_eta: 15.0,
            pm_prob: None,
            pm_eta: 20.0,
        }
    }
}

impl VariationConfig {
    pub fn mutation_prob(&self, n_genes: usize) -> f64 {
        self.pm_prob.unwrap_or(1.0 / n_genes.max(1) as f64)
    }
}

pub fn random_population(size: usize, bounds: &Bounds, rng_seed: u64) -> Result<Population> {
    random_population_with(size, bounds, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Uniform draws within the bounds; genes are filled member by member.
pub fn random_population_with(size: usize, bounds: &Bounds, rng: &mut impl Rng) -> Result<Population> {
    if size < 2 {
        return Err(Error::Config(format!("population size {size} must be at least 2")));
    }
    let members = (0..size)
        .map(|_| {
            let genes = (0..bounds.len())
                .map(|i| bounds.lo(i) + (bounds.hi(i) - bounds.lo(i)) * rng.gen::<f64>())
                .collect();
            Individual::new(genes)
        })
        .collect();
    Ok(Population {
        members,
        bounds: bounds.clone(),
        generation: 0,
    })
}

/// SBX of one gene pair for a given uniform draw `u`.
pub fn sbx_pair(x1: f64, x2: f64, u: f64, eta: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    (
        0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2),
        0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2),
    )
}

/// Simulated binary crossover. With probability `prob` the pair is recombined;
/// each differing gene is then crossed with probability 1/2.
pub fn sbx_crossover(
    a: &Individual,
    b: &Individual,
    bounds: &Bounds,
    prob: f64,
    dist_index: f64,
    rng: &mut impl Rng,
) -> (Individual, Individual) {
    let mut c1 = a.genes.clone();
    let mut c2 = b.genes.clone();
    if rng.gen::<f64>() < prob {
        for i in 0..c1.len() {
            if rng.gen::<f64>() < 0.5 && (c1[i] - c2[i]).abs() > 1e-14 {
                let (y1, y2) = sbx_pair(c1[i], c2[i], rng.gen::<f64>(), dist_index);
                c1[i] = bounds.clamp(i, y1);
                c2[i] = bounds.clamp(i, y2);
            }
        }
    }
    (Individual::new(c1), Individual::new(c2))
}

/// Bounded polynomial mutation step of a gene for a uniform draw `u`.
pub fn pm_perturb(x: f64, lo: f64, hi: f64, u: f64, eta: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let d1 = (x - lo) / span;
    let d2 = (hi - x) / span;
    let power = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(power) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(power)
    };
    (x + dq * span).clamp(lo, hi)
}

pub fn polynomial_mutation(
    ind: &Individual,
    bounds: &Bounds,
    prob: f64,
    dist_index: f64,
    rng: &mut impl Rng,
) -> Individual {
    let genes = ind
        .genes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if rng.gen::<f64>() < prob {
                pm_perturb(x, bounds.lo(i), bounds.hi(i), rng.gen::<f64>(), dist_index)
            } else {
                x
            }
        })
        .collect();
    Individual::new(genes)
}

/// Produces `n` children from parents chosen by `select`, pairwise SBX then
/// mutation. RNG draws happen in a fixed order.
pub(crate) fn breed<R: Rng>(
    parents: &[Individual],
    n: usize,
    bounds: &Bounds,
    cfg: &VariationConfig,
    rng: &mut R,
    mut select: impl FnMut(&mut R) -> usize,
) -> Vec<Individual> {
    let pm_prob = cfg.mutation_prob(bounds.len());
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let p1 = select(rng);
        let p2 = select(rng);
        let (c1, c2) = sbx_crossover(&parents[p1], &parents[p2], bounds, cfg.sbx_prob, cfg.sbx_eta, rng);
        out.push(polynomial_mutation(&c1, bounds, pm_prob, cfg.pm_eta, rng));
        if out.len() < n {
            out.push(polynomial_mutation(&c2, bounds, pm_prob, cfg.pm_eta, rng));
        }
    }
    out
}

/// Evaluates every member lacking objectives, in parallel; returns the number
/// of evaluations spent. Results land in member order.
pub(crate) fn evaluate_missing<F>(members: &mut [Individual], eval: &F) -> usize
where
    F: Fn(&[f64]) -> ObjectiveVector + Sync,
{
    let pending: Vec<&mut Individual> = members.iter_mut().filter(|m| m.objectives.is_none()).collect();
    let n = pending.len();
    pending.into_par_iter().for_each(|m| {
        m.objectives = Some(eval(&m.genes));
    });
    n
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Individual,
    pub population: Population,
    /// Best-so-far fitness after the initial evaluation and each generation.
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

/// Elitist simple GA on a scalar fitness (lower is better).
///
/// Binary tournament picks parents, SBX plus mutation produce up to `|P|`
/// offspring, which replace the parents; the best of `P_t ∪ Q_t` always
/// survives. Stops once `eval_budget` calls to `eval_fn` have been made,
/// counting the initial population.
pub fn run_simple_ga<F>(
    eval_fn: F,
    mut pop: Population,
    eval_budget: usize,
    cfg: &VariationConfig,
    rng: &mut impl Rng,
) -> Result<GaOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let size = pop.len();
    if size < 2 {
        return Err(Error::EmptyPopulation);
    }
    if eval_budget < size {
        return Err(Error::Config(format!(
            "evaluation budget {eval_budget} is smaller than the population ({size})"
        )));
    }
    let scalar = |g: &[f64]| vec![eval_fn(g)];
    let mut evaluations = evaluate_missing(&mut pop.members, &scalar);
    let mut best = best_of(&pop.members).clone();
    let mut best_history = vec![best.fitness()];

    while evaluations < eval_budget {
        let n_off = size.min(eval_budget - evaluations);
        let parents = &pop.members;
        let mut offspring = breed(parents, n_off, &pop.bounds, cfg, rng, |r| {
            let a = r.gen_range(0..size);
            let b = r.gen_range(0..size);
            if parents[b].fitness() < parents[a].fitness() {
                b
            } else {
                a
            }
        });
        evaluations += evaluate_missing(&mut offspring, &scalar);

        let elite = best_of(&pop.members).clone();
        if offspring.len() < size {
            // Budget tail: keep the strongest parents to hold |P| fixed.
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&a, &b| pop.members[a].fitness().total_cmp(&pop.members[b].fitness()));
            let missing = size - offspring.len();
            offspring.extend(order[..missing].iter().map(|&k| pop.members[k].clone()));
        }
        if elite.fitness() < best_of(&offspring).fitness() {
            let worst = (0..offspring.len())
                .max_by(|&a, &b| {
                    offspring[a]
                        .fitness()
                        .total_cmp(&offspring[b].fitness())
                        .then(b.cmp(&a))
                })
                .expect("non-empty offspring");
            offspring[worst] = elite;
        }
        pop.members = offspring;
        pop.generation += 1;

        let gen_best = best_of(&pop.members);
        if gen_best.fitness() < best.fitness() {
            best = gen_best.clone();
        }
        best_history.push(best.fitness());
    }

    Ok(GaOutcome {
        best,
        population: pop,
        best_history,
        evaluations,
    })
}

/// Lowest fitness, ties to the lower index.
fn best_of(members: &[Individual]) -> &Individual {
    members
        .iter()
        .reduce(|a, b| if b.fitness() < a.fitness() { b } else { a })
        .expect("non-empty population")
}
