//! NSGA-II and NSGA-III machinery over objective vectors (minimisation).

use std::cmp::Ordering;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::evolution::{breed, evaluate_missing, Individual, Population, VariationConfig};
use crate::objectives::ObjectiveVector;
use crate::{Error, Result};

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Non-dominated fronts `F_1, F_2, ...` as index sets (ascending within a front).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrontPartition {
    pub fronts: Vec<Vec<usize>>,
    /// 0-based front index of every input.
    pub rank: Vec<usize>,
}

/// Deb's fast non-dominated sort, `O(M N^2)`.
pub fn fast_nondominated_sort<V: AsRef<[f64]>>(objs: &[V]) -> FrontPartition {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in p + 1..n {
            let (a, b) = (objs[p].as_ref(), objs[q].as_ref());
            if dominates_unchecked(a, b) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates_unchecked(b, a) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| domination_count[p] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            rank[p] = fronts.len();
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    FrontPartition { fronts, rank }
}

/// NSGA-II crowding distance within one front.
///
/// Boundary members get `+inf`; interior members sum `(next - prev) / (max - min)`
/// per objective. Exact duplicates share one entry: the first copy gets the
/// distance, later copies get 0.
pub fn crowding_distance<V: AsRef<[f64]>>(front_objs: &[V]) -> Vec<f64> {
    let n = front_objs.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let unique: Vec<usize> = (0..n)
        .filter(|&k| (0..k).all(|l| front_objs[l].as_ref() != front_objs[k].as_ref()))
        .collect();
    let mut dist = vec![0.0; n];
    if unique.len() <= 2 {
        for &k in &unique {
            dist[k] = f64::INFINITY;
        }
        return dist;
    }
    let m = front_objs[0].as_ref().len();
    let mut order = unique.clone();
    for obj in 0..m {
        let val = |k: usize| front_objs[k].as_ref()[obj];
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
        let lo = val(order[0]);
        let hi = val(*order.last().unwrap());
        dist[order[0]] = f64::INFINITY;
        dist[*order.last().unwrap()] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (val(w[2]) - val(w[0])) / range;
        }
    }
    dist
}

/// Splits fronts into the fully admitted prefix and the front that overflows `k`.
fn admit_fronts(fronts: &FrontPartition, k: usize) -> (Vec<usize>, Option<&[usize]>) {
    let mut selected = Vec::with_capacity(k);
    for front in &fronts.fronts {
        if selected.len() + front.len() <= k {
            selected.extend_from_slice(front);
            if selected.len() == k {
                return (selected, None);
            }
        } else {
            return (selected, Some(front));
        }
    }
    (selected, None)
}

/// Whole fronts first, then the overflowing front by descending crowding
/// distance (ties to the lower index).
pub fn nsga2_survivor_select<V: AsRef<[f64]>>(objs: &[V], k: usize) -> Vec<usize> {
    let k = k.min(objs.len());
    let fronts = fast_nondominated_sort(objs);
    let (mut selected, partial) = admit_fronts(&fronts, k);
    if let Some(front) = partial {
        let members: Vec<&[f64]> = front.iter().map(|&i| objs[i].as_ref()).collect();
        let cd = crowding_distance(&members);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(front[a].cmp(&front[b])));
        let missing = k - selected.len();
        selected.extend(order[..missing].iter().map(|&p| front[p]));
    }
    selected
}

/// Structured reference points on the unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSet {
    pub points: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_obj(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Das–Dennis lattice: all points with components in `{0, 1/p, ..., 1}` summing to 1.
pub fn das_dennis_points(n_obj: usize, divisions: usize) -> Result<ReferenceSet> {
    if n_obj == 0 || divisions == 0 {
        return Err(Error::Config(format!(
            "reference lattice needs n_obj >= 1 and divisions >= 1 (got {n_obj}, {divisions})"
        )));
    }
    fn recurse(left: usize, depth: usize, divisions: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if depth == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / divisions as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            recurse(left - c, depth - 1, divisions, cur, out);
            cur.pop();
        }
    }
    let mut points = Vec::new();
    recurse(divisions, n_obj, divisions, &mut Vec::with_capacity(n_obj), &mut points);
    Ok(ReferenceSet { points })
}

/// Smallest division count whose Das–Dennis lattice has at least `count` points.
pub fn divisions_for_count(n_obj: usize, count: usize) -> usize {
    let mut p = 1;
    while binomial(p + n_obj - 1, n_obj - 1) < count {
        p += 1;
    }
    p
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ideal-point translation and hyperplane intercepts over `members`. Falls
/// back to per-objective maxima when the extreme points are degenerate.
fn normalize(objs: &[&[f64]]) -> Vec<Vec<f64>> {
    let m = objs[0].len();
    let ideal: Vec<f64> = (0..m)
        .map(|j| objs.iter().map(|o| o[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let translated: Vec<Vec<f64>> = objs
        .iter()
        .map(|o| o.iter().zip(&ideal).map(|(v, z)| v - z).collect())
        .collect();

    let extremes: Vec<Vec<f64>> = (0..m)
        .map(|axis| {
            let asf = |f: &[f64]| {
                f.iter()
                    .enumerate()
                    .map(|(j, v)| v / if j == axis { 1.0 } else { 1e-6 })
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            translated
                .iter()
                .min_by(|a, b| asf(a).total_cmp(&asf(b)).then_with(|| lexicographic(a, b)))
                .expect("non-empty")
                .clone()
        })
        .collect();

    let maxima: Vec<f64> = (0..m)
        .map(|j| translated.iter().map(|f| f[j]).fold(0.0, f64::max))
        .collect();
    let intercepts = solve_linear(extremes, vec![1.0; m])
        .map(|b| b.iter().map(|v| 1.0 / v).collect::<Vec<f64>>())
        .filter(|a| a.iter().all(|&v| v.is_finite() && v > 1e-6))
        .unwrap_or(maxima);
    let intercepts: Vec<f64> = intercepts
        .into_iter()
        .map(|a| if a > 1e-12 { a } else { 1.0 })
        .collect();

    translated
        .into_iter()
        .map(|f| f.iter().zip(&intercepts).map(|(v, a)| v / a).collect())
        .collect()
}

fn perpendicular_distance(f: &[f64], w: &[f64]) -> f64 {
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let t = f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / ww;
    f.iter()
        .zip(w)
        .map(|(a, b)| (a - t * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// NSGA-III environmental selection.
///
/// Whole fronts are admitted as in NSGA-II. For the overflowing front `F_l`,
/// objectives of `S = F_1 ∪ ... ∪ F_l` are normalised, every member is
/// associated with its nearest reference line, and the remaining slots are
/// filled by niching: a least-crowded line is drawn at random; if nobody from
/// `S \ F_l` sits on it, its closest `F_l` member is taken, otherwise a random
/// associated one. Candidates are ordered by objective vector (then index)
/// before any random draw, so the selected set does not depend on input order
/// for distinct vectors.
pub fn nsga3_survivor_select<V: AsRef<[f64]>>(
    objs: &[V],
    k: usize,
    refs: &ReferenceSet,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let k = k.min(objs.len());
    let fronts = fast_nondominated_sort(objs);
    let (mut selected, partial) = admit_fronts(&fronts, k);
    let Some(last) = partial else {
        return selected;
    };
    let pool: Vec<usize> = selected.iter().chain(last).copied().collect();
    let pool_objs: Vec<&[f64]> = pool.iter().map(|&i| objs[i].as_ref()).collect();
    let normalized = normalize(&pool_objs);

    let mut assoc = Vec::with_capacity(pool.len());
    for f in &normalized {
        let (line, dist) = refs
            .points
            .iter()
            .enumerate()
            .map(|(r, w)| (r, perpendicular_distance(f, w)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty reference set");
        assoc.push((line, dist));
    }

    let n_fixed = selected.len();
    let mut niche = vec![0usize; refs.len()];
    for &(line, _) in &assoc[..n_fixed] {
        niche[line] += 1;
    }
    // Pool positions of F_l members, canonically ordered.
    let mut candidates: Vec<usize> = (n_fixed..pool.len()).collect();
    candidates.sort_by(|&a, &b| lexicographic(pool_objs[a], pool_objs[b]).then(pool[a].cmp(&pool[b])));
    let mut active = vec![true; refs.len()];

    while selected.len() < k {
        let min_count = (0..refs.len())
            .filter(|&r| active[r])
            .map(|r| niche[r])
            .min()
            .expect("some reference line stays active while candidates remain");
        let lines: Vec<usize> = (0..refs.len()).filter(|&r| active[r] && niche[r] == min_count).collect();
        let line = lines[rng.gen_range(0..lines.len())];
        let members: Vec<usize> = candidates.iter().copied().filter(|&c| assoc[c].0 == line).collect();
        if members.is_empty() {
            active[line] = false;
            continue;
        }
        let pick = if niche[line] == 0 {
            *members
                .iter()
                .min_by(|&&a, &&b| assoc[a].1.total_cmp(&assoc[b].1))
                .expect("non-empty")
        } else {
            members[rng.gen_range(0..members.len())]
        };
        niche[line] += 1;
        candidates.retain(|&c| c != pick);
        selected.push(pool[pick]);
    }
    selected
}

/// Survivor-selection scheme of a multi-objective run.
#[derive(Debug, Clone)]
pub enum Survival {
    Nsga2,
    Nsga3(ReferenceSet),
}

/// One row of the optional per-generation front dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontRecord {
    pub generation: usize,
    pub member: usize,
    pub objectives: ObjectiveVector,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct NsgaOutcome {
    pub population: Population,
    pub evaluations: usize,
    pub front_log: Vec<FrontRecord>,
}

/// Generational NSGA loop: binary tournament on (rank, crowding) for NSGA-II
/// or (rank, coin flip) for NSGA-III, SBX plus mutation for `|P|` offspring,
/// survivor selection from `P_t ∪ Q_t`. The initial population counts
/// against `eval_budget`.
pub fn run_nsga<F>(
    eval_fn: F,
    mut pop: Population,
    eval_budget: usize,
    survival: &Survival,
    cfg: &VariationConfig,
    rng: &mut impl Rng,
    record_fronts: bool,
) -> Result<NsgaOutcome>
where
    F: Fn(&[f64]) -> ObjectiveVector + Sync,
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
    let mut evaluations = evaluate_missing(&mut pop.members, &eval_fn);
    let mut front_log = Vec::new();

    loop {
        let objs = pop.objective_matrix()?;
        let fronts = fast_nondominated_sort(&objs);
        if record_fronts {
            front_log.extend(objs.iter().enumerate().map(|(member, o)| FrontRecord {
                generation: pop.generation,
                member,
                objectives: o.clone(),
                rank: fronts.rank[member],
            }));
        }
        if evaluations >= eval_budget {
            break;
        }
        let crowding = match survival {
            Survival::Nsga2 => {
                let mut cd = vec![0.0; size];
                for front in &fronts.fronts {
                    let members: Vec<&[f64]> = front.iter().map(|&i| objs[i].as_slice()).collect();
                    for (&i, d) in front.iter().zip(crowding_distance(&members)) {
                        cd[i] = d;
                    }
                }
                Some(cd)
            }
            Survival::Nsga3(_) => None,
        };

        let n_off = size.min(eval_budget - evaluations);
        let rank = &fronts.rank;
        let mut offspring = breed(&pop.members, n_off, &pop.bounds, cfg, rng, |r| {
            let a = r.gen_range(0..size);
            let b = r.gen_range(0..size);
            match rank[a].cmp(&rank[b]) {
                Ordering::Less => a,
                Ordering::Greater => b,
                Ordering::Equal => match &crowding {
                    Some(cd) => {
                        if cd[b] > cd[a] {
                            b
                        } else {
                            a
                        }
                    }
                    None => {
                        if r.gen::<bool>() {
                            a
                        } else {
                            b
                        }
                    }
                },
            }
        });
        evaluations += evaluate_missing(&mut offspring, &eval_fn);

        let mut pool: Vec<Individual> = std::mem::take(&mut pop.members);
        pool.extend(offspring);
        let pool_objs: Vec<&[f64]> = pool
            .iter()
            .map(|m| m.objectives.as_deref().expect("evaluated"))
            .collect();
        let mut chosen = match survival {
            Survival::Nsga2 => nsga2_survivor_select(&pool_objs, size),
            Survival::Nsga3(refs) => nsga3_survivor_select(&pool_objs, size, refs, rng),
        };
        // Keep survivors in pool order so member indices stay stable.
        chosen.sort_unstable();
        let mut keep = vec![false; pool.len()];
        for &c in &chosen {
            keep[c] = true;
        }
        pop.members = pool
            .into_iter()
            .zip(keep)
            .filter_map(|(m, k)| k.then_some(m))
            .collect();
        pop.generation += 1;
    }

    Ok(NsgaOutcome {
        population: pop,
        evaluations,
        front_log,
    })
}

/// CSV dump: `generation,member,f1..fM,rank`.
pub fn write_front_csv(records: &[FrontRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = records.first().map_or(0, |r| r.objectives.len());
    let mut header = vec!["generation".to_string(), "member".to_string()];
    header.extend((1..=m).map(|i| format!("f{i}")));
    header.push("rank".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.generation.to_string(), r.member.to_string()];
        row.extend(r.objectives.iter().map(|v| v.to_string()));
        row.push((r.rank + 1).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{random_population, Bounds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(a: &[f64]) -> Vec<f64> {
        a.to_vec()
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[2.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(dominates(&[1.0, 2.0], &[1.0, 2.5]).unwrap());
        assert!(matches!(dominates(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn sort_examples() {
        let objs = vec![v(&[1.0, 2.0]), v(&[2.0, 1.0]), v(&[1.5, 1.5]), v(&[3.0, 3.0])];
        let f = fast_nondominated_sort(&objs);
        assert_eq!(f.fronts, vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(f.rank, vec![0, 0, 0, 1]);

        let same = vec![v(&[1.0, 1.0]); 5];
        assert_eq!(fast_nondominated_sort(&same).fronts, vec![vec![0, 1, 2, 3, 4]]);

        let chain: Vec<_> = (0..6).rev().map(|i| v(&[i as f64, i as f64])).collect();
        let f = fast_nondominated_sort(&chain);
        assert_eq!(f.fronts.len(), 6);
        assert_eq!(f.fronts[0], vec![5]);
        assert_eq!(f.fronts[5], vec![0]);
    }

    #[test]
    fn crowding_examples() {
        let front = vec![v(&[1.0, 2.0]), v(&[1.5, 1.5]), v(&[2.0, 1.0])];
        let cd = crowding_distance(&front);
        assert!(cd[0].is_infinite() && cd[2].is_infinite());
        assert!((cd[1] - 2.0).abs() < 1e-12);
        assert!(crowding_distance(&[v(&[1.0, 1.0]), v(&[2.0, 0.0])]).iter().all(|d| d.is_infinite()));
        assert!(crowding_distance::<Vec<f64>>(&[]).is_empty());

        let dup = vec![v(&[1.0, 3.0]), v(&[2.0, 2.0]), v(&[2.0, 2.0]), v(&[3.0, 1.0])];
        let cd = crowding_distance(&dup);
        assert_eq!(cd[2], 0.0);
        assert!((cd[1] - 2.0).abs() < 1e-12);

        let flat = vec![v(&[1.0, 5.0]), v(&[1.0, 4.0]), v(&[1.0, 3.0])];
        let cd = crowding_distance(&flat);
        assert!((cd[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nsga2_selection_examples() {
        let objs = vec![v(&[1.0, 2.0]), v(&[2.0, 1.0]), v(&[1.5, 1.5]), v(&[3.0, 3.0])];
        let mut all = nsga2_survivor_select(&objs, 4);
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(nsga2_survivor_select(&objs, 3), vec![0, 1, 2]);
        assert_eq!(nsga2_survivor_select(&objs, 2), vec![0, 1]);
    }

    #[test]
    fn reference_lattices() {
        assert_eq!(das_dennis_points(2, 99).unwrap().len(), 100);
        assert_eq!(das_dennis_points(4, 7).unwrap().len(), 120);
        assert_eq!(das_dennis_points(2, 1).unwrap().points, vec![v(&[0.0, 1.0]), v(&[1.0, 0.0])]);
        for m in 1..=5 {
            for p in 1..=8 {
                let r = das_dennis_points(m, p).unwrap();
                assert_eq!(r.len(), binomial(p + m - 1, m - 1));
                assert!(r.points.iter().all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
            }
        }
        assert_eq!(divisions_for_count(2, 100), 99);
        assert_eq!(divisions_for_count(4, 120), 7);
        assert!(das_dennis_points(2, 0).is_err());
    }

    #[test]
    fn intercepts_recover_scaled_axes() {
        let a = [0.0, 4.0];
        let b = [2.0, 0.0];
        let c = [1.0, 2.0];
        let n = normalize(&[&a, &b, &c]);
        assert!((n[2][0] - 0.5).abs() < 1e-9 && (n[2][1] - 0.5).abs() < 1e-9);
        // Degenerate: all extremes equal -> max fallback with unit guard.
        let d = [1.0, 1.0];
        let n = normalize(&[&d, &d]);
        assert_eq!(n[0], vec![0.0, 0.0]);
    }

    #[test]
    fn nsga3_single_reference_picks_closest() {
        let refs = ReferenceSet { points: vec![v(&[0.5, 0.5])] };
        // Non-dominated front; distances to the diagonal grow away from the centre.
        let objs = vec![v(&[0.0, 4.0]), v(&[1.0, 3.0]), v(&[2.0, 2.0]), v(&[3.0, 1.0]), v(&[4.0, 0.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let chosen = nsga3_survivor_select(&objs, 1, &refs, &mut rng);
        assert_eq!(chosen, vec![2]);
        let f1 = vec![v(&[1.0, 1.0]), v(&[5.0, 5.0])];
        assert_eq!(nsga3_survivor_select(&f1, 1, &refs, &mut rng), vec![0]);
    }

    #[test]
    fn nsga3_permutation_invariance() {
        let refs = das_dennis_points(2, 99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let objs: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let t: f64 = rng.gen();
                let s: f64 = rng.gen_range(0.0..0.5);
                v(&[t + s, (1.0 - t) + s * 0.7])
            })
            .collect();
        let pick = |o: &[Vec<f64>]| {
            let mut r = ChaCha8Rng::seed_from_u64(77);
            let mut s: Vec<Vec<f64>> = nsga3_survivor_select(o, 25, &refs, &mut r)
                .into_iter()
                .map(|i| o[i].clone())
                .collect();
            s.sort_by(|a, b| lexicographic(a, b));
            s
        };
        let base = pick(&objs);
        assert_eq!(base.len(), 25);
        let mut shuffled = objs.clone();
        shuffled.reverse();
        shuffled.rotate_left(17);
        assert_eq!(pick(&shuffled), base);
    }

    #[test]
    fn nsga_runs_keep_size_and_first_front() {
        let b = Bounds::uniform(6, 0.0, 1.0).unwrap();
        let zdt1 = |g: &[f64]| {
            let f1 = g[0];
            let h = 1.0 + 9.0 * g[1..].iter().sum::<f64>() / (g.len() - 1) as f64;
            vec![f1, h * (1.0 - (f1 / h).sqrt())]
        };
        for survival in [Survival::Nsga2, Survival::Nsga3(das_dennis_points(2, 99).unwrap())] {
            let pop = random_population(40, &b, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let out = run_nsga(zdt1, pop, 4000, &survival, &VariationConfig::default(), &mut rng, true).unwrap();
            assert_eq!(out.population.len(), 40);
            assert_eq!(out.evaluations, 4000);
            // Converged close to g = 1 on ZDT1.
            let objs = out.population.objective_matrix().unwrap();
            let worst_gap = objs
                .iter()
                .map(|o| o[1] - (1.0 - o[0].sqrt()))
                .fold(0.0, f64::max);
            assert!(worst_gap < 0.5, "{worst_gap}");
            assert!(!out.front_log.is_empty());
        }
    }

    #[test]
    fn front_csv_layout() {
        let recs = vec![FrontRecord { generation: 0, member: 1, objectives: v(&[0.5, 2.0]), rank: 0 }];
        let mut buf = Vec::new();
        write_front_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "generation,member,f1,f2,rank\n0,1,0.5,2,1\n");
    }
}
