//! Experiment design tools: variance-maximizing product subsets under group
//! balance constraints, and a ground-truth synthetic choice generator used
//! by oracles and end-to-end tests.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{
    ChoiceObservation, DataType, Dataset, EmbeddingMatrix, Product, SourceDescriptor,
};
use crate::draws::inverse_normal_cdf;
use crate::error::{Error, Result};
use crate::mixlogit::RandomVar;
use crate::pca::PcStore;
use crate::rng::Stream;

/// Group label per catalog product plus per-group count bounds for a target
/// subset size.
#[derive(Clone, Debug)]
pub struct SubsetConstraint {
    pub groups: Vec<String>,
    pub target_size: usize,
    /// Inclusive (min, max) count per group label.
    pub bounds: BTreeMap<String, (usize, usize)>,
}

impl SubsetConstraint {
    /// Balance rule: each group's count stays within one of
    /// `target_size / n_groups`.
    pub fn balanced(groups: Vec<String>, target_size: usize) -> Result<Self> {
        let labels: BTreeMap<String, usize> =
            groups.iter().fold(BTreeMap::new(), |mut acc, g| {
                *acc.entry(g.clone()).or_insert(0) += 1;
                acc
            });
        if labels.is_empty() {
            return Err(Error::Validation("no products to select from".into()));
        }
        let per_group = target_size as f64 / labels.len() as f64;
        let lo = (per_group - 1.0).ceil().max(0.0) as usize;
        let hi = (per_group + 1.0).floor() as usize;
        let bounds = labels
            .iter()
            .map(|(label, &available)| (label.clone(), (lo.min(available), hi.min(available))))
            .collect();
        let constraint = SubsetConstraint {
            groups,
            target_size,
            bounds,
        };
        constraint.validate()?;
        Ok(constraint)
    }

    pub fn exact_counts(groups: Vec<String>, counts: BTreeMap<String, usize>) -> Result<Self> {
        let target_size = counts.values().sum();
        let bounds = counts.into_iter().map(|(g, c)| (g, (c, c))).collect();
        let constraint = SubsetConstraint {
            groups,
            target_size,
            bounds,
        };
        constraint.validate()?;
        Ok(constraint)
    }

    fn group_members(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            members.entry(g.as_str()).or_default().push(i);
        }
        members
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 || self.target_size > self.groups.len() {
            return Err(Error::Validation(format!(
                "target size {} is infeasible for {} products",
                self.target_size,
                self.groups.len()
            )));
        }
        let members = self.group_members();
        let mut min_total = 0usize;
        let mut max_total = 0usize;
        for (label, idx) in &members {
            let Some(&(lo, hi)) = self.bounds.get(*label) else {
                return Err(Error::Validation(format!("no bounds for group {label}")));
            };
            if lo > hi || hi > idx.len() {
                return Err(Error::Validation(format!(
                    "group {label}: bounds ({lo},{hi}) infeasible with {} members",
                    idx.len()
                )));
            }
            min_total += lo;
            max_total += hi;
        }
        if self.target_size < min_total || self.target_size > max_total {
            return Err(Error::Validation(format!(
                "group bounds admit sizes {min_total}..{max_total}, not {}",
                self.target_size
            )));
        }
        Ok(())
    }

    /// All per-group count allocations consistent with the bounds.
    fn allocations(&self) -> Vec<BTreeMap<String, usize>> {
        let members = self.group_members();
        let labels: Vec<&str> = members.keys().copied().collect();
        let mut out = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        fn recurse(
            labels: &[&str],
            bounds: &BTreeMap<String, (usize, usize)>,
            remaining: usize,
            depth: usize,
            current: &mut Vec<usize>,
            out: &mut Vec<BTreeMap<String, usize>>,
        ) {
            if depth == labels.len() {
                if remaining == 0 {
                    out.push(
                        labels
                            .iter()
                            .zip(current.iter())
                            .map(|(l, c)| (l.to_string(), *c))
                            .collect(),
                    );
                }
                return;
            }
            let (lo, hi) = bounds[labels[depth]];
            for c in lo..=hi.min(remaining) {
                current.push(c);
                recurse(labels, bounds, remaining - c, depth + 1, current, out);
                current.pop();
            }
        }
        recurse(
            &labels,
            &self.bounds,
            self.target_size,
            0,
            &mut current,
            &mut out,
        );
        out
    }
}

/// Mean subset-variance objective over one or more embedding sources. The
/// per-source term is the trace of the subset's sample covariance,
/// optionally divided by the full-catalog trace.
pub struct SubsetObjective<'a> {
    sources: &'a [EmbeddingMatrix],
    normalize: bool,
    full_traces: Vec<f64>,
}

fn covariance_trace(matrix: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    (0..matrix.ncols())
        .map(|c| {
            let mean: f64 = rows.iter().map(|&r| matrix[(r, c)]).sum::<f64>() / nf;
            rows.iter()
                .map(|&r| (matrix[(r, c)] - mean).powi(2))
                .sum::<f64>()
                / (nf - 1.0)
        })
        .sum()
}

impl<'a> SubsetObjective<'a> {
    pub fn new(sources: &'a [EmbeddingMatrix], normalize: bool) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Validation("no embedding sources".into()));
        }
        let j = sources[0].n_products();
        if sources.iter().any(|s| s.n_products() != j) {
            return Err(Error::Validation(
                "embedding sources cover different catalogs".into(),
            ));
        }
        let all: Vec<usize> = (0..j).collect();
        let full_traces = sources
            .iter()
            .map(|s| covariance_trace(&s.values, &all))
            .collect();
        Ok(SubsetObjective {
            sources,
            normalize,
            full_traces,
        })
    }

    pub fn evaluate(&self, subset: &[usize]) -> f64 {
        let mut total = 0.0;
        for (source, &full) in self.sources.iter().zip(&self.full_traces) {
            let trace = covariance_trace(&source.values, subset);
            total += if self.normalize && full > 0.0 {
                trace / full
            } else {
                trace
            };
        }
        total / self.sources.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetSelection {
    pub indices: Vec<usize>,
    pub objective: f64,
}

/// A named subset-search mode.
pub trait SubsetSearch: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(
        &self,
        objective: &SubsetObjective<'_>,
        constraint: &SubsetConstraint,
        seed: u64,
    ) -> Result<SubsetSelection>;
}

pub const SUBSET_SEARCH_NAMES: [&str; 2] = ["exact", "local"];

pub fn subset_search_by_name(name: &str) -> Result<Box<dyn SubsetSearch>> {
    match name {
        "exact" => Ok(Box::new(ExactSearch)),
        "local" => Ok(Box::new(LocalSearch::default())),
        other => Err(Error::UnknownStrategy {
            kind: "subset search",
            name: other.to_string(),
            available: SUBSET_SEARCH_NAMES.to_vec(),
        }),
    }
}

/// Cap on the number of constrained subsets exact mode will enumerate.
pub const EXACT_ENUMERATION_CAP: u128 = 10_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Exhaustive enumeration of all constrained subsets.
pub struct ExactSearch;

impl SubsetSearch for ExactSearch {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn solve(
        &self,
        objective: &SubsetObjective<'_>,
        constraint: &SubsetConstraint,
        _seed: u64,
    ) -> Result<SubsetSelection> {
        constraint.validate()?;
        let members = constraint.group_members();
        let allocations = constraint.allocations();
        let total: u128 = allocations
            .iter()
            .map(|alloc| {
                alloc
                    .iter()
                    .map(|(label, &count)| binomial(members[label.as_str()].len(), count))
                    .product::<u128>()
            })
            .sum();
        if total > EXACT_ENUMERATION_CAP {
            return Err(Error::Validation(format!(
                "{total} constrained subsets exceed the exact-mode cap of {EXACT_ENUMERATION_CAP}; use local search"
            )));
        }

        let mut best: Option<SubsetSelection> = None;
        for alloc in &allocations {
            let per_group: Vec<Vec<Vec<usize>>> = members
                .iter()
                .map(|(label, idx)| crate::selection::combinations(idx, alloc[*label]))
                .collect();
            let mut choice = vec![0usize; per_group.len()];
            loop {
                let mut subset: Vec<usize> = Vec::with_capacity(constraint.target_size);
                for (g, combos) in per_group.iter().enumerate() {
                    subset.extend_from_slice(&combos[choice[g]]);
                }
                subset.sort_unstable();
                let value = objective.evaluate(&subset);
                let better = match &best {
                    Some(b) => value > b.objective,
                    None => true,
                };
                if better {
                    best = Some(SubsetSelection {
                        indices: subset,
                        objective: value,
                    });
                }
                // Odometer over per-group combination indices.
                let mut g = 0;
                loop {
                    if g == per_group.len() {
                        break;
                    }
                    choice[g] += 1;
                    if choice[g] < per_group[g].len() {
                        break;
                    }
                    choice[g] = 0;
                    g += 1;
                }
                if g == per_group.len() {
                    break;
                }
            }
        }
        best.ok_or_else(|| Error::Validation("no feasible subset".into()))
    }
}

/// Swap-based hill climbing from random feasible restarts.
pub struct LocalSearch {
    pub restarts: usize,
}

impl Default for LocalSearch {
    fn default() -> Self {
        LocalSearch { restarts: 50 }
    }
}

impl SubsetSearch for LocalSearch {
    fn name(&self) -> &'static str {
        "local"
    }

    fn solve(
        &self,
        objective: &SubsetObjective<'_>,
        constraint: &SubsetConstraint,
        seed: u64,
    ) -> Result<SubsetSelection> {
        constraint.validate()?;
        let allocations = constraint.allocations();
        let members = constraint.group_members();
        let n = constraint.groups.len();
        let mut best: Option<SubsetSelection> = None;

        for restart in 0..self.restarts {
            let mut stream = Stream::for_unit(seed, restart as u64);
            // Random feasible start: pick an allocation, then members.
            let alloc = &allocations[stream.next_below(allocations.len() as u64) as usize];
            let mut selected = vec![false; n];
            for (label, idx) in &members {
                let mut pool = idx.clone();
                stream.shuffle(&mut pool);
                for &i in pool.iter().take(alloc[*label]) {
                    selected[i] = true;
                }
            }
            let mut subset: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
            let mut value = objective.evaluate(&subset);

            // Best-improvement swaps until a local optimum.
            loop {
                let mut improvement: Option<(f64, usize, usize)> = None;
                let outside: Vec<usize> = (0..n).filter(|&i| !selected[i]).collect();
                for &out_item in &subset {
                    for &in_item in &outside {
                        // Count feasibility after swapping groups.
                        let g_out = constraint.groups[out_item].as_str();
                        let g_in = constraint.groups[in_item].as_str();
                        if g_out != g_in {
                            let count_out =
                                subset.iter().filter(|&&i| constraint.groups[i] == g_out).count();
                            let count_in =
                                subset.iter().filter(|&&i| constraint.groups[i] == g_in).count();
                            let (lo_out, _) = constraint.bounds[g_out];
                            let (_, hi_in) = constraint.bounds[g_in];
                            if count_out == lo_out || count_in == hi_in {
                                continue;
                            }
                        }
                        let mut trial: Vec<usize> = subset
                            .iter()
                            .copied()
                            .filter(|&i| i != out_item)
                            .chain(std::iter::once(in_item))
                            .collect();
                        trial.sort_unstable();
                        let trial_value = objective.evaluate(&trial);
                        if trial_value > value + 1e-15 {
                            let better = match improvement {
                                Some((v, _, _)) => trial_value > v,
                                None => true,
                            };
                            if better {
                                improvement = Some((trial_value, out_item, in_item));
                            }
                        }
                    }
                }
                let Some((new_value, out_item, in_item)) = improvement else {
                    break;
                };
                selected[out_item] = false;
                selected[in_item] = true;
                subset = (0..n).filter(|&i| selected[i]).collect();
                value = new_value;
            }

            let better = match &best {
                Some(b) => value > b.objective + 1e-15,
                None => true,
            };
            if better {
                best = Some(SubsetSelection {
                    indices: subset,
                    objective: value,
                });
            }
        }
        best.ok_or_else(|| Error::Validation("no feasible subset".into()))
    }
}

/// Convenience wrapper selecting the named search mode.
pub fn max_variance_subset(
    sources: &[EmbeddingMatrix],
    constraint: &SubsetConstraint,
    mode: &str,
    normalize: bool,
    seed: u64,
) -> Result<SubsetSelection> {
    let objective = SubsetObjective::new(sources, normalize)?;
    subset_search_by_name(mode)?.solve(&objective, constraint, seed)
}

/// Ground-truth parameters for the synthetic choice generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthParams {
    pub n_products: usize,
    pub alpha_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Fixed effect per product (conventionally 0 for the first).
    pub delta: Vec<f64>,
    /// Spread per random variable, keyed by name (`price`, `PC1`, ...).
    pub sigma: BTreeMap<String, f64>,
    /// Number of ground-truth component columns.
    pub pc_dims: usize,
    /// Component scores per product; generated when absent (orthogonal
    /// columns, unit-variance first column, geometrically decaying after).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_scores: Option<Vec<Vec<f64>>>,
    /// Discrete uniform price support.
    pub price_grid: Vec<f64>,
    /// Draw task-2 taste shocks afresh (the default) or reuse task-1 shocks.
    #[serde(default)]
    pub persist_epsilon: bool,
}

impl TruthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_products < 2 {
            return Err(Error::Validation("need at least two products".into()));
        }
        if self.delta.len() != self.n_products {
            return Err(Error::Validation(format!(
                "{} fixed effects for {} products",
                self.delta.len(),
                self.n_products
            )));
        }
        if self.price_grid.is_empty() || self.price_grid.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("bad price grid".into()));
        }
        if !self.alpha_mean.is_finite() || self.delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Validation("non-finite truth parameters".into()));
        }
        for (name, &s) in &self.sigma {
            let var: RandomVar = name.parse()?;
            if s < 0.0 || !s.is_finite() {
                return Err(Error::Validation(format!("sigma for {name} must be >= 0")));
            }
            if let RandomVar::Pc(i) = var {
                if i > self.pc_dims {
                    return Err(Error::Validation(format!(
                        "sigma references PC{i} but only {} dims exist",
                        self.pc_dims
                    )));
                }
            }
            if matches!(var, RandomVar::AttrPc(_)) {
                return Err(Error::Validation(
                    "the generator supports price and PC variables".into(),
                ));
            }
        }
        if let Some(scores) = &self.pc_scores {
            if scores.len() != self.n_products
                || scores.iter().any(|row| row.len() != self.pc_dims)
            {
                return Err(Error::Validation("pc_scores shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// True price grid as a default 3..7 dollar support.
    pub fn default_price_grid() -> Vec<f64> {
        vec![3.0, 4.0, 5.0, 6.0, 7.0]
    }
}

/// Exactly orthogonal centered columns with variances `decay^k`, the first
/// column unit variance.
fn generate_pc_matrix(n: usize, dims: usize, seed: u64) -> DMatrix<f64> {
    let mut stream = Stream::for_unit(seed, 0x9C5);
    let mut m = DMatrix::from_fn(n, dims, |_, _| inverse_normal_cdf(stream.next_unit()));
    let decay: f64 = 0.85;
    for c in 0..dims {
        // Center.
        let mean = m.column(c).sum() / n as f64;
        for r in 0..n {
            m[(r, c)] -= mean;
        }
        // Gram-Schmidt against earlier columns.
        for prev in 0..c {
            let prev_col = m.column(prev).into_owned();
            let denom = prev_col.dot(&prev_col);
            if denom > 0.0 {
                let coef = m.column(c).dot(&prev_col) / denom;
                let mut col = m.column_mut(c);
                col.axpy(-coef, &prev_col, 1.0);
            }
        }
        // Scale to the target sample variance.
        let var = m.column(c).iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
        let target = decay.powi(c as i32);
        let scale = (target / var).sqrt();
        for r in 0..n {
            m[(r, c)] *= scale;
        }
    }
    m
}

/// A generated dataset with its resolved truth and the exact component
/// store the utilities used.
#[derive(Clone, Debug)]
pub struct SyntheticOutput {
    pub dataset: Dataset,
    pub truth: TruthParams,
    pub pc_store: PcStore,
}

/// Simulates `n_individuals` two-task choice experiments from known
/// parameters. Prices are drawn from the discrete grid and ranks are a
/// fresh permutation per individual, both held fixed across the two tasks;
/// taste draws persist across tasks while choice shocks are redrawn for the
/// second task unless `persist_epsilon` is set.
pub fn generate_synthetic(truth: &TruthParams, n_individuals: usize, seed: u64) -> Result<SyntheticOutput> {
    truth.validate()?;
    if n_individuals == 0 {
        return Err(Error::Validation("need at least one individual".into()));
    }
    let n = truth.n_products;
    let width = (n as f64).log10().floor() as usize + 1;
    let ids: Vec<String> = (1..=n).map(|i| format!("p{i:0width$}")).collect();
    let catalog: Vec<Product> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Product::new(id, format!("Product {}", i + 1)))
        .collect();

    let pc = match &truth.pc_scores {
        Some(rows) => DMatrix::from_fn(n, truth.pc_dims, |r, c| rows[r][c]),
        None => generate_pc_matrix(n, truth.pc_dims, seed),
    };
    let mut resolved = truth.clone();
    resolved.pc_scores = Some(
        (0..n)
            .map(|r| (0..truth.pc_dims).map(|c| pc[(r, c)]).collect())
            .collect(),
    );

    // Random variables in canonical order with their spreads.
    let mut random_vars: Vec<(RandomVar, f64)> = truth
        .sigma
        .iter()
        .map(|(name, &s)| (name.parse::<RandomVar>().unwrap(), s))
        .collect();
    random_vars.sort_by_key(|(v, _)| *v);
    let gamma = truth.gamma.unwrap_or(0.0);
    let with_ranks = truth.gamma.is_some();

    let mut observations = Vec::with_capacity(2 * n_individuals);
    for i in 0..n_individuals {
        let mut stream = Stream::for_unit(seed, i as u64);
        let prices: Vec<f64> = (0..n)
            .map(|_| truth.price_grid[stream.next_below(truth.price_grid.len() as u64) as usize])
            .collect();
        let ranks: Vec<u32> = {
            let mut order: Vec<u32> = (1..=n as u32).collect();
            stream.shuffle(&mut order);
            order
        };
        let eta: Vec<f64> = random_vars
            .iter()
            .map(|_| inverse_normal_cdf(stream.next_unit()))
            .collect();

        let systematic: Vec<f64> = (0..n)
            .map(|j| {
                let mut alpha = truth.alpha_mean;
                let mut v = truth.delta[j];
                for ((var, spread), e) in random_vars.iter().zip(&eta) {
                    match var {
                        RandomVar::Price => alpha += spread * e,
                        RandomVar::Pc(c) => v += spread * e * pc[(j, c - 1)],
                        RandomVar::AttrPc(_) => unreachable!("rejected in validate"),
                    }
                }
                v += alpha * prices[j];
                if with_ranks {
                    v += gamma * ranks[j] as f64;
                }
                v
            })
            .collect();

        let shocks1: Vec<f64> = (0..n).map(|_| stream.next_gumbel()).collect();
        let first = (0..n)
            .max_by(|&a, &b| {
                let ua = systematic[a] + shocks1[a];
                let ub = systematic[b] + shocks1[b];
                ua.partial_cmp(&ub).unwrap().then(b.cmp(&a))
            })
            .unwrap();

        let remaining: Vec<usize> = (0..n).filter(|&j| j != first).collect();
        let shocks2: Vec<f64> = if truth.persist_epsilon {
            shocks1.clone()
        } else {
            (0..n).map(|_| stream.next_gumbel()).collect()
        };
        let second = *remaining
            .iter()
            .max_by(|&&a, &&b| {
                let ua = systematic[a] + shocks2[a];
                let ub = systematic[b] + shocks2[b];
                ua.partial_cmp(&ub).unwrap().then(b.cmp(&a))
            })
            .unwrap();

        // Task-2 display ranks compress to 1..n-1 preserving order.
        let mut remaining_by_rank: Vec<usize> = remaining.clone();
        remaining_by_rank.sort_by_key(|&j| ranks[j]);
        let mut rank2 = vec![0u32; n];
        for (pos, &j) in remaining_by_rank.iter().enumerate() {
            rank2[j] = pos as u32 + 1;
        }

        let individual_id = format!("i{i:07}");
        observations.push(ChoiceObservation {
            individual_id: individual_id.clone(),
            task: 1,
            offered: ids.clone(),
            prices: prices.clone(),
            ranks: with_ranks.then(|| ranks.clone()),
            chosen: ids[first].clone(),
        });
        observations.push(ChoiceObservation {
            individual_id,
            task: 2,
            offered: remaining.iter().map(|&j| ids[j].clone()).collect(),
            prices: remaining.iter().map(|&j| prices[j]).collect(),
            ranks: with_ranks.then(|| remaining.iter().map(|&j| rank2[j]).collect()),
            chosen: ids[second].clone(),
        });
    }

    let source = SourceDescriptor::new(DataType::Description, "truth");
    let embedding = EmbeddingMatrix::new(source.clone(), ids.clone(), pc.clone())?;
    let pc_store = PcStore::from_scores(source, ids, pc)?;
    let dataset = Dataset {
        catalog,
        observations,
        embeddings: vec![embedding],
    };
    dataset.validate()?;
    Ok(SyntheticOutput {
        dataset,
        truth: resolved,
        pc_store,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_sources(seed: u64, n: usize, dims: usize) -> Vec<EmbeddingMatrix> {
        let mut stream = Stream::new(seed);
        let mk = |stream: &mut Stream, model: &str| {
            EmbeddingMatrix::new(
                SourceDescriptor::new(DataType::Image, model),
                (0..n).map(|i| format!("p{i}")).collect(),
                DMatrix::from_fn(n, dims, |_, _| stream.next_unit() * 6.0 - 3.0),
            )
            .unwrap()
        };
        vec![mk(&mut stream, "m1"), mk(&mut stream, "m2")]
    }

    #[test]
    fn full_set_is_optimal_and_normalizes_to_one() {
        let sources = toy_sources(4, 6, 3);
        let groups: Vec<String> = (0..6).map(|i| format!("g{}", i % 2)).collect();
        let constraint = SubsetConstraint {
            groups: groups.clone(),
            target_size: 6,
            bounds: [("g0".to_string(), (3, 3)), ("g1".to_string(), (3, 3))]
                .into_iter()
                .collect(),
        };
        let selection = max_variance_subset(&sources, &constraint, "exact", true, 0).unwrap();
        assert_eq!(selection.indices, (0..6).collect::<Vec<_>>());
        assert_relative_eq!(selection.objective, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_matches_brute_force_oracle() {
        let sources = toy_sources(9, 9, 4);
        let groups: Vec<String> = (0..9).map(|i| format!("g{}", i / 3)).collect();
        let counts: BTreeMap<String, usize> = ["g0", "g1", "g2"]
            .iter()
            .map(|g| (g.to_string(), 2))
            .collect();
        let constraint = SubsetConstraint::exact_counts(groups.clone(), counts).unwrap();
        let objective = SubsetObjective::new(&sources, false).unwrap();
        let selection = ExactSearch.solve(&objective, &constraint, 0).unwrap();

        // Independent brute force: all 6-subsets filtered by group counts.
        let all: Vec<usize> = (0..9).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for subset in crate::selection::combinations(&all, 6) {
            let ok = (0..3).all(|g| {
                subset
                    .iter()
                    .filter(|&&i| groups[i] == format!("g{g}"))
                    .count()
                    == 2
            });
            if !ok {
                continue;
            }
            let v = objective.evaluate(&subset);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, subset));
            }
        }
        let (oracle_value, oracle_subset) = best.unwrap();
        assert_eq!(selection.indices, oracle_subset);
        assert_relative_eq!(selection.objective, oracle_value, epsilon = 1e-12);
    }

    #[test]
    fn balanced_constraint_matches_roughly_equal_rule() {
        // 60 products in three groups of 20, pick 10: counts must lie in
        // {3, 4} and a 4+3+3 split is feasible.
        let groups: Vec<String> = (0..60).map(|i| format!("g{}", i / 20)).collect();
        let constraint = SubsetConstraint::balanced(groups, 10).unwrap();
        for &(lo, hi) in constraint.bounds.values() {
            assert_eq!((lo, hi), (3, 4));
        }
        let allocations = constraint.allocations();
        assert!(allocations
            .iter()
            .any(|a| a.values().copied().collect::<Vec<_>>() == vec![4, 3, 3]));
    }

    #[test]
    fn infeasible_constraints_error() {
        let groups = vec!["a".to_string(), "a".to_string(), "b".to_string()];
        let counts: BTreeMap<String, usize> =
            [("a".to_string(), 3), ("b".to_string(), 1)].into_iter().collect();
        assert!(SubsetConstraint::exact_counts(groups, counts).is_err());
    }

    #[test]
    fn generator_is_reproducible_and_valid() {
        let truth = TruthParams {
            n_products: 5,
            alpha_mean: -1.0,
            gamma: Some(-0.1),
            delta: vec![0.0, 0.2, -0.2, 0.4, -0.4],
            sigma: [("PC1".to_string(), 1.0)].into_iter().collect(),
            pc_dims: 2,
            pc_scores: None,
            price_grid: TruthParams::default_price_grid(),
            persist_epsilon: false,
        };
        let a = generate_synthetic(&truth, 50, 7).unwrap();
        let b = generate_synthetic(&truth, 50, 7).unwrap();
        assert_eq!(a.dataset, b.dataset);
        a.dataset.validate().unwrap();
        assert_eq!(a.dataset.observations.len(), 100);
        // resolved truth records the actual component matrix
        assert!(a.truth.pc_scores.is_some());

        let c = generate_synthetic(&truth, 50, 8).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn uniform_truth_gives_uniform_first_choice_shares() {
        let truth = TruthParams {
            n_products: 4,
            alpha_mean: 0.0,
            gamma: None,
            delta: vec![0.0; 4],
            sigma: BTreeMap::new(),
            pc_dims: 1,
            pc_scores: None,
            price_grid: vec![5.0],
            persist_epsilon: false,
        };
        let n = 50_000;
        let out = generate_synthetic(&truth, n, 3).unwrap();
        let mut counts = vec![0usize; 4];
        for obs in out.dataset.first_choices() {
            counts[obs.offered.iter().position(|p| p == &obs.chosen).unwrap()] += 1;
        }
        // three binomial standard errors around 1/4
        let se = (0.25 * 0.75 / n as f64).sqrt();
        for &c in &counts {
            let share = c as f64 / n as f64;
            assert!(
                (share - 0.25).abs() < 3.0 * se + 1e-9,
                "share {share} out of range"
            );
        }
    }

    #[test]
    fn steep_price_coefficient_picks_cheapest() {
        let truth = TruthParams {
            n_products: 3,
            alpha_mean: -50.0,
            gamma: None,
            delta: vec![0.0; 3],
            sigma: BTreeMap::new(),
            pc_dims: 1,
            pc_scores: None,
            price_grid: vec![3.0, 7.0],
            persist_epsilon: false,
        };
        let out = generate_synthetic(&truth, 2000, 1).unwrap();
        let mut cheapest = 0usize;
        let mut total = 0usize;
        for obs in out.dataset.first_choices() {
            let min = obs.prices.iter().cloned().fold(f64::INFINITY, f64::min);
            let chosen_price = obs.prices[obs.chosen_index()];
            // ties in the grid mean several products can share the minimum
            if (chosen_price - min).abs() < 1e-12 {
                cheapest += 1;
            }
            total += 1;
        }
        assert!(cheapest as f64 / total as f64 > 0.99);
    }

    #[test]
    fn generated_pc_columns_are_orthogonal_with_decaying_variance() {
        let m = generate_pc_matrix(12, 4, 9);
        for a in 0..4 {
            let var = m.column(a).iter().map(|v| v * v).sum::<f64>() / 11.0;
            assert_relative_eq!(var, 0.85f64.powi(a as i32), epsilon = 1e-10);
            for b in 0..a {
                assert!(m.column(a).dot(&m.column(b)).abs() < 1e-10);
            }
        }
    }
}
