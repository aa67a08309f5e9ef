//! Model-implied substitution objects: choice shares, removal shares,
//! diversion matrices, second-choice RMSE, and Bertrand-Nash pricing
//! counterfactuals.
//!
//! All share objects for one profile are computed on common draws, so the
//! conditional second-choice identity
//! `d(j -> k) = (s_k_without_j - s_k) / s_j` holds numerically draw by draw.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::draws::{DrawConfig, DrawSet};
use crate::error::{Error, Result};
use crate::mixlogit::{FitResult, ModelData, RandomVar};

/// Numerical floor for the first-choice probability in the diversion
/// identity; individuals below it are skipped for that source product.
pub const SHARE_FLOOR: f64 = 1e-12;

/// Prices (and optionally ranks) faced over a set of alternatives, given as
/// catalog indices.
#[derive(Clone, Debug)]
pub struct Profile {
    pub alternatives: Vec<usize>,
    pub prices: Vec<f64>,
    pub ranks: Option<Vec<f64>>,
}

impl Profile {
    /// Full catalog at one common price, no rank effects.
    pub fn uniform(n_products: usize, price: f64) -> Self {
        Profile {
            alternatives: (0..n_products).collect(),
            prices: vec![price; n_products],
            ranks: None,
        }
    }

    pub fn with_prices(prices: Vec<f64>) -> Self {
        Profile {
            alternatives: (0..prices.len()).collect(),
            prices,
            ranks: None,
        }
    }
}

/// A fitted model bound to its component columns, ready to price arbitrary
/// profiles.
pub struct Market {
    pub product_ids: Vec<String>,
    delta: Vec<f64>,
    alpha: f64,
    gamma: f64,
    /// (eta dimension, spread, per-product values); price uses none.
    price_dim: Option<(usize, f64)>,
    columns: Vec<(usize, f64, Vec<f64>)>,
    k_random: usize,
}

impl Market {
    pub fn new(fit: &FitResult, data: &ModelData) -> Result<Self> {
        if fit.product_ids != data.product_ids {
            return Err(Error::Validation(
                "fit and data describe different catalogs".into(),
            ));
        }
        let mut price_dim = None;
        let mut columns = Vec::new();
        for (dim, var) in fit.spec.random_set.iter().enumerate() {
            match var {
                RandomVar::Price => price_dim = Some((dim, fit.sigma[dim])),
                _ => {
                    let col = data
                        .var_column(*var)?
                        .expect("non-price variables have columns")
                        .to_vec();
                    columns.push((dim, fit.sigma[dim], col));
                }
            }
        }
        Ok(Market {
            product_ids: fit.product_ids.clone(),
            delta: fit.delta.clone(),
            alpha: fit.alpha_mean,
            gamma: fit.gamma.unwrap_or(0.0),
            price_dim,
            columns,
            k_random: fit.spec.random_set.len(),
        })
    }

    pub fn n_products(&self) -> usize {
        self.delta.len()
    }

    pub fn k_random(&self) -> usize {
        self.k_random
    }

    pub fn mean_price_coefficient(&self) -> f64 {
        self.alpha
    }

    /// Price coefficient under one draw.
    #[inline]
    fn alpha_r(&self, block: &[f64], r_total: usize, r: usize) -> f64 {
        match self.price_dim {
            Some((dim, spread)) => self.alpha + spread * block[dim * r_total + r],
            None => self.alpha,
        }
    }

    /// Softmax shares of one profile under one draw.
    fn draw_shares(
        &self,
        profile: &Profile,
        block: &[f64],
        r_total: usize,
        r: usize,
        skip: Option<usize>,
        out: &mut [f64],
    ) {
        let n = profile.alternatives.len();
        let alpha_r = self.alpha_r(block, r_total, r);
        for pos in 0..n {
            if Some(pos) == skip {
                out[pos] = f64::NEG_INFINITY;
                continue;
            }
            let j = profile.alternatives[pos];
            let mut v = self.delta[j] + alpha_r * profile.prices[pos];
            if let Some(ranks) = &profile.ranks {
                v += self.gamma * ranks[pos];
            }
            for (dim, spread, col) in &self.columns {
                v += spread * block[dim * r_total + r] * col[j];
            }
            out[pos] = v;
        }
        let max = out[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for value in out[..n].iter_mut() {
            *value = (*value - max).exp();
            sum += *value;
        }
        for value in out[..n].iter_mut() {
            *value /= sum;
        }
    }

    /// Draw-averaged choice probabilities over a profile.
    pub fn shares(&self, profile: &Profile, block: &[f64], r_total: usize) -> Result<Vec<f64>> {
        let n = profile.alternatives.len();
        if n == 0 {
            return Err(Error::Validation("empty choice set".into()));
        }
        let mut mean = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for r in 0..r_total {
            self.draw_shares(profile, block, r_total, r, None, &mut scratch);
            for (m, s) in mean.iter_mut().zip(&scratch) {
                *m += s;
            }
        }
        for m in &mut mean {
            *m /= r_total as f64;
        }
        Ok(mean)
    }

    /// Draw-averaged shares after removing the alternative at `removed_pos`,
    /// using the same draws as [`Market::shares`]. Within each draw the
    /// conditional logit shares obey `s_k / (1 - s_removed)`.
    pub fn removal_shares(
        &self,
        profile: &Profile,
        block: &[f64],
        r_total: usize,
        removed_pos: usize,
    ) -> Result<Vec<f64>> {
        let n = profile.alternatives.len();
        if n < 2 {
            return Err(Error::Validation(
                "removal requires at least two alternatives".into(),
            ));
        }
        if removed_pos >= n {
            return Err(Error::Validation(format!(
                "removed position {removed_pos} is outside the choice set"
            )));
        }
        let mut mean = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for r in 0..r_total {
            self.draw_shares(profile, block, r_total, r, None, &mut scratch);
            let keep = 1.0 - scratch[removed_pos];
            for pos in 0..n {
                if pos != removed_pos {
                    mean[pos] += scratch[pos] / keep;
                }
            }
        }
        for m in &mut mean {
            *m /= r_total as f64;
        }
        Ok(mean)
    }

    /// Per-profile diversion rows via the conditional-choice identity, all
    /// three share objects on common draws. Returns `(matrix, mean_shares)`
    /// in profile positions; entries for rows with first-choice probability
    /// under [`SHARE_FLOOR`] are `None`.
    fn diversion_rows(
        &self,
        profile: &Profile,
        block: &[f64],
        r_total: usize,
    ) -> (Vec<Option<Vec<f64>>>, Vec<f64>) {
        let n = profile.alternatives.len();
        let mut mean = vec![0.0; n];
        let mut removal_mean = vec![0.0; n * n];
        let mut scratch = vec![0.0; n];
        for r in 0..r_total {
            self.draw_shares(profile, block, r_total, r, None, &mut scratch);
            for k in 0..n {
                mean[k] += scratch[k];
            }
            for j in 0..n {
                let keep = 1.0 - scratch[j];
                for k in 0..n {
                    if k != j {
                        removal_mean[j * n + k] += scratch[k] / keep;
                    }
                }
            }
        }
        let rf = r_total as f64;
        for m in &mut mean {
            *m /= rf;
        }
        let rows = (0..n)
            .map(|j| {
                if mean[j] < SHARE_FLOOR {
                    return None;
                }
                Some(
                    (0..n)
                        .map(|k| {
                            if k == j {
                                0.0
                            } else {
                                (removal_mean[j * n + k] / rf - mean[k]) / mean[j]
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        (rows, mean)
    }
}

/// J x J second-choice diversion probabilities; entry `(j, k)` is the
/// probability of switching to `k` when `j` is removed. Rows of predicted
/// matrices sum to one; empirical rows with no first-choosers are flagged
/// missing.
#[derive(Clone, Debug)]
pub struct DiversionMatrix {
    pub product_ids: Vec<String>,
    pub values: DMatrix<f64>,
    pub missing_rows: BTreeSet<usize>,
}

impl DiversionMatrix {
    pub fn n(&self) -> usize {
        self.product_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for j in 0..n {
            if self.missing_rows.contains(&j) {
                continue;
            }
            let mut sum = 0.0;
            for k in 0..n {
                let v = self.values[(j, k)];
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::Validation(format!(
                        "diversion ({j},{k}) = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "diversion row {j} sums to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Model-implied diversions averaged over the estimation sample's price and
/// rank profiles. Returns the matrix and the number of skipped
/// (individual, product) pairs whose first-choice probability fell below the
/// floor.
pub fn predicted_diversions(
    fit: &FitResult,
    data: &ModelData,
    draw_config: &DrawConfig,
) -> Result<(DiversionMatrix, usize)> {
    let market = Market::new(fit, data)?;
    let n = market.n_products();
    let draws = DrawSet::generate(draw_config, market.k_random(), data.n_individuals())?;
    let view = draws.view();

    struct Accum {
        sum: Vec<f64>,
        count: Vec<u64>,
        skipped: usize,
    }

    let per_individual: Vec<Accum> = (0..data.n_individuals())
        .into_par_iter()
        .map(|i| {
            let mut acc = Accum {
                sum: vec![0.0; n * n],
                count: vec![0; n],
                skipped: 0,
            };
            // One profile per individual: the first-choice task they faced.
            let obs = &data.individuals[i].obs[0];
            let profile = Profile {
                alternatives: obs.alternatives.clone(),
                prices: obs.prices.clone(),
                ranks: data.has_ranks.then(|| obs.ranks.clone()),
            };
            if profile.alternatives.len() != n {
                // Diversion matrices need full choice sets.
                acc.skipped += n;
                return acc;
            }
            let block = view.individual(i);
            let (rows, _) = market.diversion_rows(&profile, block, view.r);
            for (pos_j, row) in rows.iter().enumerate() {
                let j = profile.alternatives[pos_j];
                match row {
                    Some(row) => {
                        acc.count[j] += 1;
                        for (pos_k, value) in row.iter().enumerate() {
                            let k = profile.alternatives[pos_k];
                            acc.sum[j * n + k] += value;
                        }
                    }
                    None => acc.skipped += 1,
                }
            }
            acc
        })
        .collect();

    let mut sum = vec![0.0; n * n];
    let mut count = vec![0u64; n];
    let mut skipped = 0;
    for acc in per_individual {
        for (t, v) in sum.iter_mut().zip(&acc.sum) {
            *t += v;
        }
        for (t, v) in count.iter_mut().zip(&acc.count) {
            *t += v;
        }
        skipped += acc.skipped;
    }

    let mut values = DMatrix::zeros(n, n);
    let mut missing = BTreeSet::new();
    for j in 0..n {
        if count[j] == 0 {
            missing.insert(j);
            continue;
        }
        for k in 0..n {
            values[(j, k)] = sum[j * n + k] / count[j] as f64;
        }
    }
    let matrix = DiversionMatrix {
        product_ids: data.product_ids.clone(),
        values,
        missing_rows: missing,
    };
    matrix.validate()?;
    Ok((matrix, skipped))
}

/// Model-implied diversions for a single common profile (stylized analyses).
pub fn predicted_diversions_at(
    fit: &FitResult,
    data: &ModelData,
    draw_config: &DrawConfig,
    profile: &Profile,
) -> Result<DiversionMatrix> {
    let market = Market::new(fit, data)?;
    let n = market.n_products();
    if profile.alternatives.len() != n {
        return Err(Error::Validation(
            "common-profile diversions need the full catalog".into(),
        ));
    }
    let draws = DrawSet::generate(draw_config, market.k_random(), 1)?;
    let view = draws.view();
    let (rows, _) = market.diversion_rows(profile, view.individual(0), view.r);
    let mut values = DMatrix::zeros(n, n);
    let mut missing = BTreeSet::new();
    for (pos_j, row) in rows.iter().enumerate() {
        let j = profile.alternatives[pos_j];
        match row {
            Some(row) => {
                for (pos_k, value) in row.iter().enumerate() {
                    values[(j, profile.alternatives[pos_k])] = *value;
                }
            }
            None => {
                missing.insert(j);
            }
        }
    }
    let matrix = DiversionMatrix {
        product_ids: data.product_ids.clone(),
        values,
        missing_rows: missing,
    };
    matrix.validate()?;
    Ok(matrix)
}

/// Frequency-estimator diversions from paired first and second choices.
/// Rows for products never chosen first are flagged missing.
pub fn empirical_diversions(dataset: &Dataset) -> Result<DiversionMatrix> {
    dataset.validate()?;
    let ids = dataset.product_ids();
    let index = dataset.product_index();
    let n = ids.len();
    let mut first: BTreeMap<&str, usize> = BTreeMap::new();
    for obs in &dataset.observations {
        if obs.task == 1 {
            first.insert(obs.individual_id.as_str(), index[&obs.chosen]);
        }
    }
    let mut counts = vec![0u64; n * n];
    let mut row_totals = vec![0u64; n];
    let mut pairs = 0u64;
    for obs in &dataset.observations {
        if obs.task != 2 {
            continue;
        }
        let Some(&j) = first.get(obs.individual_id.as_str()) else {
            continue;
        };
        let k = index[&obs.chosen];
        counts[j * n + k] += 1;
        row_totals[j] += 1;
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::Validation(
            "no paired first/second choices to tabulate".into(),
        ));
    }
    let mut values = DMatrix::zeros(n, n);
    let mut missing = BTreeSet::new();
    for j in 0..n {
        if row_totals[j] == 0 {
            missing.insert(j);
            continue;
        }
        for k in 0..n {
            values[(j, k)] = counts[j * n + k] as f64 / row_totals[j] as f64;
        }
    }
    Ok(DiversionMatrix {
        product_ids: ids,
        values,
        missing_rows: missing,
    })
}

/// Root-mean-squared error over ordered off-diagonal pairs, excluding rows
/// missing on either side (the divisor shrinks accordingly).
pub fn second_choice_rmse(pred: &DiversionMatrix, emp: &DiversionMatrix) -> Result<f64> {
    if pred.product_ids != emp.product_ids {
        return Err(Error::Validation(
            "diversion matrices cover different catalogs".into(),
        ));
    }
    let n = pred.n();
    let mut sum = 0.0;
    let mut cells = 0usize;
    for j in 0..n {
        if pred.missing_rows.contains(&j) || emp.missing_rows.contains(&j) {
            continue;
        }
        for k in 0..n {
            if k == j {
                continue;
            }
            let diff = pred.values[(j, k)] - emp.values[(j, k)];
            sum += diff * diff;
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(Error::Validation("no overlapping diversion cells".into()));
    }
    Ok((sum / cells as f64).sqrt())
}

/// Mean over source products of the largest diversion ratio in their row.
pub fn closest_substitute_diversion(matrix: &DiversionMatrix) -> Result<f64> {
    let n = matrix.n();
    if n < 2 {
        return Err(Error::Validation(
            "closest-substitute statistic needs at least two products".into(),
        ));
    }
    let mut sum = 0.0;
    let mut rows = 0usize;
    for j in 0..n {
        if matrix.missing_rows.contains(&j) {
            continue;
        }
        let best = (0..n)
            .filter(|&k| k != j)
            .map(|k| matrix.values[(j, k)])
            .fold(f64::NEG_INFINITY, f64::max);
        sum += best;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Validation("all diversion rows are missing".into()));
    }
    Ok(sum / rows as f64)
}

/// Firm assignment and marginal costs per catalog product.
#[derive(Clone, Debug)]
pub struct Ownership {
    pub firm: Vec<usize>,
    pub marginal_cost: Vec<f64>,
}

impl Ownership {
    /// Every product its own single-product firm at a common marginal cost.
    pub fn single_product(n: usize, mc: f64) -> Self {
        Ownership {
            firm: (0..n).collect(),
            marginal_cost: vec![mc; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.firm.len() != n || self.marginal_cost.len() != n {
            return Err(Error::Validation("ownership map shape mismatch".into()));
        }
        // The negated form also rejects NaN costs.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if self.marginal_cost.iter().any(|&mc| !(mc >= 0.0)) {
            return Err(Error::Validation("marginal costs must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    /// Full catalog price vector (fixed products keep their baseline).
    pub prices: Vec<f64>,
    pub foc_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const FOC_TOL: f64 = 1e-8;
const MAX_EQUILIBRIUM_ITER: usize = 1000;

struct FocContext<'m> {
    market: &'m Market,
    ownership: &'m Ownership,
    free: Vec<usize>,
    block: &'m [f64],
    r_total: usize,
}

impl FocContext<'_> {
    /// Stacked first-order conditions at a full price vector:
    /// `s_j + sum_{k in firm(j)} (p_k - mc_k) ds_k/dp_j` for each free `j`.
    fn residual(&self, prices: &[f64]) -> Vec<f64> {
        let market = self.market;
        let n = market.n_products();
        let profile = Profile::with_prices(prices.to_vec());
        let mut shares_r = vec![0.0; n];
        let mut mean = vec![0.0; n];
        // jacobian[j][k] accumulates ds_k/dp_j over draws.
        let mut jac = vec![0.0; n * n];
        for r in 0..self.r_total {
            market.draw_shares(&profile, self.block, self.r_total, r, None, &mut shares_r);
            let alpha_r = market.alpha_r(self.block, self.r_total, r);
            for k in 0..n {
                mean[k] += shares_r[k];
            }
            for &j in &self.free {
                for k in 0..n {
                    let own = if j == k { 1.0 } else { 0.0 };
                    jac[j * n + k] += alpha_r * shares_r[k] * (own - shares_r[j]);
                }
            }
        }
        let rf = self.r_total as f64;
        self.free
            .iter()
            .map(|&j| {
                let mut value = mean[j] / rf;
                for k in 0..n {
                    if self.ownership.firm[k] == self.ownership.firm[j] {
                        value += (prices[k] - self.ownership.marginal_cost[k]) * jac[j * n + k]
                            / rf;
                    }
                }
                value
            })
            .collect()
    }

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }
}

/// Solves the Bertrand-Nash first-order conditions for the free products by
/// damped Newton with a fixed-point fallback. Requires a downward-sloping
/// mean price coefficient.
pub fn bertrand_equilibrium(
    market: &Market,
    ownership: &Ownership,
    baseline_prices: &[f64],
    free: &[usize],
    block: &[f64],
    r_total: usize,
) -> Result<EquilibriumResult> {
    let n = market.n_products();
    ownership.validate(n)?;
    if free.is_empty() {
        return Err(Error::Validation("no products to optimize".into()));
    }
    if baseline_prices.len() != n {
        return Err(Error::Validation("baseline price vector shape mismatch".into()));
    }
    if market.mean_price_coefficient() >= 0.0 {
        return Err(Error::Validation(
            "mean price coefficient is nonnegative: demand slopes upward".into(),
        ));
    }
    let ctx = FocContext {
        market,
        ownership,
        free: free.to_vec(),
        block,
        r_total,
    };
    let m = free.len();
    let mut prices = baseline_prices.to_vec();
    let mut residual = ctx.residual(&prices);
    let mut norm = FocContext::inf_norm(&residual);
    let mut iterations = 0;

    while norm >= FOC_TOL && iterations < MAX_EQUILIBRIUM_ITER {
        iterations += 1;
        // Numerical Jacobian of the stacked FOC in the free prices.
        let mut jac = DMatrix::zeros(m, m);
        for (col, &j) in free.iter().enumerate() {
            let h = 1e-6 * prices[j].abs().max(1.0);
            let saved = prices[j];
            prices[j] = saved + h;
            let plus = ctx.residual(&prices);
            prices[j] = saved - h;
            let minus = ctx.residual(&prices);
            prices[j] = saved;
            for row in 0..m {
                jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_vec(residual.clone());
        let step = jac.lu().solve(&rhs);

        let mut improved = false;
        if let Some(step) = step {
            // Damped Newton: halve until the residual norm drops.
            let mut damping = 1.0;
            for _ in 0..30 {
                let mut trial = prices.clone();
                for (row, &j) in free.iter().enumerate() {
                    trial[j] -= damping * step[row];
                }
                let trial_residual = ctx.residual(&trial);
                let trial_norm = FocContext::inf_norm(&trial_residual);
                if trial_norm < norm {
                    prices = trial;
                    residual = trial_residual;
                    norm = trial_norm;
                    improved = true;
                    break;
                }
                damping *= 0.5;
            }
        }
        if !improved {
            // Fixed-point fallback: per free product, the single-product
            // markup rule at current shares, heavily damped.
            let profile = Profile::with_prices(prices.clone());
            let shares = market.shares(&profile, block, r_total)?;
            let mut moved = false;
            let mut trial = prices.clone();
            for &j in free {
                // ds_j/dp_j from the draw average.
                let mut own_slope = 0.0;
                let mut scratch = vec![0.0; n];
                for r in 0..r_total {
                    market.draw_shares(&profile, block, r_total, r, None, &mut scratch);
                    let alpha_r = market.alpha_r(block, r_total, r);
                    own_slope += alpha_r * scratch[j] * (1.0 - scratch[j]);
                }
                own_slope /= r_total as f64;
                if own_slope < 0.0 {
                    let target = ownership.marginal_cost[j] - shares[j] / own_slope;
                    trial[j] = 0.5 * prices[j] + 0.5 * target;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            let trial_residual = ctx.residual(&trial);
            let trial_norm = FocContext::inf_norm(&trial_residual);
            if trial_norm >= norm {
                break;
            }
            prices = trial;
            residual = trial_residual;
            norm = trial_norm;
        }
    }

    Ok(EquilibriumResult {
        prices,
        foc_norm: norm,
        iterations,
        converged: norm < FOC_TOL,
    })
}

#[derive(Clone, Debug)]
pub struct MergerOutcome {
    pub separate: EquilibriumResult,
    pub joint: EquilibriumResult,
    /// Mean percentage price increase across the two merging products.
    pub avg_price_increase_pct: f64,
}

/// Prices a two-product merger: both scenarios hold every other product at
/// the reference price, and the pair's prices are solved under separate and
/// joint ownership.
pub fn merger_simulation(
    market: &Market,
    pair: (usize, usize),
    reference_price: f64,
    marginal_cost: f64,
    block: &[f64],
    r_total: usize,
) -> Result<MergerOutcome> {
    let n = market.n_products();
    let (a, b) = pair;
    if a == b || a >= n || b >= n {
        return Err(Error::Validation("merger pair must be two distinct products".into()));
    }
    let baseline = vec![reference_price; n];
    let free = [a, b];

    let separate_own = Ownership::single_product(n, marginal_cost);
    let separate = bertrand_equilibrium(market, &separate_own, &baseline, &free, block, r_total)?;

    let mut joint_own = Ownership::single_product(n, marginal_cost);
    joint_own.firm[b] = joint_own.firm[a];
    let joint = bertrand_equilibrium(market, &joint_own, &baseline, &free, block, r_total)?;

    let pct = |sep: f64, jnt: f64| (jnt - sep) / sep * 100.0;
    let avg = 0.5 * (pct(separate.prices[a], joint.prices[a]) + pct(separate.prices[b], joint.prices[b]));
    Ok(MergerOutcome {
        separate,
        joint,
        avg_price_increase_pct: avg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ChoiceObservation, Product};
    use crate::draws::DrawConfig;
    use crate::mixlogit::ModelSpec;
    use approx::assert_relative_eq;

    /// Hand-built plain-logit fit over `n` products.
    fn plain_fit(delta: Vec<f64>, alpha: f64) -> (FitResult, ModelData) {
        let n = delta.len();
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let catalog: Vec<Product> = ids.iter().map(|id| Product::new(id, id)).collect();
        // One observation per product so every delta is identified.
        let observations: Vec<ChoiceObservation> = (0..n)
            .map(|i| ChoiceObservation {
                individual_id: format!("i{i}"),
                task: 1,
                offered: ids.clone(),
                prices: vec![5.0; n],
                ranks: None,
                chosen: ids[i].clone(),
            })
            .collect();
        let dataset = Dataset {
            catalog,
            observations,
            embeddings: vec![],
        };
        let data = ModelData::assemble(&dataset, None, None).unwrap();
        let spec = ModelSpec::plain(false);
        let k = data.layout(&spec).k();
        let fit = FitResult {
            spec,
            product_ids: ids,
            delta,
            alpha_mean: alpha,
            gamma: None,
            sigma: vec![],
            loglik: 0.0,
            k,
            aic: 0.0,
            bic: 0.0,
            converged: true,
            iterations: 0,
            draw_config: DrawConfig::halton(1, 0, 0),
            n_obs: n,
            raw_params: vec![],
        };
        (fit, data)
    }

    #[test]
    fn single_product_has_share_one() {
        let (fit, data) = plain_fit(vec![0.0, 0.3], -1.0);
        let market = Market::new(&fit, &data).unwrap();
        let profile = Profile {
            alternatives: vec![1],
            prices: vec![4.0],
            ranks: None,
        };
        let shares = market.shares(&profile, &[], 1).unwrap();
        assert_eq!(shares, vec![1.0]);
    }

    #[test]
    fn uniform_utilities_split_evenly_and_sum_to_one() {
        let (fit, data) = plain_fit(vec![0.0; 10], -1.0);
        let market = Market::new(&fit, &data).unwrap();
        let profile = Profile::uniform(10, 5.0);
        let shares = market.shares(&profile, &[], 1).unwrap();
        for s in &shares {
            assert_relative_eq!(*s, 0.1, epsilon = 1e-12);
        }
        assert_relative_eq!(shares.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let removal = market.removal_shares(&profile, &[], 1, 3).unwrap();
        for (pos, s) in removal.iter().enumerate() {
            if pos == 3 {
                assert_eq!(*s, 0.0);
            } else {
                assert_relative_eq!(*s, 1.0 / 9.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn plain_logit_removal_is_exact_iia() {
        let (fit, data) = plain_fit(vec![0.0, 0.4, -0.2], -0.7);
        let market = Market::new(&fit, &data).unwrap();
        let profile = Profile {
            alternatives: vec![0, 1, 2],
            prices: vec![3.0, 5.0, 4.0],
            ranks: None,
        };
        let s = market.shares(&profile, &[], 1).unwrap();
        let removal = market.removal_shares(&profile, &[], 1, 0).unwrap();
        for k in 1..3 {
            assert_relative_eq!(removal[k], s[k] / (1.0 - s[0]), epsilon = 1e-12);
        }
    }

    #[test]
    fn empirical_diversions_are_frequencies() {
        let ids = ["a", "b", "c"];
        let catalog: Vec<Product> = ids.iter().map(|id| Product::new(*id, *id)).collect();
        let mk = |i: usize, first: &str, second: &str| {
            let offered: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
            let remaining: Vec<String> =
                offered.iter().filter(|p| *p != first).cloned().collect();
            vec![
                ChoiceObservation {
                    individual_id: format!("i{i}"),
                    task: 1,
                    offered,
                    prices: vec![5.0; 3],
                    ranks: None,
                    chosen: first.into(),
                },
                ChoiceObservation {
                    individual_id: format!("i{i}"),
                    task: 2,
                    offered: remaining,
                    prices: vec![5.0; 2],
                    ranks: None,
                    chosen: second.into(),
                },
            ]
        };
        let mut observations = Vec::new();
        observations.extend(mk(0, "a", "b"));
        observations.extend(mk(1, "a", "c"));
        let dataset = Dataset {
            catalog,
            observations,
            embeddings: vec![],
        };
        let emp = empirical_diversions(&dataset).unwrap();
        assert_relative_eq!(emp.values[(0, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(emp.values[(0, 2)], 0.5, epsilon = 1e-15);
        // b and c never chosen first
        assert!(emp.missing_rows.contains(&1));
        assert!(emp.missing_rows.contains(&2));
    }

    #[test]
    fn rmse_direct_evaluation_and_symmetry() {
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let emp = DiversionMatrix {
            product_ids: ids.clone(),
            values: DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 0.6, 0.4, 0.5, 0.0, 0.5, 0.3, 0.7, 0.0],
            ),
            missing_rows: BTreeSet::new(),
        };
        let pred = DiversionMatrix {
            product_ids: ids,
            values: DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0],
            ),
            missing_rows: BTreeSet::new(),
        };
        let rmse = second_choice_rmse(&pred, &emp).unwrap();
        assert_relative_eq!(rmse, (0.10_f64 / 6.0).sqrt(), epsilon = 1e-12);
        // symmetry in arguments and zero on identical inputs
        assert_relative_eq!(
            rmse,
            second_choice_rmse(&emp, &pred).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(second_choice_rmse(&emp, &emp).unwrap(), 0.0);
    }

    #[test]
    fn closest_substitute_statistics() {
        let (fit, data) = plain_fit(vec![0.0; 10], -1.0);
        let (matrix, skipped) =
            predicted_diversions(&fit, &data, &DrawConfig::halton(5, 0, 0)).unwrap();
        assert_eq!(skipped, 0);
        let stat = closest_substitute_diversion(&matrix).unwrap();
        assert_relative_eq!(stat, 1.0 / 9.0, epsilon = 1e-10);

        let hand = DiversionMatrix {
            product_ids: vec!["a".into(), "b".into(), "c".into()],
            values: DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 0.8, 0.2, 0.3, 0.0, 0.7, 0.5, 0.5, 0.0],
            ),
            missing_rows: BTreeSet::new(),
        };
        assert_relative_eq!(
            closest_substitute_diversion(&hand).unwrap(),
            (0.8 + 0.7 + 0.5) / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn plain_logit_diversion_rows_are_flat_iia() {
        let (fit, data) = plain_fit(vec![0.0, 0.5, -0.3, 0.2], -0.9);
        let (matrix, _) =
            predicted_diversions(&fit, &data, &DrawConfig::halton(3, 0, 0)).unwrap();
        // With common prices across individuals, every entry equals
        // s_k / (1 - s_j): rows are proportional to the share vector.
        let market = Market::new(&fit, &data).unwrap();
        let profile = Profile::uniform(4, 5.0);
        let s = market.shares(&profile, &[], 1).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                if j != k {
                    assert_relative_eq!(
                        matrix.values[(j, k)],
                        s[k] / (1.0 - s[j]),
                        epsilon = 1e-10
                    );
                }
            }
        }
        matrix.validate().unwrap();
    }

    #[test]
    fn symmetric_firms_reach_equal_prices() {
        let (fit, data) = plain_fit(vec![0.0, 0.0, 0.0], -1.0);
        let market = Market::new(&fit, &data).unwrap();
        let ownership = Ownership::single_product(3, 0.0);
        let result = bertrand_equilibrium(
            &market,
            &ownership,
            &[5.0; 3],
            &[0, 1, 2],
            &[],
            1,
        )
        .unwrap();
        assert!(result.converged, "foc norm {}", result.foc_norm);
        assert!(result.foc_norm < 1e-8);
        assert_relative_eq!(result.prices[0], result.prices[1], epsilon = 1e-8);
        assert_relative_eq!(result.prices[1], result.prices[2], epsilon = 1e-8);
    }

    #[test]
    fn upward_sloping_demand_is_rejected() {
        let (fit, data) = plain_fit(vec![0.0, 0.0], 0.5);
        let market = Market::new(&fit, &data).unwrap();
        let ownership = Ownership::single_product(2, 0.0);
        assert!(bertrand_equilibrium(&market, &ownership, &[5.0, 5.0], &[0], &[], 1).is_err());
    }

    #[test]
    fn single_product_price_matches_bisection_oracle() {
        // One free product, others fixed: the scalar FOC
        // s_j(p) + (p - mc) alpha s_j (1 - s_j) = 0 is solved independently
        // by bisection on p.
        let (fit, data) = plain_fit(vec![0.0, 0.2, -0.1], -0.8);
        let market = Market::new(&fit, &data).unwrap();
        let ownership = Ownership::single_product(3, 1.0);
        let result = bertrand_equilibrium(
            &market,
            &ownership,
            &[5.0, 5.0, 5.0],
            &[0],
            &[],
            1,
        )
        .unwrap();
        assert!(result.converged);

        let alpha = -0.8;
        let share_of = |p: f64| {
            let profile = Profile {
                alternatives: vec![0, 1, 2],
                prices: vec![p, 5.0, 5.0],
                ranks: None,
            };
            market.shares(&profile, &[], 1).unwrap()[0]
        };
        let foc = |p: f64| {
            let s = share_of(p);
            s + (p - 1.0) * alpha * s * (1.0 - s)
        };
        let (mut lo, mut hi) = (1.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if foc(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!(
            (result.prices[0] - oracle).abs() < 1e-6,
            "{} vs oracle {}",
            result.prices[0],
            oracle
        );
        // Markup identity p = mc - 1 / (alpha (1 - s)) at the fixed point.
        let s = share_of(result.prices[0]);
        assert_relative_eq!(
            result.prices[0],
            1.0 - 1.0 / (alpha * (1.0 - s)),
            epsilon = 1e-6
        );
    }

    #[test]
    fn zero_diversion_pair_merger_changes_nothing() {
        // One alternative so dominant that the pair a,b never substitve to
        // each other: merging them leaves prices essentially unchanged.
        let (fit, data) = plain_fit(vec![0.0, 0.0, 12.0], -1.0);
        let market = Market::new(&fit, &data).unwrap();
        let outcome = merger_simulation(&market, (0, 1), 5.0, 0.0, &[], 1).unwrap();
        assert!(outcome.separate.converged && outcome.joint.converged);
        assert!(
            outcome.avg_price_increase_pct.abs() < 0.05,
            "increase {}",
            outcome.avg_price_increase_pct
        );
    }
}
