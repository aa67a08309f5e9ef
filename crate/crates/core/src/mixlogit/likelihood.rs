//! Simulated log-likelihood and its analytic gradient.
//!
//! The likelihood of an individual is the draw-average of the product of
//! closed-form logit probabilities over that individual's observations, so
//! panels share draws within each integration point. Evaluation is
//! stabilized with max-subtraction both inside each softmax and across
//! draws. Per-individual contributions are written to indexed slots and
//! reduced in a fixed order, so results are bit-identical for any thread
//! count.

use rayon::prelude::*;

use crate::draws::DrawView;
use crate::error::{Error, Result};

use super::{ModelData, ModelSpec, ObsData, ParamLayout, RandomVar};

/// Where a random variable's per-alternative values come from.
#[derive(Clone, Copy, Debug)]
enum VarRef {
    Price,
    PcCol(usize),
    AttrCol(usize),
}

/// Reusable buffers for one likelihood evaluation.
pub struct EvalScratch {
    ll: Vec<f64>,
    grad: Vec<f64>,
}

struct Workspace {
    base: Vec<f64>,
    value: Vec<f64>,
    draw_values: Vec<f64>,
    delta_idx: Vec<usize>,
    feats: Vec<f64>,
    etas: Vec<f64>,
    lnl_r: Vec<f64>,
    phi: Vec<f64>,
}

/// Sentinel for the base product's (absent) fixed-effect parameter.
const NO_PARAM: usize = usize::MAX;

impl Workspace {
    fn new(max_alts: usize, k_random: usize, r: usize, k_params: usize) -> Self {
        Workspace {
            base: vec![0.0; max_alts],
            value: vec![0.0; max_alts],
            draw_values: vec![0.0; r * max_alts],
            delta_idx: vec![0; max_alts],
            feats: vec![0.0; max_alts * k_random.max(1)],
            etas: vec![0.0; r * k_random.max(1)],
            lnl_r: vec![0.0; r],
            phi: vec![0.0; r * k_params],
        }
    }
}

/// Evaluates the simulated log-likelihood of a [`ModelSpec`] on assembled
/// data with a fixed draw set.
pub struct Evaluator<'a> {
    data: &'a ModelData,
    draws: DrawView<'a>,
    pub layout: ParamLayout,
    var_refs: Vec<VarRef>,
    max_alts: usize,
    parallel: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        spec: &ModelSpec,
        data: &'a ModelData,
        draws: DrawView<'a>,
        parallel: bool,
    ) -> Result<Self> {
        if draws.k != spec.random_set.len() {
            return Err(Error::Validation(format!(
                "draw set has {} dimensions for {} random variables",
                draws.k,
                spec.random_set.len()
            )));
        }
        if draws.n_individuals != data.n_individuals() {
            return Err(Error::Validation(format!(
                "draw set covers {} individuals, data has {}",
                draws.n_individuals,
                data.n_individuals()
            )));
        }
        let mut var_refs = Vec::with_capacity(spec.random_set.len());
        for var in &spec.random_set {
            // Validates availability of the referenced component column.
            data.var_column(*var)?;
            var_refs.push(match var {
                RandomVar::Price => VarRef::Price,
                RandomVar::Pc(i) => VarRef::PcCol(i - 1),
                RandomVar::AttrPc(i) => VarRef::AttrCol(i - 1),
            });
        }
        let max_alts = data
            .individuals
            .iter()
            .flat_map(|ind| ind.obs.iter())
            .map(|o| o.alternatives.len())
            .max()
            .unwrap_or(0);
        Ok(Evaluator {
            data,
            draws,
            layout: data.layout(spec),
            var_refs,
            max_alts,
            parallel,
        })
    }

    pub fn scratch(&self) -> EvalScratch {
        let n = self.data.n_individuals();
        EvalScratch {
            ll: vec![0.0; n],
            grad: vec![0.0; n * self.layout.k()],
        }
    }

    fn workspace(&self) -> Workspace {
        Workspace::new(self.max_alts, self.var_refs.len(), self.draws.r, self.layout.k())
    }

    #[inline]
    fn feature(&self, var: VarRef, obs: &ObsData, pos: usize) -> f64 {
        match var {
            VarRef::Price => obs.prices[pos],
            VarRef::PcCol(c) => self.data.pc_columns[c][obs.alternatives[pos]],
            VarRef::AttrCol(c) => self.data.attr_pc_columns[c][obs.alternatives[pos]],
        }
    }

    /// Systematic utilities of one observation under one draw row (the taste
    /// shock is excluded; softmax is applied downstream).
    pub fn utility_row(&self, x: &[f64], obs: &ObsData, eta: &[f64]) -> Vec<f64> {
        let layout = &self.layout;
        let alpha = x[layout.alpha_param()];
        let gamma = layout.gamma_param().map_or(0.0, |g| x[g]);
        (0..obs.alternatives.len())
            .map(|pos| {
                let delta = layout
                    .delta_param(obs.alternatives[pos])
                    .map_or(0.0, |p| x[p]);
                let mut v = delta + alpha * obs.prices[pos] + gamma * obs.ranks[pos];
                for (vi, var) in self.var_refs.iter().enumerate() {
                    v += x[layout.sigma_param(vi)].abs() * eta[vi] * self.feature(*var, obs, pos);
                }
                v
            })
            .collect()
    }

    /// Log-likelihood (and gradient contribution, when requested) of one
    /// individual.
    fn individual(
        &self,
        i: usize,
        x: &[f64],
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        if self.data.individuals[i].obs.len() == 1 {
            if let Some(out) = grad {
                return self.individual_single_grad(i, x, ws, out);
            }
            return self.individual_panel(i, x, ws, None);
        }
        self.individual_panel(i, x, ws, grad)
    }

    /// General panel path: observations of one individual share draws, and
    /// per-draw scores are accumulated into a draw-by-parameter matrix
    /// before the weighted combination.
    fn individual_panel(
        &self,
        i: usize,
        x: &[f64],
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let layout = &self.layout;
        let k_random = self.var_refs.len();
        let k_params = layout.k();
        let r_count = self.draws.r;
        let block = self.draws.individual(i);
        let individual = &self.data.individuals[i];

        let alpha = x[layout.alpha_param()];
        let gamma = layout.gamma_param().map_or(0.0, |g| x[g]);
        let mut sigma_abs = [0.0f64; 64];
        let mut sigma_sign = [0.0f64; 64];
        for v in 0..k_random {
            let s = x[layout.sigma_param(v)];
            sigma_abs[v] = s.abs();
            sigma_sign[v] = s.signum();
        }

        ws.lnl_r[..r_count].fill(0.0);
        if grad.is_some() {
            ws.phi[..r_count * k_params].fill(0.0);
        }

        let alpha_idx = layout.alpha_param();
        let gamma_idx = layout.gamma_param();
        let sigma_base = layout.sigma_param(0);

        for obs in &individual.obs {
            let n_alt = obs.alternatives.len();
            for pos in 0..n_alt {
                let alt = obs.alternatives[pos];
                ws.delta_idx[pos] = layout.delta_param(alt).unwrap_or(NO_PARAM);
                let delta = layout.delta_param(alt).map_or(0.0, |p| x[p]);
                ws.base[pos] = delta + alpha * obs.prices[pos] + gamma * obs.ranks[pos];
            }
            for (v, var) in self.var_refs.iter().enumerate() {
                for pos in 0..n_alt {
                    ws.feats[v * n_alt + pos] = self.feature(*var, obs, pos);
                }
            }

            // Pass 1: utility gaps (value minus per-draw max) for every draw.
            for r in 0..r_count {
                ws.value[..n_alt].copy_from_slice(&ws.base[..n_alt]);
                for v in 0..k_random {
                    let coef = sigma_abs[v] * block[v * r_count + r];
                    let feats = &ws.feats[v * n_alt..(v + 1) * n_alt];
                    for (value, feat) in ws.value[..n_alt].iter_mut().zip(feats) {
                        *value += coef * feat;
                    }
                }
                let max = ws.value[..n_alt]
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let gaps = &mut ws.draw_values[r * n_alt..(r + 1) * n_alt];
                for (gap, value) in gaps.iter_mut().zip(&ws.value[..n_alt]) {
                    *gap = value - max;
                }
                ws.lnl_r[r] += gaps[obs.chosen_pos];
            }

            // Pass 2: one batched exponential over all draws.
            crate::fastmath::exp_inplace(&mut ws.draw_values[..r_count * n_alt]);

            // Pass 3: softmax normalization and score accumulation.
            for r in 0..r_count {
                let exps = &mut ws.draw_values[r * n_alt..(r + 1) * n_alt];
                let sum: f64 = exps.iter().sum();
                ws.lnl_r[r] -= sum.ln();

                if grad.is_some() {
                    // Branchless residuals: -p everywhere, then fix the
                    // chosen alternative.
                    let neg_inv = -1.0 / sum;
                    for e in exps.iter_mut() {
                        *e *= neg_inv;
                    }
                    exps[obs.chosen_pos] += 1.0;

                    let phi = &mut ws.phi[r * k_params..(r + 1) * k_params];
                    for (resid, &dp) in exps.iter().zip(&ws.delta_idx[..n_alt]) {
                        if dp != NO_PARAM {
                            phi[dp] += resid;
                        }
                    }
                    let dot = |a: &[f64], b: &[f64]| -> f64 {
                        a.iter().zip(b).map(|(x, y)| x * y).sum()
                    };
                    phi[alpha_idx] += dot(exps, &obs.prices);
                    if let Some(g) = gamma_idx {
                        phi[g] += dot(exps, &obs.ranks);
                    }
                    for v in 0..k_random {
                        let feats = &ws.feats[v * n_alt..(v + 1) * n_alt];
                        phi[sigma_base + v] +=
                            sigma_sign[v] * block[v * r_count + r] * dot(exps, feats);
                    }
                }
            }
        }

        // Average likelihood over draws in log space.
        let max_ln = ws.lnl_r[..r_count]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for r in 0..r_count {
            sum += (ws.lnl_r[r] - max_ln).exp();
        }
        let ll = max_ln + sum.ln() - (r_count as f64).ln();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite likelihood for individual {}",
                individual.id
            )));
        }

        if let Some(out) = grad {
            let inv_sum = 1.0 / sum;
            for r in 0..r_count {
                let w = (ws.lnl_r[r] - max_ln).exp() * inv_sum;
                let phi = &ws.phi[r * k_params..(r + 1) * k_params];
                for p in 0..k_params {
                    out[p] += w * phi[p];
                }
            }
        }
        Ok(ll)
    }

    /// Fast path for individuals with exactly one observation: residuals are
    /// kept per draw and contracted once against the draw weights, skipping
    /// the draw-by-parameter score matrix entirely.
    fn individual_single_grad(
        &self,
        i: usize,
        x: &[f64],
        ws: &mut Workspace,
        out: &mut [f64],
    ) -> Result<f64> {
        let layout = &self.layout;
        let k_random = self.var_refs.len();
        let r_count = self.draws.r;
        let block = self.draws.individual(i);
        let individual = &self.data.individuals[i];
        let obs = &individual.obs[0];
        let n_alt = obs.alternatives.len();

        let alpha = x[layout.alpha_param()];
        let gamma = layout.gamma_param().map_or(0.0, |g| x[g]);
        let mut sigma_abs = [0.0f64; 64];
        let mut sigma_sign = [0.0f64; 64];
        for v in 0..k_random {
            let s = x[layout.sigma_param(v)];
            sigma_abs[v] = s.abs();
            sigma_sign[v] = s.signum();
        }
        for pos in 0..n_alt {
            let alt = obs.alternatives[pos];
            ws.delta_idx[pos] = layout.delta_param(alt).unwrap_or(NO_PARAM);
            let delta = layout.delta_param(alt).map_or(0.0, |p| x[p]);
            ws.base[pos] = delta + alpha * obs.prices[pos] + gamma * obs.ranks[pos];
        }
        for (v, var) in self.var_refs.iter().enumerate() {
            for pos in 0..n_alt {
                ws.feats[v * n_alt + pos] = self.feature(*var, obs, pos);
            }
        }
        // Spread-scaled draws, draw-major for contiguous inner access.
        for r in 0..r_count {
            for v in 0..k_random {
                ws.etas[r * k_random + v] = sigma_abs[v] * block[v * r_count + r];
            }
        }

        // Pass 1: utility gaps per draw.
        for r in 0..r_count {
            let coefs = &ws.etas[r * k_random..(r + 1) * k_random];
            ws.value[..n_alt].copy_from_slice(&ws.base[..n_alt]);
            for (v, &coef) in coefs.iter().enumerate() {
                let feats = &ws.feats[v * n_alt..(v + 1) * n_alt];
                for (value, feat) in ws.value[..n_alt].iter_mut().zip(feats) {
                    *value += coef * feat;
                }
            }
            let max = ws.value[..n_alt]
                .iter()
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let gaps = &mut ws.draw_values[r * n_alt..(r + 1) * n_alt];
            for (gap, value) in gaps.iter_mut().zip(&ws.value[..n_alt]) {
                *gap = value - max;
            }
            ws.lnl_r[r] = gaps[obs.chosen_pos];
        }

        // Pass 2: batched exponentials.
        crate::fastmath::exp_inplace(&mut ws.draw_values[..r_count * n_alt]);

        // Pass 3: per-draw choice log-likelihoods and residuals in place.
        for r in 0..r_count {
            let exps = &mut ws.draw_values[r * n_alt..(r + 1) * n_alt];
            let sum: f64 = exps.iter().sum();
            ws.lnl_r[r] -= sum.ln();
            let neg_inv = -1.0 / sum;
            for e in exps.iter_mut() {
                *e *= neg_inv;
            }
            exps[obs.chosen_pos] += 1.0;
        }

        // Draw weights from the log-likelihoods.
        let max_ln = ws.lnl_r[..r_count]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        for w in ws.lnl_r[..r_count].iter_mut() {
            *w -= max_ln;
        }
        let ll_sum: f64 = {
            crate::fastmath::exp_inplace(&mut ws.lnl_r[..r_count]);
            ws.lnl_r[..r_count].iter().sum()
        };
        let ll = max_ln + ll_sum.ln() - (r_count as f64).ln();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite likelihood for individual {}",
                individual.id
            )));
        }
        let inv_sum = 1.0 / ll_sum;

        // Pass 4: single weighted contraction. `value` holds the
        // weight-averaged residual per alternative.
        ws.value[..n_alt].fill(0.0);
        let mut sigma_acc = [0.0f64; 64];
        for r in 0..r_count {
            let w = ws.lnl_r[r] * inv_sum;
            let resid = &ws.draw_values[r * n_alt..(r + 1) * n_alt];
            for (acc, res) in ws.value[..n_alt].iter_mut().zip(resid) {
                *acc += w * res;
            }
            for v in 0..k_random {
                let feats = &ws.feats[v * n_alt..(v + 1) * n_alt];
                let dot: f64 = resid.iter().zip(feats).map(|(a, b)| a * b).sum();
                sigma_acc[v] += w * block[v * r_count + r] * dot;
            }
        }
        for pos in 0..n_alt {
            let dp = ws.delta_idx[pos];
            if dp != NO_PARAM {
                out[dp] += ws.value[pos];
            }
        }
        out[layout.alpha_param()] += ws.value[..n_alt]
            .iter()
            .zip(&obs.prices)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        if let Some(g) = layout.gamma_param() {
            out[g] += ws.value[..n_alt]
                .iter()
                .zip(&obs.ranks)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        for v in 0..k_random {
            out[layout.sigma_param(v)] += sigma_sign[v] * sigma_acc[v];
        }
        Ok(ll)
    }

    fn evaluate(&self, x: &[f64], scratch: &mut EvalScratch, with_grad: bool) -> Result<f64> {
        let n = self.data.n_individuals();
        let k = self.layout.k();
        if x.len() != k {
            return Err(Error::Validation(format!(
                "parameter vector has length {}, layout expects {k}",
                x.len()
            )));
        }
        scratch.grad.fill(0.0);

        if self.parallel && n > 1 {
            scratch
                .ll
                .par_iter_mut()
                .zip(scratch.grad.par_chunks_mut(k))
                .enumerate()
                .with_min_len(64)
                .try_for_each_init(
                    || self.workspace(),
                    |ws, (i, (ll, grad))| -> Result<()> {
                        *ll = self.individual(i, x, ws, with_grad.then_some(grad))?;
                        Ok(())
                    },
                )?;
        } else {
            let mut ws = self.workspace();
            for i in 0..n {
                let grad = &mut scratch.grad[i * k..(i + 1) * k];
                scratch.ll[i] = self.individual(i, x, &mut ws, with_grad.then_some(grad))?;
            }
        }
        // Fixed-order reduction.
        Ok(scratch.ll.iter().sum())
    }

    /// Simulated log-likelihood at `x`.
    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        self.loglik_with(x, &mut self.scratch())
    }

    pub fn loglik_with(&self, x: &[f64], scratch: &mut EvalScratch) -> Result<f64> {
        self.evaluate(x, scratch, false)
    }

    /// Simulated log-likelihood and its analytic gradient.
    pub fn loglik_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loglik_grad_with(x, &mut self.scratch())
    }

    pub fn loglik_grad_with(
        &self,
        x: &[f64],
        scratch: &mut EvalScratch,
    ) -> Result<(f64, Vec<f64>)> {
        let ll = self.evaluate(x, scratch, true)?;
        let k = self.layout.k();
        let mut grad = vec![0.0; k];
        for i in 0..self.data.n_individuals() {
            let slot = &scratch.grad[i * k..(i + 1) * k];
            for (total, part) in grad.iter_mut().zip(slot) {
                *total += part;
            }
        }
        Ok((ll, grad))
    }

    /// Outer product of per-individual score vectors at the point of the
    /// latest gradient evaluation in `scratch` (the BHHH information
    /// matrix). Useful as a curvature seed for the optimizer.
    pub fn score_outer_product(&self, scratch: &EvalScratch) -> nalgebra::DMatrix<f64> {
        let k = self.layout.k();
        let mut info = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..self.data.n_individuals() {
            let g = &scratch.grad[i * k..(i + 1) * k];
            for a in 0..k {
                let ga = g[a];
                if ga == 0.0 {
                    continue;
                }
                for b in a..k {
                    info[(a, b)] += ga * g[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        info
    }
}
