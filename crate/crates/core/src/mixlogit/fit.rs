//! Maximum simulated likelihood fitting and standard errors.

use nalgebra::{DMatrix, DVector};

use crate::draws::{DrawConfig, DrawSet, DrawView};
use crate::error::{Error, Result};
use crate::optim::{minimize_seeded, OptimOptions, OptimResult};
use crate::rng::Stream;

use super::{information_criteria, Evaluator, FitResult, ModelData, ModelSpec};

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub grad_tol: f64,
    pub ll_rel_tol: f64,
    pub max_iterations: usize,
    /// Number of optimizer starts; the best final likelihood wins.
    pub starts: usize,
    /// Parallelize likelihood evaluation across individuals.
    pub parallel: bool,
    /// Starting value for newly added spread parameters.
    pub sigma_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-6,
            ll_rel_tol: 1e-9,
            max_iterations: 500,
            starts: 1,
            parallel: true,
            sigma_init: 0.1,
        }
    }
}

fn optim_options(options: &FitOptions) -> OptimOptions {
    OptimOptions {
        grad_tol: options.grad_tol,
        f_rel_tol: options.ll_rel_tol,
        max_iterations: options.max_iterations,
    }
}

/// Normalizes the requested spec against the data: the rank term is dropped
/// when ranks are unobserved.
fn effective_spec(spec: &ModelSpec, data: &ModelData) -> ModelSpec {
    let mut spec = spec.clone();
    spec.includes_rank = spec.includes_rank && data.has_ranks;
    spec
}

/// Fixed effects initialized from choice frequencies (the closed-form fit of
/// the intercept-only logit), alpha and gamma at zero.
fn frequency_start(data: &ModelData, spec: &ModelSpec) -> Vec<f64> {
    let layout = data.layout(spec);
    let mut x = vec![0.0; layout.k()];
    let base_count = data.chosen_counts[data.base_product].max(1) as f64;
    for (j, &count) in data.chosen_counts.iter().enumerate() {
        if let Some(p) = layout.delta_param(j) {
            x[p] = (count.max(1) as f64 / base_count).ln();
        }
    }
    x
}

fn inverse_score_outer(evaluator: &Evaluator<'_>, scratch: &super::likelihood::EvalScratch) -> Option<DMatrix<f64>> {
    let info = evaluator.score_outer_product(scratch);
    let k = info.nrows();
    let ridge = 1e-8 * info.trace().max(1.0) / k as f64;
    nalgebra::Cholesky::new(info + DMatrix::identity(k, k) * ridge).map(|chol| chol.inverse())
}

fn run_optimizer(
    evaluator: &Evaluator<'_>,
    x0: Vec<f64>,
    options: &FitOptions,
) -> Result<OptimResult> {
    let scratch = std::cell::RefCell::new(evaluator.scratch());
    let x0 = DVector::from_vec(x0);

    // Seed the quasi-Newton metric with the inverse score outer product
    // (the sample information matrix), which puts steps on Newton scale,
    // and refresh it at each accepted point: the per-individual scores are
    // already in the evaluation scratch, so a refresh costs no extra
    // likelihood evaluations.
    let (_, _) = evaluator.loglik_grad_with(x0.as_slice(), &mut scratch.borrow_mut())?;
    let seed = inverse_score_outer(evaluator, &scratch.borrow());

    let objective = |x: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (ll, grad) = evaluator.loglik_grad_with(x.as_slice(), &mut scratch.borrow_mut())?;
        Ok((-ll, -DVector::from_vec(grad)))
    };
    // Secant updates refine the seed from there; re-seeding each step with
    // a fresh score product was tried and loses once spreads pin near zero,
    // where the outer product turns ill-conditioned.
    minimize_seeded(objective, x0, seed, &optim_options(options))
}

/// Fits the plain logit layer of a spec (no random coefficients).
fn fit_plain(
    spec: &ModelSpec,
    data: &ModelData,
    draws: DrawView<'_>,
    options: &FitOptions,
) -> Result<(Vec<f64>, OptimResult)> {
    let plain_spec = ModelSpec {
        random_set: Vec::new(),
        ..spec.clone()
    };
    let evaluator = Evaluator::new(&plain_spec, data, draws.truncate(0)?, options.parallel)?;
    let x0 = frequency_start(data, &plain_spec);
    let result = run_optimizer(&evaluator, x0, options)?;
    Ok((result.x.as_slice().to_vec(), result))
}

/// Fits a mixed logit specification by maximum simulated likelihood.
pub fn fit_mle(
    spec: &ModelSpec,
    data: &ModelData,
    draw_config: &DrawConfig,
    options: &FitOptions,
) -> Result<FitResult> {
    fit_mle_warm(spec, data, draw_config, options, None)
}

/// Like [`fit_mle`], warm-starting shared parameters from a previous fit on
/// the same data (spread parameters for newly added variables start at
/// `sigma_init`).
pub fn fit_mle_warm(
    spec: &ModelSpec,
    data: &ModelData,
    draw_config: &DrawConfig,
    options: &FitOptions,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    let k = effective_spec(spec, data).random_set.len();
    let draws = DrawSet::generate(draw_config, k, data.n_individuals())?;
    fit_with_draws(spec, data, draw_config, options, warm, draws.view())
}

/// Fit against an externally generated draw set (its dimension prefix must
/// cover the spec's random set). Model selection shares one wide draw set
/// across every candidate subset this way.
pub fn fit_with_draws(
    spec: &ModelSpec,
    data: &ModelData,
    draw_config: &DrawConfig,
    options: &FitOptions,
    warm: Option<&FitResult>,
    draws_in: DrawView<'_>,
) -> Result<FitResult> {
    let never = data.never_chosen();
    if !never.is_empty() {
        return Err(Error::UnidentifiedProducts { ids: never });
    }
    let spec = effective_spec(spec, data);
    let layout = data.layout(&spec);
    let k_random = spec.random_set.len();

    // Starting point: warm fit if compatible, otherwise a plain-logit fit.
    let mut x0 = vec![0.0; layout.k()];
    let mut plain_iterations = 0;
    match warm {
        Some(prev) if prev.product_ids == data.product_ids => {
            let prev_layout = data.layout(&prev.spec);
            for j in 0..data.product_ids.len() {
                if let (Some(p), Some(q)) = (layout.delta_param(j), prev_layout.delta_param(j)) {
                    x0[p] = prev.raw_params[q];
                }
            }
            x0[layout.alpha_param()] = prev.alpha_mean;
            if let (Some(g), Some(prev_g)) = (layout.gamma_param(), prev.gamma) {
                x0[g] = prev_g;
            }
            for (v, var) in spec.random_set.iter().enumerate() {
                x0[layout.sigma_param(v)] = match prev
                    .spec
                    .random_set
                    .iter()
                    .position(|w| w == var)
                {
                    Some(w) => prev.raw_params[prev_layout.sigma_param(w)],
                    None => options.sigma_init,
                };
            }
        }
        _ => {
            let (plain_x, plain_result) = fit_plain(&spec, data, draws_in, options)?;
            plain_iterations = plain_result.iterations;
            if k_random == 0 {
                return Ok(build_result(
                    spec,
                    data,
                    draw_config,
                    plain_result,
                    plain_iterations,
                ));
            }
            let plain_layout = data.layout(&ModelSpec {
                random_set: Vec::new(),
                ..spec.clone()
            });
            for j in 0..data.product_ids.len() {
                if let (Some(p), Some(q)) = (layout.delta_param(j), plain_layout.delta_param(j)) {
                    x0[p] = plain_x[q];
                }
            }
            x0[layout.alpha_param()] = plain_x[plain_layout.alpha_param()];
            if let (Some(g), Some(pg)) = (layout.gamma_param(), plain_layout.gamma_param()) {
                x0[g] = plain_x[pg];
            }
            for v in 0..k_random {
                x0[layout.sigma_param(v)] = options.sigma_init;
            }
        }
    }
    if k_random == 0 {
        // Warm-started plain logit still needs its own optimization run.
        let evaluator = Evaluator::new(&spec, data, draws_in.truncate(0)?, options.parallel)?;
        let result = run_optimizer(&evaluator, x0, options)?;
        return Ok(build_result(spec, data, draw_config, result, 0));
    }

    let evaluator = Evaluator::new(&spec, data, draws_in.truncate(k_random)?, options.parallel)?;

    let mut best: Option<OptimResult> = None;
    for start in 0..options.starts.max(1) {
        let candidate = if start == 0 {
            x0.clone()
        } else {
            let mut stream = Stream::for_unit(draw_config.seed, start as u64);
            let mut x = x0.clone();
            for (p, value) in x.iter_mut().enumerate() {
                let spread = if p >= layout.sigma_param(0) { 0.5 } else { 0.2 };
                *value += (stream.next_unit() - 0.5) * 2.0 * spread;
            }
            x
        };
        let result = run_optimizer(&evaluator, candidate, options)?;
        let better = match &best {
            Some(b) => -result.f > -b.f,
            None => true,
        };
        if better {
            best = Some(result);
        }
    }
    let result = best.expect("at least one start");
    Ok(build_result(spec, data, draw_config, result, plain_iterations))
}

fn build_result(
    spec: ModelSpec,
    data: &ModelData,
    draw_config: &DrawConfig,
    optim: OptimResult,
    warmup_iterations: usize,
) -> FitResult {
    let layout = data.layout(&spec);
    let x = optim.x.as_slice();
    let delta: Vec<f64> = (0..data.product_ids.len())
        .map(|j| layout.delta_param(j).map_or(0.0, |p| x[p]))
        .collect();
    let sigma: Vec<f64> = (0..spec.random_set.len())
        .map(|v| x[layout.sigma_param(v)].abs())
        .collect();
    let loglik = -optim.f;
    let k = layout.k();
    let (aic, bic) = information_criteria(loglik, k, data.n_obs);
    FitResult {
        alpha_mean: x[layout.alpha_param()],
        gamma: layout.gamma_param().map(|g| x[g]),
        delta,
        sigma,
        loglik,
        k,
        aic,
        bic,
        converged: optim.converged,
        iterations: optim.iterations + warmup_iterations,
        draw_config: draw_config.clone(),
        n_obs: data.n_obs,
        product_ids: data.product_ids.clone(),
        raw_params: x.to_vec(),
        spec,
    }
}

/// Parameter standard errors mapped back to named parameters.
#[derive(Clone, Debug)]
pub struct StdErrors {
    /// Per catalog product; `None` for the base product.
    pub delta: Vec<Option<f64>>,
    pub alpha_mean: f64,
    pub gamma: Option<f64>,
    pub sigma: Vec<f64>,
}

/// Inverse-Hessian standard errors at the fitted optimum. The Hessian is a
/// central finite difference of the analytic gradient.
pub fn standard_errors(
    fit: &FitResult,
    data: &ModelData,
    options: &FitOptions,
) -> Result<StdErrors> {
    let spec = effective_spec(&fit.spec, data);
    let layout = data.layout(&spec);
    let k = layout.k();
    let draws = DrawSet::generate(&fit.draw_config, spec.random_set.len(), data.n_individuals())?;
    let evaluator = Evaluator::new(&spec, data, draws.view(), options.parallel)?;
    let mut scratch = evaluator.scratch();

    let mut hessian = DMatrix::<f64>::zeros(k, k);
    let mut x = fit.raw_params.clone();
    for j in 0..k {
        let h = 1e-5 * x[j].abs().max(1.0);
        let original = x[j];
        x[j] = original + h;
        let (_, g_plus) = evaluator.loglik_grad_with(&x, &mut scratch)?;
        x[j] = original - h;
        let (_, g_minus) = evaluator.loglik_grad_with(&x, &mut scratch)?;
        x[j] = original;
        for i in 0..k {
            hessian[(i, j)] = (g_plus[i] - g_minus[i]) / (2.0 * h);
        }
    }
    // Symmetrize and invert the negative Hessian.
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let info = -hessian;
    let cov = info
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Hessian; standard errors unavailable".into()))?;
    let se = |p: usize| -> Result<f64> {
        let v = cov[(p, p)];
        if v.is_finite() && v >= 0.0 {
            Ok(v.sqrt())
        } else {
            Err(Error::Numerical(format!(
                "negative variance for parameter {p}; not at an interior optimum"
            )))
        }
    };
    let mut delta = Vec::with_capacity(data.product_ids.len());
    for j in 0..data.product_ids.len() {
        delta.push(match layout.delta_param(j) {
            Some(p) => Some(se(p)?),
            None => None,
        });
    }
    Ok(StdErrors {
        alpha_mean: se(layout.alpha_param())?,
        gamma: match layout.gamma_param() {
            Some(g) => Some(se(g)?),
            None => None,
        },
        sigma: (0..spec.random_set.len())
            .map(|v| se(layout.sigma_param(v)))
            .collect::<Result<Vec<_>>>()?,
        delta,
    })
}
