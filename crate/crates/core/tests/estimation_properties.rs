//! Estimator-level invariants on small synthetic instances.

mod common;

use demand_core::design::generate_synthetic;
use demand_core::draws::{DrawConfig, DrawSet};
use demand_core::mixlogit::{fit_mle, Evaluator, FitOptions, ModelData, ModelSpec, RandomVar};
use demand_core::rng::Stream;

use common::small_truth;

fn instance() -> (ModelData, ModelSpec) {
    let out = generate_synthetic(&small_truth(), 400, 17).unwrap();
    let data = ModelData::assemble(&out.dataset, Some(&out.pc_store), None).unwrap();
    let spec = ModelSpec::new(None, vec![RandomVar::Price, RandomVar::Pc(1)], true, 2).unwrap();
    (data, spec)
}

fn random_params(layout: &demand_core::mixlogit::ParamLayout, stream: &mut Stream) -> Vec<f64> {
    (0..layout.k())
        .map(|j| {
            if j >= layout.sigma_param(0) {
                0.3 + stream.next_unit()
            } else {
                stream.next_unit() - 0.5
            }
        })
        .collect()
}

#[test]
fn spread_sign_flip_leaves_likelihood_unchanged() {
    let (data, spec) = instance();
    let layout = data.layout(&spec);
    let draws = DrawSet::generate(&DrawConfig::halton(40, 5, 30), 2, data.n_individuals()).unwrap();
    let evaluator = Evaluator::new(&spec, &data, draws.view(), false).unwrap();
    let mut stream = Stream::new(99);
    for _ in 0..5 {
        let x = random_params(&layout, &mut stream);
        let base = evaluator.loglik(&x).unwrap();
        for v in 0..2 {
            let mut flipped = x.clone();
            flipped[layout.sigma_param(v)] = -flipped[layout.sigma_param(v)];
            let ll = evaluator.loglik(&flipped).unwrap();
            assert!(
                (ll - base).abs() < 1e-12,
                "sign flip moved the likelihood by {}",
                (ll - base).abs()
            );
        }
    }
}

#[test]
fn per_draw_probabilities_sum_to_one() {
    let (data, spec) = instance();
    let layout = data.layout(&spec);
    let draws = DrawSet::generate(&DrawConfig::halton(8, 2, 10), 2, data.n_individuals()).unwrap();
    let evaluator = Evaluator::new(&spec, &data, draws.view(), false).unwrap();
    let mut stream = Stream::new(4);
    let x = random_params(&layout, &mut stream);
    let view = draws.view();
    for i in [0usize, 3, 7] {
        let obs = &data.individuals[i].obs[0];
        let block = view.individual(i);
        for r in 0..view.r {
            let eta: Vec<f64> = (0..2).map(|d| block[d * view.r + r]).collect();
            let utilities = evaluator.utility_row(&x, obs, &eta);
            let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = utilities.iter().map(|v| (v - max).exp()).sum();
            let prob_sum: f64 = utilities.iter().map(|v| (v - max).exp() / total).sum();
            assert!((prob_sum - 1.0).abs() < 1e-12);
        }
    }
}

/// For a fixed seed the gap between successive draw-count refinements
/// shrinks as the simulation gets finer.
#[test]
fn draw_refinement_gaps_shrink() {
    let (data, spec) = instance();
    let layout = data.layout(&spec);
    let mut stream = Stream::new(12);
    let x = random_params(&layout, &mut stream);

    let ll_at = |r: usize| -> f64 {
        let draws =
            DrawSet::generate(&DrawConfig::halton(r, 3, 100), 2, data.n_individuals()).unwrap();
        Evaluator::new(&spec, &data, draws.view(), false)
            .unwrap()
            .loglik(&x)
            .unwrap()
    };
    let coarse_gap = (ll_at(250) - ll_at(500)).abs();
    let fine_gap = (ll_at(2000) - ll_at(4000)).abs();
    assert!(
        fine_gap < coarse_gap,
        "refinement gap grew: coarse {coarse_gap:.3e}, fine {fine_gap:.3e}"
    );
}

/// Fitting data simulated with a zero spread estimates a spread near zero.
#[test]
fn zero_spread_is_recovered_small() {
    let mut truth = small_truth();
    truth.sigma = [("PC1".to_string(), 0.0)].into_iter().collect();
    let out = generate_synthetic(&truth, 20_000, 42).unwrap();
    let data = ModelData::assemble(&out.dataset, Some(&out.pc_store), None).unwrap();
    let spec = ModelSpec::new(None, vec![RandomVar::Pc(1)], true, 2).unwrap();
    let fit = fit_mle(
        &spec,
        &data,
        &DrawConfig::halton(64, 42, 100),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(
        fit.sigma[0] < 0.05,
        "estimated spread {} for a zero-spread truth",
        fit.sigma[0]
    );
}

/// A plain logit fit on plain-logit truth recovers every parameter within
/// three estimated standard errors.
#[test]
fn plain_logit_recovery_within_three_se() {
    use demand_core::design::TruthParams;
    use demand_core::mixlogit::standard_errors;
    use std::collections::BTreeMap;

    let truth = TruthParams {
        n_products: 3,
        alpha_mean: -1.0,
        gamma: None,
        delta: vec![0.0, 0.5, -0.5],
        sigma: BTreeMap::new(),
        pc_dims: 1,
        pc_scores: None,
        price_grid: TruthParams::default_price_grid(),
        persist_epsilon: false,
    };
    let out = generate_synthetic(&truth, 5_000, 23).unwrap();
    let data = ModelData::assemble(&out.dataset, Some(&out.pc_store), None).unwrap();
    let spec = ModelSpec::new(None, vec![], false, 1).unwrap();
    let options = FitOptions::default();
    let fit = fit_mle(&spec, &data, &DrawConfig::halton(4, 0, 0), &options).unwrap();
    let se = standard_errors(&fit, &data, &options).unwrap();

    assert!(((fit.alpha_mean - -1.0) / se.alpha_mean).abs() < 3.0);
    for j in 0..3 {
        if let Some(se_j) = se.delta[j] {
            assert!(
                ((fit.delta[j] - truth.delta[j]) / se_j).abs() < 3.0,
                "delta {j}: {} vs {} (se {se_j})",
                fit.delta[j],
                truth.delta[j]
            );
        }
    }
}

/// Extra optimizer starts can only improve the final likelihood.
#[test]
fn multistart_never_hurts() {
    let (data, spec) = instance();
    let config = DrawConfig::halton(24, 6, 50);
    let single = fit_mle(&spec, &data, &config, &FitOptions::default()).unwrap();
    let multi = fit_mle(
        &spec,
        &data,
        &config,
        &FitOptions {
            starts: 3,
            ..FitOptions::default()
        },
    )
    .unwrap();
    assert!(multi.loglik >= single.loglik - 1e-9);
}
