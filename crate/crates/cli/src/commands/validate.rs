//! `validate`: in-sample fit and counterfactual second-choice accuracy for
//! every fitted specification, against the plain-logit baseline.

use anyhow::{bail, Context, Result};
use serde::Serialize;

use demand_core::counterfactual::{empirical_diversions, predicted_diversions, second_choice_rmse};
use demand_core::mixlogit::{fit_mle, FitResultJson, ModelData, ModelSpec, RandomVar};
use demand_core::selection::SelectionTraceJson;
use demand_core::SourceDescriptor;

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::{attribute_pcs, load_dataset, pcs_for_source, write_json};

#[derive(Serialize)]
struct ModelReport {
    label: String,
    source: Option<SourceDescriptor>,
    random_set: Vec<RandomVar>,
    loglik: f64,
    aic: f64,
    bic: f64,
    k: usize,
    converged: bool,
    rmse: f64,
    delta_rmse_vs_plain: f64,
    pct_rmse_vs_plain: f64,
    skipped_pairs: usize,
}

#[derive(Serialize)]
struct ValidationReport {
    n_first_choices: usize,
    n_second_choices: usize,
    missing_empirical_rows: usize,
    models: Vec<ModelReport>,
}

pub fn run(config: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::start("validate");
    let dataset = load_dataset(config, &mut manifest, true)?;
    if !dataset.observations.iter().any(|o| o.task == 2) {
        bail!("validation needs second-choice (task 2) observations");
    }

    // Model list: plain logit plus whatever upstream artifacts define.
    let mut specs: Vec<(Option<SourceDescriptor>, Vec<RandomVar>)> = vec![(None, Vec::new())];
    let trace_path = config.out.join("selection_trace.json");
    let fit_path = config.out.join("fit.json");
    let mut found_upstream = false;
    if trace_path.exists() {
        manifest.input(&trace_path);
        let text = std::fs::read_to_string(&trace_path)
            .with_context(|| format!("cannot read {}", trace_path.display()))?;
        let trace: SelectionTraceJson = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {}", trace_path.display()))?;
        for spec in &trace.specs {
            specs.push((spec.source.clone(), spec.best_subset.clone()));
        }
        found_upstream = true;
    }
    if fit_path.exists() {
        manifest.input(&fit_path);
        let text = std::fs::read_to_string(&fit_path)
            .with_context(|| format!("cannot read {}", fit_path.display()))?;
        let json: FitResultJson = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {}", fit_path.display()))?;
        let entry = (json.spec.source.clone(), json.spec.random_set.clone());
        if !specs.contains(&entry) {
            specs.push(entry);
        }
        found_upstream = true;
    }
    if !found_upstream {
        bail!(
            "missing upstream artifact: expected {} or {}",
            trace_path.display(),
            fit_path.display()
        );
    }

    let emp = empirical_diversions(&dataset)?;
    let draw_config = config.draw_config();
    let options = config.fit_options();

    let mut models = Vec::new();
    let mut plain_rmse = None;
    for (source, random_set) in specs {
        let pcs = match &source {
            Some(s) => Some(pcs_for_source(&dataset, s, config)?),
            None => None,
        };
        let attr = if random_set.iter().any(|v| matches!(v, RandomVar::AttrPc(_))) {
            attribute_pcs(&dataset, config)?
        } else {
            None
        };
        let data = ModelData::assemble(&dataset, pcs.as_ref(), attr.as_ref())?;
        let p = pcs.as_ref().map_or(0, |s| s.n_components());
        let spec = ModelSpec::new(source.clone(), random_set.clone(), data.has_ranks, p)?;
        let fit = fit_mle(&spec, &data, &draw_config, &options)?;
        let (pred, skipped) = predicted_diversions(&fit, &data, &draw_config)?;
        let rmse = second_choice_rmse(&pred, &emp)?;
        if source.is_none() && random_set.is_empty() {
            plain_rmse = Some(rmse);
        }
        let base = plain_rmse.unwrap_or(rmse);
        models.push(ModelReport {
            label: fit.spec.label(),
            source,
            random_set,
            loglik: fit.loglik,
            aic: fit.aic,
            bic: fit.bic,
            k: fit.k,
            converged: fit.converged,
            rmse,
            delta_rmse_vs_plain: rmse - base,
            pct_rmse_vs_plain: if base > 0.0 {
                (rmse - base) / base * 100.0
            } else {
                0.0
            },
            skipped_pairs: skipped,
        });
    }

    for model in &models {
        println!(
            "{:<40} aic {:>12.4}  rmse {:.6} ({:+.1}% vs plain)",
            model.label, model.aic, model.rmse, model.pct_rmse_vs_plain
        );
    }
    let report = ValidationReport {
        n_first_choices: dataset.observations.iter().filter(|o| o.task == 1).count(),
        n_second_choices: dataset.observations.iter().filter(|o| o.task == 2).count(),
        missing_empirical_rows: emp.missing_rows.len(),
        models,
    };
    write_json(&config.out.join("validation_report.json"), &report, &mut manifest)?;
    manifest.write(config)
}
