//! `diversions`: predicted diversion matrix for a fitted model, plus the
//! empirical matrix when second choices are present.

use std::path::Path;

use anyhow::{bail, Context, Result};

use demand_core::counterfactual::{
    closest_substitute_diversion, empirical_diversions, predicted_diversions,
    predicted_diversions_at, DiversionMatrix, Profile,
};
use demand_core::mixlogit::{FitResult, FitResultJson, ModelData, RandomVar};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::{attribute_pcs, load_dataset, pcs_for_source, write_csv};

/// Reads `fit.json` and rebuilds the fit plus the model data it needs.
pub fn load_fit(
    config: &RunConfig,
    path: &Path,
    dataset: &demand_core::Dataset,
    manifest: &mut Manifest,
) -> Result<(FitResult, ModelData)> {
    if !path.exists() {
        bail!("missing upstream artifact: expected fit file {}", path.display());
    }
    manifest.input(path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let json: FitResultJson =
        serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;

    let pcs = match &json.spec.source {
        Some(source) => Some(pcs_for_source(dataset, source, config)?),
        None => None,
    };
    let attr = if json
        .spec
        .random_set
        .iter()
        .any(|v| matches!(v, RandomVar::AttrPc(_)))
    {
        attribute_pcs(dataset, config)?
    } else {
        None
    };
    let data = ModelData::assemble(dataset, pcs.as_ref(), attr.as_ref())?;
    let fit = FitResult::from_json(&json, data.product_ids.clone())?;
    Ok((fit, data))
}

pub fn diversion_rows(matrix: &DiversionMatrix) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(matrix.n() + 1);
    let mut header = vec!["product_id".to_string()];
    header.extend(matrix.product_ids.iter().cloned());
    rows.push(header);
    for j in 0..matrix.n() {
        let mut row = vec![matrix.product_ids[j].clone()];
        if matrix.missing_rows.contains(&j) {
            row.extend(std::iter::repeat(String::new()).take(matrix.n()));
        } else {
            row.extend((0..matrix.n()).map(|k| matrix.values[(j, k)].to_string()));
        }
        rows.push(row);
    }
    rows
}

pub fn run(config: &RunConfig, fit_path: Option<&Path>, common_price: Option<f64>) -> Result<()> {
    let mut manifest = Manifest::start("diversions");
    let default_path = config.out.join("fit.json");
    let fit_path = fit_path.unwrap_or(&default_path);

    let dataset = load_dataset(config, &mut manifest, true)?;
    let (fit, data) = load_fit(config, fit_path, &dataset, &mut manifest)?;

    let matrix = match common_price {
        Some(price) => {
            let profile = Profile::uniform(data.product_ids.len(), price);
            predicted_diversions_at(&fit, &data, &fit.draw_config, &profile)?
        }
        None => {
            let (matrix, skipped) = predicted_diversions(&fit, &data, &fit.draw_config)?;
            if skipped > 0 {
                eprintln!(
                    "warning: {skipped} (individual, product) pairs skipped for first-choice probability under 1e-12"
                );
            }
            matrix
        }
    };
    write_csv(
        &config.out.join("diversions.csv"),
        &diversion_rows(&matrix),
        &mut manifest,
    )?;
    println!(
        "closest-substitute diversion (predicted): {:.4}",
        closest_substitute_diversion(&matrix)?
    );

    if dataset.observations.iter().any(|o| o.task == 2) {
        let emp = empirical_diversions(&dataset)?;
        write_csv(
            &config.out.join("diversions_empirical.csv"),
            &diversion_rows(&emp),
            &mut manifest,
        )?;
        println!(
            "closest-substitute diversion (empirical): {:.4}",
            closest_substitute_diversion(&emp)?
        );
    }
    manifest.write(config)
}
