//! `simulate`: write a synthetic two-task choice dataset with recorded
//! ground truth.

use std::path::Path;

use anyhow::{bail, Context, Result};

use demand_core::data::io::write_dataset;
use demand_core::design::{generate_synthetic, TruthParams};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::write_json;

pub fn run(config: &RunConfig, truth_path: &Path, n: usize) -> Result<()> {
    let mut manifest = Manifest::start("simulate");
    if !truth_path.exists() {
        bail!(
            "missing upstream artifact: expected truth file {}",
            truth_path.display()
        );
    }
    manifest.input(truth_path);
    let text = std::fs::read_to_string(truth_path)
        .with_context(|| format!("cannot read {}", truth_path.display()))?;
    let truth: TruthParams = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse {}", truth_path.display()))?;

    let output = generate_synthetic(&truth, n, config.seed)?;
    write_dataset(&config.out, &output.dataset)?;
    manifest.output(&config.out.join("products.csv"));
    manifest.output(&config.out.join("choices.csv"));
    manifest.output(&config.out.join("reviews.csv"));
    for emb in &output.dataset.embeddings {
        manifest.output(&config.out.join("embeddings").join(format!("{}.csv", emb.source.stem())));
    }
    write_json(&config.out.join("truth.json"), &output.truth, &mut manifest)?;

    println!(
        "simulated {n} individuals x 2 tasks over {} products -> {}",
        output.dataset.catalog.len(),
        config.out.display()
    );
    manifest.write(config)
}
