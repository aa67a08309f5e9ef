//! `design-select`: variance-maximizing product subset under group balance.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use demand_core::data;
use demand_core::design::{max_variance_subset, SubsetConstraint};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::{load_catalog, write_json};

#[derive(Serialize)]
struct DesignSelection {
    mode: String,
    normalize: bool,
    objective: f64,
    selected: Vec<String>,
    group_counts: BTreeMap<String, usize>,
}

pub fn run(
    config: &RunConfig,
    n: usize,
    groups_path: &Path,
    mode: &str,
    normalize: bool,
) -> Result<()> {
    let mut manifest = Manifest::start("design-select");
    let catalog = load_catalog(config, &mut manifest)?;
    let ids: Vec<String> = catalog.iter().map(|p| p.id.clone()).collect();

    if !config.embeddings.is_dir() {
        bail!(
            "missing upstream artifact: expected embeddings directory {}",
            config.embeddings.display()
        );
    }
    manifest.input_dir(&config.embeddings)?;
    let sources = data::io::load_embeddings_dir(&config.embeddings, &ids)?;
    if sources.is_empty() {
        bail!("no embedding sources in {}", config.embeddings.display());
    }

    if !groups_path.exists() {
        bail!(
            "missing upstream artifact: expected groups file {}",
            groups_path.display()
        );
    }
    manifest.input(groups_path);
    let groups = load_groups(groups_path, &ids)?;

    let constraint = SubsetConstraint::balanced(groups.clone(), n)?;
    let selection = max_variance_subset(&sources, &constraint, mode, normalize, config.seed)?;

    let selected: Vec<String> = selection
        .indices
        .iter()
        .map(|&i| ids[i].clone())
        .collect();
    let mut group_counts: BTreeMap<String, usize> = BTreeMap::new();
    for &i in &selection.indices {
        *group_counts.entry(groups[i].clone()).or_insert(0) += 1;
    }
    println!(
        "selected {} products (objective {:.6}): {}",
        selected.len(),
        selection.objective,
        selected.join(", ")
    );
    let report = DesignSelection {
        mode: mode.to_string(),
        normalize,
        objective: selection.objective,
        selected,
        group_counts,
    };
    write_json(&config.out.join("design_selection.json"), &report, &mut manifest)?;
    manifest.write(config)
}

/// `product_id,group` rows aligned back to catalog order.
fn load_groups(path: &Path, ids: &[String]) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["product_id", "group"] {
        bail!("{}: expected header product_id,group", path.display());
    }
    let mut by_id: BTreeMap<String, String> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        by_id.insert(
            record.get(0).unwrap_or("").to_string(),
            record.get(1).unwrap_or("").to_string(),
        );
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .cloned()
                .ok_or_else(|| anyhow::anyhow!("{}: no group for product {id}", path.display()))
        })
        .collect()
}
