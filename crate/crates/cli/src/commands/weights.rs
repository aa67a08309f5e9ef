//! `weights`: per-data-type Akaike weights from the selection trace.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};

use demand_core::data::DataType;
use demand_core::selection::{akaike_weights, SelectionTraceJson};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::write_csv;

pub fn run(config: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::start("weights");
    let trace_path = config.out.join("selection_trace.json");
    if !trace_path.exists() {
        bail!(
            "missing upstream artifact: expected selection trace {}",
            trace_path.display()
        );
    }
    manifest.input(&trace_path);
    let text = std::fs::read_to_string(&trace_path)
        .with_context(|| format!("cannot read {}", trace_path.display()))?;
    let trace: SelectionTraceJson = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse {}", trace_path.display()))?;

    let mut best: BTreeMap<DataType, f64> = BTreeMap::new();
    for spec in &trace.specs {
        if let Some(source) = &spec.source {
            let entry = best.entry(source.data_type).or_insert(f64::INFINITY);
            *entry = entry.min(spec.best_aic);
        }
    }
    let weights = akaike_weights(&best)?;

    let mut rows = vec![vec![
        "data_type".to_string(),
        "delta_aic".to_string(),
        "weight".to_string(),
    ]];
    for entry in &weights.entries {
        println!(
            "{}: delta {:.4} weight {:.6}",
            entry.data_type, entry.delta_aic, entry.weight
        );
        rows.push(vec![
            entry.data_type.to_string(),
            entry.delta_aic.to_string(),
            entry.weight.to_string(),
        ]);
    }
    write_csv(&config.out.join("weights.csv"), &rows, &mut manifest)?;
    manifest.write(config)
}
