//! `select`: the forward AIC search across every embedding source.

use anyhow::Result;

use demand_core::selection::{select_across_specs, Algorithm1Options, SpecGrid};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::{load_dataset, write_json};

pub fn run(config: &RunConfig, max_pc: Option<usize>, with_attributes: bool) -> Result<()> {
    let mut manifest = Manifest::start("select");
    let dataset = load_dataset(config, &mut manifest, true)?;

    let p = max_pc.unwrap_or(config.components);
    let grid = SpecGrid::build(&dataset, p, with_attributes)?;
    let options = Algorithm1Options {
        improvement_threshold: config.aic_threshold,
        max_k: config.max_k_option(),
        parallel_subsets: true,
        fit: demand_core::mixlogit::FitOptions {
            parallel: false,
            ..config.fit_options()
        },
    };
    let outcome = select_across_specs(&grid, &dataset, &config.draw_config(), &options)?;

    for result in &outcome.results {
        let label = result
            .trace
            .source
            .as_ref()
            .map(|s| s.stem())
            .unwrap_or_else(|| "plain".into());
        println!(
            "{label}: best {{{}}} aic {:.4} (vs plain {:+.4})",
            result
                .trace
                .best_subset
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            result.trace.best_aic,
            result.trace.delta_aic_vs_plain,
        );
    }
    let winner = outcome.winner_result();
    println!(
        "winner: {} {{{}}} aic {:.4}",
        winner
            .trace
            .source
            .as_ref()
            .map(|s| s.stem())
            .unwrap_or_default(),
        winner
            .trace
            .best_subset
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        winner.trace.best_aic
    );
    if !outcome.ties.is_empty() {
        eprintln!(
            "note: best AIC tied across sources: {}",
            outcome
                .ties
                .iter()
                .map(|s| s.stem())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    let path = config.out.join("selection_trace.json");
    write_json(&path, &outcome.to_trace_json(), &mut manifest)?;
    manifest.write(config)
}
