//! `merger`: Bertrand-Nash pricing of a two-product merger.

use anyhow::{bail, Result};

use demand_core::counterfactual::{merger_simulation, Market};
use demand_core::draws::DrawSet;

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::diversions::load_fit;
use super::{load_dataset, write_csv};

pub fn run(
    config: &RunConfig,
    pair: &[String],
    fixed_price: Option<f64>,
    mc: Option<f64>,
) -> Result<()> {
    let mut manifest = Manifest::start("merger");
    let [a, b] = pair else {
        bail!("--pair expects exactly two product ids");
    };
    let fixed_price = fixed_price.unwrap_or(config.fixed_price);
    let mc = mc.unwrap_or(config.mc);

    let dataset = load_dataset(config, &mut manifest, true)?;
    let fit_path = config.out.join("fit.json");
    let (fit, data) = load_fit(config, &fit_path, &dataset, &mut manifest)?;

    let index = |id: &String| -> Result<usize> {
        data.product_ids
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| anyhow::anyhow!("unknown product {id}"))
    };
    let pair_idx = (index(a)?, index(b)?);

    let market = Market::new(&fit, &data)?;
    let draws = DrawSet::generate(&fit.draw_config, market.k_random(), 1)?;
    let view = draws.view();
    let outcome = merger_simulation(
        &market,
        pair_idx,
        fixed_price,
        mc,
        view.individual(0),
        view.r,
    )?;
    if !outcome.separate.converged || !outcome.joint.converged {
        bail!(demand_core::Error::Numerical(format!(
            "equilibrium solver did not converge (separate foc {:.2e}, joint foc {:.2e})",
            outcome.separate.foc_norm, outcome.joint.foc_norm
        )));
    }

    println!(
        "merging {a} + {b}: separate prices ({:.4}, {:.4}), joint ({:.4}, {:.4}), avg increase {:.3}%",
        outcome.separate.prices[pair_idx.0],
        outcome.separate.prices[pair_idx.1],
        outcome.joint.prices[pair_idx.0],
        outcome.joint.prices[pair_idx.1],
        outcome.avg_price_increase_pct
    );

    let rows = vec![
        vec![
            "partner_id".to_string(),
            "avg_price_increase_pct".to_string(),
            "challenged_at_5pct".to_string(),
        ],
        vec![
            b.clone(),
            outcome.avg_price_increase_pct.to_string(),
            (outcome.avg_price_increase_pct >= 5.0).to_string(),
        ],
    ];
    write_csv(&config.out.join("merger_report.csv"), &rows, &mut manifest)?;
    manifest.write(config)
}
