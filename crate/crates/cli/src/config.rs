//! Flat run configuration: JSON file defaults, command-line flags win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use demand_core::draws::DrawConfig;
use demand_core::mixlogit::FitOptions;
use demand_core::selection::AIC_IMPROVEMENT_THRESHOLD;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Paths.
    pub products: PathBuf,
    pub choices: PathBuf,
    pub reviews: PathBuf,
    pub embeddings: PathBuf,
    pub out: PathBuf,

    // Simulation draws.
    pub method: String,
    pub draws: usize,
    pub seed: u64,
    pub burn: usize,

    // Principal components.
    pub components: usize,
    pub standardize: bool,

    // Specification search.
    pub max_k: usize,
    pub aic_threshold: f64,

    // Optimizer.
    pub grad_tol: f64,
    pub ll_tol: f64,
    pub max_iter: usize,
    pub starts: usize,

    // Pricing counterfactuals.
    pub fixed_price: f64,
    pub mc: f64,

    /// 0 = one worker per CPU.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            products: "products.csv".into(),
            choices: "choices.csv".into(),
            reviews: "reviews.csv".into(),
            embeddings: "embeddings".into(),
            out: "out".into(),
            method: "halton".into(),
            draws: 1000,
            seed: 12345,
            burn: 100,
            components: 6,
            standardize: false,
            max_k: 0,
            aic_threshold: AIC_IMPROVEMENT_THRESHOLD,
            grad_tol: 1e-6,
            ll_tol: 1e-9,
            max_iter: 500,
            starts: 1,
            fixed_price: 5.0,
            mc: 0.0,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))
    }

    pub fn draw_config(&self) -> DrawConfig {
        DrawConfig {
            method: self.method.clone(),
            r: self.draws,
            seed: self.seed,
            burn: self.burn,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            grad_tol: self.grad_tol,
            ll_rel_tol: self.ll_tol,
            max_iterations: self.max_iter,
            starts: self.starts,
            parallel: true,
            sigma_init: 0.1,
        }
    }

    pub fn max_k_option(&self) -> Option<usize> {
        if self.max_k == 0 {
            None
        } else {
            Some(self.max_k)
        }
    }
}
