//! `fit`: estimate one model specification and write `fit.json`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use demand_core::mixlogit::{self, ModelData, ModelSpec, RandomVar};
use demand_core::SourceDescriptor;

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::{attribute_pcs, load_dataset, pcs_for_source, write_json};

/// On-disk model specification (a subset of [`ModelSpec`]; rank presence
/// defaults to whatever the data carry).
#[derive(Deserialize)]
struct SpecFile {
    source: Option<SourceDescriptor>,
    #[serde(default)]
    random_set: Vec<RandomVar>,
    includes_rank: Option<bool>,
}

pub fn run(config: &RunConfig, spec_path: &Path) -> Result<()> {
    let mut manifest = Manifest::start("fit");
    if !spec_path.exists() {
        bail!(
            "missing upstream artifact: expected spec file {}",
            spec_path.display()
        );
    }
    manifest.input(spec_path);
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("cannot read {}", spec_path.display()))?;
    let spec_file: SpecFile = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse {}", spec_path.display()))?;

    let needs_embeddings = spec_file.source.is_some();
    let dataset = load_dataset(config, &mut manifest, needs_embeddings)?;

    let pcs = match &spec_file.source {
        Some(source) => Some(pcs_for_source(&dataset, source, config)?),
        None => None,
    };
    let needs_attr_pcs = spec_file
        .random_set
        .iter()
        .any(|v| matches!(v, RandomVar::AttrPc(_)));
    let attr = if needs_attr_pcs {
        let store = attribute_pcs(&dataset, config)?;
        if store.is_none() {
            bail!("spec uses attribute components but the catalog has no attributes");
        }
        store
    } else {
        None
    };

    let data = ModelData::assemble(&dataset, pcs.as_ref(), attr.as_ref())?;
    if spec_file.includes_rank == Some(true) && !data.has_ranks {
        bail!("spec requires rank terms but the choices file has no ranks");
    }
    let includes_rank = spec_file.includes_rank.unwrap_or(data.has_ranks);
    let p = pcs.as_ref().map_or(0, |s| s.n_components());
    let spec = ModelSpec::new(spec_file.source, spec_file.random_set, includes_rank, p)?;

    let fit = mixlogit::fit_mle(&spec, &data, &config.draw_config(), &config.fit_options())?;
    if !fit.converged {
        eprintln!(
            "warning: optimizer stopped without meeting tolerances after {} iterations",
            fit.iterations
        );
    }
    println!(
        "{}: loglik {:.4}, aic {:.4}, bic {:.4}, k {}",
        fit.spec.label(),
        fit.loglik,
        fit.aic,
        fit.bic,
        fit.k
    );

    let path = config.out.join("fit.json");
    write_json(&path, &fit.to_json(Some(manifest.elapsed_ms())), &mut manifest)?;
    manifest.write(config)
}
