//! `pca`: materialize principal components for every embedding source.

use anyhow::{bail, Result};

use demand_core::data::{self, DataType};
use demand_core::pca::{fit_source, write_pcs};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::load_catalog;

pub fn run(config: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::start("pca");
    let catalog = load_catalog(config, &mut manifest)?;
    let ids: Vec<String> = catalog.iter().map(|p| p.id.clone()).collect();

    if !config.embeddings.is_dir() {
        bail!(
            "missing upstream artifact: expected embeddings directory {}",
            config.embeddings.display()
        );
    }
    manifest.input_dir(&config.embeddings)?;
    let mut sources = data::io::load_embeddings_dir(&config.embeddings, &ids)?;
    if catalog.iter().any(|p| !p.attributes.is_empty()) {
        sources.push(data::attach_attributes_as_embedding(&catalog)?);
    }
    if sources.is_empty() {
        bail!("no embedding sources found in {}", config.embeddings.display());
    }

    let out_dir = config.out.join("pcs");
    for embedding in &sources {
        let standardize =
            config.standardize || embedding.source.data_type == DataType::Attributes;
        let store = fit_source(embedding, config.components, standardize)?;
        write_pcs(&out_dir, &store)?;
        let stem = store.source.stem();
        manifest.output(&out_dir.join(format!("{stem}_pcs.csv")));
        manifest.output(&out_dir.join(format!("{stem}_meta.json")));
        let cumulative: f64 = store.explained_ratio.iter().sum();
        println!(
            "{stem}: {} components, cumulative explained ratio {cumulative:.4}",
            store.n_components()
        );
        for warning in &store.warnings {
            eprintln!("warning ({stem}): {warning}");
        }
    }
    manifest.write(config)
}
