//! Subcommand implementations.

use std::path::Path;

use anyhow::{bail, Context, Result};

use demand_core::data::{self, DataType, Dataset, Product, SourceDescriptor};
use demand_core::pca::{fit_source, PcStore};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub mod design_select;
pub mod diversions;
pub mod featurize;
pub mod fit;
pub mod merger;
pub mod pca;
pub mod select;
pub mod simulate;
pub mod validate;
pub mod weights;

/// Loads the catalog (and reviews when the file exists), registering the
/// inputs on the manifest.
pub fn load_catalog(config: &RunConfig, manifest: &mut Manifest) -> Result<Vec<Product>> {
    if !config.products.exists() {
        bail!(
            "missing upstream artifact: expected products file {}",
            config.products.display()
        );
    }
    manifest.input(&config.products);
    let mut catalog = data::io::load_products(&config.products)?;
    if config.reviews.exists() {
        manifest.input(&config.reviews);
        data::io::load_reviews(&config.reviews, &mut catalog)?;
    }
    Ok(catalog)
}

/// Loads catalog + choices (+ embeddings when present) into a validated
/// dataset.
pub fn load_dataset(
    config: &RunConfig,
    manifest: &mut Manifest,
    with_embeddings: bool,
) -> Result<Dataset> {
    let catalog = load_catalog(config, manifest)?;
    if !config.choices.exists() {
        bail!(
            "missing upstream artifact: expected choices file {}",
            config.choices.display()
        );
    }
    manifest.input(&config.choices);
    let observations = data::io::load_choices(&config.choices)?;
    let ids: Vec<String> = catalog.iter().map(|p| p.id.clone()).collect();
    let embeddings = if with_embeddings {
        if !config.embeddings.is_dir() {
            bail!(
                "missing upstream artifact: expected embeddings directory {}",
                config.embeddings.display()
            );
        }
        manifest.input_dir(&config.embeddings)?;
        data::io::load_embeddings_dir(&config.embeddings, &ids)?
    } else {
        Vec::new()
    };
    let dataset = Dataset {
        catalog,
        observations,
        embeddings,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Principal components of one embedding source, derived on the fly with
/// the run's PCA settings. Attribute sources are always standardized.
pub fn pcs_for_source(
    dataset: &Dataset,
    source: &SourceDescriptor,
    config: &RunConfig,
) -> Result<PcStore> {
    let Some(embedding) = dataset.embedding(source) else {
        bail!(
            "missing upstream artifact: expected embedding file {}",
            config.embeddings.join(format!("{}.csv", source.stem())).display()
        );
    };
    let standardize = config.standardize || source.data_type == DataType::Attributes;
    Ok(fit_source(embedding, config.components, standardize)?)
}

/// Attribute principal components from catalog attributes, when present.
pub fn attribute_pcs(dataset: &Dataset, config: &RunConfig) -> Result<Option<PcStore>> {
    if dataset.catalog.iter().all(|p| p.attributes.is_empty()) {
        return Ok(None);
    }
    let embedding = data::attach_attributes_as_embedding(&dataset.catalog)?;
    Ok(Some(fit_source(&embedding, config.components, true)?))
}

/// Writes a JSON value, registering the output.
pub fn write_json<T: serde::Serialize>(
    path: &Path,
    value: &T,
    manifest: &mut Manifest,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    manifest.output(path);
    Ok(())
}

/// Writes CSV rows (first row is the header), registering the output.
pub fn write_csv(path: &Path, rows: &[Vec<String>], manifest: &mut Manifest) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    manifest.output(path);
    Ok(())
}
