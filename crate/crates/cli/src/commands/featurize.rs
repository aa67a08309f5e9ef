//! `featurize`: count-model text embeddings written into the embeddings
//! directory.

use std::path::Path;

use anyhow::{Context, Result};

use demand_core::data::{self, DataType};
use demand_core::text::{featurizer_by_name, stopwords, ProductCorpus};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::load_catalog;

pub fn run(
    config: &RunConfig,
    kind: &str,
    source: &str,
    stopword_file: Option<&Path>,
) -> Result<()> {
    let mut manifest = Manifest::start("featurize");
    let catalog = load_catalog(config, &mut manifest)?;

    let data_type = DataType::parse(source)?;
    let featurizer = featurizer_by_name(kind)?;
    let words = match stopword_file {
        Some(path) => {
            manifest.input(path);
            stopwords::load(path)?
        }
        None => stopwords::bundled(),
    };
    let corpus = ProductCorpus::from_catalog(&catalog, data_type, &words)?;
    let embedding = featurizer.vectorize(&corpus)?;

    std::fs::create_dir_all(&config.embeddings)
        .with_context(|| format!("cannot create {}", config.embeddings.display()))?;
    let path = config
        .embeddings
        .join(format!("{}.csv", embedding.source.stem()));
    data::io::write_embeddings(&path, &embedding)?;
    manifest.output(&path);
    println!(
        "featurized {} products x {} terms -> {}",
        embedding.n_products(),
        embedding.dim(),
        path.display()
    );
    manifest.write(config)
}
