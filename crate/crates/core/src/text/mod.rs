//! Count-based text featurization: preprocessing, bag-of-words and TF-IDF
//! vectorizers, and per-review averaging.
//!
//! The two vectorizers sit behind the [`Featurizer`] trait and are looked up
//! by name, so configuration and CLI flags select them at runtime.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::data::{DataType, EmbeddingMatrix, Product, SourceDescriptor};
use crate::error::{Error, Result};

pub mod lemma;
pub mod stopwords;

pub use lemma::lemmatize;

/// Ordered token set shared by a corpus; order is lexicographic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from every token in the corpus.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Self {
        let unique: BTreeSet<String> = tokens
            .into_iter()
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect();
        let tokens: Vec<String> = unique.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Raw count vector of one document.
    pub fn count(&self, doc: &[String]) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        for token in doc {
            if let Some(i) = self.index_of(token) {
                row[i] += 1.0;
            }
        }
        row
    }
}

/// Lowercases, strips punctuation, tokenizes on whitespace, drops stopwords
/// and lemmatizes what remains.
pub fn preprocess(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !stopwords.contains(*t))
        .map(lemmatize)
        .collect()
}

/// Component-wise mean of equal-length per-review vectors.
pub fn average_review_embedding(per_review: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_review.first() else {
        return Err(Error::Validation("product has no reviews".into()));
    };
    let dim = first.len();
    if per_review.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation(
            "per-review vectors have unequal lengths".into(),
        ));
    }
    let mut mean = vec![0.0; dim];
    for vector in per_review {
        for (m, v) in mean.iter_mut().zip(vector) {
            *m += v;
        }
    }
    let n = per_review.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Tokenized documents for one data type: one document per product for
/// titles and descriptions, one per review for reviews.
#[derive(Clone, Debug)]
pub struct ProductCorpus {
    pub data_type: DataType,
    pub product_ids: Vec<String>,
    pub docs: Vec<Vec<Vec<String>>>,
}

impl ProductCorpus {
    pub fn from_catalog(
        catalog: &[Product],
        data_type: DataType,
        stopwords: &BTreeSet<String>,
    ) -> Result<Self> {
        if catalog.is_empty() {
            return Err(Error::Validation("empty catalog".into()));
        }
        let docs = catalog
            .iter()
            .map(|p| match data_type {
                DataType::Title => vec![preprocess(&p.title, stopwords)],
                DataType::Description => vec![preprocess(&p.description, stopwords)],
                DataType::Reviews => p
                    .reviews
                    .iter()
                    .map(|r| preprocess(r, stopwords))
                    .collect(),
                DataType::Image | DataType::Attributes => Vec::new(),
            })
            .collect();
        if matches!(data_type, DataType::Image | DataType::Attributes) {
            return Err(Error::Validation(format!(
                "featurizers apply to text data, not {data_type}"
            )));
        }
        Ok(ProductCorpus {
            data_type,
            product_ids: catalog.iter().map(|p| p.id.clone()).collect(),
            docs,
        })
    }

    fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.docs
            .iter()
            .flatten()
            .flatten()
            .map(|s| s.as_str())
    }

    /// Per-product term frequencies over the corpus vocabulary. Products with
    /// several documents (reviews) get the mean of per-document count rows.
    fn term_frequencies(&self) -> Result<(Vocabulary, DMatrix<f64>)> {
        let vocab = Vocabulary::build(self.all_tokens());
        if vocab.is_empty() {
            return Err(Error::Validation(format!(
                "{} corpus produced an empty vocabulary",
                self.data_type
            )));
        }
        let mut matrix = DMatrix::zeros(self.product_ids.len(), vocab.len());
        for (j, docs) in self.docs.iter().enumerate() {
            if docs.is_empty() {
                return Err(Error::Validation(format!(
                    "product {} has no {} text",
                    self.product_ids[j], self.data_type
                )));
            }
            let rows: Vec<Vec<f64>> = docs.iter().map(|d| vocab.count(d)).collect();
            let mean = average_review_embedding(&rows)?;
            for (c, v) in mean.into_iter().enumerate() {
                matrix[(j, c)] = v;
            }
        }
        Ok((vocab, matrix))
    }
}

/// A count-model text vectorizer selected by name at runtime.
pub trait Featurizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn vectorize(&self, corpus: &ProductCorpus) -> Result<EmbeddingMatrix>;
}

/// Raw word counts (per-review rows averaged into one row per product).
pub struct BagOfWords;

impl Featurizer for BagOfWords {
    fn name(&self) -> &'static str {
        "bow"
    }

    fn vectorize(&self, corpus: &ProductCorpus) -> Result<EmbeddingMatrix> {
        let (_, matrix) = corpus.term_frequencies()?;
        EmbeddingMatrix::new(
            SourceDescriptor::new(corpus.data_type, self.name()),
            corpus.product_ids.clone(),
            matrix,
        )
    }
}

/// Term frequencies reweighted by smoothed inverse document frequency,
/// `tf * (1 + ln((1 + J) / (1 + df)))`, with L2-normalized rows.
pub struct TfIdf;

impl Featurizer for TfIdf {
    fn name(&self) -> &'static str {
        "tfidf"
    }

    fn vectorize(&self, corpus: &ProductCorpus) -> Result<EmbeddingMatrix> {
        let (vocab, mut matrix) = corpus.term_frequencies()?;
        let n_products = matrix.nrows() as f64;
        for c in 0..vocab.len() {
            let df = (0..matrix.nrows()).filter(|&r| matrix[(r, c)] > 0.0).count() as f64;
            let idf = 1.0 + ((1.0 + n_products) / (1.0 + df)).ln();
            for r in 0..matrix.nrows() {
                matrix[(r, c)] *= idf;
            }
        }
        for r in 0..matrix.nrows() {
            let norm = (0..matrix.ncols())
                .map(|c| matrix[(r, c)] * matrix[(r, c)])
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for c in 0..matrix.ncols() {
                    matrix[(r, c)] /= norm;
                }
            }
        }
        EmbeddingMatrix::new(
            SourceDescriptor::new(corpus.data_type, self.name()),
            corpus.product_ids.clone(),
            matrix,
        )
    }
}

pub const FEATURIZER_NAMES: [&str; 2] = ["bow", "tfidf"];

/// Runtime lookup of a featurizer by its registered name.
pub fn featurizer_by_name(name: &str) -> Result<Box<dyn Featurizer>> {
    match name {
        "bow" => Ok(Box::new(BagOfWords)),
        "tfidf" => Ok(Box::new(TfIdf)),
        other => Err(Error::UnknownStrategy {
            kind: "featurizer",
            name: other.to_string(),
            available: FEATURIZER_NAMES.to_vec(),
        }),
    }
}
