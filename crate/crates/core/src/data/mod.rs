//! Canonical data model: products, choice observations, embeddings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod io;

/// One product in the catalog, with its display texts and named attributes.
///
/// Attribute values are numeric; categorical attributes are one-hot encoded
/// at ingestion time.
#[derive(Clone, Debug, PartialEq)]
pub struct Product {
    pub id: String,
    pub label: String,
    pub title: String,
    pub description: String,
    pub reviews: Vec<String>,
    pub attributes: BTreeMap<String, f64>,
}

impl Product {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Product {
            id: id.into(),
            label: label.into(),
            title: String::new(),
            description: String::new(),
            reviews: Vec::new(),
            attributes: BTreeMap::new(),
        }
    }
}

/// The kind of unstructured (or structured) data an embedding came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Image,
    Title,
    Description,
    Reviews,
    Attributes,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Image => "image",
            DataType::Title => "title",
            DataType::Description => "description",
            DataType::Reviews => "reviews",
            DataType::Attributes => "attributes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(DataType::Image),
            "title" => Ok(DataType::Title),
            "description" => Ok(DataType::Description),
            "reviews" => Ok(DataType::Reviews),
            "attributes" => Ok(DataType::Attributes),
            other => Err(Error::Validation(format!(
                "unknown data type '{other}' (expected image, title, description, reviews or attributes)"
            ))),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one embedding specification: a data type plus the model that
/// produced the vectors (e.g. `reviews__tfidf`, `image__resnet50`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub data_type: DataType,
    pub model: String,
}

impl SourceDescriptor {
    pub fn new(data_type: DataType, model: impl Into<String>) -> Self {
        SourceDescriptor {
            data_type,
            model: model.into(),
        }
    }

    /// File-name stem used for embeddings and principal-component artifacts.
    pub fn stem(&self) -> String {
        format!("{}__{}", self.data_type, self.model)
    }

    /// Inverse of [`SourceDescriptor::stem`].
    pub fn from_stem(stem: &str) -> Result<Self> {
        let (dt, model) = stem.split_once("__").ok_or_else(|| {
            Error::Validation(format!(
                "embedding file stem '{stem}' must look like <data_type>__<model>"
            ))
        })?;
        Ok(SourceDescriptor::new(DataType::parse(dt)?, model))
    }
}

impl fmt::Display for SourceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.data_type, self.model)
    }
}

/// One (individual, task) record: the offered set with prices and optional
/// display ranks, and the chosen product.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceObservation {
    pub individual_id: String,
    pub task: u8,
    pub offered: Vec<String>,
    pub prices: Vec<f64>,
    pub ranks: Option<Vec<u32>>,
    pub chosen: String,
}

impl ChoiceObservation {
    /// Validates the single-observation invariants.
    pub fn validate(&self) -> Result<()> {
        if self.task != 1 && self.task != 2 {
            return Err(Error::Validation(format!(
                "individual {}: task must be 1 or 2, got {}",
                self.individual_id, self.task
            )));
        }
        if self.offered.is_empty() {
            return Err(Error::Validation(format!(
                "individual {} task {}: empty offered set",
                self.individual_id, self.task
            )));
        }
        if self.prices.len() != self.offered.len() {
            return Err(Error::Validation(format!(
                "individual {} task {}: {} prices for {} offered products",
                self.individual_id,
                self.task,
                self.prices.len(),
                self.offered.len()
            )));
        }
        if self.prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "individual {} task {}: non-finite price",
                self.individual_id, self.task
            )));
        }
        let unique: BTreeSet<&String> = self.offered.iter().collect();
        if unique.len() != self.offered.len() {
            return Err(Error::Validation(format!(
                "individual {} task {}: duplicate product in offered set",
                self.individual_id, self.task
            )));
        }
        if !self.offered.contains(&self.chosen) {
            return Err(Error::ChosenNotOffered {
                individual: self.individual_id.clone(),
                chosen: self.chosen.clone(),
            });
        }
        if let Some(ranks) = &self.ranks {
            if ranks.len() != self.offered.len() {
                return Err(Error::Validation(format!(
                    "individual {} task {}: {} ranks for {} offered products",
                    self.individual_id,
                    self.task,
                    ranks.len(),
                    self.offered.len()
                )));
            }
            let mut sorted: Vec<u32> = ranks.clone();
            sorted.sort_unstable();
            if sorted != (1..=self.offered.len() as u32).collect::<Vec<_>>() {
                return Err(Error::Validation(format!(
                    "individual {} task {}: ranks are not a permutation of 1..{}",
                    self.individual_id,
                    self.task,
                    self.offered.len()
                )));
            }
        }
        Ok(())
    }

    pub fn chosen_index(&self) -> usize {
        self.offered
            .iter()
            .position(|p| p == &self.chosen)
            .expect("validated: chosen is offered")
    }
}

/// Product-by-dimension real matrix tagged with its source.
///
/// Rows are aligned to `product_ids`; loading routines realign file rows to
/// catalog order, so row `i` always belongs to `product_ids[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub source: SourceDescriptor,
    pub product_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn new(
        source: SourceDescriptor,
        product_ids: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != product_ids.len() {
            return Err(Error::Validation(format!(
                "embedding {}: {} rows for {} products",
                source.stem(),
                values.nrows(),
                product_ids.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::Validation(format!(
                "embedding {}: zero columns",
                source.stem()
            )));
        }
        for (r, id) in product_ids.iter().enumerate() {
            for c in 0..values.ncols() {
                if !values[(r, c)].is_finite() {
                    return Err(Error::NonFinite {
                        row: r,
                        id: id.clone(),
                        column: c,
                    });
                }
            }
        }
        Ok(EmbeddingMatrix {
            source,
            product_ids,
            values,
        })
    }

    pub fn n_products(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// A full loaded dataset. Immutable after construction; share freely.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub catalog: Vec<Product>,
    pub observations: Vec<ChoiceObservation>,
    pub embeddings: Vec<EmbeddingMatrix>,
}

impl Dataset {
    /// Validates cross-references and task consistency.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for p in &self.catalog {
            if p.id.is_empty() {
                return Err(Error::Validation("empty product id in catalog".into()));
            }
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicateProduct { id: p.id.clone() });
            }
            if p.attributes.values().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "product {}: non-finite attribute value",
                    p.id
                )));
            }
        }
        for obs in &self.observations {
            obs.validate()?;
            for pid in &obs.offered {
                if !ids.contains(pid.as_str()) {
                    return Err(Error::Validation(format!(
                        "individual {} task {} references unknown product {}",
                        obs.individual_id, obs.task, pid
                    )));
                }
            }
        }
        self.validate_task_pairs()?;
        for emb in &self.embeddings {
            if emb.n_products() != self.catalog.len() {
                return Err(Error::Validation(format!(
                    "embedding {}: {} rows for a {}-product catalog",
                    emb.source.stem(),
                    emb.n_products(),
                    self.catalog.len()
                )));
            }
            for (i, p) in self.catalog.iter().enumerate() {
                if emb.product_ids[i] != p.id {
                    return Err(Error::Validation(format!(
                        "embedding {}: row {} is {} but catalog has {}",
                        emb.source.stem(),
                        i,
                        emb.product_ids[i],
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// When an individual has both tasks, the second offered set must equal
    /// the first minus the first choice.
    fn validate_task_pairs(&self) -> Result<()> {
        let mut first: HashMap<&str, &ChoiceObservation> = HashMap::new();
        let mut second: HashMap<&str, &ChoiceObservation> = HashMap::new();
        for obs in &self.observations {
            let slot = if obs.task == 1 { &mut first } else { &mut second };
            if slot.insert(obs.individual_id.as_str(), obs).is_some() {
                return Err(Error::Validation(format!(
                    "individual {} has duplicate task-{} observations",
                    obs.individual_id, obs.task
                )));
            }
        }
        for (id, obs2) in &second {
            let Some(obs1) = first.get(id) else {
                return Err(Error::Validation(format!(
                    "individual {id} has a task-2 observation but no task 1"
                )));
            };
            let expect: BTreeSet<&String> = obs1
                .offered
                .iter()
                .filter(|p| **p != obs1.chosen)
                .collect();
            let got: BTreeSet<&String> = obs2.offered.iter().collect();
            if expect != got {
                return Err(Error::Validation(format!(
                    "individual {id}: task-2 offered set is not task-1 set minus the first choice"
                )));
            }
        }
        Ok(())
    }

    pub fn product_ids(&self) -> Vec<String> {
        self.catalog.iter().map(|p| p.id.clone()).collect()
    }

    pub fn product_index(&self) -> HashMap<String, usize> {
        self.catalog
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect()
    }

    pub fn first_choices(&self) -> impl Iterator<Item = &ChoiceObservation> {
        self.observations.iter().filter(|o| o.task == 1)
    }

    pub fn embedding(&self, source: &SourceDescriptor) -> Option<&EmbeddingMatrix> {
        self.embeddings.iter().find(|e| &e.source == source)
    }

    /// True when every observation carries ranks. Mixed presence is rejected
    /// at validation; absence drops the rank term downstream.
    pub fn has_ranks(&self) -> bool {
        !self.observations.is_empty() && self.observations.iter().all(|o| o.ranks.is_some())
    }
}

/// Assembles the catalog's attribute table as an embedding matrix with
/// lexicographically ordered columns.
pub fn attach_attributes_as_embedding(catalog: &[Product]) -> Result<EmbeddingMatrix> {
    if catalog.is_empty() {
        return Err(Error::Validation("empty catalog".into()));
    }
    let names: BTreeSet<String> = catalog
        .iter()
        .flat_map(|p| p.attributes.keys().cloned())
        .collect();
    if names.is_empty() {
        return Err(Error::Validation("catalog has no attributes".into()));
    }
    let mut missing = Vec::new();
    for p in catalog {
        for name in &names {
            if !p.attributes.contains_key(name) {
                missing.push(format!("{}:{}", p.id, name));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingAttributes(missing.join(", ")));
    }
    let names: Vec<String> = names.into_iter().collect();
    let values = DMatrix::from_fn(catalog.len(), names.len(), |r, c| {
        catalog[r].attributes[&names[c]]
    });
    EmbeddingMatrix::new(
        SourceDescriptor::new(DataType::Attributes, "raw"),
        catalog.iter().map(|p| p.id.clone()).collect(),
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: &str, task: u8, offered: &[&str], chosen: &str) -> ChoiceObservation {
        ChoiceObservation {
            individual_id: id.into(),
            task,
            offered: offered.iter().map(|s| s.to_string()).collect(),
            prices: vec![5.0; offered.len()],
            ranks: None,
            chosen: chosen.into(),
        }
    }

    #[test]
    fn chosen_must_be_offered() {
        let o = obs("i1", 1, &["a", "b"], "c");
        assert!(matches!(
            o.validate(),
            Err(Error::ChosenNotOffered { .. })
        ));
    }

    #[test]
    fn rank_permutation_enforced() {
        let mut o = obs("i1", 1, &["a", "b", "c"], "a");
        o.ranks = Some(vec![1, 2, 2]);
        assert!(o.validate().is_err());
        o.ranks = Some(vec![3, 1, 2]);
        assert!(o.validate().is_ok());
    }

    #[test]
    fn second_task_must_drop_first_choice() {
        let catalog = vec![
            Product::new("a", "A"),
            Product::new("b", "B"),
            Product::new("c", "C"),
        ];
        let good = Dataset {
            catalog: catalog.clone(),
            observations: vec![obs("i1", 1, &["a", "b", "c"], "b"), obs("i1", 2, &["a", "c"], "c")],
            embeddings: vec![],
        };
        assert!(good.validate().is_ok());

        let bad = Dataset {
            catalog,
            observations: vec![obs("i1", 1, &["a", "b", "c"], "b"), obs("i1", 2, &["a", "b"], "a")],
            embeddings: vec![],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn attribute_embedding_orders_columns_lexicographically() {
        let mut p1 = Product::new("p1", "P1");
        p1.attributes.insert("year".into(), 2001.0);
        p1.attributes.insert("pages".into(), 300.0);
        let mut p2 = Product::new("p2", "P2");
        p2.attributes.insert("year".into(), 1999.0);
        p2.attributes.insert("pages".into(), 150.0);
        let mut p3 = Product::new("p3", "P3");
        p3.attributes.insert("year".into(), 2020.0);
        p3.attributes.insert("pages".into(), 80.0);

        let emb = attach_attributes_as_embedding(&[p1, p2, p3]).unwrap();
        assert_eq!(emb.dim(), 2);
        // pages sorts before year
        assert_eq!(emb.values[(0, 0)], 300.0);
        assert_eq!(emb.values[(0, 1)], 2001.0);
        assert_eq!(emb.values[(2, 0)], 80.0);
    }

    #[test]
    fn attribute_embedding_reports_missing_keys() {
        let mut p1 = Product::new("p1", "P1");
        p1.attributes.insert("year".into(), 2001.0);
        p1.attributes.insert("pages".into(), 300.0);
        let mut p2 = Product::new("p2", "P2");
        p2.attributes.insert("pages".into(), 150.0);

        let err = attach_attributes_as_embedding(&[p1, p2]).unwrap_err();
        match err {
            Error::MissingAttributes(msg) => assert!(msg.contains("p2:year")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tablet_shaped_attribute_matrix() {
        // 15 products x 18 attributes, the shape used for electronics catalogs.
        let catalog: Vec<Product> = (0..15)
            .map(|i| {
                let mut p = Product::new(format!("t{i:02}"), format!("Tablet {i}"));
                for a in 0..18 {
                    p.attributes.insert(format!("a{a:02}"), (i * a) as f64);
                }
                p
            })
            .collect();
        let emb = attach_attributes_as_embedding(&catalog).unwrap();
        assert_eq!((emb.n_products(), emb.dim()), (15, 18));
        assert_eq!(emb.source, SourceDescriptor::new(DataType::Attributes, "raw"));
    }
}
