//! Demand estimation from unstructured product data.
//!
//! The pipeline: turn product texts (or externally supplied image/text
//! embeddings) into vectors, reduce them to principal components, estimate a
//! mixed logit with random coefficients on those components by simulated
//! maximum likelihood, pick a specification by AIC with a forward search,
//! and compute substitution objects: diversion ratios, second-choice RMSE
//! and Bertrand-Nash merger price effects.

pub mod counterfactual;
pub mod data;
pub mod design;
pub mod draws;
pub mod error;
pub mod fastmath;
pub mod mixlogit;
pub mod optim;
pub mod pca;
pub mod rng;
pub mod selection;
pub mod text;

pub use data::{ChoiceObservation, DataType, Dataset, EmbeddingMatrix, Product, SourceDescriptor};
pub use error::{Error, Result};
pub use mixlogit::{FitOptions, FitResult, ModelData, ModelSpec, RandomVar};
