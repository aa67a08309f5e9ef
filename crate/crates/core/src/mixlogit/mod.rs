//! Mixed logit demand model estimated by simulated maximum likelihood.
//!
//! Utility of individual `i` for product `j` under draw `r`:
//!
//! ```text
//! V_ijr = delta_j + (alpha + |s_price| eta_price_ir) price_ij
//!       + sum_v |s_v| eta_vir x_vj + gamma rank_ij
//! ```
//!
//! Mean component effects are absorbed by the product fixed effects, and the
//! taste shock enters through the closed-form logit probability. Spread
//! parameters are unconstrained reals whose absolute value enters utility,
//! so the likelihood is even in each of them and a zero true spread is an
//! interior optimum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Dataset, SourceDescriptor};
use crate::draws::DrawConfig;
use crate::error::{Error, Result};
use crate::pca::PcStore;

mod fit;
mod likelihood;

pub use fit::{fit_mle, fit_mle_warm, fit_with_draws, standard_errors, FitOptions, StdErrors};
pub use likelihood::Evaluator;

/// A variable eligible for a random coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RandomVar {
    Price,
    /// 1-based principal component of the model's embedding source.
    Pc(usize),
    /// 1-based principal component of the attribute matrix.
    AttrPc(usize),
}

impl fmt::Display for RandomVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RandomVar::Price => write!(f, "price"),
            RandomVar::Pc(i) => write!(f, "PC{i}"),
            RandomVar::AttrPc(i) => write!(f, "APC{i}"),
        }
    }
}

impl FromStr for RandomVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "price" {
            return Ok(RandomVar::Price);
        }
        let parse_index = |rest: &str, name: &str| -> Result<usize> {
            rest.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::Validation(format!("bad {name} component in '{s}'")))
        };
        if let Some(rest) = s.strip_prefix("APC") {
            return Ok(RandomVar::AttrPc(parse_index(rest, "APC")?));
        }
        if let Some(rest) = s.strip_prefix("PC") {
            return Ok(RandomVar::Pc(parse_index(rest, "PC")?));
        }
        Err(Error::Validation(format!(
            "unknown random-coefficient variable '{s}' (expected price, PC<i> or APC<i>)"
        )))
    }
}

impl Serialize for RandomVar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RandomVar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Which variables carry random coefficients, plus the embedding source the
/// principal components come from (`None` for plain logit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub source: Option<SourceDescriptor>,
    pub random_set: Vec<RandomVar>,
    pub includes_rank: bool,
    /// Number of principal components available from the source.
    #[serde(default)]
    pub p: usize,
}

impl ModelSpec {
    pub fn plain(includes_rank: bool) -> Self {
        ModelSpec {
            source: None,
            random_set: Vec::new(),
            includes_rank,
            p: 0,
        }
    }

    pub fn new(
        source: Option<SourceDescriptor>,
        mut random_set: Vec<RandomVar>,
        includes_rank: bool,
        p: usize,
    ) -> Result<Self> {
        random_set.sort_unstable();
        let before = random_set.len();
        random_set.dedup();
        if random_set.len() != before {
            return Err(Error::Validation("duplicate variable in random set".into()));
        }
        Ok(ModelSpec {
            source,
            random_set,
            includes_rank,
            p,
        })
    }

    /// Human-readable label, e.g. `reviews tfidf {price, PC2}`.
    pub fn label(&self) -> String {
        let vars = if self.random_set.is_empty() {
            "none".to_string()
        } else {
            self.random_set
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &self.source {
            Some(s) => format!("{s} {{{vars}}}"),
            None => format!("plain {{{vars}}}"),
        }
    }
}

/// Akaike and Bayesian information criteria.
pub fn information_criteria(loglik: f64, k: usize, n: usize) -> (f64, f64) {
    let aic = 2.0 * k as f64 - 2.0 * loglik;
    let bic = k as f64 * (n as f64).ln() - 2.0 * loglik;
    (aic, bic)
}

/// Maps model parameters onto a flat vector:
/// deltas (base product omitted), alpha, optional gamma, then one
/// unconstrained spread per random variable.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub n_products: usize,
    pub base_product: usize,
    pub includes_rank: bool,
    pub n_random: usize,
}

impl ParamLayout {
    pub fn k(&self) -> usize {
        (self.n_products - 1) + 1 + usize::from(self.includes_rank) + self.n_random
    }

    /// Parameter index of a product's fixed effect; `None` for the base.
    #[inline]
    pub fn delta_param(&self, product: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match product.cmp(&self.base_product) {
            Less => Some(product),
            Equal => None,
            Greater => Some(product - 1),
        }
    }

    #[inline]
    pub fn alpha_param(&self) -> usize {
        self.n_products - 1
    }

    #[inline]
    pub fn gamma_param(&self) -> Option<usize> {
        self.includes_rank.then_some(self.n_products)
    }

    #[inline]
    pub fn sigma_param(&self, v: usize) -> usize {
        self.n_products - 1 + 1 + usize::from(self.includes_rank) + v
    }
}

/// One estimation-sample observation in catalog indices.
#[derive(Clone, Debug)]
pub struct ObsData {
    pub alternatives: Vec<usize>,
    pub prices: Vec<f64>,
    pub ranks: Vec<f64>,
    pub chosen_pos: usize,
}

/// All first-choice observations of one individual; they share draws.
#[derive(Clone, Debug)]
pub struct IndividualObs {
    pub id: String,
    pub obs: Vec<ObsData>,
}

/// Estimation-ready data: the first-choice sample plus component columns
/// rescaled to unit sample variance.
#[derive(Clone, Debug)]
pub struct ModelData {
    pub product_ids: Vec<String>,
    pub base_product: usize,
    pub individuals: Vec<IndividualObs>,
    pub has_ranks: bool,
    pub n_obs: usize,
    pub pc_columns: Vec<Vec<f64>>,
    pub attr_pc_columns: Vec<Vec<f64>>,
    pub chosen_counts: Vec<usize>,
}

impl ModelData {
    /// Assembles the estimation sample (first choices only) from a dataset
    /// and the component stores it may reference.
    pub fn assemble(
        dataset: &Dataset,
        pcs: Option<&PcStore>,
        attr_pcs: Option<&PcStore>,
    ) -> Result<Self> {
        dataset.validate()?;
        let product_ids = dataset.product_ids();
        if product_ids.len() < 2 {
            return Err(Error::Validation("need at least two products".into()));
        }
        let index = dataset.product_index();
        let base_product = product_ids
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();

        let has_ranks = dataset.has_ranks();
        let mut order: Vec<String> = Vec::new();
        let mut by_individual: BTreeMap<String, Vec<ObsData>> = BTreeMap::new();
        let mut chosen_counts = vec![0usize; product_ids.len()];
        let mut n_obs = 0;
        for obs in dataset.first_choices() {
            let alternatives: Vec<usize> = obs.offered.iter().map(|p| index[p]).collect();
            let ranks = match (&obs.ranks, has_ranks) {
                (Some(r), true) => r.iter().map(|&v| v as f64).collect(),
                _ => vec![0.0; alternatives.len()],
            };
            let data = ObsData {
                chosen_pos: obs.chosen_index(),
                prices: obs.prices.clone(),
                ranks,
                alternatives,
            };
            chosen_counts[data.alternatives[data.chosen_pos]] += 1;
            n_obs += 1;
            let entry = by_individual.entry(obs.individual_id.clone());
            if let std::collections::btree_map::Entry::Vacant(_) = entry {
                order.push(obs.individual_id.clone());
            }
            entry.or_default().push(data);
        }
        if n_obs == 0 {
            return Err(Error::Validation("no first-choice observations".into()));
        }
        let individuals = order
            .into_iter()
            .map(|id| {
                let obs = by_individual.remove(&id).unwrap();
                IndividualObs { id, obs }
            })
            .collect();

        let column_set = |store: Option<&PcStore>| -> Vec<Vec<f64>> {
            store
                .map(|s| (0..s.n_components()).map(|c| s.model_column(c)).collect())
                .unwrap_or_default()
        };
        Ok(ModelData {
            product_ids,
            base_product,
            individuals,
            has_ranks,
            n_obs,
            pc_columns: column_set(pcs),
            attr_pc_columns: column_set(attr_pcs),
            chosen_counts,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    /// Products that never appear as a first choice (their fixed effects are
    /// unidentified).
    pub fn never_chosen(&self) -> Vec<String> {
        self.chosen_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| self.product_ids[i].clone())
            .collect()
    }

    pub fn layout(&self, spec: &ModelSpec) -> ParamLayout {
        ParamLayout {
            n_products: self.product_ids.len(),
            base_product: self.base_product,
            includes_rank: spec.includes_rank && self.has_ranks,
            n_random: spec.random_set.len(),
        }
    }

    /// The per-product values of one random variable, `None` for price
    /// (which varies by observation).
    pub fn var_column(&self, var: RandomVar) -> Result<Option<&[f64]>> {
        match var {
            RandomVar::Price => Ok(None),
            RandomVar::Pc(i) => self
                .pc_columns
                .get(i - 1)
                .map(|c| Some(c.as_slice()))
                .ok_or_else(|| {
                    Error::Validation(format!("PC{i} is not available (have {})", self.pc_columns.len()))
                }),
            RandomVar::AttrPc(i) => self
                .attr_pc_columns
                .get(i - 1)
                .map(|c| Some(c.as_slice()))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "APC{i} is not available (have {})",
                        self.attr_pc_columns.len()
                    ))
                }),
        }
    }
}

/// Estimated mixed logit parameters and fit statistics.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub product_ids: Vec<String>,
    /// Fixed effect per catalog product; the base product is exactly 0.
    pub delta: Vec<f64>,
    pub alpha_mean: f64,
    pub gamma: Option<f64>,
    /// Nonnegative spread per random variable, aligned with `spec.random_set`.
    pub sigma: Vec<f64>,
    pub loglik: f64,
    pub k: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub draw_config: DrawConfig,
    pub n_obs: usize,
    /// Unconstrained parameter vector at the optimum (for warm starts and
    /// standard errors).
    pub raw_params: Vec<f64>,
}

impl FitResult {
    pub fn sigma_of(&self, var: RandomVar) -> Option<f64> {
        self.spec
            .random_set
            .iter()
            .position(|v| *v == var)
            .map(|i| self.sigma[i])
    }
}

/// Serialization layout of `fit.json`.
#[derive(Serialize, Deserialize)]
pub struct FitResultJson {
    pub spec: ModelSpec,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub k: usize,
    pub params: FitParamsJson,
    pub converged: bool,
    pub iterations: usize,
    pub draw_config: DrawConfig,
    pub n_obs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

#[derive(Serialize, Deserialize)]
pub struct FitParamsJson {
    pub alpha_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub delta: BTreeMap<String, f64>,
    pub sigma: BTreeMap<String, f64>,
}

impl FitResult {
    pub fn to_json(&self, wall_time_ms: Option<u64>) -> FitResultJson {
        FitResultJson {
            spec: self.spec.clone(),
            loglik: self.loglik,
            aic: self.aic,
            bic: self.bic,
            k: self.k,
            params: FitParamsJson {
                alpha_mean: self.alpha_mean,
                gamma: self.gamma,
                delta: self
                    .product_ids
                    .iter()
                    .cloned()
                    .zip(self.delta.iter().copied())
                    .collect(),
                sigma: self
                    .spec
                    .random_set
                    .iter()
                    .map(|v| v.to_string())
                    .zip(self.sigma.iter().copied())
                    .collect(),
            },
            converged: self.converged,
            iterations: self.iterations,
            draw_config: self.draw_config.clone(),
            n_obs: self.n_obs,
            wall_time_ms,
        }
    }

    /// Rebuilds a usable fit from its JSON form (raw parameters are
    /// reconstructed from the named values).
    pub fn from_json(json: &FitResultJson, product_ids: Vec<String>) -> Result<Self> {
        let mut delta = Vec::with_capacity(product_ids.len());
        for id in &product_ids {
            let v = json.params.delta.get(id).ok_or_else(|| {
                Error::Validation(format!("fit json is missing delta for product {id}"))
            })?;
            delta.push(*v);
        }
        let mut sigma = Vec::new();
        for var in &json.spec.random_set {
            let v = json.params.sigma.get(&var.to_string()).ok_or_else(|| {
                Error::Validation(format!("fit json is missing sigma for {var}"))
            })?;
            sigma.push(*v);
        }
        let base_product = product_ids
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Validation("empty catalog".into()))?;
        let layout = ParamLayout {
            n_products: product_ids.len(),
            base_product,
            includes_rank: json.params.gamma.is_some(),
            n_random: sigma.len(),
        };
        let mut raw = vec![0.0; layout.k()];
        for (j, &d) in delta.iter().enumerate() {
            if let Some(p) = layout.delta_param(j) {
                raw[p] = d;
            }
        }
        raw[layout.alpha_param()] = json.params.alpha_mean;
        if let Some(g) = layout.gamma_param() {
            raw[g] = json.params.gamma.unwrap_or(0.0);
        }
        for (v, &s) in sigma.iter().enumerate() {
            raw[layout.sigma_param(v)] = s;
        }
        Ok(FitResult {
            spec: json.spec.clone(),
            product_ids,
            delta,
            alpha_mean: json.params.alpha_mean,
            gamma: json.params.gamma,
            sigma,
            loglik: json.loglik,
            k: json.k,
            aic: json.aic,
            bic: json.bic,
            converged: json.converged,
            iterations: json.iterations,
            draw_config: json.draw_config.clone(),
            n_obs: json.n_obs,
            raw_params: raw,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_var_ordering_and_parsing() {
        let mut vars = vec![
            RandomVar::AttrPc(1),
            RandomVar::Pc(10),
            RandomVar::Price,
            RandomVar::Pc(2),
        ];
        vars.sort_unstable();
        assert_eq!(
            vars,
            vec![
                RandomVar::Price,
                RandomVar::Pc(2),
                RandomVar::Pc(10),
                RandomVar::AttrPc(1)
            ]
        );
        assert_eq!("PC3".parse::<RandomVar>().unwrap(), RandomVar::Pc(3));
        assert_eq!("APC2".parse::<RandomVar>().unwrap(), RandomVar::AttrPc(2));
        assert_eq!("price".parse::<RandomVar>().unwrap(), RandomVar::Price);
        assert!("rank".parse::<RandomVar>().is_err());
        assert!("PC0".parse::<RandomVar>().is_err());
    }

    #[test]
    fn duplicate_random_set_is_rejected() {
        let err = ModelSpec::new(
            None,
            vec![RandomVar::Price, RandomVar::Price],
            false,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn information_criteria_formulas() {
        let (aic, _) = information_criteria(0.0, 0, 10);
        assert_eq!(aic, 0.0);
        let (aic, bic) = information_criteria(-10.0, 3, 1);
        assert_eq!(aic, 26.0);
        assert_eq!(bic, 20.0); // ln(1) = 0
        // n = e^2 makes bic = 2k - 2ll
        let n = std::f64::consts::E.powi(2);
        let (_, bic) = information_criteria(-5.0, 3, n.round() as usize);
        assert!((bic - (3.0 * (n.round()).ln() + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn param_layout_indices() {
        let layout = ParamLayout {
            n_products: 4,
            base_product: 1,
            includes_rank: true,
            n_random: 2,
        };
        assert_eq!(layout.k(), 3 + 1 + 1 + 2);
        assert_eq!(layout.delta_param(0), Some(0));
        assert_eq!(layout.delta_param(1), None);
        assert_eq!(layout.delta_param(2), Some(1));
        assert_eq!(layout.delta_param(3), Some(2));
        assert_eq!(layout.alpha_param(), 3);
        assert_eq!(layout.gamma_param(), Some(4));
        assert_eq!(layout.sigma_param(0), 5);
        assert_eq!(layout.sigma_param(1), 6);
    }
}
