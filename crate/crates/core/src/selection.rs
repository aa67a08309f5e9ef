//! Forward specification search: at each level `K` every size-`K` subset of
//! the candidate set is fit, the level minimum is accepted only while AIC
//! keeps improving, and the best specification is chosen across embedding
//! sources. Also: AIC support labels and per-data-type Akaike weights.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{attach_attributes_as_embedding, DataType, Dataset, SourceDescriptor};
use crate::draws::{DrawConfig, DrawSet};
use crate::error::{Error, Result};
use crate::mixlogit::{fit_with_draws, FitOptions, FitResult, ModelData, ModelSpec, RandomVar};
use crate::pca::{fit_source, PcStore};

/// Minimum AIC improvement treated as a genuine decrease.
pub const AIC_IMPROVEMENT_THRESHOLD: f64 = 1e-6;

/// `{price, PC1..PCp}`, the default candidate set of one specification.
pub fn candidate_set(p: usize) -> Vec<RandomVar> {
    let mut set = vec![RandomVar::Price];
    set.extend((1..=p).map(RandomVar::Pc));
    set
}

/// Union of a base candidate set with extra variables (attribute components
/// or a second source's components). Name collisions are errors.
pub fn extend_candidate_set(base: &[RandomVar], extra: &[RandomVar]) -> Result<Vec<RandomVar>> {
    let mut out = base.to_vec();
    for var in extra {
        if out.contains(var) {
            return Err(Error::Validation(format!(
                "candidate variable {var} is already present"
            )));
        }
        out.push(*var);
    }
    let mut sorted = out.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != out.len() {
        return Err(Error::Validation("duplicate variables in extras".into()));
    }
    Ok(sorted)
}

/// All size-`k` subsets in lexicographic order of the slice.
pub fn combinations<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i].clone()).collect());
        // Advance to the next combination index vector.
        let mut i = k - 1;
        while idx[i] == i + n - k {
            if i == 0 {
                return out;
            }
            i -= 1;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// One fitted subset inside a search level. Subsets whose fit failed
/// numerically carry no AIC; non-converged fits are recorded but never win.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluatedSubset {
    pub subset: Vec<RandomVar>,
    pub aic: Option<f64>,
    pub loglik: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelTrace {
    pub k: usize,
    pub evaluated: Vec<EvaluatedSubset>,
    pub best_subset: Option<Vec<RandomVar>>,
    pub best_aic: Option<f64>,
    pub accepted: bool,
}

/// Replayable record of one specification's search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecTrace {
    pub source: Option<SourceDescriptor>,
    pub candidate_set: Vec<RandomVar>,
    pub levels: Vec<LevelTrace>,
    pub best_subset: Vec<RandomVar>,
    pub best_aic: f64,
    pub plain_aic: f64,
    pub delta_aic_vs_plain: f64,
}

#[derive(Clone, Debug)]
pub struct SpecSearchResult {
    pub trace: SpecTrace,
    pub best_fit: FitResult,
}

#[derive(Clone, Debug)]
pub struct Algorithm1Options {
    pub improvement_threshold: f64,
    /// Cap on subset size; `None` searches up to the full candidate set.
    pub max_k: Option<usize>,
    /// Fit subsets within a level concurrently (inner fits then run
    /// single-threaded, so results do not depend on scheduling).
    pub parallel_subsets: bool,
    pub fit: FitOptions,
}

impl Default for Algorithm1Options {
    fn default() -> Self {
        Algorithm1Options {
            improvement_threshold: AIC_IMPROVEMENT_THRESHOLD,
            max_k: None,
            parallel_subsets: true,
            fit: FitOptions {
                parallel: false,
                ..FitOptions::default()
            },
        }
    }
}

/// Fits random-coefficient subsets for the search. The direct backend owns
/// the data and a shared draw set; a memoizing wrapper can sit in front so
/// greedy and exhaustive searches over the same specification reuse fits.
pub trait FitBackend: Sync {
    fn source(&self) -> Option<&SourceDescriptor>;
    fn has_ranks(&self) -> bool;
    fn product_ids(&self) -> &[String];
    fn fit_subset(&self, subset: &[RandomVar], warm: Option<&FitResult>) -> Result<FitResult>;
}

/// Backend that fits against one assembled dataset with a shared wide draw
/// set (each subset uses its dimension prefix).
pub struct DirectBackend<'a> {
    pub source: Option<SourceDescriptor>,
    pub data: &'a ModelData,
    pub draw_config: &'a DrawConfig,
    pub options: &'a FitOptions,
    pub draws: crate::draws::DrawView<'a>,
    /// Components available to `ModelSpec::p`.
    pub p: usize,
}

impl FitBackend for DirectBackend<'_> {
    fn source(&self) -> Option<&SourceDescriptor> {
        self.source.as_ref()
    }

    fn has_ranks(&self) -> bool {
        self.data.has_ranks
    }

    fn product_ids(&self) -> &[String] {
        &self.data.product_ids
    }

    fn fit_subset(&self, subset: &[RandomVar], warm: Option<&FitResult>) -> Result<FitResult> {
        let spec = ModelSpec::new(
            self.source.clone(),
            subset.to_vec(),
            self.data.has_ranks,
            self.p,
        )?;
        fit_with_draws(&spec, self.data, self.draw_config, self.options, warm, self.draws)
    }
}

/// Caches fits by subset; warm starts only matter on first computation.
pub struct MemoizedBackend<'a, B: FitBackend> {
    inner: &'a B,
    cache: std::sync::Mutex<BTreeMap<Vec<RandomVar>, FitResult>>,
}

impl<'a, B: FitBackend> MemoizedBackend<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        MemoizedBackend {
            inner,
            cache: std::sync::Mutex::new(BTreeMap::new()),
        }
    }

    pub fn cached(&self, subset: &[RandomVar]) -> Option<FitResult> {
        self.cache.lock().unwrap().get(subset).cloned()
    }
}

impl<B: FitBackend> FitBackend for MemoizedBackend<'_, B> {
    fn source(&self) -> Option<&SourceDescriptor> {
        self.inner.source()
    }

    fn has_ranks(&self) -> bool {
        self.inner.has_ranks()
    }

    fn product_ids(&self) -> &[String] {
        self.inner.product_ids()
    }

    fn fit_subset(&self, subset: &[RandomVar], warm: Option<&FitResult>) -> Result<FitResult> {
        if let Some(hit) = self.cache.lock().unwrap().get(subset) {
            return Ok(hit.clone());
        }
        let fit = self.inner.fit_subset(subset, warm)?;
        self.cache
            .lock()
            .unwrap()
            .entry(subset.to_vec())
            .or_insert_with(|| fit.clone());
        Ok(fit)
    }
}

/// Forward search over random-coefficient subsets for one specification.
///
/// Starts from plain logit, fits all size-`K` subsets at each level with a
/// shared draw set, accepts the level minimum only if it improves the best
/// AIC by more than the threshold, and stops at the first non-improvement.
/// Level ties break toward the lexicographically earlier subset.
pub fn algorithm1(
    source: Option<&SourceDescriptor>,
    data: &ModelData,
    candidates: &[RandomVar],
    draw_config: &DrawConfig,
    options: &Algorithm1Options,
    plain: Option<&FitResult>,
) -> Result<SpecSearchResult> {
    let max_k = options
        .max_k
        .unwrap_or(candidates.len())
        .min(candidates.len());
    let draws = DrawSet::generate(draw_config, max_k, data.n_individuals())?;
    let p = candidates
        .iter()
        .filter_map(|v| match v {
            RandomVar::Pc(i) => Some(*i),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let backend = DirectBackend {
        source: source.cloned(),
        data,
        draw_config,
        options: &options.fit,
        draws: draws.view(),
        p,
    };
    algorithm1_with_backend(&backend, candidates, options, plain)
}

/// [`algorithm1`] against an arbitrary fit backend.
pub fn algorithm1_with_backend<B: FitBackend>(
    backend: &B,
    candidates: &[RandomVar],
    options: &Algorithm1Options,
    plain: Option<&FitResult>,
) -> Result<SpecSearchResult> {
    if candidates.is_empty() {
        return Err(Error::Validation("empty candidate set".into()));
    }
    let mut candidates = candidates.to_vec();
    candidates.sort_unstable();
    let max_k = options
        .max_k
        .unwrap_or(candidates.len())
        .min(candidates.len());
    let source = backend.source().cloned();

    // Level 0: plain logit.
    let plain_fit = match plain {
        Some(fit) if fit.product_ids == backend.product_ids() => fit.clone(),
        _ => backend.fit_subset(&[], None)?,
    };
    let plain_aic = plain_fit.aic;
    let mut levels = vec![LevelTrace {
        k: 0,
        evaluated: vec![EvaluatedSubset {
            subset: Vec::new(),
            aic: Some(plain_fit.aic),
            loglik: Some(plain_fit.loglik),
            converged: plain_fit.converged,
        }],
        best_subset: Some(Vec::new()),
        best_aic: Some(plain_fit.aic),
        accepted: true,
    }];
    let mut best_fit = plain_fit;
    let mut best_aic = plain_aic;
    let mut best_subset: Vec<RandomVar> = Vec::new();

    for k in 1..=max_k {
        let subsets = combinations(&candidates, k);
        let warm = best_fit.clone();
        let fit_subset = |subset: &Vec<RandomVar>| -> std::result::Result<FitResult, String> {
            backend
                .fit_subset(subset, Some(&warm))
                .map_err(|e| e.to_string())
        };
        let fits: Vec<std::result::Result<FitResult, String>> = if options.parallel_subsets {
            subsets.par_iter().map(fit_subset).collect()
        } else {
            subsets.iter().map(fit_subset).collect()
        };

        let mut evaluated = Vec::with_capacity(subsets.len());
        let mut level_best: Option<(f64, usize, FitResult)> = None;
        for (i, (subset, fit)) in subsets.iter().zip(fits).enumerate() {
            match fit {
                Ok(fit) => {
                    evaluated.push(EvaluatedSubset {
                        subset: subset.clone(),
                        aic: Some(fit.aic),
                        loglik: Some(fit.loglik),
                        converged: fit.converged,
                    });
                    // Non-convergent fits are logged but cannot be selected.
                    if fit.converged {
                        let better = match &level_best {
                            Some((aic, _, _)) => fit.aic < *aic,
                            None => true,
                        };
                        if better {
                            level_best = Some((fit.aic, i, fit));
                        }
                    }
                }
                Err(_) => {
                    // Numerical failure on one subset is logged, not fatal.
                    evaluated.push(EvaluatedSubset {
                        subset: subset.clone(),
                        aic: None,
                        loglik: None,
                        converged: false,
                    });
                }
            }
        }

        let Some((level_aic, level_idx, level_fit)) = level_best else {
            levels.push(LevelTrace {
                k,
                evaluated,
                best_subset: None,
                best_aic: None,
                accepted: false,
            });
            break;
        };
        let accepted = level_aic < best_aic - options.improvement_threshold;
        levels.push(LevelTrace {
            k,
            evaluated,
            best_subset: Some(subsets[level_idx].clone()),
            best_aic: Some(level_aic),
            accepted,
        });
        if !accepted {
            break;
        }
        best_aic = level_aic;
        best_subset = subsets[level_idx].clone();
        best_fit = level_fit;
    }

    Ok(SpecSearchResult {
        trace: SpecTrace {
            source,
            candidate_set: candidates,
            levels,
            best_subset,
            best_aic,
            plain_aic,
            delta_aic_vs_plain: best_aic - plain_aic,
        },
        best_fit,
    })
}

/// Re-applies the acceptance rule to a recorded trace; the result must equal
/// the recorded best subset.
pub fn replay_trace(trace: &SpecTrace, threshold: f64) -> Vec<RandomVar> {
    let mut best_aic = f64::INFINITY;
    let mut best: Vec<RandomVar> = Vec::new();
    for level in &trace.levels {
        let Some(aic) = level.best_aic else { break };
        if level.k == 0 || aic < best_aic - threshold {
            best_aic = aic;
            best = level.best_subset.clone().unwrap_or_default();
        } else {
            break;
        }
    }
    best
}

/// One embedding source prepared for the search.
#[derive(Clone, Debug)]
pub struct GridEntry {
    pub pcs: PcStore,
    pub candidate_p: usize,
}

/// Every specification entering cross-source selection, with optional
/// attribute components for candidate-set extension.
#[derive(Clone, Debug, Default)]
pub struct SpecGrid {
    pub entries: Vec<GridEntry>,
    pub attr_pcs: Option<PcStore>,
    pub extend_with_attributes: bool,
}

impl SpecGrid {
    /// Builds the grid from a dataset: one entry per embedding source
    /// (attribute sources are standardized before PCA), plus an entry
    /// derived from catalog attributes when present.
    pub fn build(dataset: &Dataset, p: usize, extend_with_attributes: bool) -> Result<SpecGrid> {
        let mut entries = Vec::new();
        let mut attr_pcs = None;
        for emb in &dataset.embeddings {
            let standardize = emb.source.data_type == DataType::Attributes;
            let pcs = fit_source(emb, p, standardize)?;
            if standardize && attr_pcs.is_none() {
                attr_pcs = Some(pcs.clone());
            }
            entries.push(GridEntry {
                candidate_p: pcs.n_components(),
                pcs,
            });
        }
        if attr_pcs.is_none() && dataset.catalog.iter().any(|pr| !pr.attributes.is_empty()) {
            let emb = attach_attributes_as_embedding(&dataset.catalog)?;
            let pcs = fit_source(&emb, p, true)?;
            attr_pcs = Some(pcs.clone());
            entries.push(GridEntry {
                candidate_p: pcs.n_components(),
                pcs,
            });
        }
        if entries.is_empty() {
            return Err(Error::Validation(
                "no embedding sources or attributes to select over".into(),
            ));
        }
        entries.sort_by(|a, b| a.pcs.source.cmp(&b.pcs.source));
        for pair in entries.windows(2) {
            if pair[0].pcs.source == pair[1].pcs.source {
                return Err(Error::Validation(format!(
                    "duplicate source descriptor {} in grid",
                    pair[0].pcs.source.stem()
                )));
            }
        }
        Ok(SpecGrid {
            entries,
            attr_pcs,
            extend_with_attributes,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    pub results: Vec<SpecSearchResult>,
    pub winner: usize,
    pub plain_fit: FitResult,
    pub plain_aic: f64,
    /// Sources whose best AIC exactly tied the winner's.
    pub ties: Vec<SourceDescriptor>,
}

impl SelectionOutcome {
    pub fn winner_result(&self) -> &SpecSearchResult {
        &self.results[self.winner]
    }

    pub fn to_trace_json(&self) -> SelectionTraceJson {
        SelectionTraceJson {
            plain_aic: self.plain_aic,
            specs: self.results.iter().map(|r| r.trace.clone()).collect(),
            winner_source: self.winner_result().trace.source.clone(),
            winner_subset: self.winner_result().trace.best_subset.clone(),
            winner_aic: self.winner_result().trace.best_aic,
            ties: self.ties.clone(),
        }
    }
}

/// `selection_trace.json` layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionTraceJson {
    pub plain_aic: f64,
    pub specs: Vec<SpecTrace>,
    pub winner_source: Option<SourceDescriptor>,
    pub winner_subset: Vec<RandomVar>,
    pub winner_aic: f64,
    pub ties: Vec<SourceDescriptor>,
}

/// Runs the forward search for every grid entry and picks the source with
/// the lowest best AIC (ties break toward the lexicographically smaller
/// descriptor and are recorded).
pub fn select_across_specs(
    grid: &SpecGrid,
    dataset: &Dataset,
    draw_config: &DrawConfig,
    options: &Algorithm1Options,
) -> Result<SelectionOutcome> {
    // One shared plain fit: it involves no component columns.
    let plain_data = ModelData::assemble(dataset, None, None)?;
    let plain_spec = ModelSpec::new(None, Vec::new(), plain_data.has_ranks, 0)?;
    let draws = DrawSet::generate(draw_config, 0, plain_data.n_individuals())?;
    let plain_fit = fit_with_draws(
        &plain_spec,
        &plain_data,
        draw_config,
        &options.fit,
        None,
        draws.view(),
    )?;

    let mut results = Vec::with_capacity(grid.entries.len());
    for entry in &grid.entries {
        let is_attr_entry = entry.pcs.source.data_type == DataType::Attributes;
        let attr_store = if grid.extend_with_attributes || is_attr_entry {
            grid.attr_pcs.as_ref()
        } else {
            None
        };
        let data = ModelData::assemble(dataset, Some(&entry.pcs), attr_store)?;
        let mut candidates = candidate_set(entry.candidate_p.min(entry.pcs.n_components()));
        if grid.extend_with_attributes && !is_attr_entry {
            if let Some(attrs) = &grid.attr_pcs {
                let extras: Vec<RandomVar> =
                    (1..=attrs.n_components()).map(RandomVar::AttrPc).collect();
                candidates = extend_candidate_set(&candidates, &extras)?;
            }
        }
        results.push(algorithm1(
            Some(&entry.pcs.source),
            &data,
            &candidates,
            draw_config,
            options,
            Some(&plain_fit),
        )?);
    }

    let winner = (0..results.len())
        .min_by(|&a, &b| {
            results[a]
                .trace
                .best_aic
                .partial_cmp(&results[b].trace.best_aic)
                .unwrap()
                .then_with(|| results[a].trace.source.cmp(&results[b].trace.source))
        })
        .expect("grid has entries");
    let ties: Vec<SourceDescriptor> = results
        .iter()
        .enumerate()
        .filter(|(i, r)| *i != winner && r.trace.best_aic == results[winner].trace.best_aic)
        .filter_map(|(_, r)| r.trace.source.clone())
        .collect();

    Ok(SelectionOutcome {
        plain_aic: plain_fit.aic,
        plain_fit,
        winner,
        results,
        ties,
    })
}

/// AIC support category for a fitted model versus a simpler baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    None,
    Strong,
    VeryStrong,
}

/// Labels an AIC difference (model minus baseline): at or below -5 is very
/// strong support, at or below -2 strong, anything else none.
pub fn support_label(delta_aic: f64) -> Support {
    if delta_aic <= -5.0 {
        Support::VeryStrong
    } else if delta_aic <= -2.0 {
        Support::Strong
    } else {
        Support::None
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightEntry {
    pub data_type: DataType,
    pub delta_aic: f64,
    pub weight: f64,
}

/// Relative support of each data type: `w_d` proportional to
/// `exp(-delta_d / 2)` where `delta_d` is the gap to the lowest per-type AIC.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AkaikeWeights {
    pub entries: Vec<WeightEntry>,
}

pub fn akaike_weights(best_aic_per_type: &BTreeMap<DataType, f64>) -> Result<AkaikeWeights> {
    if best_aic_per_type.is_empty() {
        return Err(Error::Validation("no AIC values to weight".into()));
    }
    if best_aic_per_type.values().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite AIC".into()));
    }
    let min = best_aic_per_type
        .values()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let deltas: Vec<(DataType, f64)> = best_aic_per_type
        .iter()
        .map(|(d, aic)| (*d, aic - min))
        .collect();
    let total: f64 = deltas.iter().map(|(_, d)| (-d / 2.0).exp()).sum();
    Ok(AkaikeWeights {
        entries: deltas
            .into_iter()
            .map(|(data_type, delta_aic)| WeightEntry {
                data_type,
                delta_aic,
                weight: (-delta_aic / 2.0).exp() / total,
            })
            .collect(),
    })
}

/// Per-data-type minima of the grid's best AICs, the input to
/// [`akaike_weights`].
pub fn best_aic_by_data_type(outcome: &SelectionOutcome) -> BTreeMap<DataType, f64> {
    let mut map: BTreeMap<DataType, f64> = BTreeMap::new();
    for result in &outcome.results {
        if let Some(source) = &result.trace.source {
            let entry = map.entry(source.data_type).or_insert(f64::INFINITY);
            *entry = entry.min(result.trace.best_aic);
        }
    }
    map
}
