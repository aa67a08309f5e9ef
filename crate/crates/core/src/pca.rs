//! Principal-component extraction for embedding matrices.
//!
//! Text and image embeddings are centered but not rescaled; attribute
//! matrices should be standardized first (see [`standardize`]). Scores keep
//! the eigenvalue scale here; the demand layer rescales selected components
//! to unit sample variance.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingMatrix, SourceDescriptor};
use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which a component is treated as null.
const RANK_TOL: f64 = 1e-12;

/// Principal components of one embedding source.
#[derive(Clone, Debug)]
pub struct PcStore {
    pub source: SourceDescriptor,
    pub product_ids: Vec<String>,
    /// J x P score matrix, columns ordered by eigenvalue descending.
    pub scores: DMatrix<f64>,
    /// D x P loading matrix (empty when built directly from scores).
    pub loadings: DMatrix<f64>,
    /// Share of total variance per retained component.
    pub explained_ratio: Vec<f64>,
    pub centering: Vec<f64>,
    /// Per-column scale divisors when the input was standardized.
    pub scale: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PcStore {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }

    /// Wraps an existing score matrix (already centered) as a component
    /// store, e.g. ground-truth component values from a simulator.
    pub fn from_scores(
        source: SourceDescriptor,
        product_ids: Vec<String>,
        scores: DMatrix<f64>,
    ) -> Result<Self> {
        if scores.nrows() != product_ids.len() || scores.ncols() == 0 {
            return Err(Error::Validation("score matrix shape mismatch".into()));
        }
        let j = scores.nrows() as f64;
        let variances: Vec<f64> = (0..scores.ncols())
            .map(|c| {
                let col = scores.column(c);
                let mean = col.sum() / j;
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (j - 1.0)
            })
            .collect();
        let total: f64 = variances.iter().sum();
        let dim = scores.ncols();
        Ok(PcStore {
            source,
            product_ids,
            scores,
            loadings: DMatrix::identity(dim, dim),
            explained_ratio: variances.iter().map(|v| v / total.max(f64::MIN_POSITIVE)).collect(),
            centering: vec![0.0; dim],
            scale: None,
            warnings: Vec::new(),
        })
    }

    /// One score column rescaled to unit sample variance, the form entering
    /// the demand model. Zero-variance columns are returned unscaled.
    pub fn model_column(&self, component: usize) -> Vec<f64> {
        let col = self.scores.column(component);
        let j = col.len() as f64;
        let mean = col.sum() / j;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (j - 1.0);
        let sd = var.sqrt();
        if sd > 0.0 {
            col.iter().map(|v| v / sd).collect()
        } else {
            col.iter().copied().collect()
        }
    }
}

/// Outcome of column standardization.
#[derive(Clone, Debug)]
pub struct Standardized {
    pub matrix: EmbeddingMatrix,
    /// Indices (in the original matrix) of dropped zero-variance columns.
    pub dropped_columns: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Rescales every column to sample mean zero and variance one, dropping
/// zero-variance columns.
pub fn standardize(matrix: &EmbeddingMatrix) -> Result<Standardized> {
    let j = matrix.n_products();
    if j < 2 {
        return Err(Error::Validation(
            "standardize requires at least two products".into(),
        ));
    }
    let jf = j as f64;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for c in 0..matrix.dim() {
        let col = matrix.values.column(c);
        let mean = col.sum() / jf;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (jf - 1.0);
        if var <= 0.0 {
            dropped.push(c);
        } else {
            kept.push(c);
            means.push(mean);
            scales.push(var.sqrt());
        }
    }
    if kept.is_empty() {
        return Err(Error::Validation(
            "all columns have zero variance; nothing to standardize".into(),
        ));
    }
    let values = DMatrix::from_fn(j, kept.len(), |r, k| {
        (matrix.values[(r, kept[k])] - means[k]) / scales[k]
    });
    Ok(Standardized {
        matrix: EmbeddingMatrix::new(matrix.source.clone(), matrix.product_ids.clone(), values)?,
        dropped_columns: dropped,
        means,
        scales,
    })
}

/// Eigenvalues and loading vectors of the sample covariance, sorted
/// descending. Uses the Gram matrix when the data are wider than they are
/// tall; both routes share the covariance spectrum.
fn covariance_eigen(centered: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, f64) {
    let j = centered.nrows();
    let d = centered.ncols();
    let denom = (j - 1) as f64;
    let total_variance: f64 = (0..d)
        .map(|c| centered.column(c).iter().map(|v| v * v).sum::<f64>() / denom)
        .sum();

    let eigen = if d <= j {
        SymmetricEigen::new(centered.transpose() * centered / denom)
    } else {
        SymmetricEigen::new(centered * centered.transpose() / denom)
    };
    let mut pairs: Vec<(f64, usize)> = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| (v.max(0.0), i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let values: Vec<f64> = pairs.iter().map(|(v, _)| *v).collect();
    let mut loadings = DMatrix::zeros(d, pairs.len());
    for (k, &(lambda, i)) in pairs.iter().enumerate() {
        let column: DVector<f64> = if d <= j {
            eigen.eigenvectors.column(i).into_owned()
        } else {
            // Map a Gram eigenvector u to the loading X'u / sigma.
            let sigma = (lambda * denom).sqrt();
            if sigma > 0.0 {
                centered.transpose() * eigen.eigenvectors.column(i) / sigma
            } else {
                DVector::zeros(d)
            }
        };
        loadings.set_column(k, &column);
    }
    (values, loadings, total_variance)
}

/// Fits PCA with `p` components on a finite embedding matrix.
///
/// Requires `p <= min(J - 1, D)`. If the data have rank below `p`, only the
/// rank-many informative components are returned and a warning is recorded.
/// Sign convention: the largest-magnitude entry of each loading column is
/// positive.
pub fn fit_pca(matrix: &EmbeddingMatrix, p: usize) -> Result<PcStore> {
    let j = matrix.n_products();
    let d = matrix.dim();
    if j < 2 {
        return Err(Error::Validation("pca requires at least two products".into()));
    }
    let max_p = (j - 1).min(d);
    if p == 0 || p > max_p {
        return Err(Error::Validation(format!(
            "components must be in 1..={max_p} for a {j}x{d} matrix, got {p}"
        )));
    }

    let jf = j as f64;
    let centering: Vec<f64> = (0..d).map(|c| matrix.values.column(c).sum() / jf).collect();
    let centered = DMatrix::from_fn(j, d, |r, c| matrix.values[(r, c)] - centering[c]);

    let (eigenvalues, mut loadings, total_variance) = covariance_eigen(&centered);
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eigenvalues
        .iter()
        .take(max_p)
        .filter(|&&v| v > top * RANK_TOL && v > 0.0)
        .count();
    let keep = p.min(rank);
    let mut warnings = Vec::new();
    if keep < p {
        warnings.push(format!(
            "matrix rank {keep} is below the {p} requested components; returning {keep}"
        ));
    }
    loadings = loadings.columns(0, keep).into_owned();

    // Deterministic signs: flip columns so the largest-magnitude loading is positive.
    for k in 0..keep {
        let col = loadings.column(k);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..d {
                loadings[(i, k)] = -loadings[(i, k)];
            }
        }
    }

    let scores = &centered * &loadings;
    let explained_ratio: Vec<f64> = eigenvalues
        .iter()
        .take(keep)
        .map(|v| v / total_variance.max(f64::MIN_POSITIVE))
        .collect();

    Ok(PcStore {
        source: matrix.source.clone(),
        product_ids: matrix.product_ids.clone(),
        scores,
        loadings,
        explained_ratio,
        centering,
        scale: None,
        warnings,
    })
}

/// Standard pipeline entry: attribute sources are standardized first (or any
/// source when `standardize_first` is set), then reduced by PCA. The
/// requested component count is clamped to what the source supports.
pub fn fit_source(matrix: &EmbeddingMatrix, p: usize, standardize_first: bool) -> Result<PcStore> {
    let max_p = (matrix.n_products() - 1).min(matrix.dim());
    let p = p.min(max_p).max(1);
    if standardize_first {
        let std = standardize(matrix)?;
        let max_p = (std.matrix.n_products() - 1).min(std.matrix.dim());
        let mut store = fit_pca(&std.matrix, p.min(max_p))?;
        store.scale = Some(std.scales.clone());
        if !std.dropped_columns.is_empty() {
            store
                .warnings
                .push(format!("dropped zero-variance columns: {:?}", std.dropped_columns));
        }
        Ok(store)
    } else {
        fit_pca(matrix, p)
    }
}

#[derive(Serialize, Deserialize)]
struct PcaMeta {
    source: SourceDescriptor,
    p: usize,
    explained_ratio: Vec<f64>,
    warnings: Vec<String>,
}

/// Writes `*_pcs.csv` (`product_id,pc1..pcP`) and `*_meta.json`.
pub fn write_pcs(dir: &Path, store: &PcStore) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let stem = store.source.stem();
    let csv_path = dir.join(format!("{stem}_pcs.csv"));
    let mut writer = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::io(csv_path.display().to_string(), std::io::Error::other(e)))?;
    let mut header = vec!["product_id".to_string()];
    header.extend((1..=store.n_components()).map(|i| format!("pc{i}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::io(csv_path.display().to_string(), std::io::Error::other(e)))?;
    for (r, pid) in store.product_ids.iter().enumerate() {
        let mut row = vec![pid.clone()];
        row.extend((0..store.n_components()).map(|c| store.scores[(r, c)].to_string()));
        writer
            .write_record(&row)
            .map_err(|e| Error::io(csv_path.display().to_string(), std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let meta = PcaMeta {
        source: store.source.clone(),
        p: store.n_components(),
        explained_ratio: store.explained_ratio.clone(),
        warnings: store.warnings.clone(),
    };
    let meta_path = dir.join(format!("{stem}_meta.json"));
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::io(meta_path.display().to_string(), std::io::Error::other(e)))?;
    std::fs::write(&meta_path, json).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataType;
    use approx::assert_relative_eq;

    fn emb(rows: usize, cols: usize, data: &[f64]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            SourceDescriptor::new(DataType::Image, "test"),
            (0..rows).map(|i| format!("p{i}")).collect(),
            DMatrix::from_row_slice(rows, cols, data),
        )
        .unwrap()
    }

    fn random_emb(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut s = crate::rng::Stream::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| s.next_unit() * 4.0 - 2.0).collect();
        emb(rows, cols, &data)
    }

    #[test]
    fn standardize_unit_moments() {
        let m = emb(3, 1, &[1.0, 2.0, 3.0]);
        let out = standardize(&m).unwrap();
        let col = out.matrix.values.column(0);
        let mean = col.sum() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
        assert_relative_eq!(var, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_drops_constant_columns() {
        let m = emb(3, 2, &[1.0, 7.0, 2.0, 7.0, 3.0, 7.0]);
        let out = standardize(&m).unwrap();
        assert_eq!(out.matrix.dim(), 1);
        assert_eq!(out.dropped_columns, vec![1]);

        let all_const = emb(3, 1, &[7.0, 7.0, 7.0]);
        assert!(standardize(&all_const).is_err());
    }

    #[test]
    fn standardized_moments_hold_on_wide_matrices() {
        let m = random_emb(15, 18, 5);
        let out = standardize(&m).unwrap();
        for c in 0..out.matrix.dim() {
            let col = out.matrix.values.column(c);
            let mean = col.sum() / 15.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 14.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_data_explains_everything() {
        // Points on a line in 2-D.
        let m = emb(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let store = fit_pca(&m, 1).unwrap();
        assert_eq!(store.explained_ratio.len(), 1);
        assert_relative_eq!(store.explained_ratio[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_truncates_with_warning() {
        let m = emb(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let store = fit_pca(&m, 2).unwrap();
        assert_eq!(store.n_components(), 1);
        assert!(!store.warnings.is_empty());
    }

    #[test]
    fn scores_are_orthogonal_and_ratios_sum_below_one() {
        let m = random_emb(12, 6, 42);
        let store = fit_pca(&m, 5).unwrap();
        let gram = store.scores.transpose() * &store.scores;
        let scale = (0..5).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
        for r in 0..5 {
            for c in 0..5 {
                if r != c {
                    assert!(gram[(r, c)].abs() <= scale * 1e-8, "off-diagonal {r},{c}");
                }
            }
        }
        let sum: f64 = store.explained_ratio.iter().sum();
        assert!(sum <= 1.0 + 1e-12);
        for w in store.explained_ratio.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // Same data viewed tall (J > D) and wide (J < D) must give the same
        // eigen-structure up to the shared sign convention.
        let tall = random_emb(9, 4, 3);
        let store_tall = fit_pca(&tall, 3).unwrap();

        // Fat matrix: transpose role, 4 products with 9 dims.
        let wide = EmbeddingMatrix::new(
            tall.source.clone(),
            (0..4).map(|i| format!("q{i}")).collect(),
            tall.values.transpose(),
        )
        .unwrap();
        let store_wide = fit_pca(&wide, 3).unwrap();
        // Ratios are scale-free summaries of the same singular values only in
        // their own geometry; here just sanity-check the wide path invariants.
        let gram = store_wide.scores.transpose() * &store_wide.scores;
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    assert!(gram[(r, c)].abs() < 1e-8 * gram[(0, 0)].max(1.0));
                }
            }
        }
        assert!(store_tall.explained_ratio[0] > 0.0);
    }

    #[test]
    fn rotation_leaves_explained_ratios_unchanged() {
        let m = random_emb(10, 3, 9);
        let store = fit_pca(&m, 2).unwrap();
        // Orthogonal rotation of the columns (Givens on dims 0,1 then 1,2).
        let theta = 0.7_f64;
        let mut rot = DMatrix::identity(3, 3);
        rot[(0, 0)] = theta.cos();
        rot[(0, 1)] = -theta.sin();
        rot[(1, 0)] = theta.sin();
        rot[(1, 1)] = theta.cos();
        let rotated = EmbeddingMatrix::new(
            m.source.clone(),
            m.product_ids.clone(),
            &m.values * rot,
        )
        .unwrap();
        let store_rot = fit_pca(&rotated, 2).unwrap();
        for (a, b) in store.explained_ratio.iter().zip(&store_rot.explained_ratio) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn top_p_projection_beats_random_projections() {
        let m = random_emb(14, 5, 77);
        let p = 2;
        let store = fit_pca(&m, p).unwrap();
        let j = m.n_products() as f64;
        let centering: Vec<f64> = (0..5).map(|c| m.values.column(c).sum() / j).collect();
        let centered = DMatrix::from_fn(14, 5, |r, c| m.values[(r, c)] - centering[c]);

        let recon_err = |basis: &DMatrix<f64>| -> f64 {
            let proj = &centered * basis * basis.transpose();
            (&centered - proj).iter().map(|v| v * v).sum()
        };
        let pca_err = recon_err(&store.loadings);

        let mut s = crate::rng::Stream::new(5);
        for _ in 0..20 {
            // Random orthonormal 5 x 2 basis via Gram-Schmidt.
            let mut basis = DMatrix::from_fn(5, p, |_, _| s.next_unit() * 2.0 - 1.0);
            for k in 0..p {
                for prev in 0..k {
                    let dot = basis.column(k).dot(&basis.column(prev));
                    let prev_col = basis.column(prev).into_owned();
                    let mut col = basis.column_mut(k);
                    col.axpy(-dot, &prev_col, 1.0);
                }
                let norm = basis.column(k).norm();
                basis.column_mut(k).scale_mut(1.0 / norm);
            }
            assert!(pca_err <= recon_err(&basis) + 1e-9);
        }
    }

    #[test]
    fn determinism_including_signs() {
        let m = random_emb(10, 4, 123);
        let a = fit_pca(&m, 3).unwrap();
        let b = fit_pca(&m, 3).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.loadings, b.loadings);
        // convention: largest-magnitude loading entry positive
        for k in 0..3 {
            let col = a.loadings.column(k);
            let max = col.iter().cloned().fold(f64::MIN, f64::max);
            let min = col.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max.abs() >= min.abs());
        }
    }

    #[test]
    fn model_column_has_unit_variance() {
        let m = random_emb(10, 4, 44);
        let store = fit_pca(&m, 2).unwrap();
        let col = store.model_column(0);
        let mean: f64 = col.iter().sum::<f64>() / 10.0;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert_relative_eq!(var, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pcs_roundtrip_to_disk() {
        let m = random_emb(6, 3, 8);
        let store = fit_pca(&m, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_pcs(dir.path(), &store).unwrap();
        assert!(dir.path().join("image__test_pcs.csv").exists());
        assert!(dir.path().join("image__test_meta.json").exists());
    }
}
