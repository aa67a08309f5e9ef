//! Property tests for the file formats and featurizers.

use std::collections::BTreeSet;

use demand_core::data::{io, ChoiceObservation, Dataset, Product};
use demand_core::text::{BagOfWords, Featurizer, ProductCorpus, TfIdf};
use demand_core::DataType;
use proptest::prelude::*;

fn token_strategy() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    proptest::collection::vec(
        proptest::collection::vec(token_strategy(), 1..12),
        2..6,
    )
}

fn corpus_of(docs: &[Vec<String>]) -> ProductCorpus {
    ProductCorpus {
        data_type: DataType::Title,
        product_ids: (0..docs.len()).map(|i| format!("p{i}")).collect(),
        docs: docs.iter().map(|d| vec![d.clone()]).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Duplicating every document doubles raw counts and leaves normalized
    /// TF-IDF rows unchanged (document frequencies scale together).
    #[test]
    fn doubling_documents_scales_counts_and_fixes_tfidf(docs in corpus_strategy()) {
        let single = corpus_of(&docs);
        let doubled = ProductCorpus {
            data_type: DataType::Title,
            product_ids: single.product_ids.clone(),
            docs: docs
                .iter()
                .map(|d| {
                    let mut twice = d.clone();
                    twice.extend(d.iter().cloned());
                    vec![twice]
                })
                .collect(),
        };

        let bow_a = BagOfWords.vectorize(&single).unwrap();
        let bow_b = BagOfWords.vectorize(&doubled).unwrap();
        for r in 0..bow_a.n_products() {
            for c in 0..bow_a.dim() {
                prop_assert_eq!(2.0 * bow_a.values[(r, c)], bow_b.values[(r, c)]);
            }
        }

        let tfidf_a = TfIdf.vectorize(&single).unwrap();
        let tfidf_b = TfIdf.vectorize(&doubled).unwrap();
        for r in 0..tfidf_a.n_products() {
            for c in 0..tfidf_a.dim() {
                prop_assert!((tfidf_a.values[(r, c)] - tfidf_b.values[(r, c)]).abs() < 1e-12);
            }
        }
    }

    /// Identical corpora vectorize identically (byte-for-byte determinism).
    #[test]
    fn vectorization_is_deterministic(docs in corpus_strategy()) {
        let corpus = corpus_of(&docs);
        let a = TfIdf.vectorize(&corpus).unwrap();
        let b = TfIdf.vectorize(&corpus).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    /// Any valid dataset round-trips through the CSV layout exactly.
    #[test]
    fn dataset_roundtrip(
        n_products in 2usize..5,
        n_individuals in 1usize..6,
        price_cents in proptest::collection::vec(300u32..700, 30),
        seed in 0u64..1000,
    ) {
        let ids: Vec<String> = (0..n_products).map(|i| format!("p{i}")).collect();
        let catalog: Vec<Product> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut p = Product::new(id, format!("Product {i}"));
                p.title = format!("title {i}");
                if i % 2 == 0 {
                    p.reviews = vec![format!("review, with \"quotes\" {i}"), "ok".into()];
                }
                p.attributes.insert("pages".into(), 100.0 + i as f64);
                p
            })
            .collect();
        let mut observations = Vec::new();
        let mut stream = demand_core::rng::Stream::new(seed);
        for i in 0..n_individuals {
            let prices: Vec<f64> = (0..n_products)
                .map(|j| price_cents[(i * n_products + j) % price_cents.len()] as f64 / 100.0)
                .collect();
            let chosen = stream.next_below(n_products as u64) as usize;
            observations.push(ChoiceObservation {
                individual_id: format!("i{i}"),
                task: 1,
                offered: ids.clone(),
                prices,
                ranks: None,
                chosen: ids[chosen].clone(),
            });
        }
        let dataset = Dataset { catalog, observations, embeddings: vec![] };
        dataset.validate().unwrap();

        let dir = tempfile::tempdir().unwrap();
        io::write_dataset(dir.path(), &dataset).unwrap();
        let loaded = io::load_dataset(dir.path()).unwrap();
        prop_assert_eq!(loaded, dataset);
    }
}

/// Embedding row alignment is order-free: permuting file rows does not
/// change the loaded matrix.
#[test]
fn embedding_rows_align_regardless_of_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let forward = dir.path().join("image__m.csv");
    let backward = dir.path().join("image__m2.csv");
    std::fs::write(&forward, "product_id,e1\na,1\nb,2\nc,3\n").unwrap();
    std::fs::write(&backward, "product_id,e1\nc,3\na,1\nb,2\n").unwrap();
    let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let first = io::load_embeddings(
        &forward,
        demand_core::SourceDescriptor::new(DataType::Image, "m"),
        &ids,
    )
    .unwrap();
    let second = io::load_embeddings(
        &backward,
        demand_core::SourceDescriptor::new(DataType::Image, "m"),
        &ids,
    )
    .unwrap();
    assert_eq!(first.values, second.values);
}

/// Validation never yields a partially loaded dataset: one bad row fails the
/// whole load.
#[test]
fn validation_is_total() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("choices.csv");
    std::fs::write(
        &path,
        "individual_id,task,product_id,offered,price,rank,chosen\n\
         i1,1,a,1,3,,1\n\
         i1,1,b,1,4,,0\n\
         i2,1,a,1,not_a_price,,1\n",
    )
    .unwrap();
    assert!(io::load_choices(&path).is_err());

    let unique: BTreeSet<&str> = ["a", "b"].into_iter().collect();
    assert_eq!(unique.len(), 2);
}
