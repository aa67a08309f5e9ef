//! CSV ingestion and emission for the canonical file layout.
//!
//! All files are UTF-8 with RFC 4180 quoting:
//! - `choices.csv`: `individual_id,task,product_id,offered,price,rank,chosen`,
//!   one row per (individual, task, offered product), `offered` always 1 on
//!   emitted rows, `rank` blank when not observed.
//! - `products.csv`: `product_id,label,title,description` plus `attr:<name>`
//!   columns. Non-numeric attribute columns are one-hot encoded on load.
//! - `reviews.csv`: `product_id,review_index,text`.
//! - embeddings: `product_id,e1,...,eD`, one row per catalog product in any
//!   order; rows are realigned to catalog order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{ChoiceObservation, Dataset, EmbeddingMatrix, Product, SourceDescriptor};

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Loads choice observations, grouping contiguous rows that share an
/// (individual, task) key into one observation.
pub fn load_choices(path: &Path) -> Result<Vec<ChoiceObservation>> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let expected = [
        "individual_id",
        "task",
        "product_id",
        "offered",
        "price",
        "rank",
        "chosen",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }

    struct Group {
        individual: String,
        task: u8,
        offered: Vec<String>,
        prices: Vec<f64>,
        ranks: Vec<Option<u32>>,
        chosen: Vec<String>,
        first_line: u64,
    }

    let mut out = Vec::new();
    let mut seen: HashSet<(String, u8)> = HashSet::new();
    let mut current: Option<Group> = None;

    let finish = |g: Group, out: &mut Vec<ChoiceObservation>, path: &Path| -> Result<()> {
        if g.chosen.len() != 1 {
            return Err(parse_err(
                path,
                g.first_line,
                format!(
                    "individual {} task {}: expected exactly one chosen row, found {}",
                    g.individual,
                    g.task,
                    g.chosen.len()
                ),
            ));
        }
        let ranks = if g.ranks.iter().all(|r| r.is_some()) {
            Some(g.ranks.iter().map(|r| r.unwrap()).collect())
        } else if g.ranks.iter().all(|r| r.is_none()) {
            None
        } else {
            return Err(parse_err(
                path,
                g.first_line,
                format!(
                    "individual {} task {}: rank present on some rows but not others",
                    g.individual, g.task
                ),
            ));
        };
        let obs = ChoiceObservation {
            individual_id: g.individual,
            task: g.task,
            offered: g.offered,
            prices: g.prices,
            ranks,
            chosen: g.chosen.into_iter().next().unwrap(),
        };
        obs.validate()?;
        out.push(obs);
        Ok(())
    };

    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let field = |i: usize| record.get(i).unwrap_or("").to_string();

        let individual = field(0);
        let task: u8 = field(1)
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad task '{}'", field(1))))?;
        let product = field(2);
        let offered_flag = field(3);
        if offered_flag != "1" {
            return Err(parse_err(
                path,
                line,
                format!("offered must be 1 on emitted rows, got '{offered_flag}'"),
            ));
        }
        let price: f64 = field(4)
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad price '{}'", field(4))))?;
        let rank: Option<u32> = if field(5).is_empty() {
            None
        } else {
            Some(
                field(5)
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad rank '{}'", field(5))))?,
            )
        };
        let chosen_flag = field(6);
        let is_chosen = match chosen_flag.as_str() {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("chosen must be 0 or 1, got '{other}'"),
                ))
            }
        };

        let start_new = match &current {
            Some(g) => g.individual != individual || g.task != task,
            None => true,
        };
        if start_new {
            if let Some(g) = current.take() {
                finish(g, &mut out, path)?;
            }
            if !seen.insert((individual.clone(), task)) {
                return Err(parse_err(
                    path,
                    line,
                    format!("rows for individual {individual} task {task} are not contiguous"),
                ));
            }
            current = Some(Group {
                individual,
                task,
                offered: Vec::new(),
                prices: Vec::new(),
                ranks: Vec::new(),
                chosen: Vec::new(),
                first_line: line,
            });
        }
        let g = current.as_mut().unwrap();
        g.offered.push(product.clone());
        g.prices.push(price);
        g.ranks.push(rank);
        if is_chosen {
            g.chosen.push(product);
        }
    }
    if let Some(g) = current.take() {
        finish(g, &mut out, path)?;
    }
    Ok(out)
}

pub fn write_choices(path: &Path, observations: &[ChoiceObservation]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    writer
        .write_record([
            "individual_id",
            "task",
            "product_id",
            "offered",
            "price",
            "rank",
            "chosen",
        ])
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    for obs in observations {
        for (i, pid) in obs.offered.iter().enumerate() {
            let rank = obs
                .ranks
                .as_ref()
                .map(|r| r[i].to_string())
                .unwrap_or_default();
            let chosen = if pid == &obs.chosen { "1" } else { "0" };
            writer
                .write_record([
                    obs.individual_id.as_str(),
                    &obs.task.to_string(),
                    pid,
                    "1",
                    &obs.prices[i].to_string(),
                    &rank,
                    chosen,
                ])
                .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        }
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Loads the product catalog. `attr:<name>` columns with any non-numeric,
/// non-blank value are treated as categorical and one-hot encoded into
/// `<name>=<value>` attributes; blank cells mean the attribute is absent for
/// that product.
pub fn load_products(path: &Path) -> Result<Vec<Product>> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let fixed = ["product_id", "label", "title", "description"];
    if headers.len() < fixed.len() || headers.iter().take(4).collect::<Vec<_>>() != fixed {
        return Err(parse_err(
            path,
            1,
            "expected header product_id,label,title,description[,attr:<name>...]",
        ));
    }
    let mut attr_names = Vec::new();
    for h in headers.iter().skip(4) {
        let name = h.strip_prefix("attr:").ok_or_else(|| {
            parse_err(path, 1, format!("column '{h}' must be named attr:<name>"))
        })?;
        attr_names.push(name.to_string());
    }

    let mut products = Vec::new();
    let mut raw_attrs: Vec<Vec<String>> = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty product_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateProduct { id });
        }
        let mut p = Product::new(id, record.get(1).unwrap_or(""));
        p.title = record.get(2).unwrap_or("").to_string();
        p.description = record.get(3).unwrap_or("").to_string();
        products.push(p);
        raw_attrs.push((0..attr_names.len()).map(|i| record.get(4 + i).unwrap_or("").to_string()).collect());
    }

    // Column-wise typing: numeric if every non-blank cell parses as f64.
    for (c, name) in attr_names.iter().enumerate() {
        let numeric = raw_attrs
            .iter()
            .all(|row| row[c].is_empty() || row[c].parse::<f64>().is_ok());
        if numeric {
            for (p, row) in products.iter_mut().zip(&raw_attrs) {
                if !row[c].is_empty() {
                    let v: f64 = row[c].parse().unwrap();
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "product {}: non-finite attribute {name}",
                            p.id
                        )));
                    }
                    p.attributes.insert(name.clone(), v);
                }
            }
        } else {
            let levels: BTreeSet<String> = raw_attrs
                .iter()
                .filter(|row| !row[c].is_empty())
                .map(|row| row[c].clone())
                .collect();
            for (p, row) in products.iter_mut().zip(&raw_attrs) {
                if !row[c].is_empty() {
                    for level in &levels {
                        let hot = if &row[c] == level { 1.0 } else { 0.0 };
                        p.attributes.insert(format!("{name}={level}"), hot);
                    }
                }
            }
        }
    }
    Ok(products)
}

pub fn write_products(path: &Path, catalog: &[Product]) -> Result<()> {
    let attr_names: BTreeSet<String> = catalog
        .iter()
        .flat_map(|p| p.attributes.keys().cloned())
        .collect();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let mut header = vec![
        "product_id".to_string(),
        "label".to_string(),
        "title".to_string(),
        "description".to_string(),
    ];
    header.extend(attr_names.iter().map(|n| format!("attr:{n}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    for p in catalog {
        let mut row = vec![
            p.id.clone(),
            p.label.clone(),
            p.title.clone(),
            p.description.clone(),
        ];
        for name in &attr_names {
            row.push(
                p.attributes
                    .get(name)
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Attaches reviews to an already-loaded catalog, ordered by `review_index`.
pub fn load_reviews(path: &Path, catalog: &mut [Product]) -> Result<()> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["product_id", "review_index", "text"] {
        return Err(parse_err(path, 1, "expected header product_id,review_index,text"));
    }
    let index: HashMap<String, usize> = catalog
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), i))
        .collect();
    let mut buckets: BTreeMap<usize, Vec<(u32, String)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let pid = record.get(0).unwrap_or("");
        let Some(&pi) = index.get(pid) else {
            return Err(parse_err(path, line, format!("unknown product {pid}")));
        };
        let ri: u32 = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| parse_err(path, line, "bad review_index"))?;
        buckets
            .entry(pi)
            .or_default()
            .push((ri, record.get(2).unwrap_or("").to_string()));
    }
    for (pi, mut reviews) in buckets {
        reviews.sort_by_key(|(ri, _)| *ri);
        catalog[pi].reviews = reviews.into_iter().map(|(_, text)| text).collect();
    }
    Ok(())
}

pub fn write_reviews(path: &Path, catalog: &[Product]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    writer
        .write_record(["product_id", "review_index", "text"])
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    for p in catalog {
        for (i, text) in p.reviews.iter().enumerate() {
            writer
                .write_record([p.id.as_str(), &i.to_string(), text])
                .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        }
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Loads an embedding matrix and realigns its rows to catalog order.
pub fn load_embeddings(
    path: &Path,
    source: SourceDescriptor,
    catalog_ids: &[String],
) -> Result<EmbeddingMatrix> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.get(0) != Some("product_id") || headers.len() < 2 {
        return Err(parse_err(path, 1, "expected header product_id,e1,...,eD"));
    }
    let dim = headers.len() - 1;

    let index: HashMap<&String, usize> = catalog_ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; catalog_ids.len()];
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let pid = record.get(0).unwrap_or("").to_string();
        let Some(&pi) = index.get(&pid) else {
            return Err(parse_err(path, line, format!("unknown product {pid}")));
        };
        if rows[pi].is_some() {
            return Err(Error::DuplicateProduct { id: pid });
        }
        let mut values = Vec::with_capacity(dim);
        for c in 0..dim {
            let cell = record.get(1 + c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad value '{cell}' in column e{}", c + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: pi,
                    id: pid.clone(),
                    column: c,
                });
            }
            values.push(v);
        }
        rows[pi] = Some(values);
    }
    let missing: Vec<String> = catalog_ids
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.is_none())
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingProducts { ids: missing });
    }
    let values = DMatrix::from_fn(catalog_ids.len(), dim, |r, c| rows[r].as_ref().unwrap()[c]);
    EmbeddingMatrix::new(source, catalog_ids.to_vec(), values)
}

pub fn write_embeddings(path: &Path, embedding: &EmbeddingMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let mut header = vec!["product_id".to_string()];
    header.extend((1..=embedding.dim()).map(|i| format!("e{i}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    for (r, pid) in embedding.product_ids.iter().enumerate() {
        let mut row = vec![pid.clone()];
        row.extend((0..embedding.dim()).map(|c| embedding.values[(r, c)].to_string()));
        writer
            .write_record(&row)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Loads every `<data_type>__<model>.csv` file in a directory, aligned to the
/// catalog, sorted by source descriptor.
pub fn load_embeddings_dir(dir: &Path, catalog_ids: &[String]) -> Result<Vec<EmbeddingMatrix>> {
    let mut sources = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let source = SourceDescriptor::from_stem(&stem)?;
        sources.push((source, path));
    }
    sources.sort_by(|a, b| a.0.cmp(&b.0));
    sources
        .into_iter()
        .map(|(source, path)| load_embeddings(&path, source, catalog_ids))
        .collect()
}

/// Writes a dataset to a directory in the canonical layout.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_products(&dir.join("products.csv"), &dataset.catalog)?;
    write_choices(&dir.join("choices.csv"), &dataset.observations)?;
    write_reviews(&dir.join("reviews.csv"), &dataset.catalog)?;
    let emb_dir = dir.join("embeddings");
    std::fs::create_dir_all(&emb_dir).map_err(|e| Error::io(emb_dir.display().to_string(), e))?;
    for emb in &dataset.embeddings {
        write_embeddings(&emb_dir.join(format!("{}.csv", emb.source.stem())), emb)?;
    }
    Ok(())
}

/// Loads a dataset from the canonical layout. `reviews.csv` and the
/// embeddings directory are optional.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut catalog = load_products(&dir.join("products.csv"))?;
    let reviews = dir.join("reviews.csv");
    if reviews.exists() {
        load_reviews(&reviews, &mut catalog)?;
    }
    let observations = load_choices(&dir.join("choices.csv"))?;
    let ids: Vec<String> = catalog.iter().map(|p| p.id.clone()).collect();
    let emb_dir = dir.join("embeddings");
    let embeddings = if emb_dir.is_dir() {
        load_embeddings_dir(&emb_dir, &ids)?
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataType;

    fn write(path: &Path, contents: &str) {
        std::fs::write(path, contents).unwrap();
    }

    #[test]
    fn choices_roundtrip_and_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("choices.csv");
        write(
            &path,
            "individual_id,task,product_id,offered,price,rank,chosen\n\
             i1,1,a,1,3,2,0\n\
             i1,1,b,1,4.5,1,1\n\
             i1,1,c,1,7,3,0\n\
             i1,2,a,1,3,1,1\n\
             i1,2,c,1,7,2,0\n",
        );
        let obs = load_choices(&path).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].offered, vec!["a", "b", "c"]);
        assert_eq!(obs[0].chosen, "b");
        assert_eq!(obs[0].ranks, Some(vec![2, 1, 3]));
        assert_eq!(obs[1].task, 2);

        let back = dir.path().join("back.csv");
        write_choices(&back, &obs).unwrap();
        assert_eq!(load_choices(&back).unwrap(), obs);
    }

    #[test]
    fn chosen_outside_offered_is_rejected_with_individual() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("choices.csv");
        // Two chosen rows in one group.
        write(
            &path,
            "individual_id,task,product_id,offered,price,rank,chosen\n\
             i7,1,a,1,3,,1\n\
             i7,1,b,1,4,,1\n",
        );
        let err = load_choices(&path).unwrap_err();
        assert!(err.to_string().contains("i7"));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("choices.csv");
        write(
            &path,
            "individual_id,task,product_id,offered,price,rank,chosen\n\
             i1,1,a,1,3,,0\n\
             i1,1,b,1,oops,,1\n",
        );
        match load_choices(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embeddings_align_to_catalog_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("image__m.csv");
        write(
            &path,
            "product_id,e1,e2\nb,3,4\na,1,2\n",
        );
        let ids = vec!["a".to_string(), "b".to_string()];
        let emb = load_embeddings(&path, SourceDescriptor::new(DataType::Image, "m"), &ids).unwrap();
        assert_eq!(emb.values[(0, 0)], 1.0);
        assert_eq!(emb.values[(1, 1)], 4.0);
    }

    #[test]
    fn missing_and_duplicate_products_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write(&path, "product_id,e1\na,1\na,2\n");
        let ids = vec!["a".to_string(), "b".to_string()];
        let err =
            load_embeddings(&path, SourceDescriptor::new(DataType::Image, "m"), &ids).unwrap_err();
        assert!(matches!(err, Error::DuplicateProduct { .. }));

        write(&path, "product_id,e1\na,1\n");
        let err =
            load_embeddings(&path, SourceDescriptor::new(DataType::Image, "m"), &ids).unwrap_err();
        match err {
            Error::MissingProducts { ids } => assert_eq!(ids, vec!["b".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write(&path, "product_id,e1,e2\na,1,NaN\n");
        let ids = vec!["a".to_string()];
        let err =
            load_embeddings(&path, SourceDescriptor::new(DataType::Image, "m"), &ids).unwrap_err();
        match err {
            Error::NonFinite { row, column, .. } => assert_eq!((row, column), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn categorical_attributes_one_hot_encode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("products.csv");
        write(
            &path,
            "product_id,label,title,description,attr:genre,attr:pages\n\
             a,A,,,mystery,300\n\
             b,B,,,fantasy,210\n\
             c,C,,,mystery,120\n",
        );
        let products = load_products(&path).unwrap();
        assert_eq!(products[0].attributes["genre=mystery"], 1.0);
        assert_eq!(products[0].attributes["genre=fantasy"], 0.0);
        assert_eq!(products[1].attributes["genre=fantasy"], 1.0);
        assert_eq!(products[2].attributes["pages"], 120.0);
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let mut p1 = Product::new("a", "Product A");
        p1.title = "A title, with commas".into();
        p1.description = "line\nbreak".into();
        p1.reviews = vec!["great \"stuff\"".into(), "meh".into()];
        p1.attributes.insert("pages".into(), 300.5);
        let mut p2 = Product::new("b", "Product B");
        p2.attributes.insert("pages".into(), 120.0);

        let dataset = Dataset {
            catalog: vec![p1, p2],
            observations: vec![ChoiceObservation {
                individual_id: "i1".into(),
                task: 1,
                offered: vec!["a".into(), "b".into()],
                prices: vec![3.25, 6.75],
                ranks: Some(vec![2, 1]),
                chosen: "a".into(),
            }],
            embeddings: vec![EmbeddingMatrix::new(
                SourceDescriptor::new(DataType::Title, "bow"),
                vec!["a".into(), "b".into()],
                DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            )
            .unwrap()],
        };
        dataset.validate().unwrap();

        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, dataset);
    }
}
