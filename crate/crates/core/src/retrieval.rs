//! Same-attribute retrieval precision.
//!
//! Each query retrieves its K most similar database images; its precision is
//! the fraction of those that share the query's match attribute. Strata are
//! summarized by the unweighted mean over their queries.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::association::{attribute_values, row_key};
use crate::error::{Error, Result, Violation};
use crate::knn::{top_k_with, KnnConfig, NeighborList};
use crate::model::{EmbeddingMatrix, GroupKey, Grouping, SubjectManifest, SubjectRow, Validate};

pub const DEFAULT_KS: [usize; 2] = [10, 50];

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub match_attribute: String,
    pub ks: Vec<usize>,
    pub groupings: Vec<Grouping>,
    pub knn: KnnConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            match_attribute: "gender".into(),
            ks: DEFAULT_KS.to_vec(),
            groupings: vec![
                Grouping::new(["gender"]),
                Grouping::new(["skin_tone"]),
                Grouping::new(["gender", "skin_tone"]),
            ],
            knn: KnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCell {
    pub group: GroupKey,
    pub k: usize,
    /// Mean precision over scored queries; `None` when every query was excluded.
    pub mean_precision: Option<f64>,
    /// Queries in the stratum, excluded ones included.
    pub query_count: u64,
    /// Queries whose match value never occurs in the database vocabulary.
    pub excluded_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub match_attribute: String,
    pub ks: Vec<usize>,
    pub groupings: Vec<Grouping>,
    pub query_count: u64,
    pub database_size: u64,
    pub cells: Vec<RetrievalCell>,
}

impl RetrievalReport {
    pub fn get(&self, group: &GroupKey, k: usize) -> Option<&RetrievalCell> {
        self.cells.iter().find(|c| &c.group == group && c.k == k)
    }
}

impl Validate for RetrievalReport {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if c.query_count == 0 {
                out.push(Violation::new(format!("cells[{i}].query_count"), "must be positive"));
            }
            if c.excluded_count > c.query_count {
                out.push(Violation::new(format!("cells[{i}].excluded_count"), "exceeds query_count"));
            }
            match c.mean_precision {
                Some(p) if !(0.0..=1.0).contains(&p) => {
                    out.push(Violation::new(format!("cells[{i}].mean_precision"), "not in [0,1]"))
                }
                None if c.excluded_count < c.query_count => {
                    out.push(Violation::new(format!("cells[{i}].mean_precision"), "missing"))
                }
                _ => {}
            }
        }
        out
    }
}

/// Fraction of the first `k` neighbors whose match value equals `query_value`.
/// `db_values[i]` is the match value of database row `i`.
pub fn precision_at_k(
    neighbors: &NeighborList,
    query_value: &str,
    db_values: &[Option<String>],
    k: usize,
) -> Result<f64> {
    if k == 0 || k > neighbors.neighbors.len() {
        return Err(Error::KTooLarge {
            k,
            n: neighbors.neighbors.len(),
        });
    }
    let mut same = 0usize;
    for n in &neighbors.neighbors[..k] {
        let value = db_values
            .get(n.index)
            .and_then(Option::as_deref)
            .ok_or_else(|| Error::InvalidArgument(format!("database row {} has no match attribute", n.index)))?;
        if value == query_value {
            same += 1;
        }
    }
    Ok(same as f64 / k as f64)
}

fn rows_for<'a>(matrix: &EmbeddingMatrix, manifest: &'a SubjectManifest) -> Result<Vec<&'a SubjectRow>> {
    let by_id: HashMap<&str, &SubjectRow> = manifest.rows.iter().map(|r| (r.image_id.as_str(), r)).collect();
    matrix
        .ids()
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::UnmatchedImage(id.clone())))
        .collect()
}

/// Scores precomputed neighbor lists. `lists` must follow query row order.
pub fn summarize(
    lists: &[NeighborList],
    query_rows: &[&SubjectRow],
    query_manifest: &SubjectManifest,
    db_values: &[Option<String>],
    db_vocabulary: &BTreeSet<String>,
    config: &RetrievalConfig,
) -> Result<RetrievalReport> {
    let mut ks = config.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::InvalidArgument("K values must be positive".into()));
    }
    for g in &config.groupings {
        for a in g.attributes() {
            attribute_values(query_manifest, a)?;
        }
    }

    // precisions[q][ki]; None for excluded queries.
    let mut precisions: Vec<Option<Vec<f64>>> = Vec::with_capacity(lists.len());
    for (list, row) in lists.iter().zip(query_rows) {
        let value = row.attribute(&config.match_attribute).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "query {:?} has no {} value",
                row.image_id, config.match_attribute
            ))
        })?;
        if !db_vocabulary.contains(&value) {
            precisions.push(None);
            continue;
        }
        let p = ks
            .iter()
            .map(|&k| precision_at_k(list, &value, db_values, k))
            .collect::<Result<Vec<_>>>()?;
        precisions.push(Some(p));
    }

    let mut groupings: Vec<Grouping> = Vec::new();
    for g in &config.groupings {
        if !groupings.contains(g) {
            groupings.push(g.clone());
        }
    }
    let mut cells = Vec::new();
    for grouping in &groupings {
        let mut strata: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
        for (qi, row) in query_rows.iter().enumerate() {
            if let Some(key) = row_key(row, grouping) {
                strata.entry(key).or_default().push(qi);
            }
        }
        for (group, members) in strata {
            let scored: Vec<&Vec<f64>> = members.iter().filter_map(|&q| precisions[q].as_ref()).collect();
            for (ki, &k) in ks.iter().enumerate() {
                let mean_precision = (!scored.is_empty())
                    .then(|| scored.iter().map(|p| p[ki]).sum::<f64>() / scored.len() as f64);
                cells.push(RetrievalCell {
                    group: group.clone(),
                    k,
                    mean_precision,
                    query_count: members.len() as u64,
                    excluded_count: (members.len() - scored.len()) as u64,
                });
            }
        }
    }

    Ok(RetrievalReport {
        match_attribute: config.match_attribute.clone(),
        ks,
        groupings,
        query_count: lists.len() as u64,
        database_size: db_values.len() as u64,
        cells,
    })
}

/// Runs the search and summarizes precision per stratum. Both matrices must
/// already be unit-normalized.
pub fn retrieval_report(
    queries: &EmbeddingMatrix,
    query_manifest: &SubjectManifest,
    database: &EmbeddingMatrix,
    db_manifest: &SubjectManifest,
    config: &RetrievalConfig,
) -> Result<RetrievalReport> {
    let query_ids: BTreeSet<&str> = query_manifest.rows.iter().map(|r| r.image_id.as_str()).collect();
    if let Some(shared) = db_manifest.rows.iter().find(|r| query_ids.contains(r.image_id.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "image id {:?} appears in both the query and the database manifest",
            shared.image_id
        )));
    }
    let query_rows = rows_for(queries, query_manifest)?;
    let db_rows = rows_for(database, db_manifest)?;
    let db_values: Vec<Option<String>> = db_rows.iter().map(|r| r.attribute(&config.match_attribute)).collect();
    if let Some(i) = db_values.iter().position(Option::is_none) {
        return Err(Error::InvalidArgument(format!(
            "database image {:?} has no {} value",
            db_rows[i].image_id, config.match_attribute
        )));
    }
    let db_vocabulary: BTreeSet<String> = attribute_values(db_manifest, &config.match_attribute)?
        .into_iter()
        .collect();

    let k_max = config.ks.iter().copied().max().unwrap_or(0);
    if k_max == 0 {
        return Err(Error::InvalidArgument("K values must be positive".into()));
    }
    let lists = top_k_with(queries, database, k_max, &config.knn)?;
    summarize(&lists, &query_rows, query_manifest, &db_values, &db_vocabulary, config)
}
