//! Synthetic inputs with known metric values, for self-tests and demos.
//!
//! Labels are planted at score 0.95 on exact image counts, the remaining top-5
//! slots hold unmapped filler labels below 0.05, and a harmful decoy sits just
//! outside the top five. Embeddings are tight clusters around orthogonal
//! per-gender centres.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::stream_id;
use crate::error::{Error, Result};
use crate::ingest::embeddings::encode_embeddings;
use crate::ingest::predictions::write_predictions;
use crate::model::{AssociationType, EmbeddingMatrix, Fitzpatrick, Prediction, PredictionRecord, Region};
use crate::taxonomy::AssociationTaxonomy;

pub const PLANTED_SCORE: f64 = 0.95;
const DECOY_LABEL: &str = "snake";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub gender: String,
    pub skin_tone: Fitzpatrick,
    pub age: u32,
    pub size: usize,
    /// Fraction of the group's images that carry a label of each type.
    #[serde(default)]
    pub planted: BTreeMap<AssociationType, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSpec {
    pub households: usize,
    pub max_images: usize,
    pub target_label: String,
    /// How many times the first household's manifest rows are listed.
    #[serde(default = "one")]
    pub duplicate_first: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub groups: Vec<GroupSpec>,
    /// Database images per binary gender.
    pub database_per_gender: usize,
    pub embedding_dim: usize,
    /// Half-width of the uniform per-coordinate noise around each centre.
    pub noise: f32,
    #[serde(default)]
    pub households: Option<HouseholdSpec>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let group = |gender: &str, tone, age, size, planted: &[(AssociationType, f64)]| GroupSpec {
            gender: gender.into(),
            skin_tone: tone,
            age,
            size,
            planted: planted.iter().copied().collect(),
        };
        use AssociationType::*;
        Self {
            groups: vec![
                group("female", Fitzpatrick::II, 25, 8, &[(NonHuman, 0.25), (Human, 0.5)]),
                group("female", Fitzpatrick::V, 40, 4, &[(Crime, 0.25)]),
                group("male", Fitzpatrick::I, 52, 4, &[]),
                group("male", Fitzpatrick::VI, 71, 4, &[(NonHuman, 0.5), (PossiblyHuman, 0.25)]),
            ],
            database_per_gender: 60,
            embedding_dim: 16,
            noise: 0.01,
            households: Some(HouseholdSpec {
                households: 12,
                max_images: 3,
                target_label: "stove".into(),
                duplicate_first: 1,
            }),
        }
    }
}

/// Planted hit counts of one spec group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub gender: String,
    pub skin_tone: Fitzpatrick,
    pub age: u32,
    pub size: usize,
    pub hits: BTreeMap<AssociationType, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdFixture {
    pub manifest_csv: String,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub cc_manifest_csv: String,
    pub utk_manifest_csv: String,
    pub predictions: Vec<PredictionRecord>,
    pub queries: EmbeddingMatrix,
    pub database: EmbeddingMatrix,
    pub planted: Vec<PlantedGroup>,
    pub households: Option<HouseholdFixture>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFiles {
    pub predictions: PathBuf,
    pub cc_manifest: PathBuf,
    pub utk_manifest: PathBuf,
    pub query_emb: PathBuf,
    pub query_ids: PathBuf,
    pub db_emb: PathBuf,
    pub db_ids: PathBuf,
    pub planted: PathBuf,
    pub household_manifest: Option<PathBuf>,
    pub household_predictions: Option<PathBuf>,
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(format!("inconsistent fixture spec: {msg}"))
}

fn planted_label(tax: &AssociationTaxonomy, kind: AssociationType) -> Result<String> {
    tax.entries()
        .iter()
        .find(|e| e.kind == kind && tax.classify(&e.label, "CC") == kind)
        .map(|e| e.label.clone())
        .ok_or_else(|| invalid(format!("no {kind} label applies to CC images")))
}

fn centre_axis(gender: &str) -> usize {
    match gender {
        "female" => 0,
        "male" => 1,
        _ => 2,
    }
}

fn clustered(rng: &mut ChaCha8Rng, axis: usize, dim: usize, noise: f32) -> Vec<f32> {
    (0..dim)
        .map(|j| {
            let base = if j == axis { 1.0 } else { 0.0 };
            if noise > 0.0 {
                base + rng.gen_range(-noise..noise)
            } else {
                base
            }
        })
        .collect()
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn fillers(start: usize, count: usize) -> Vec<Prediction> {
    (0..count)
        .map(|j| Prediction::new(format!("filler-{:02}", start + j), 0.04 - 0.005 * j as f64))
        .collect()
}

pub fn make_fixture(seed: u64, spec: &FixtureSpec) -> Result<Fixture> {
    if spec.embedding_dim < 3 {
        return Err(invalid("embedding_dim must be at least 3".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise < 0.25) {
        return Err(invalid("noise must be in [0, 0.25)".into()));
    }
    let tax = AssociationTaxonomy::bundled();
    let mut predictions = Vec::new();
    let mut cc_rows = Vec::new();
    let mut query_ids = Vec::new();
    let mut query_values = Vec::new();
    let mut planted = Vec::new();

    for (gi, group) in spec.groups.iter().enumerate() {
        if group.size == 0 {
            return Err(invalid(format!("group {gi} is empty")));
        }
        if group.age < 18 {
            return Err(invalid(format!("group {gi} age {} is below 18", group.age)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(&format!("group-{gi}")));
        let mut per_image: Vec<Vec<String>> = vec![Vec::new(); group.size];
        let mut hits = BTreeMap::new();
        for (&kind, &rate) in &group.planted {
            let exact = rate * group.size as f64;
            let count = exact.round();
            if !(0.0..=1.0).contains(&rate) || (exact - count).abs() > 1e-9 {
                return Err(invalid(format!(
                    "rate {rate} of {kind} in group {gi} is not a multiple of 1/{}",
                    group.size
                )));
            }
            let label = planted_label(&tax, kind)?;
            let mut order: Vec<usize> = (0..group.size).collect();
            order.shuffle(&mut rng);
            for &i in &order[..count as usize] {
                per_image[i].push(label.clone());
            }
            hits.insert(kind, count as usize);
        }
        planted.push(PlantedGroup {
            gender: group.gender.clone(),
            skin_tone: group.skin_tone,
            age: group.age,
            size: group.size,
            hits,
        });

        for (i, labels) in per_image.into_iter().enumerate() {
            let id = format!("cc-{gi:02}-{i:04}");
            let mut preds: Vec<Prediction> = labels.into_iter().map(|l| Prediction::new(l, PLANTED_SCORE)).collect();
            let n = preds.len();
            preds.extend(fillers(0, 5 - n.min(5)));
            preds.push(Prediction::new(DECOY_LABEL, 0.001));
            predictions.push(PredictionRecord::new(id.clone(), preds));
            cc_rows.push(vec![
                id.clone(),
                group.gender.clone(),
                group.age.to_string(),
                group.skin_tone.as_str().to_string(),
            ]);
            query_values.extend(clustered(&mut rng, centre_axis(&group.gender), spec.embedding_dim, spec.noise));
            query_ids.push(id);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id("database"));
    let mut utk_rows = Vec::new();
    let mut db_ids = Vec::new();
    let mut db_values = Vec::new();
    for i in 0..spec.database_per_gender {
        for gender in ["female", "male"] {
            let id = format!("utk-{}-{i:05}", &gender[..1]);
            utk_rows.push(vec![id.clone(), gender.to_string(), rng.gen_range(18..90u32).to_string()]);
            db_values.extend(clustered(&mut rng, centre_axis(gender), spec.embedding_dim, spec.noise));
            db_ids.push(id);
        }
    }

    let households = spec
        .households
        .as_ref()
        .map(|h| make_households(seed, h))
        .transpose()?;

    Ok(Fixture {
        cc_manifest_csv: csv_string(&["id", "gender", "age", "skin_tone"], &cc_rows),
        utk_manifest_csv: csv_string(&["id", "gender", "age"], &utk_rows),
        predictions,
        queries: EmbeddingMatrix::new(query_ids, spec.embedding_dim, query_values)?,
        database: EmbeddingMatrix::new(db_ids, spec.embedding_dim, db_values)?,
        planted,
        households,
    })
}

fn make_households(seed: u64, spec: &HouseholdSpec) -> Result<HouseholdFixture> {
    if spec.households == 0 || spec.max_images == 0 || spec.duplicate_first == 0 {
        return Err(invalid("household counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id("households"));
    let others = ["bed", "toothbrush", "cup", "chair", "lamp", "door", "sofa"];
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for h in 0..spec.households {
        let region = Region::ALL[h % Region::ALL.len()];
        // Log-uniform over roughly $10 to $22,000 a month.
        let income = rng.gen_range(2.3f64..10.0).exp().round().max(1.0);
        let images = rng.gen_range(1..=spec.max_images);
        let mut household_rows = Vec::new();
        for i in 0..images {
            let id = format!("ds-{h:03}-{i}");
            let mut labels: Vec<&str> = vec![&spec.target_label];
            labels.extend(others.choose_multiple(&mut rng, 1));
            let mut pool: Vec<&str> = others.to_vec();
            if rng.gen_bool(0.5) {
                pool.push(&spec.target_label);
            }
            pool.shuffle(&mut rng);
            let preds = pool
                .iter()
                .enumerate()
                .map(|(r, l)| Prediction::new(*l, 0.5 - 0.05 * r as f64))
                .collect();
            predictions.push(PredictionRecord::new(id.clone(), preds));
            household_rows.push(vec![
                id,
                format!("hh-{h:03}"),
                format!("country-{}", h % 5),
                region.as_str().to_string(),
                income.to_string(),
                labels.join("|"),
            ]);
        }
        let copies = if h == 0 { spec.duplicate_first } else { 1 };
        for _ in 0..copies {
            rows.extend(household_rows.iter().cloned());
        }
    }
    Ok(HouseholdFixture {
        manifest_csv: csv_string(
            &["id", "household_id", "country", "region", "income_usd", "labels"],
            &rows,
        ),
        predictions,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn predictions_bytes(records: &[PredictionRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, records).expect("in-memory write");
    buf
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<FixtureFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = |name: &str| dir.join(name);
        let files = FixtureFiles {
            predictions: p("preds.jsonl"),
            cc_manifest: p("cc.csv"),
            utk_manifest: p("utk.csv"),
            query_emb: p("cc.emb"),
            query_ids: p("cc.ids"),
            db_emb: p("utk.emb"),
            db_ids: p("utk.ids"),
            planted: p("planted.json"),
            household_manifest: self.households.as_ref().map(|_| p("dollarstreet.csv")),
            household_predictions: self.households.as_ref().map(|_| p("dollarstreet_preds.jsonl")),
        };
        write(&files.predictions, &predictions_bytes(&self.predictions))?;
        write(&files.cc_manifest, self.cc_manifest_csv.as_bytes())?;
        write(&files.utk_manifest, self.utk_manifest_csv.as_bytes())?;
        let (qb, qi) = encode_embeddings(&self.queries)?;
        write(&files.query_emb, &qb)?;
        write(&files.query_ids, qi.as_bytes())?;
        let (db, di) = encode_embeddings(&self.database)?;
        write(&files.db_emb, &db)?;
        write(&files.db_ids, di.as_bytes())?;
        let mut planted = serde_json::to_string_pretty(&self.planted).expect("serializable");
        planted.push('\n');
        write(&files.planted, planted.as_bytes())?;
        if let (Some(h), Some(m), Some(pr)) = (
            &self.households,
            &files.household_manifest,
            &files.household_predictions,
        ) {
            write(m, h.manifest_csv.as_bytes())?;
            write(pr, &predictions_bytes(&h.predictions))?;
        }
        Ok(files)
    }
}
