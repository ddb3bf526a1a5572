//! Geographical diversity: per-household hit rates averaged over region and
//! income groups.
//!
//! Images listed several times are merged first (labels unioned). Each
//! household's hit rate is the fraction of its images with a top-5 hit, and a
//! group's score is the unweighted mean over its households, so households
//! with many photos do not dominate.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::TOP_K;
use crate::bootstrap::{self, BootstrapConfig};
use crate::error::{Error, Result, Violation};
use crate::model::{
    GroupKey, Grouping, HouseholdManifest, IncomeBucket, PredictionRecord, Region, Validate,
};
use crate::taxonomy::canonical_label;

#[derive(Debug, Clone, PartialEq)]
pub struct DedupedImage {
    pub image_id: String,
    pub household_id: String,
    pub labels: BTreeSet<String>,
}

/// Merges rows sharing an image id, keeping first-occurrence order.
pub fn dedupe(manifest: &HouseholdManifest) -> Result<Vec<DedupedImage>> {
    let mut out: Vec<DedupedImage> = Vec::new();
    let mut first_row: HashMap<&str, (usize, usize)> = HashMap::new();
    for (ri, row) in manifest.rows.iter().enumerate() {
        match first_row.get(row.image_id.as_str()) {
            Some(&(oi, fi)) => {
                let first = &manifest.rows[fi];
                let conflict = if first.household_id != row.household_id {
                    Some("household_id")
                } else if first.region != row.region {
                    Some("region")
                } else if first.income_usd != row.income_usd {
                    Some("income_usd")
                } else {
                    None
                };
                if let Some(field) = conflict {
                    return Err(Error::Conflict {
                        id: row.image_id.clone(),
                        field: field.into(),
                    });
                }
                out[oi].labels.extend(row.labels.iter().cloned());
            }
            None => {
                first_row.insert(&row.image_id, (out.len(), ri));
                out.push(DedupedImage {
                    image_id: row.image_id.clone(),
                    household_id: row.household_id.clone(),
                    labels: row.labels.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// True iff a top-5 prediction (with `score >= tau` when given) is one of the image's labels.
pub fn image_hit(record: &PredictionRecord, image: &DedupedImage, tau: Option<f64>) -> bool {
    let labels: BTreeSet<String> = image.labels.iter().map(|l| canonical_label(l)).collect();
    record
        .top(TOP_K)
        .iter()
        .filter(|p| tau.map_or(true, |t| p.score >= t))
        .any(|p| labels.contains(&canonical_label(&p.label)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomeBucketing {
    pub log_base: f64,
}

impl Default for IncomeBucketing {
    fn default() -> Self {
        Self {
            log_base: std::f64::consts::E,
        }
    }
}

impl IncomeBucketing {
    /// `round(log(income) / 3)` (half away from zero), clamped to 1..=3.
    pub fn bucket(&self, income_usd: f64) -> Result<IncomeBucket> {
        if !(income_usd.is_finite() && income_usd > 0.0) {
            return Err(Error::NonPositiveIncome(income_usd));
        }
        let log = if self.log_base == std::f64::consts::E {
            income_usd.ln()
        } else {
            income_usd.log(self.log_base)
        };
        let index = (log / 3.0).round().clamp(1.0, 3.0) as u8;
        Ok(IncomeBucket::from_index(index).expect("clamped to 1..=3"))
    }
}

/// Natural-log income bucket.
pub fn income_bucket(income_usd: f64) -> Result<IncomeBucket> {
    IncomeBucketing::default().bucket(income_usd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdHitRate {
    pub hits: u64,
    pub images: u64,
}

impl HouseholdHitRate {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.images as f64
    }
}

/// Hit rate of every household over its de-duplicated images.
pub fn household_hit_rates(
    records: &[PredictionRecord],
    images: &[DedupedImage],
    tau: Option<f64>,
) -> Result<BTreeMap<String, HouseholdHitRate>> {
    let by_id: HashMap<&str, &PredictionRecord> =
        records.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let image_ids: BTreeSet<&str> = images.iter().map(|i| i.image_id.as_str()).collect();
    if let Some(r) = records.iter().find(|r| !image_ids.contains(r.image_id.as_str())) {
        return Err(Error::UnmatchedImage(r.image_id.clone()));
    }
    let hits: Vec<bool> = images
        .par_iter()
        .map(|img| {
            by_id
                .get(img.image_id.as_str())
                .map(|r| image_hit(r, img, tau))
                .ok_or_else(|| Error::MissingPrediction(img.image_id.clone()))
        })
        .collect::<Result<_>>()?;
    let mut out: BTreeMap<String, HouseholdHitRate> = BTreeMap::new();
    for (img, hit) in images.iter().zip(hits) {
        let e = out
            .entry(img.household_id.clone())
            .or_insert(HouseholdHitRate { hits: 0, images: 0 });
        e.images += 1;
        e.hits += u64::from(hit);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HouseholdProfile {
    pub region: Region,
    pub income_usd: f64,
    pub bucket: IncomeBucket,
}

impl HouseholdProfile {
    /// `region` or `income` (bucket name).
    pub fn attribute(&self, name: &str) -> Option<String> {
        match name {
            "region" => Some(self.region.as_str().to_string()),
            "income" | "income_bucket" => Some(self.bucket.name().to_string()),
            _ => None,
        }
    }
}

/// Region and income of every household; rows of one household must agree.
pub fn household_profiles(
    manifest: &HouseholdManifest,
    bucketing: &IncomeBucketing,
) -> Result<BTreeMap<String, HouseholdProfile>> {
    let mut out: BTreeMap<String, HouseholdProfile> = BTreeMap::new();
    for row in &manifest.rows {
        if let Some(p) = out.get(&row.household_id) {
            if p.region != row.region {
                return Err(Error::Conflict {
                    id: row.household_id.clone(),
                    field: "region".into(),
                });
            }
            if p.income_usd != row.income_usd {
                return Err(Error::Conflict {
                    id: row.household_id.clone(),
                    field: "income_usd".into(),
                });
            }
            continue;
        }
        out.insert(
            row.household_id.clone(),
            HouseholdProfile {
                region: row.region,
                income_usd: row.income_usd,
                bucket: bucketing.bucket(row.income_usd)?,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoCell {
    pub group: GroupKey,
    pub mean_hit_rate: f64,
    pub household_count: u64,
    pub image_count: u64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoReport {
    pub groupings: Vec<Grouping>,
    pub log_base: f64,
    pub bootstrap: Option<BootstrapConfig>,
    pub cells: Vec<GeoCell>,
    pub warnings: Vec<String>,
}

impl GeoReport {
    pub fn get(&self, group: &GroupKey) -> Option<&GeoCell> {
        self.cells.iter().find(|c| &c.group == group)
    }
}

impl Validate for GeoReport {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.mean_hit_rate) {
                out.push(Violation::new(format!("cells[{i}].mean_hit_rate"), "not in [0,1]"));
            }
            if c.household_count == 0 {
                out.push(Violation::new(format!("cells[{i}].household_count"), "zero"));
            }
        }
        out
    }
}

fn geo_vocabulary(attribute: &str) -> Result<Vec<String>> {
    match attribute {
        "region" => Ok(Region::ALL.iter().map(|r| r.as_str().to_string()).collect()),
        "income" | "income_bucket" => Ok(IncomeBucket::ALL.iter().map(|b| b.name().to_string()).collect()),
        other => Err(Error::InvalidArgument(format!(
            "cannot group households by {other:?} (expected region or income)"
        ))),
    }
}

/// Mean household hit rate per group, with optional bootstrap intervals.
pub fn aggregate_geo(
    rates: &BTreeMap<String, HouseholdHitRate>,
    manifest: &HouseholdManifest,
    groupings: &[Grouping],
    bucketing: &IncomeBucketing,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<GeoReport> {
    let profiles = household_profiles(manifest, bucketing)?;
    if let Some(h) = profiles.keys().find(|h| !rates.contains_key(*h)) {
        return Err(Error::InvalidArgument(format!("household {h:?} has no hit rate")));
    }
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_groupings = Vec::new();
    for grouping in groupings {
        if seen_groupings.contains(grouping) {
            continue;
        }
        seen_groupings.push(grouping.clone());
        let mut keys: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for attr in grouping.attributes() {
            let values = geo_vocabulary(attr)?;
            keys = keys
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut k = prefix.clone();
                        k.push((attr.clone(), v.clone()));
                        k
                    })
                })
                .collect();
        }
        let mut keys: Vec<GroupKey> = keys.into_iter().map(GroupKey::new).collect();
        keys.sort();
        for key in keys {
            // BTreeMap iteration keeps households sorted, fixing the summation order.
            let members: Vec<&HouseholdHitRate> = profiles
                .iter()
                .filter(|(_, p)| key.components().all(|(a, v)| p.attribute(a).as_deref() == Some(v)))
                .map(|(h, _)| &rates[h])
                .collect();
            if members.is_empty() {
                warnings.push(format!("group {key} has no households; omitted"));
                continue;
            }
            let values: Vec<f64> = members.iter().map(|m| m.rate()).collect();
            let ci = bootstrap.and_then(|cfg| {
                bootstrap::percentile_ci(&values, cfg, bootstrap::stream_id(&key.to_string()))
            });
            cells.push(GeoCell {
                group: key,
                mean_hit_rate: bootstrap::mean(&values),
                household_count: members.len() as u64,
                image_count: members.iter().map(|m| m.images).sum(),
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
            });
        }
    }
    Ok(GeoReport {
        groupings: seen_groupings,
        log_base: bucketing.log_base,
        bootstrap: bootstrap.copied(),
        cells,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HouseholdRow, Prediction};

    fn row(img: &str, hh: &str, region: Region, income: f64, labels: &[&str]) -> HouseholdRow {
        HouseholdRow {
            image_id: img.into(),
            household_id: hh.into(),
            country: "X".into(),
            region,
            income_usd: income,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn manifest(rows: Vec<HouseholdRow>) -> HouseholdManifest {
        HouseholdManifest {
            dataset: "DollarStreet".into(),
            rows,
        }
    }

    fn preds(id: &str, labels: &[&str]) -> PredictionRecord {
        PredictionRecord::new(
            id,
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Prediction::new(*l, 0.5 / (i + 1) as f64))
                .collect(),
        )
    }

    #[test]
    fn dedupe_unions_labels() {
        let m = manifest(vec![
            row("img1", "h", Region::Asia, 100.0, &["stove"]),
            row("img1", "h", Region::Asia, 100.0, &["kitchen"]),
        ]);
        let d = dedupe(&m).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].labels, ["kitchen".to_string(), "stove".to_string()].into());
    }

    #[test]
    fn dedupe_identity_without_duplicates() {
        let m = manifest(vec![
            row("b", "h", Region::Asia, 100.0, &["x"]),
            row("a", "h", Region::Asia, 100.0, &["y"]),
        ]);
        let d = dedupe(&m).unwrap();
        let ids: Vec<_> = d.iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert_eq!(d[1].labels, ["y".to_string()].into());
    }

    #[test]
    fn dedupe_conflicts() {
        let m = manifest(vec![
            row("img1", "h1", Region::Asia, 100.0, &["x"]),
            row("img1", "h2", Region::Asia, 100.0, &["y"]),
        ]);
        assert!(matches!(dedupe(&m), Err(Error::Conflict { field, .. }) if field == "household_id"));
        let m = manifest(vec![
            row("img1", "h1", Region::Asia, 100.0, &["x"]),
            row("img1", "h1", Region::Asia, 101.0, &["y"]),
        ]);
        assert!(matches!(dedupe(&m), Err(Error::Conflict { field, .. }) if field == "income_usd"));
    }

    #[test]
    fn hits_respect_top5() {
        let img = DedupedImage {
            image_id: "i".into(),
            household_id: "h".into(),
            labels: ["stove".to_string(), "kitchen".to_string()].into(),
        };
        assert!(image_hit(&preds("i", &["stove", "a"]), &img, None));
        assert!(image_hit(&preds("i", &["a", "Kitchen"]), &img, None));
        assert!(!image_hit(&preds("i", &["a", "b", "c"]), &img, None));
        assert!(!image_hit(&preds("i", &["a", "b", "c", "d", "e", "stove"]), &img, None));
        // second prediction scores 0.25
        assert!(!image_hit(&preds("i", &["a", "kitchen"]), &img, Some(0.3)));
        assert!(image_hit(&preds("i", &["a", "kitchen"]), &img, Some(0.25)));
    }

    #[test]
    fn buckets() {
        assert_eq!(income_bucket(6f64.exp()).unwrap(), IncomeBucket::Medium);
        assert_eq!(income_bucket(50.0).unwrap(), IncomeBucket::Low);
        assert_eq!(income_bucket(10_000.0).unwrap(), IncomeBucket::High);
        assert_eq!(income_bucket(1.0).unwrap(), IncomeBucket::Low);
        assert_eq!(income_bucket(1e9).unwrap(), IncomeBucket::High);
        assert!(matches!(income_bucket(0.0), Err(Error::NonPositiveIncome(_))));
        assert!(income_bucket(-3.0).is_err());
        assert!(income_bucket(f64::NAN).is_err());
    }

    #[test]
    fn base_ten_bucketing_is_configurable() {
        let b10 = IncomeBucketing { log_base: 10.0 };
        assert_eq!(b10.bucket(20_000.0).unwrap(), IncomeBucket::Low);
        assert_eq!(b10.bucket(1e6).unwrap(), IncomeBucket::Medium);
        assert_eq!(b10.bucket(1e8).unwrap(), IncomeBucket::High);
    }

    #[test]
    fn household_rates() {
        let m = manifest(vec![
            row("a", "h1", Region::Asia, 100.0, &["x"]),
            row("b", "h1", Region::Asia, 100.0, &["x"]),
            row("c", "h1", Region::Asia, 100.0, &["x"]),
            row("d", "h2", Region::Asia, 100.0, &["y"]),
        ]);
        let imgs = dedupe(&m).unwrap();
        let recs = vec![preds("a", &["x"]), preds("b", &["x"]), preds("c", &["q"]), preds("d", &["y"])];
        let rates = household_hit_rates(&recs, &imgs, None).unwrap();
        assert_eq!(rates["h1"], HouseholdHitRate { hits: 2, images: 3 });
        assert_eq!(rates["h1"].rate(), 2.0 / 3.0);
        assert_eq!(rates["h2"].rate(), 1.0);
        assert!(matches!(
            household_hit_rates(&recs[..3], &imgs, None),
            Err(Error::MissingPrediction(id)) if id == "d"
        ));
        let mut extra = recs.clone();
        extra.push(preds("zz", &["x"]));
        assert!(matches!(household_hit_rates(&extra, &imgs, None), Err(Error::UnmatchedImage(_))));
    }

    #[test]
    fn region_mean_and_warnings() {
        let m = manifest(vec![
            row("a", "h1", Region::Asia, 100.0, &["x"]),
            row("b", "h2", Region::Asia, 100.0, &["x"]),
            row("c", "h2", Region::Asia, 100.0, &["x"]),
        ]);
        let imgs = dedupe(&m).unwrap();
        let recs = vec![preds("a", &["x"]), preds("b", &["x"]), preds("c", &["no"])];
        let rates = household_hit_rates(&recs, &imgs, None).unwrap();
        let rep = aggregate_geo(&rates, &m, &[Grouping::new(["region"])], &IncomeBucketing::default(), None).unwrap();
        let asia = rep.get(&GroupKey::new([("region", "Asia")])).unwrap();
        assert_eq!(asia.mean_hit_rate, 0.75);
        assert_eq!(asia.household_count, 2);
        assert_eq!(asia.image_count, 3);
        assert_eq!(asia.ci_low, None);
        assert_eq!(rep.cells.len(), 1);
        assert_eq!(rep.warnings.len(), 3);
        assert!(rep.validate().is_empty());
    }

    #[test]
    fn single_household_ci_collapses() {
        let m = manifest(vec![
            row("a", "h1", Region::Europe, 5000.0, &["x"]),
            row("b", "h1", Region::Europe, 5000.0, &["x"]),
        ]);
        let imgs = dedupe(&m).unwrap();
        let recs = vec![preds("a", &["x"]), preds("b", &["y"])];
        let rates = household_hit_rates(&recs, &imgs, None).unwrap();
        let cfg = BootstrapConfig { seed: 7, ..Default::default() };
        let rep = aggregate_geo(
            &rates,
            &m,
            &["region_x_income".parse().unwrap()],
            &IncomeBucketing::default(),
            Some(&cfg),
        )
        .unwrap();
        let cell = rep.get(&GroupKey::new([("region", "Europe"), ("income", "high")])).unwrap();
        assert_eq!((cell.ci_low, cell.ci_high), (Some(0.5), Some(0.5)));
        assert_eq!(rep.warnings.len(), 11);
    }

    #[test]
    fn inconsistent_household_rejected() {
        let m = manifest(vec![
            row("a", "h1", Region::Europe, 5000.0, &["x"]),
            row("b", "h1", Region::Asia, 5000.0, &["x"]),
        ]);
        assert!(matches!(
            household_profiles(&m, &IncomeBucketing::default()),
            Err(Error::Conflict { field, .. }) if field == "region"
        ));
    }

    #[test]
    fn bad_grouping_attribute() {
        let m = manifest(vec![row("a", "h1", Region::Europe, 5000.0, &["x"])]);
        let rates: BTreeMap<_, _> = [("h1".to_string(), HouseholdHitRate { hits: 1, images: 1 })].into();
        let err = aggregate_geo(&rates, &m, &[Grouping::new(["country"])], &IncomeBucketing::default(), None);
        assert!(err.is_err());
        let err = aggregate_geo(&BTreeMap::new(), &m, &[Grouping::new(["region"])], &IncomeBucketing::default(), None);
        assert!(err.is_err());
    }
}
