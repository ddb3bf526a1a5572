//! Audit report envelope, CSV export and threshold-sweep curves.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::association::{AssociationReport, Category};
use crate::error::{Error, Result, Violation};
use crate::geo::GeoReport;
use crate::model::{GroupKey, Validate};
use crate::retrieval::RetrievalReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    io::copy(&mut f, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_inputs<'a>(inputs: impl IntoIterator<Item = (&'a str, &'a Path)>) -> Result<Vec<InputDigest>> {
    inputs
        .into_iter()
        .map(|(role, path)| {
            Ok(InputDigest {
                role: role.to_string(),
                path: path.display().to_string(),
                sha256: file_digest(path)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Association(AssociationReport),
    Geo(GeoReport),
    Retrieval(RetrievalReport),
}

impl Payload {
    pub fn indicator(&self) -> &'static str {
        match self {
            Payload::Association(_) => "indicator1",
            Payload::Geo(_) => "indicator2",
            Payload::Retrieval(_) => "indicator3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool_version: String,
    pub indicator: String,
    pub inputs: Vec<InputDigest>,
    /// Flags and settings the report was produced with.
    pub config: serde_json::Value,
    /// Seconds since the Unix epoch; only set on request so that reruns stay
    /// byte-identical by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub payload: Payload,
}

impl AuditReport {
    pub fn new(inputs: Vec<InputDigest>, config: serde_json::Value, payload: Payload) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            indicator: payload.indicator().to_string(),
            inputs,
            config,
            generated_at: None,
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match &self.payload {
            Payload::Association(r) => association_csv(out, r),
            Payload::Geo(r) => geo_csv(out, r),
            Payload::Retrieval(r) => retrieval_csv(out, r),
        }
    }
}

impl Validate for AuditReport {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.indicator != self.payload.indicator() {
            out.push(Violation::new("indicator", "does not match payload"));
        }
        if self.inputs.is_empty() {
            out.push(Violation::new("inputs", "no digests"));
        }
        for (i, d) in self.inputs.iter().enumerate() {
            if d.sha256.len() != 64 || !d.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                out.push(Violation::new(format!("inputs[{i}].sha256"), "not a hex SHA-256"));
            }
        }
        out.extend(match &self.payload {
            Payload::Association(r) => r.validate(),
            Payload::Geo(r) => r.validate(),
            Payload::Retrieval(r) => r.validate(),
        });
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("<csv output>", io::Error::other(e))
}

pub fn association_csv<W: Write>(out: W, r: &AssociationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut rows = vec![vec![
        "group".to_string(),
        "category".into(),
        "threshold".into(),
        "hit_count".into(),
        "group_size".into(),
        "rate".into(),
    ]];
    rows.extend(r.cells.iter().map(|c| {
        vec![
            c.group.to_string(),
            c.category.to_string(),
            c.threshold.to_string(),
            c.hit_count.to_string(),
            c.group_size.to_string(),
            opt(c.rate),
        ]
    }));
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn geo_csv<W: Write>(out: W, r: &GeoReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "household_count", "image_count", "mean_hit_rate", "ci_low", "ci_high"])
        .map_err(csv_error)?;
    for c in &r.cells {
        w.write_record([
            c.group.to_string(),
            c.household_count.to_string(),
            c.image_count.to_string(),
            c.mean_hit_rate.to_string(),
            opt(c.ci_low),
            opt(c.ci_high),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn retrieval_csv<W: Write>(out: W, r: &RetrievalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "k", "query_count", "excluded_count", "mean_precision"])
        .map_err(csv_error)?;
    for c in &r.cells {
        w.write_record([
            c.group.to_string(),
            c.k.to_string(),
            c.query_count.to_string(),
            c.excluded_count.to_string(),
            opt(c.mean_precision),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub rate: f64,
}

/// Hit rate of one group and aggregate as the confidence threshold grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub group: GroupKey,
    pub category: Category,
    pub points: Vec<CurvePoint>,
}

impl Validate for CurveSeries {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.points.windows(2).any(|w| w[0].threshold >= w[1].threshold) {
            out.push(Violation::new("points", "thresholds not increasing"));
        }
        if self.points.windows(2).any(|w| w[1].rate > w[0].rate) {
            out.push(Violation::new("points", "rate increases with threshold"));
        }
        out
    }
}

/// One series per non-empty group and Harmful/NonHarmful aggregate.
pub fn emit_curves(report: &AssociationReport) -> Result<Vec<CurveSeries>> {
    let thresholds = report.thresholds.thresholds();
    if thresholds.len() < 2 {
        return Err(Error::InvalidArgument(
            "curves need a report with at least two thresholds".into(),
        ));
    }
    let mut out = Vec::new();
    for group in report.groups() {
        for category in [Category::Harmful, Category::NonHarmful] {
            let points: Option<Vec<CurvePoint>> = thresholds
                .iter()
                .map(|&t| {
                    report.get(group, category, t).and_then(|c| {
                        c.rate.map(|rate| CurvePoint { threshold: t, rate })
                    })
                })
                .collect();
            if let Some(points) = points {
                out.push(CurveSeries {
                    group: group.clone(),
                    category,
                    points,
                });
            }
        }
    }
    Ok(out)
}

pub fn curves_csv<W: Write>(out: W, series: &[CurveSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "category", "threshold", "rate"]).map_err(csv_error)?;
    for s in series {
        for p in &s.points {
            w.write_record([
                s.group.to_string(),
                s.category.to_string(),
                p.threshold.to_string(),
                p.rate.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{AssociationCell, LabelCoverage, ThresholdGrid};
    use crate::model::Grouping;

    fn report(thresholds: &[f64], groups: &[(&str, u64, &[u64])]) -> AssociationReport {
        let mut cells = Vec::new();
        for (g, size, hits) in groups {
            for category in Category::ALL {
                for (t, h) in thresholds.iter().zip(*hits) {
                    cells.push(AssociationCell {
                        group: g.parse().unwrap(),
                        category,
                        threshold: *t,
                        hit_count: *h,
                        group_size: *size,
                        rate: crate::association::percentage(*h, *size),
                    });
                }
            }
        }
        AssociationReport {
            dataset: "CC".into(),
            thresholds: ThresholdGrid::new(thresholds.to_vec()).unwrap(),
            groupings: vec![Grouping::new(["gender"])],
            coverage: LabelCoverage::default(),
            cells,
        }
    }

    #[test]
    fn two_groups_four_series() {
        let t: Vec<f64> = ThresholdGrid::default().thresholds().to_vec();
        let hits = [4, 4, 3, 3, 2, 2, 1, 1, 0, 0];
        let r = report(&t, &[("gender=female", 8, &hits), ("gender=male", 4, &hits)]);
        let series = emit_curves(&r).unwrap();
        assert_eq!(series.len(), 4);
        for s in &series {
            assert_eq!(s.points.len(), 10);
            assert!(s.validate().is_empty());
        }
        assert_eq!(series[0].points[0].rate, 50.0);
    }

    #[test]
    fn empty_groups_skipped_and_single_threshold_rejected() {
        let r = report(&[0.0, 0.5], &[("gender=other", 0, &[0, 0]), ("gender=male", 2, &[1, 0])]);
        assert_eq!(emit_curves(&r).unwrap().len(), 2);
        let r1 = report(&[0.0], &[("gender=male", 2, &[1])]);
        assert!(emit_curves(&r1).is_err());
    }

    #[test]
    fn digest_changes_with_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            file_digest(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        std::fs::write(&p, b"abd").unwrap();
        assert_ne!(
            file_digest(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn envelope_validates_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("preds.jsonl");
        std::fs::write(&p, b"{}").unwrap();
        let inputs = digest_inputs([("preds", p.as_path())]).unwrap();
        let r = report(&[0.0, 0.5], &[("gender=male", 2, &[1, 0])]);
        let audit = AuditReport::new(inputs, serde_json::json!({"b": 1, "a": 2}), Payload::Association(r));
        assert!(audit.validate().is_empty());
        let json = audit.to_json();
        assert!(json.find("\"a\"").unwrap() < json.find("\"b\"").unwrap());
        assert!(!json.contains("generated_at"));
        let back: AuditReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, audit);
        let mut csv = Vec::new();
        audit.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("group,category,threshold,hit_count,group_size,rate\n"));
        assert!(text.contains("gender=male,Harmful,0,1,2,50\n"));
    }
}
