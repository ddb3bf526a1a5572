//! Typed readers for the per-dataset annotation CSVs.
//!
//! | dataset      | columns                                          |
//! |--------------|--------------------------------------------------|
//! | CC           | id,gender,age,skin_tone                          |
//! | UTK          | id,gender,age                                    |
//! | MIAP         | id,image_id,x0,y0,x1,y1,gender,age               |
//! | DollarStreet | id,household_id,country,region,income_usd,labels |
//!
//! Columns are located by header name; extra columns are ignored. Empty cells
//! are absent attributes. Dollar Street labels are `|`-separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::association::derive_age_group;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{
    AgeBand, Fitzpatrick, HouseholdManifest, HouseholdRow, Region, SubjectManifest, SubjectRow,
    Validate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataset {
    CasualConversations,
    UtkFaces,
    Miap,
    DollarStreet,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [
        Dataset::CasualConversations,
        Dataset::UtkFaces,
        Dataset::Miap,
        Dataset::DollarStreet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::CasualConversations => "CC",
            Dataset::UtkFaces => "UTK",
            Dataset::Miap => "MIAP",
            Dataset::DollarStreet => "DollarStreet",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Dataset::CasualConversations => &["id", "gender", "age", "skin_tone"],
            Dataset::UtkFaces => &["id", "gender", "age"],
            Dataset::Miap => &["id", "image_id", "x0", "y0", "x1", "y1", "gender", "age"],
            Dataset::DollarStreet => &["id", "household_id", "country", "region", "income_usd", "labels"],
        }
    }

    /// Grouping vocabulary declared for this dataset's subject manifests.
    pub fn vocabulary(self) -> BTreeMap<String, Vec<String>> {
        let bands = || AgeBand::ALL.iter().map(|b| b.as_str().to_string()).collect();
        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut vocab = BTreeMap::new();
        match self {
            Dataset::CasualConversations => {
                vocab.insert("gender".into(), strings(&["female", "male", "other", "n/a"]));
                vocab.insert("age".into(), bands());
                vocab.insert("skin_tone".into(), strings(&["lighter", "darker"]));
            }
            Dataset::UtkFaces => {
                vocab.insert("gender".into(), strings(&["female", "male"]));
                vocab.insert("age".into(), bands());
            }
            Dataset::Miap => {
                vocab.insert(
                    "gender".into(),
                    strings(&["predominantly feminine", "predominantly masculine", "unknown"]),
                );
                vocab.insert("age".into(), strings(&["young", "middle", "older", "unknown"]));
            }
            Dataset::DollarStreet => {
                vocab.insert(
                    "region".into(),
                    Region::ALL.iter().map(|r| r.as_str().to_string()).collect(),
                );
                vocab.insert("income".into(), strings(&["low", "medium", "high"]));
            }
        }
        vocab
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "cc" | "casualconversations" | "ccv1" => Ok(Dataset::CasualConversations),
            "utk" | "utkfaces" => Ok(Dataset::UtkFaces),
            "miap" | "openimagesmiap" => Ok(Dataset::Miap),
            "dollarstreet" => Ok(Dataset::DollarStreet),
            _ => Err(Error::UnknownSchema(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Manifest {
    Subject(SubjectManifest),
    Household(HouseholdManifest),
}

impl Manifest {
    pub fn into_subject(self) -> Result<SubjectManifest> {
        match self {
            Manifest::Subject(m) => Ok(m),
            Manifest::Household(m) => Err(Error::InvalidArgument(format!(
                "{} manifest has no subject attributes",
                m.dataset
            ))),
        }
    }

    pub fn into_household(self) -> Result<HouseholdManifest> {
        match self {
            Manifest::Household(m) => Ok(m),
            Manifest::Subject(m) => Err(Error::InvalidArgument(format!(
                "{} manifest has no household columns",
                m.dataset
            ))),
        }
    }

    pub fn dataset(&self) -> &str {
        match self {
            Manifest::Subject(m) => &m.dataset,
            Manifest::Household(m) => &m.dataset,
        }
    }
}

pub fn read_manifest(path: &Path, dataset: Dataset) -> Result<Manifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, dataset)
}

struct Columns {
    index: Vec<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Self> {
        let index = wanted
            .iter()
            .map(|w| {
                headers
                    .iter()
                    .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(w))
                    .ok_or_else(|| Error::MissingColumn(w.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { index })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        rec.get(self.index[i]).unwrap_or("").trim()
    }
}

fn vocab_match(vocab: &[String], value: &str, line: usize, field: &str) -> Result<String> {
    vocab
        .iter()
        .find(|v| v.eq_ignore_ascii_case(value))
        .cloned()
        .ok_or_else(|| Error::Vocabulary {
            line,
            field: field.to_string(),
            value: value.to_string(),
        })
}

fn parse_number<T: FromStr>(value: &str, line: usize, field: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Malformed {
        line,
        message: format!("{field} {value:?} is not a number"),
    })
}

pub fn parse_manifest<R: Read>(reader: R, dataset: Dataset) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols = Columns::locate(&headers, dataset.columns())?;
    let vocab = dataset.vocabulary();

    let mut subject_rows = Vec::new();
    let mut household_rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| cols.get(&rec, i);
        let present = |s: &str| (!s.is_empty()).then(|| s.to_string());
        if get(0).is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty id".into(),
            });
        }

        match dataset {
            Dataset::CasualConversations | Dataset::UtkFaces => {
                let gender = present(get(1))
                    .map(|g| vocab_match(&vocab["gender"], &g, line, "gender"))
                    .transpose()?;
                let age_years: Option<u32> = present(get(2))
                    .map(|a| parse_number(&a, line, "age"))
                    .transpose()?;
                // Minors (UTK) fall outside every age band and are left ungrouped.
                let age_group = age_years
                    .and_then(|a| derive_age_group(a).ok())
                    .map(|b| b.as_str().to_string());
                let skin_tone = if dataset == Dataset::CasualConversations {
                    present(get(3))
                        .map(|s| {
                            s.parse::<Fitzpatrick>().map_err(|_| Error::Vocabulary {
                                line,
                                field: "skin_tone".into(),
                                value: s.clone(),
                            })
                        })
                        .transpose()?
                } else {
                    None
                };
                subject_rows.push(SubjectRow {
                    image_id: get(0).to_string(),
                    gender,
                    age_years,
                    age_group,
                    skin_tone,
                    ..SubjectRow::default()
                });
            }
            Dataset::Miap => {
                let coord = |i: usize, name: &str| parse_number::<f64>(get(i), line, name);
                let bbox = BoundingBox::new(coord(2, "x0")?, coord(3, "y0")?, coord(4, "x1")?, coord(5, "y1")?);
                if let Some(v) = bbox.validate().into_iter().next() {
                    return Err(Error::Malformed {
                        line,
                        message: v.to_string(),
                    });
                }
                let gender = present(get(6))
                    .map(|g| vocab_match(&vocab["gender"], &g, line, "gender"))
                    .transpose()?;
                let age_group = present(get(7))
                    .map(|a| vocab_match(&vocab["age"], &a, line, "age"))
                    .transpose()?;
                subject_rows.push(SubjectRow {
                    image_id: get(0).to_string(),
                    gender,
                    age_group,
                    source_image_id: present(get(1)),
                    bbox: Some(bbox),
                    ..SubjectRow::default()
                });
            }
            Dataset::DollarStreet => {
                let region = get(3).parse::<Region>().map_err(|_| Error::Vocabulary {
                    line,
                    field: "region".into(),
                    value: get(3).to_string(),
                })?;
                let income_usd: f64 = parse_number(get(4), line, "income_usd")?;
                let labels: BTreeSet<String> = get(5)
                    .split('|')
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect();
                let row = HouseholdRow {
                    image_id: get(0).to_string(),
                    household_id: get(1).to_string(),
                    country: get(2).to_string(),
                    region,
                    income_usd,
                    labels,
                };
                if row.household_id.is_empty() {
                    return Err(Error::Malformed {
                        line,
                        message: "empty household_id".into(),
                    });
                }
                if let Some(v) = row.validate().into_iter().next() {
                    return Err(Error::Malformed {
                        line,
                        message: v.to_string(),
                    });
                }
                household_rows.push(row);
            }
        }
    }

    let manifest = if dataset == Dataset::DollarStreet {
        Manifest::Household(HouseholdManifest {
            dataset: dataset.name().to_string(),
            rows: household_rows,
        })
    } else {
        let m = SubjectManifest {
            dataset: dataset.name().to_string(),
            vocabulary: vocab,
            rows: subject_rows,
        };
        let violations = m.validate();
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Manifest::Subject(m)
    };
    Ok(manifest)
}

/// Dollar Street concept to target-class relabeling (`concept,class` CSV).
///
/// Concepts missing from the map are kept unchanged.
#[derive(Debug, Clone, Default)]
pub struct LabelMap(BTreeMap<String, String>);

impl LabelMap {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Malformed {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols = Columns::locate(&headers, &["concept", "class"])?;
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Malformed {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let concept = cols.get(&rec, 0).to_string();
            if map.insert(concept.clone(), cols.get(&rec, 1).to_string()).is_some() {
                return Err(Error::Malformed {
                    line,
                    message: format!("concept {concept:?} mapped twice"),
                });
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn apply(&self, manifest: &HouseholdManifest) -> HouseholdManifest {
        let rows = manifest
            .rows
            .iter()
            .map(|r| HouseholdRow {
                labels: r
                    .labels
                    .iter()
                    .map(|l| self.0.get(l).cloned().unwrap_or_else(|| l.clone()))
                    .collect(),
                ..r.clone()
            })
            .collect();
        HouseholdManifest {
            dataset: manifest.dataset.clone(),
            rows,
        }
    }
}
