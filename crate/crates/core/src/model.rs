//! Domain types shared by the indicator engines.
//!
//! Nothing in here performs I/O. Types that are built from parsed input can be
//! checked with [`Validate`], which reports every broken invariant instead of
//! stopping at the first.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::BoundingBox;

pub trait Validate {
    /// Empty iff every invariant holds.
    fn validate(&self) -> Vec<Violation>;
}

/// Dense row-major embeddings for one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix and rejects it if any invariant fails.
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Result<Self> {
        let m = Self::from_raw(ids, dim, values);
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Builds a matrix without checking it; call [`Validate::validate`] afterwards.
    pub fn from_raw(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Self {
        Self { ids, dim, values }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact panics on 0; validate() rejects dim == 0 anyway.
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn into_parts(self) -> (Vec<String>, usize, Vec<f32>) {
        (self.ids, self.dim, self.values)
    }
}

impl Validate for EmbeddingMatrix {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim == 0 {
            out.push(Violation::new("d", "must be positive"));
            return out;
        }
        if self.values.len() != self.ids.len() * self.dim {
            out.push(Violation::new(
                "values",
                format!(
                    "length {} != n*d = {}",
                    self.values.len(),
                    self.ids.len() * self.dim
                ),
            ));
            return out;
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                out.push(Violation::new(format!("ids[{id:?}]"), "duplicate"));
            }
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::new(
                    format!("values[{}][{}]", i / self.dim, i % self.dim),
                    "not finite",
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub score: f64,
}

impl Prediction {
    pub fn new(label: impl Into<String>, score: f64) -> Self {
        Self {
            label: label.into(),
            score,
        }
    }
}

/// Ranked classifier output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(rename = "id")]
    pub image_id: String,
    pub preds: Vec<Prediction>,
}

impl PredictionRecord {
    pub fn new(image_id: impl Into<String>, preds: Vec<Prediction>) -> Self {
        Self {
            image_id: image_id.into(),
            preds,
        }
    }

    /// The first `k` predictions (fewer if the record is shorter).
    pub fn top(&self, k: usize) -> &[Prediction] {
        &self.preds[..k.min(self.preds.len())]
    }
}

impl Validate for PredictionRecord {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.preds.is_empty() {
            out.push(Violation::new("preds", "empty"));
        }
        for (i, p) in self.preds.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.score) {
                out.push(Violation::new(format!("preds[{i}].score"), "not in [0,1]"));
            }
        }
        if self.preds.windows(2).any(|w| w[1].score > w[0].score) {
            out.push(Violation::new("scores", "not non-increasing"));
        }
        let mut labels = HashSet::new();
        for p in &self.preds {
            if !labels.insert(p.label.as_str()) {
                out.push(Violation::new(format!("preds[{:?}]", p.label), "duplicate label"));
            }
        }
        out
    }
}

/// Six-point Fitzpatrick skin type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fitzpatrick {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Fitzpatrick {
    pub const ALL: [Fitzpatrick; 6] = [
        Fitzpatrick::I,
        Fitzpatrick::II,
        Fitzpatrick::III,
        Fitzpatrick::IV,
        Fitzpatrick::V,
        Fitzpatrick::VI,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Fitzpatrick::I => "I",
            Fitzpatrick::II => "II",
            Fitzpatrick::III => "III",
            Fitzpatrick::IV => "IV",
            Fitzpatrick::V => "V",
            Fitzpatrick::VI => "VI",
        }
    }
}

impl FromStr for Fitzpatrick {
    type Err = ();

    /// Accepts roman numerals or digits 1-6, case-insensitive, with an optional "type" prefix.
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim().to_ascii_uppercase();
        let s = s.strip_prefix("TYPE").map(str::trim).unwrap_or(&s);
        Ok(match s {
            "I" | "1" => Fitzpatrick::I,
            "II" | "2" => Fitzpatrick::II,
            "III" | "3" => Fitzpatrick::III,
            "IV" | "4" => Fitzpatrick::IV,
            "V" | "5" => Fitzpatrick::V,
            "VI" | "6" => Fitzpatrick::VI,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkinGroup {
    Lighter,
    Darker,
}

impl SkinGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            SkinGroup::Lighter => "lighter",
            SkinGroup::Darker => "darker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    From18To30,
    From30To45,
    From45To70,
    Over70,
}

impl AgeBand {
    pub const ALL: [AgeBand; 4] = [
        AgeBand::From18To30,
        AgeBand::From30To45,
        AgeBand::From45To70,
        AgeBand::Over70,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeBand::From18To30 => "18-30",
            AgeBand::From30To45 => "30-45",
            AgeBand::From45To70 => "45-70",
            AgeBand::Over70 => "70+",
        }
    }
}

/// One row of a CC / UTK / MIAP style annotation table.
///
/// Absent attributes are `None`; a dataset's own "unknown" category is a
/// regular value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubjectRow {
    pub image_id: String,
    pub gender: Option<String>,
    pub age_years: Option<u32>,
    pub age_group: Option<String>,
    pub skin_tone: Option<Fitzpatrick>,
    /// MIAP only: the image a person box belongs to.
    pub source_image_id: Option<String>,
    /// MIAP only: the person box in source-image pixels.
    pub bbox: Option<BoundingBox>,
}

impl SubjectRow {
    /// Value of a grouping attribute: `gender`, `age`, `skin_tone` (lighter/darker)
    /// or `fitzpatrick` (raw type).
    pub fn attribute(&self, name: &str) -> Option<String> {
        match name {
            "gender" => self.gender.clone(),
            "age" | "age_group" => self.age_group.clone(),
            "skin_tone" => self
                .skin_tone
                .map(|t| crate::association::derive_skin_group(t).as_str().to_string()),
            "fitzpatrick" => self.skin_tone.map(|t| t.as_str().to_string()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectManifest {
    pub dataset: String,
    /// Allowed values per grouping attribute, in report order.
    pub vocabulary: BTreeMap<String, Vec<String>>,
    pub rows: Vec<SubjectRow>,
}

impl SubjectManifest {
    pub fn vocabulary_of(&self, attribute: &str) -> Option<&[String]> {
        let key = if attribute == "age_group" { "age" } else { attribute };
        self.vocabulary.get(key).map(Vec::as_slice)
    }

    pub fn find(&self, image_id: &str) -> Option<&SubjectRow> {
        self.rows.iter().find(|r| r.image_id == image_id)
    }
}

impl Validate for SubjectManifest {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if !seen.insert(row.image_id.as_str()) {
                out.push(Violation::new(format!("rows[{i}].image_id"), "duplicate"));
            }
            for attr in ["gender", "age", "skin_tone"] {
                let (Some(value), Some(vocab)) = (row.attribute(attr), self.vocabulary.get(attr))
                else {
                    continue;
                };
                if !vocab.contains(&value) {
                    out.push(Violation::new(
                        format!("rows[{i}].{attr}"),
                        format!("{value:?} not in vocabulary"),
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Africa,
    Asia,
    Europe,
    Americas,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Africa, Region::Asia, Region::Europe, Region::Americas];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Africa => "Africa",
            Region::Asia => "Asia",
            Region::Europe => "Europe",
            Region::Americas => "Americas",
        }
    }
}

impl FromStr for Region {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim();
        Region::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// One row of the Dollar Street annotation table.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdRow {
    pub image_id: String,
    pub household_id: String,
    pub country: String,
    pub region: Region,
    pub income_usd: f64,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdManifest {
    pub dataset: String,
    pub rows: Vec<HouseholdRow>,
}

impl Validate for HouseholdRow {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.income_usd.is_finite() && self.income_usd > 0.0) {
            out.push(Violation::new("income_usd", "not positive"));
        }
        if self.labels.is_empty() {
            out.push(Violation::new("labels", "empty"));
        }
        out
    }
}

impl Validate for HouseholdManifest {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for v in row.validate() {
                out.push(Violation::new(format!("rows[{i}].{}", v.field), v.rule));
            }
        }
        out
    }
}

/// Canonical (attribute, value) tuple identifying a subgroup.
///
/// Components are kept sorted by attribute name, so construction order does
/// not matter. The empty key is the whole population and displays as `*`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey(BTreeMap<String, String>);

impl GroupKey {
    pub fn new<I, A, V>(components: I) -> Self
    where
        I: IntoIterator<Item = (A, V)>,
        A: Into<String>,
        V: Into<String>,
    {
        Self(
            components
                .into_iter()
                .map(|(a, v)| (a.into(), v.into()))
                .collect(),
        )
    }

    pub fn all() -> Self {
        Self::default()
    }

    pub fn get(&self, attribute: &str) -> Option<&str> {
        self.0.get(attribute).map(String::as_str)
    }

    pub fn components(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(a, v)| (a.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("*");
        }
        let mut first = true;
        for (a, v) in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{a}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    /// Parses `attr=value[,attr=value...]`; `*`, `total` and the empty string are the whole population.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "*" || s.eq_ignore_ascii_case("total") {
            return Ok(Self::all());
        }
        let mut map = BTreeMap::new();
        for part in s.split(',') {
            let (a, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad group key component {part:?}")))?;
            if map.insert(a.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "attribute {:?} repeated in group key",
                    a.trim()
                )));
            }
        }
        Ok(Self(map))
    }
}

/// A set of attributes to stratify by; more than one attribute means an intersection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Grouping(Vec<String>);

impl Grouping {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(attributes: I) -> Self {
        let set: BTreeSet<String> = attributes.into_iter().map(Into::into).collect();
        Self(set.into_iter().collect())
    }

    pub fn attributes(&self) -> &[String] {
        &self.0
    }

    /// Parses a comma-separated list such as `gender,skin_tone,gender_x_skin_tone`.
    pub fn parse_list(s: &str) -> Result<Vec<Grouping>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&self.0.join("_x_"))
        }
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" || s == "*" {
            return Ok(Grouping(Vec::new()));
        }
        let parts: Vec<&str> = s.split("_x_").map(str::trim).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidArgument(format!("bad grouping {s:?}")));
        }
        if parts.len() != parts.iter().collect::<BTreeSet<_>>().len() {
            return Err(Error::InvalidArgument(format!("repeated attribute in grouping {s:?}")));
        }
        Ok(Grouping::new(parts))
    }
}

impl From<Grouping> for String {
    fn from(g: Grouping) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Grouping {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Household income tercile-like bucket; index 1..=3 maps onto low/medium/high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IncomeBucket {
    Low = 1,
    Medium = 2,
    High = 3,
}

impl IncomeBucket {
    pub const ALL: [IncomeBucket; 3] = [IncomeBucket::Low, IncomeBucket::Medium, IncomeBucket::High];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            1 => Some(IncomeBucket::Low),
            2 => Some(IncomeBucket::Medium),
            3 => Some(IncomeBucket::High),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IncomeBucket::Low => "low",
            IncomeBucket::Medium => "medium",
            IncomeBucket::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssociationType {
    Human,
    PossiblyHuman,
    NonHuman,
    PossiblyNonHuman,
    Crime,
    Unmapped,
}

impl AssociationType {
    /// Every type an image can hit (Unmapped never counts).
    pub const COUNTED: [AssociationType; 5] = [
        AssociationType::Human,
        AssociationType::PossiblyHuman,
        AssociationType::NonHuman,
        AssociationType::PossiblyNonHuman,
        AssociationType::Crime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssociationType::Human => "Human",
            AssociationType::PossiblyHuman => "PossiblyHuman",
            AssociationType::NonHuman => "NonHuman",
            AssociationType::PossiblyNonHuman => "PossiblyNonHuman",
            AssociationType::Crime => "Crime",
            AssociationType::Unmapped => "Unmapped",
        }
    }

    pub fn is_harmful(self) -> bool {
        matches!(self, AssociationType::NonHuman | AssociationType::Crime)
    }

    pub fn is_non_harmful(self) -> bool {
        self == AssociationType::Human
    }
}

impl FromStr for AssociationType {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "human" => AssociationType::Human,
            "possiblyhuman" => AssociationType::PossiblyHuman,
            "nonhuman" => AssociationType::NonHuman,
            "possiblynonhuman" => AssociationType::PossiblyNonHuman,
            "crime" => AssociationType::Crime,
            "unmapped" => AssociationType::Unmapped,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for AssociationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
