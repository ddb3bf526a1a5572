//! Group-count checks against published dataset distributions.
//!
//! Subject manifests are counted per row; Dollar Street manifests are counted
//! per household (attributes `region` and `income`, natural-log buckets).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::{household_profiles, IncomeBucketing};
use crate::ingest::manifest::{Dataset, Manifest};
use crate::model::GroupKey;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpectedDistribution(pub BTreeMap<GroupKey, u64>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionMismatch {
    pub group: GroupKey,
    pub expected: u64,
    pub actual: u64,
}

impl ExpectedDistribution {
    /// Reads `group,expected_count` CSV, e.g. `"income=low,region=Africa",37` or `total,289`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Malformed {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let group: GroupKey = rec.get(0).unwrap_or("").parse()?;
            let count: u64 = rec.get(1).unwrap_or("").parse().map_err(|_| Error::Malformed {
                line,
                message: format!("bad count {:?}", rec.get(1).unwrap_or("")),
            })?;
            if map.insert(group.clone(), count).is_some() {
                return Err(Error::Malformed {
                    line,
                    message: format!("group {group} listed twice"),
                });
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Published group counts shipped with the toolkit.
    pub fn bundled(dataset: Dataset) -> Self {
        let text = match dataset {
            Dataset::CasualConversations => include_str!("../../assets/expected_cc.csv"),
            Dataset::UtkFaces => include_str!("../../assets/expected_utk.csv"),
            Dataset::Miap => include_str!("../../assets/expected_miap.csv"),
            Dataset::DollarStreet => include_str!("../../assets/expected_dollarstreet.csv"),
        };
        Self::from_reader(text.as_bytes()).expect("bundled distribution is well-formed")
    }
}

/// Number of manifest units (rows or households) belonging to `group`.
pub fn group_count(manifest: &Manifest, group: &GroupKey) -> Result<u64> {
    Ok(match manifest {
        Manifest::Subject(m) => m
            .rows
            .iter()
            .filter(|r| {
                group
                    .components()
                    .all(|(a, v)| r.attribute(a).as_deref() == Some(v))
            })
            .count() as u64,
        Manifest::Household(m) => {
            let profiles = household_profiles(m, &IncomeBucketing::default())?;
            let households: BTreeSet<&String> = profiles
                .iter()
                .filter(|(_, p)| group.components().all(|(a, v)| p.attribute(a).as_deref() == Some(v)))
                .map(|(h, _)| h)
                .collect();
            households.len() as u64
        }
    })
}

/// Every group whose actual count differs from the expected one.
pub fn validate_distribution(
    manifest: &Manifest,
    expected: &ExpectedDistribution,
) -> Result<Vec<DistributionMismatch>> {
    let mut out = Vec::new();
    for (group, &want) in &expected.0 {
        let actual = group_count(manifest, group)?;
        if actual != want {
            out.push(DistributionMismatch {
                group: group.clone(),
                expected: want,
                actual,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::manifest::parse_manifest;

    #[test]
    fn bundled_tables_parse() {
        let cc = ExpectedDistribution::bundled(Dataset::CasualConversations);
        assert_eq!(cc.0[&GroupKey::new([("gender", "female")])], 1627);
        assert_eq!(cc.0[&GroupKey::new([("gender", "male")])], 1294);
        let ds = ExpectedDistribution::bundled(Dataset::DollarStreet);
        assert_eq!(ds.0[&GroupKey::all()], 289);
        assert_eq!(ds.0[&GroupKey::new([("region", "Europe"), ("income", "low")])], 0);
        let by_region: u64 = ["Africa", "Asia", "Europe", "Americas"]
            .iter()
            .map(|r| ds.0[&GroupKey::new([("region", *r)])])
            .sum();
        assert_eq!(by_region, 289);
        let by_income: u64 = ["low", "medium", "high"]
            .iter()
            .map(|b| ds.0[&GroupKey::new([("income", *b)])])
            .sum();
        assert_eq!(by_income, 289);
        for ds in Dataset::ALL {
            assert!(!ExpectedDistribution::bundled(ds).0.is_empty());
        }
    }

    #[test]
    fn single_row_mismatch() {
        let m = parse_manifest("id,gender,age,skin_tone\nv1,female,30,I\n".as_bytes(), Dataset::CasualConversations)
            .unwrap();
        let expected = ExpectedDistribution([(GroupKey::new([("gender", "female")]), 1627)].into());
        let out = validate_distribution(&m, &expected).unwrap();
        assert_eq!(
            out,
            vec![DistributionMismatch {
                group: GroupKey::new([("gender", "female")]),
                expected: 1627,
                actual: 1
            }]
        );
    }

    #[test]
    fn matching_counts_are_clean() {
        let m = parse_manifest(
            "id,gender,age,skin_tone\nv1,female,30,I\nv2,male,31,V\nv3,female,71,IV\n".as_bytes(),
            Dataset::CasualConversations,
        )
        .unwrap();
        let expected = ExpectedDistribution::from_reader(
            "group,expected_count\ngender=female,2\n\"gender=female,skin_tone=darker\",1\nage=30-45,2\ntotal,3\n"
                .as_bytes(),
        )
        .unwrap();
        assert!(validate_distribution(&m, &expected).unwrap().is_empty());
    }

    #[test]
    fn households_counted_once() {
        let text = "id,household_id,country,region,income_usd,labels\n\
                    a,h1,Kenya,Africa,50,x\nb,h1,Kenya,Africa,50,y\nc,h2,India,Asia,500,x\n";
        let m = parse_manifest(text.as_bytes(), Dataset::DollarStreet).unwrap();
        let expected = ExpectedDistribution::from_reader(
            "group,expected_count\nregion=Africa,1\nincome=low,1\nincome=medium,1\ntotal,2\n".as_bytes(),
        )
        .unwrap();
        assert!(validate_distribution(&m, &expected).unwrap().is_empty());
    }
}
