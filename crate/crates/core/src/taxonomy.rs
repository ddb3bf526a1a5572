//! Classifier label to association-type mapping.
//!
//! Entries are either global (`*`) or scoped to one dataset; a scoped entry
//! shadows the global one for its dataset only. Labels and scopes are matched
//! after trimming and case-folding.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::AssociationType;

/// The bundled ImageNet mapping (`label,type,scope`).
pub const DEFAULT_TAXONOMY_CSV: &str = include_str!("../assets/default_taxonomy.csv");

pub const GLOBAL_SCOPE: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyEntry {
    pub label: String,
    pub kind: AssociationType,
    pub scope: String,
}

#[derive(Debug, Clone, Default)]
pub struct AssociationTaxonomy {
    entries: Vec<TaxonomyEntry>,
    index: HashMap<(String, String), AssociationType>,
}

pub fn canonical_label(label: &str) -> String {
    label.trim().to_lowercase()
}

fn canonical_scope(scope: &str) -> String {
    let s = scope.trim();
    if s.is_empty() {
        GLOBAL_SCOPE.to_string()
    } else {
        s.to_lowercase()
    }
}

impl AssociationTaxonomy {
    pub fn from_entries(entries: impl IntoIterator<Item = TaxonomyEntry>) -> Result<Self> {
        let mut tax = Self::default();
        for (i, e) in entries.into_iter().enumerate() {
            tax.insert(e, i + 1)?;
        }
        Ok(tax)
    }

    fn insert(&mut self, entry: TaxonomyEntry, line: usize) -> Result<()> {
        let key = (canonical_label(&entry.label), canonical_scope(&entry.scope));
        if key.0.is_empty() {
            return Err(Error::Taxonomy {
                line,
                message: "empty label".into(),
            });
        }
        if self.index.insert(key.clone(), entry.kind).is_some() {
            return Err(Error::Taxonomy {
                line,
                message: format!("duplicate entry for label {:?} in scope {:?}", key.0, key.1),
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Parses `label,type,scope` CSV. Line numbers in errors count the header as line 1.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Taxonomy {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let mut tax = Self::default();
        if headers.is_empty() {
            return Ok(tax);
        }
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (label_col, type_col, scope_col) = (col("label")?, col("type")?, col("scope")?);
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Taxonomy {
                line,
                message: e.to_string(),
            })?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let kind = field(type_col).parse().map_err(|_| Error::Taxonomy {
                line,
                message: format!("unknown association type {:?}", field(type_col)),
            })?;
            tax.insert(
                TaxonomyEntry {
                    label: field(label_col).to_string(),
                    kind,
                    scope: field(scope_col).to_string(),
                },
                line,
            )?;
        }
        Ok(tax)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn bundled() -> Self {
        Self::from_reader(DEFAULT_TAXONOMY_CSV.as_bytes()).expect("bundled taxonomy is well-formed")
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    /// Scoped entry if present, else global entry, else `Unmapped`.
    pub fn classify(&self, label: &str, dataset: &str) -> AssociationType {
        let label = canonical_label(label);
        let scope = canonical_scope(dataset);
        self.index
            .get(&(label.clone(), scope))
            .or_else(|| self.index.get(&(label, GLOBAL_SCOPE.to_string())))
            .copied()
            .unwrap_or(AssociationType::Unmapped)
    }
}

pub fn load_taxonomy(path: &Path) -> Result<AssociationTaxonomy> {
    AssociationTaxonomy::load(path)
}

pub fn classify_label(tax: &AssociationTaxonomy, label: &str, dataset: &str) -> AssociationType {
    tax.classify(label, dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use AssociationType::*;

    #[test]
    fn bundled_spot_checks() {
        let tax = AssociationTaxonomy::bundled();
        assert_eq!(tax.entries().len(), 26);
        assert_eq!(tax.classify("gorilla", "UTK"), NonHuman);
        assert_eq!(tax.classify("prison", "MIAP"), Crime);
        assert_eq!(tax.classify("face", "CC"), Human);
        assert_eq!(tax.classify("dog", "CC"), NonHuman);
        assert_eq!(tax.classify("dog", "MIAP"), PossiblyNonHuman);
        assert_eq!(tax.classify("dog", "UTK"), Unmapped);
        assert_eq!(tax.classify("cat", "CC"), Unmapped);
        assert_eq!(tax.classify("banana", "CC"), Unmapped);
    }

    #[test]
    fn canonicalization() {
        let tax = AssociationTaxonomy::bundled();
        assert_eq!(tax.classify("  Gorilla ", "cc"), NonHuman);
        assert_eq!(tax.classify("Great Ape", "miap"), NonHuman);
        assert_eq!(tax.classify("DOG", "cc"), NonHuman);
    }

    #[test]
    fn duplicate_row_rejected() {
        let csv = "label,type,scope\ncat,PossiblyNonHuman,MIAP\ncat,PossiblyNonHuman,MIAP\n";
        match AssociationTaxonomy::from_reader(csv.as_bytes()) {
            Err(Error::Taxonomy { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected taxonomy error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_after_case_fold_rejected() {
        let csv = "label,type,scope\nCat,NonHuman,*\ncat ,Crime,*\n";
        assert!(AssociationTaxonomy::from_reader(csv.as_bytes()).is_err());
    }

    #[test]
    fn unknown_type_rejected() {
        let csv = "label,type,scope\ncat,Feline,*\n";
        assert!(matches!(
            AssociationTaxonomy::from_reader(csv.as_bytes()),
            Err(Error::Taxonomy { line: 2, .. })
        ));
    }

    #[test]
    fn missing_column() {
        let csv = "label,type\ncat,Crime\n";
        assert!(matches!(
            AssociationTaxonomy::from_reader(csv.as_bytes()),
            Err(Error::MissingColumn(c)) if c == "scope"
        ));
    }

    #[test]
    fn empty_file_maps_nothing() {
        let tax = AssociationTaxonomy::from_reader("".as_bytes()).unwrap();
        assert_eq!(tax.classify("face", "CC"), Unmapped);
        let tax = AssociationTaxonomy::from_reader("label,type,scope\n".as_bytes()).unwrap();
        assert_eq!(tax.classify("face", "CC"), Unmapped);
    }

    #[test]
    fn scoped_entry_shadows_global() {
        let csv = "label,type,scope\nfox,Human,*\nfox,Crime,MIAP\n";
        let tax = AssociationTaxonomy::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(tax.classify("fox", "MIAP"), Crime);
        assert_eq!(tax.classify("fox", "CC"), Human);
    }
}
