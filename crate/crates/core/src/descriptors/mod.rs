//! Physicochemical descriptors over sanitized molecules.
//!
//! Parameter tables ship as data files under `data/` and are embedded at
//! build time; [`DescriptorRegistry::from_texts`] accepts replacements.

mod basic;
mod crippen;
mod qed;
mod smarts;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{Element, Molecule, PatternError};

pub use basic::functional_groups;
pub use crippen::{CrippenReport, CrippenTable, TypedAtom};
pub use qed::{aromatic_ring_estimate, Ads, QedInputs, QedModel, QED_PROPERTIES};
pub use smarts::{MolView, Smarts, SmartsError};
pub use tables::{ParamRow, ParamTable, TableError};
pub use tpsa::TpsaTable;

mod tpsa;

pub const CRIPPEN_TABLE: &str = include_str!("../../data/crippen.tsv");
pub const TPSA_TABLE: &str = include_str!("../../data/tpsa.tsv");
pub const QED_TABLE: &str = include_str!("../../data/qed.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("unknown descriptor '{0}'")]
    Unknown(String),
    #[error("descriptor '{0}' requested twice")]
    Duplicate(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Smarts(#[from] SmartsError),
    #[error("alert pattern: {0}")]
    Pattern(#[from] PatternError),
}

type DescriptorFn = fn(&DescriptorRegistry, &Molecule) -> f64;

/// Name to function mapping plus the loaded parameter tables. Immutable
/// once built.
#[derive(Debug, Clone)]
pub struct DescriptorRegistry {
    functions: BTreeMap<&'static str, DescriptorFn>,
    crippen: CrippenTable,
    tpsa: TpsaTable,
    qed: QedModel,
    tables: Vec<ParamTable>,
}

const FUNCTIONS: [(&str, DescriptorFn); 29] = [
    ("molecular_weight", |_, m| basic::molecular_weight(m)),
    ("logp", |r, m| r.crippen.logp(m)),
    ("tpsa", |r, m| r.tpsa.tpsa(m)),
    ("qed", |r, m| r.qed(m)),
    ("hbd_count", |_, m| basic::hbd_count(m) as f64),
    ("hba_count", |_, m| basic::hba_count(m) as f64),
    ("rotatable_bonds", |r, m| r.qed.rotatable_bonds(m) as f64),
    ("aromatic_ring_count", |_, m| basic::aromatic_ring_count(m) as f64),
    ("ring_count", |_, m| basic::ring_count(m) as f64),
    ("heavy_atom_count", |_, m| m.heavy_atom_count() as f64),
    ("formal_charge_total", |_, m| basic::formal_charge_total(m) as f64),
    ("charged_atom_count", |_, m| basic::charged_atom_count(m) as f64),
    ("branching_degree", |_, m| basic::branching_degree(m) as f64),
    ("halogen_count", |_, m| basic::halogen_count(m) as f64),
    ("fluorine_count", |_, m| basic::element_count(m, Element::F) as f64),
    ("carbon_count", |_, m| basic::element_count(m, Element::C) as f64),
    ("heteroatom_count", |_, m| basic::heteroatom_count(m) as f64),
    ("sulfur_phosphorus_count", |_, m| {
        (basic::element_count(m, Element::S) + basic::element_count(m, Element::P)) as f64
    }),
    ("polar_group_count", |_, m| basic::polar_group_count(m) as f64),
    ("hydrophobic_carbon_count", |_, m| basic::hydrophobic_carbon_count(m) as f64),
    ("polar_steric_hindrance", |_, m| basic::polar_steric_hindrance(m)),
    ("functional_group_count", |_, m| basic::functional_group_count(m) as f64),
    ("ionizable_group_count", |_, m| basic::ionizable_group_count(m) as f64),
    ("fraction_csp3", |_, m| basic::fraction_csp3(m)),
    ("symmetry_classes", |_, m| basic::symmetry(m) as f64),
    ("qed_hba", |r, m| r.qed.acceptors(m) as f64),
    ("qed_hbd", |r, m| r.qed.donors(m) as f64),
    ("qed_arom", |_, m| aromatic_ring_estimate(m) as f64),
    ("qed_alerts", |r, m| r.qed.alerts_hit(m).len() as f64),
];

impl DescriptorRegistry {
    /// Registry over the embedded parameter tables.
    pub fn standard() -> Result<Self, DescriptorError> {
        Self::from_texts(CRIPPEN_TABLE, TPSA_TABLE, QED_TABLE)
    }

    pub fn from_texts(crippen: &str, tpsa: &str, qed: &str) -> Result<Self, DescriptorError> {
        let tables = vec![
            ParamTable::parse("crippen", crippen)?,
            ParamTable::parse("tpsa", tpsa)?,
            ParamTable::parse("qed", qed)?,
        ];
        let mut functions = BTreeMap::new();
        for (name, f) in FUNCTIONS {
            if functions.insert(name, f).is_some() {
                return Err(DescriptorError::Duplicate(name.to_string()));
            }
        }
        Ok(DescriptorRegistry {
            functions,
            crippen: CrippenTable::from_table(&tables[0])?,
            tpsa: TpsaTable::from_table(&tables[1])?,
            qed: QedModel::from_table(&tables[2])?,
            tables,
        })
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.functions.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn tables(&self) -> &[ParamTable] {
        &self.tables
    }

    pub fn crippen(&self) -> &CrippenTable {
        &self.crippen
    }

    pub fn tpsa_table(&self) -> &TpsaTable {
        &self.tpsa
    }

    pub fn qed_model(&self) -> &QedModel {
        &self.qed
    }

    pub fn compute(&self, name: &str, mol: &Molecule) -> Result<f64, DescriptorError> {
        let f = self
            .functions
            .get(name)
            .ok_or_else(|| DescriptorError::Unknown(name.to_string()))?;
        Ok(f(self, mol))
    }

    pub fn crippen_logp(&self, mol: &Molecule) -> f64 {
        self.crippen.logp(mol)
    }

    pub fn qed_inputs(&self, mol: &Molecule) -> QedInputs {
        QedInputs {
            mw: basic::molecular_weight(mol),
            alogp: self.crippen.logp(mol),
            hba: self.qed.acceptors(mol),
            hbd: self.qed.donors(mol),
            psa: self.tpsa.tpsa(mol),
            rotb: self.qed.rotatable_bonds(mol),
            arom: aromatic_ring_estimate(mol),
            alerts: self.qed.alerts_hit(mol).len(),
        }
    }

    pub fn qed(&self, mol: &Molecule) -> f64 {
        self.qed.score(&self.qed_inputs(mol))
    }

    /// Values for `names`, sorted by name. Duplicates and unknown names are
    /// errors.
    pub fn descriptor_vector<S: AsRef<str>>(
        &self,
        names: &[S],
        mol: &Molecule,
    ) -> Result<DescriptorVector, DescriptorError> {
        let mut seen = BTreeSet::new();
        for n in names {
            if !seen.insert(n.as_ref()) {
                return Err(DescriptorError::Duplicate(n.as_ref().to_string()));
            }
        }
        let entries = seen
            .into_iter()
            .map(|n| Ok((n.to_string(), self.compute(n, mol)?)))
            .collect::<Result<Vec<_>, DescriptorError>>()?;
        Ok(DescriptorVector { entries })
    }
}

/// Shared registry over the embedded tables.
pub fn registry() -> &'static DescriptorRegistry {
    static REG: OnceLock<DescriptorRegistry> = OnceLock::new();
    REG.get_or_init(|| DescriptorRegistry::standard().expect("embedded parameter tables are valid"))
}

/// Sorted, unique `(name, value)` pairs for one molecule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DescriptorVector {
    entries: Vec<(String, f64)>,
}

impl DescriptorVector {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .ok()
            .map(|k| self.entries[k].1)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.0.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    #[test]
    fn names_sorted_unique() {
        let names: Vec<_> = registry().names().collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), FUNCTIONS.len());
    }

    #[test]
    fn every_row_has_provenance() {
        for t in registry().tables() {
            assert!(!t.rows.is_empty());
            for r in &t.rows {
                assert!(!r.source.is_empty() && !r.version.is_empty());
            }
        }
    }

    #[test]
    fn vector_rules() {
        let m = parse_smiles("CCO").unwrap();
        let empty: [&str; 0] = [];
        assert!(registry().descriptor_vector(&empty, &m).unwrap().is_empty());
        assert!(matches!(
            registry().descriptor_vector(&["tpsa", "tpsa"], &m),
            Err(DescriptorError::Duplicate(_))
        ));
        assert!(matches!(registry().compute("nope", &m), Err(DescriptorError::Unknown(_))));
        let v = registry().descriptor_vector(&["tpsa", "hbd_count"], &m).unwrap();
        assert_eq!(v.names(), ["hbd_count", "tpsa"]);
        assert_eq!(v.get("hbd_count"), Some(1.0));
    }

    #[test]
    fn broken_table_rejected() {
        let bad = "# source: s\n# version: v\nC1\t[C\t0.1\n";
        assert!(DescriptorRegistry::from_texts(bad, TPSA_TABLE, QED_TABLE).is_err());
    }
}
