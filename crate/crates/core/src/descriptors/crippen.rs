use crate::molgraph::Molecule;

use super::smarts::{MolView, Smarts};
use super::tables::ParamTable;
use super::DescriptorError;

/// Rows whose id ends in `S` are the per-element catch-all types.
fn is_fallback(id: &str) -> bool {
    matches!(id, "CS" | "HS" | "NS" | "OS")
}

#[derive(Debug, Clone)]
struct TypeRow {
    id: String,
    pattern: Smarts,
    value: f64,
}

/// Ordered atom-type table; the first row whose pattern matches an atom
/// assigns its type.
#[derive(Debug, Clone)]
pub struct CrippenTable {
    rows: Vec<TypeRow>,
}

/// Per-atom typing outcome. Hydrogens are reported against their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedAtom {
    pub atom: usize,
    pub hydrogen: bool,
    pub type_id: Option<String>,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrippenReport {
    pub logp: f64,
    pub atoms: Vec<TypedAtom>,
}

impl CrippenReport {
    /// Atoms that only matched a catch-all row or no row at all.
    pub fn fallbacks(&self) -> Vec<&TypedAtom> {
        self.atoms
            .iter()
            .filter(|a| a.type_id.as_deref().is_none_or(is_fallback))
            .collect()
    }
}

impl CrippenTable {
    pub fn from_table(table: &ParamTable) -> Result<Self, DescriptorError> {
        let rows = table
            .rows
            .iter()
            .map(|r| {
                Ok(TypeRow {
                    id: r.id.clone(),
                    pattern: Smarts::parse(&r.pattern)?,
                    value: r.value,
                })
            })
            .collect::<Result<Vec<_>, DescriptorError>>()?;
        Ok(CrippenTable { rows })
    }

    pub fn report(&self, mol: &Molecule) -> CrippenReport {
        let view = MolView::explicit(mol);
        let mut atoms = Vec::with_capacity(view.len());
        let mut parent = vec![usize::MAX; view.len()];
        let mut next_h = view.heavy_atoms();
        for i in 0..mol.atom_count() {
            for _ in 0..mol.atom(i).hydrogens {
                parent[next_h] = i;
                next_h += 1;
            }
        }
        for node in 0..view.len() {
            let row = self.rows.iter().find(|r| r.pattern.matches_at(&view, node));
            let hydrogen = node >= view.heavy_atoms();
            atoms.push(TypedAtom {
                atom: if hydrogen { parent[node] } else { node },
                hydrogen,
                type_id: row.map(|r| r.id.clone()),
                contribution: row.map_or(0.0, |r| r.value),
            });
        }
        let logp = atoms.iter().map(|a| a.contribution).sum();
        CrippenReport { logp, atoms }
    }

    pub fn logp(&self, mol: &Molecule) -> f64 {
        self.report(mol).logp
    }
}
