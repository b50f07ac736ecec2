use std::collections::HashMap;

use crate::molgraph::{BondOrder, Element, Molecule};

use super::tables::ParamTable;
use super::DescriptorError;

/// Environment-keyed polar contributions for N and O, with a linear fallback
/// for environments the table does not list.
#[derive(Debug, Clone)]
pub struct TpsaTable {
    by_env: HashMap<String, f64>,
    // (base, per heavy neighbour, per hydrogen) for N then O
    fallback: [(f64, f64, f64); 2],
}

impl TpsaTable {
    pub fn from_table(table: &ParamTable) -> Result<Self, DescriptorError> {
        let mut by_env = HashMap::new();
        for row in &table.rows {
            if row.pattern != "*" {
                by_env.insert(row.pattern.clone(), row.value);
            }
        }
        let coeffs = |el: &str| -> Result<(f64, f64, f64), DescriptorError> {
            Ok((
                table.get(&format!("{el}.base"))?,
                table.get(&format!("{el}.per_neighbour"))?,
                table.get(&format!("{el}.per_h"))?,
            ))
        };
        Ok(TpsaTable {
            by_env,
            fallback: [coeffs("N")?, coeffs("O")?],
        })
    }

    /// Environment key of a polar atom, e.g. `N;H1;+0;s2;d0;t0;a0`.
    pub fn environment(mol: &Molecule, i: usize) -> String {
        let atom = mol.atom(i);
        let (mut s, mut d, mut t, mut a) = (0, 0, 0, 0);
        for &(_, b) in mol.neighbors(i) {
            match mol.bonds()[b].order {
                BondOrder::Single => s += 1,
                BondOrder::Double => d += 1,
                BondOrder::Triple => t += 1,
                BondOrder::Aromatic => a += 1,
            }
        }
        let symbol = if atom.aromatic {
            atom.element.symbol().to_ascii_lowercase()
        } else {
            atom.element.symbol().to_string()
        };
        format!(
            "{symbol};H{};{:+};s{s};d{d};t{t};a{a}",
            atom.hydrogens, atom.charge
        )
    }

    fn in_three_ring(mol: &Molecule, i: usize) -> bool {
        let nbrs = mol.neighbors(i);
        nbrs.iter().enumerate().any(|(k, &(x, _))| {
            nbrs[k + 1..].iter().any(|&(y, _)| mol.bond_between(x, y).is_some())
        })
    }

    pub fn contribution(&self, mol: &Molecule, i: usize) -> f64 {
        let atom = mol.atom(i);
        let slot = match atom.element {
            Element::N => 0,
            Element::O => 1,
            _ => return 0.0,
        };
        let env = Self::environment(mol, i);
        if Self::in_three_ring(mol, i) {
            if let Some(&v) = self.by_env.get(&format!("{env};r3")) {
                return v;
            }
        }
        if let Some(&v) = self.by_env.get(&env) {
            return v;
        }
        let (base, per_nbr, per_h) = self.fallback[slot];
        base + per_nbr * mol.degree(i) as f64 + per_h * atom.hydrogens as f64
    }

    pub fn tpsa(&self, mol: &Molecule) -> f64 {
        (0..mol.atom_count()).map(|i| self.contribution(mol, i)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::super::registry;
    use super::*;
    use crate::molgraph::parse_smiles;

    fn tpsa(s: &str) -> f64 {
        registry().tpsa_table().tpsa(&parse_smiles(s).unwrap())
    }

    #[test]
    fn listed_environments() {
        assert!((tpsa("CCO") - 20.23).abs() < 1e-9);
        assert!((tpsa("c1ccncc1") - 12.89).abs() < 1e-9);
        assert!((tpsa("C1CO1") - 12.53).abs() < 1e-9);
        assert_eq!(tpsa("c1ccccc1"), 0.0);
    }

    #[test]
    fn fallback_formula() {
        assert!((tpsa("[NH4+]") - 36.5).abs() < 1e-9);
        assert!((tpsa("O") - 31.5).abs() < 1e-9);
    }

    #[test]
    fn environment_key() {
        let m = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(TpsaTable::environment(&m, 3), "n;H1;+0;s0;d0;t0;a2");
    }
}
