use std::collections::BTreeSet;

use thiserror::Error;

use super::pattern::match_pattern_unique;
use super::{canonical_smiles, sanitize, Atom, Bond, BondOrder, BondQuery, Molecule, Pattern, PatternError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("transform '{name}' has no match {index} (found {found})")]
    NoSuchMatch {
        name: String,
        index: usize,
        found: usize,
    },
    #[error("edit rejected by sanitization: {0}")]
    Rejected(String),
    #[error("bad transform definition: {0}")]
    Definition(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// A structural edit: find `pattern`, keep the atoms listed in the
/// attachment map, delete the other matched atoms and graft `replacement`.
///
/// Anchors whose replacement atom names an element take that element and
/// charge. Replacement bonds are added, or override the order of an existing
/// bond between two anchors; an unspecified bond keeps the existing order.
#[derive(Debug, Clone)]
pub struct Transform {
    pub name: String,
    pub pattern: Pattern,
    pub replacement: Pattern,
    /// `(pattern atom, replacement atom)` pairs.
    pub attachment: Vec<(usize, usize)>,
}

impl Transform {
    pub fn new(
        name: &str,
        pattern: &str,
        replacement: &str,
        attachment: &[(usize, usize)],
    ) -> Result<Self, TransformError> {
        let pattern = Pattern::parse(pattern)?;
        let replacement = Pattern::parse_fragment(replacement)?;
        let lhs: BTreeSet<usize> = attachment.iter().map(|p| p.0).collect();
        let rhs: BTreeSet<usize> = attachment.iter().map(|p| p.1).collect();
        if lhs.len() != attachment.len() || rhs.len() != attachment.len() {
            return Err(TransformError::Definition("attachment map is not injective".into()));
        }
        if lhs.iter().any(|&p| p >= pattern.atom_count())
            || rhs.iter().any(|&r| r >= replacement.atom_count())
        {
            return Err(TransformError::Definition("attachment index out of range".into()));
        }
        for (r, q) in replacement.atoms().iter().enumerate() {
            if q.is_wildcard() && !rhs.contains(&r) {
                return Err(TransformError::Definition(format!(
                    "replacement atom {r} is a wildcard but not attached"
                )));
            }
        }
        Ok(Transform {
            name: name.to_string(),
            pattern,
            replacement,
            attachment: attachment.to_vec(),
        })
    }

    /// Distinct matches (by atom set) in enumeration order.
    pub fn matches(&self, mol: &Molecule) -> Vec<Vec<usize>> {
        match_pattern_unique(mol, &self.pattern)
    }

    /// Applies the edit at the given match. The input is left untouched and
    /// the result has passed sanitization.
    pub fn apply(&self, mol: &Molecule, match_index: usize) -> Result<Molecule, TransformError> {
        let matches = self.matches(mol);
        let Some(hit) = matches.get(match_index) else {
            return Err(TransformError::NoSuchMatch {
                name: self.name.clone(),
                index: match_index,
                found: matches.len(),
            });
        };
        let mut atoms: Vec<Atom> = mol.atoms().to_vec();
        let mut delete = vec![false; atoms.len()];
        for (p, &m) in hit.iter().enumerate() {
            if !self.attachment.iter().any(|&(ap, _)| ap == p) {
                delete[m] = true;
            }
        }

        let mut place: Vec<usize> = vec![usize::MAX; self.replacement.atom_count()];
        for &(p, r) in &self.attachment {
            place[r] = hit[p];
        }
        for (r, q) in self.replacement.atoms().iter().enumerate() {
            if place[r] != usize::MAX {
                if let Some(e) = q.element {
                    let anchor = &mut atoms[place[r]];
                    anchor.element = e;
                    anchor.charge = q.charge.unwrap_or(0);
                    if let Some(a) = q.aromatic {
                        anchor.aromatic = a;
                    }
                    anchor.bracket = false;
                }
                continue;
            }
            let mut atom = Atom::new(q.element.expect("checked at construction"));
            atom.charge = q.charge.unwrap_or(0);
            atom.aromatic = q.aromatic.unwrap_or(false);
            if let Some(h) = q.hydrogens {
                atom.hydrogens = h;
                atom.bracket = true;
            }
            place[r] = atoms.len();
            atoms.push(atom);
            delete.push(false);
        }

        let mut bonds: Vec<Bond> = mol
            .bonds()
            .iter()
            .filter(|b| !delete[b.a] && !delete[b.b])
            .cloned()
            .collect();
        for &(x, y, q) in self.replacement.bonds() {
            let (a, b) = (place[x], place[y]);
            let existing = bonds
                .iter()
                .position(|bd| (bd.a, bd.b) == (a, b) || (bd.a, bd.b) == (b, a));
            let order = match q {
                BondQuery::Single => BondOrder::Single,
                BondQuery::Double => BondOrder::Double,
                BondQuery::Triple => BondOrder::Triple,
                BondQuery::Aromatic => BondOrder::Aromatic,
                BondQuery::SingleOrAromatic | BondQuery::Any => {
                    existing.map_or(BondOrder::Single, |i| bonds[i].order)
                }
            };
            match existing {
                Some(i) => bonds[i].order = order,
                None => bonds.push(Bond {
                    a,
                    b,
                    order,
                    in_ring: false,
                }),
            }
        }

        // Bracket atoms keep their written hydrogens; shift them by the
        // change in bonding so valences stay put.
        let old_sum = |i: usize| -> i32 {
            if i < mol.atom_count() {
                mol.bond_valence_sum(i) as i32
            } else {
                0
            }
        };
        let mut new_sum = vec![0i32; atoms.len()];
        for b in &bonds {
            new_sum[b.a] += b.order.valence_units() as i32;
            new_sum[b.b] += b.order.valence_units() as i32;
        }
        for i in 0..mol.atom_count() {
            if atoms[i].bracket && !delete[i] {
                let h = atoms[i].hydrogens as i32 + old_sum(i) - new_sum[i];
                atoms[i].hydrogens = h.max(0) as u8;
            }
        }

        let mut remap = vec![usize::MAX; atoms.len()];
        let mut kept = Vec::new();
        for (i, atom) in atoms.into_iter().enumerate() {
            if !delete[i] {
                remap[i] = kept.len();
                kept.push(atom);
            }
        }
        let bonds = bonds
            .into_iter()
            .map(|b| Bond {
                a: remap[b.a],
                b: remap[b.b],
                ..b
            })
            .collect();
        let out = Molecule::rebuilt(kept, bonds, String::new())
            .map_err(|e| TransformError::Rejected(e.to_string()))?;
        let report = sanitize(&out);
        if !report.is_valid() {
            return Err(TransformError::Rejected(report.summary().unwrap_or_default()));
        }
        let text = canonical_smiles(&out);
        Ok(out.with_source(text))
    }
}

/// The eight named edits available to the heuristic policy and replays.
pub fn transform_library() -> Vec<Transform> {
    let defs: [(&str, &str, &str, &[(usize, usize)]); 8] = [
        ("o_methylation", "[O;H1]c", "O(C)*", &[(0, 0), (1, 2)]),
        ("n_methylation", "[N;H1;A]C=O", "N(C)*=*", &[(0, 0), (1, 2), (2, 3)]),
        ("aromatic_methylation", "[c;H1]", "*C", &[(0, 0)]),
        ("add_isopropyl", "[C;A][O;H1]", "*(C)C", &[(0, 0)]),
        ("nitro_to_isopropyl", "*[N;+1](=O)[O;-1]", "*C(C)C", &[(0, 0), (1, 1)]),
        ("nitro_to_carboxyl", "*[N;+1](=O)[O;-1]", "*C(=O)O", &[(0, 0), (1, 1), (2, 2), (3, 3)]),
        ("side_chain_truncation", "[O;A;D2][C;H2][C;H2][O;H1]", "*", &[(0, 0)]),
        ("halogenation", "[c;H1]", "*Cl", &[(0, 0)]),
    ];
    defs.iter()
        .map(|(name, pat, rep, map)| Transform::new(name, pat, rep, map).expect("library transform"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    fn lib(name: &str) -> Transform {
        transform_library().into_iter().find(|t| t.name == name).unwrap()
    }

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn o_methylation_of_phenol() {
        let out = lib("o_methylation").apply(&parse_smiles("Oc1ccccc1").unwrap(), 0).unwrap();
        assert_eq!(canonical_smiles(&out), canon("COc1ccccc1"));
    }

    #[test]
    fn nitro_edits() {
        let start = parse_smiles("c1ccccc1[N+](=O)[O-]").unwrap();
        let iso = lib("nitro_to_isopropyl").apply(&start, 0).unwrap();
        assert_eq!(canonical_smiles(&iso), canon("CC(C)c1ccccc1"));
        let acid = lib("nitro_to_carboxyl").apply(&start, 0).unwrap();
        assert_eq!(canonical_smiles(&acid), canon("OC(=O)c1ccccc1"));
    }

    #[test]
    fn n_methylation_targets_amide() {
        let iter2 = parse_smiles("C=C1NC(C(C)C)C(=O)NC1Cc1ccc(OC)cc1").unwrap();
        let t = lib("n_methylation");
        assert_eq!(t.matches(&iter2).len(), 1);
        let out = t.apply(&iter2, 0).unwrap();
        assert_eq!(canonical_smiles(&out), canon("C=C1NC(C(C)C)C(=O)N(C)C1Cc1ccc(OC)cc1"));
    }

    #[test]
    fn truncation_and_halogenation() {
        let out = lib("side_chain_truncation").apply(&parse_smiles("c1ccccc1OCCO").unwrap(), 0).unwrap();
        assert_eq!(canonical_smiles(&out), canon("Oc1ccccc1"));
        let t = lib("halogenation");
        let benzene = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(t.matches(&benzene).len(), 6);
        assert_eq!(canonical_smiles(&t.apply(&benzene, 3).unwrap()), canon("Clc1ccccc1"));
    }

    #[test]
    fn isopropyl_from_alcohol() {
        let out = lib("add_isopropyl").apply(&parse_smiles("CC(O)C").unwrap(), 0).unwrap();
        assert_eq!(canonical_smiles(&out), canon("CC(C)(C)C"));
    }

    #[test]
    fn missing_match_and_rejection() {
        let methane = parse_smiles("C").unwrap();
        assert!(matches!(
            lib("o_methylation").apply(&methane, 0),
            Err(TransformError::NoSuchMatch { found: 0, .. })
        ));
        // a quaternary carbon cannot take two more methyls
        let t = Transform::new("overload", "[C;D4]", "*(C)C", &[(0, 0)]).unwrap();
        let neo = parse_smiles("CC(C)(C)C").unwrap();
        assert!(matches!(t.apply(&neo, 0), Err(TransformError::Rejected(_))));
    }

    #[test]
    fn bad_definitions() {
        assert!(Transform::new("x", "CO", "CC", &[(0, 0), (1, 0)]).is_err());
        assert!(Transform::new("x", "CO", "*C", &[(0, 1)]).is_err());
    }
}
