use serde::{Deserialize, Serialize};

use super::{BondOrder, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityIssue {
    pub atom: usize,
    pub reason: String,
}

/// Outcome of [`sanitize`]. Invalid reports list every offending atom.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub issues: Vec<ValidityIssue>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    /// First problem as `atom N: reason`, for error messages.
    pub fn summary(&self) -> Option<String> {
        self.issues
            .first()
            .map(|i| format!("atom {}: {}", i.atom, i.reason))
    }
}

/// Checks valences against the element table and that every aromatic system
/// is a ring that admits a kekulé structure.
pub fn sanitize(mol: &Molecule) -> ValidityReport {
    let mut issues = Vec::new();
    for (i, atom) in mol.atoms().iter().enumerate() {
        if atom.aromatic && !atom.in_ring {
            issues.push(ValidityIssue {
                atom: i,
                reason: "aromatic atom outside any ring".into(),
            });
        }
    }
    let orders = match kekulize(mol) {
        Ok(o) => o,
        Err(atom) => {
            issues.push(ValidityIssue {
                atom,
                reason: "aromatic system cannot be kekulized".into(),
            });
            mol.bonds().iter().map(|b| b.order).collect()
        }
    };
    for (i, atom) in mol.atoms().iter().enumerate() {
        let allowed = atom.element.allowed_valences(atom.charge);
        if allowed.is_empty() {
            issues.push(ValidityIssue {
                atom: i,
                reason: format!("charge {:+} not supported for {}", atom.charge, atom.element),
            });
            continue;
        }
        let bond_sum: u32 = mol
            .neighbors(i)
            .iter()
            .map(|&(_, b)| match orders[b] {
                BondOrder::Aromatic => 1,
                o => o.valence_units() as u32,
            })
            .sum();
        let valence = bond_sum + atom.hydrogens as u32;
        let max = *allowed.iter().max().unwrap() as u32;
        if valence > max {
            issues.push(ValidityIssue {
                atom: i,
                reason: format!("valence {valence} > {max}"),
            });
        } else if !allowed.contains(&(valence as u8)) {
            issues.push(ValidityIssue {
                atom: i,
                reason: format!("valence {valence} not allowed for {}", atom.element),
            });
        }
    }
    issues.sort_by_key(|i| i.atom);
    ValidityReport { issues }
}

/// Assigns alternating single/double orders to aromatic bonds.
///
/// Atoms that still have one unit of free valence after counting their
/// sigma bonds and hydrogens must receive exactly one double bond; the
/// assignment is a perfect matching over aromatic bonds found by
/// backtracking. Returns per-bond orders, or the index of an atom that
/// could not be matched.
pub fn kekulize(mol: &Molecule) -> Result<Vec<BondOrder>, usize> {
    let mut orders: Vec<BondOrder> = mol.bonds().iter().map(|b| b.order).collect();
    let n = mol.atom_count();
    let mut needs = vec![false; n];
    for (i, atom) in mol.atoms().iter().enumerate() {
        let has_aromatic = mol
            .neighbors(i)
            .iter()
            .any(|&(_, b)| orders[b] == BondOrder::Aromatic);
        if !has_aromatic {
            continue;
        }
        let used = mol.bond_valence_sum(i) as i32 + atom.hydrogens as i32;
        let allowed = atom.element.allowed_valences(atom.charge);
        needs[i] = allowed
            .iter()
            .find(|&&v| v as i32 >= used)
            .is_some_and(|&v| v as i32 - used == 1);
    }
    let mut matched = vec![false; n];
    if !match_atoms(mol, &needs, &mut matched, &mut orders) {
        let culprit = (0..n).find(|&i| needs[i] && !matched[i]).unwrap_or(0);
        return Err(culprit);
    }
    for o in orders.iter_mut() {
        if *o == BondOrder::Aromatic {
            *o = BondOrder::Single;
        }
    }
    Ok(orders)
}

fn match_atoms(
    mol: &Molecule,
    needs: &[bool],
    matched: &mut [bool],
    orders: &mut [BondOrder],
) -> bool {
    // Most constrained atom first keeps the backtracking shallow.
    let mut best: Option<(usize, usize)> = None;
    for i in 0..needs.len() {
        if !needs[i] || matched[i] {
            continue;
        }
        let options = candidates(mol, i, needs, matched, orders).count();
        if options == 0 {
            return false;
        }
        if best.is_none_or(|(_, c)| options < c) {
            best = Some((i, options));
        }
    }
    let Some((atom, _)) = best else {
        return true;
    };
    let choices: Vec<(usize, usize)> = candidates(mol, atom, needs, matched, orders).collect();
    for (other, bond) in choices {
        orders[bond] = BondOrder::Double;
        matched[atom] = true;
        matched[other] = true;
        if match_atoms(mol, needs, matched, orders) {
            return true;
        }
        orders[bond] = BondOrder::Aromatic;
        matched[atom] = false;
        matched[other] = false;
    }
    false
}

fn candidates<'a>(
    mol: &'a Molecule,
    atom: usize,
    needs: &'a [bool],
    matched: &'a [bool],
    orders: &'a [BondOrder],
) -> impl Iterator<Item = (usize, usize)> + 'a {
    mol.neighbors(atom)
        .iter()
        .copied()
        .filter(move |&(n, b)| orders[b] == BondOrder::Aromatic && needs[n] && !matched[n])
}

#[cfg(test)]
mod tests {
    use super::super::{parse_smiles, Atom, Bond, Element};
    use super::*;

    #[test]
    fn ordinary_molecules_are_valid() {
        for s in ["CCO", "c1ccccc1[N+](=O)[O-]", "c1cc[nH]c1", "O=S(=O)(O)c1ccccc1", "c1ccncc1"] {
            let report = sanitize(&parse_smiles(s).unwrap());
            assert!(report.is_valid(), "{s}: {report:?}");
        }
    }

    #[test]
    fn pentavalent_carbon() {
        let report = sanitize(&parse_smiles("CC(C)(C)(C)C").unwrap());
        assert!(!report.is_valid());
        assert_eq!(report.issues[0].atom, 1);
        assert_eq!(report.issues[0].reason, "valence 5 > 4");
    }

    #[test]
    fn unkekulizable_ring() {
        let report = sanitize(&parse_smiles("c1cccc1").unwrap());
        assert!(!report.is_valid());
        assert!(report.issues[0].reason.contains("kekulized"));
    }

    #[test]
    fn aromatic_outside_ring() {
        let atoms = vec![
            Atom { aromatic: true, ..Atom::new(Element::C) },
            Atom::new(Element::C),
        ];
        let bonds = vec![Bond { a: 0, b: 1, order: BondOrder::Single, in_ring: false }];
        let mol = Molecule::from_parts(atoms, bonds, "").unwrap();
        assert!(!sanitize(&mol).is_valid());
    }

    #[test]
    fn kekule_naphthalene_has_five_doubles() {
        let mol = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let orders = kekulize(&mol).unwrap();
        assert_eq!(orders.iter().filter(|&&o| o == BondOrder::Double).count(), 5);
    }
}
