//! Molecular graphs: SMILES in and out, sanitization, substructure patterns,
//! structural edits and path fingerprints.
//!
//! Everything here is deterministic and side-effect free; a [`Molecule`] is
//! never mutated after construction; edits produce new molecules.

mod canon;
mod element;
mod fingerprint;
mod pattern;
mod rings;
mod sanitize;
mod smiles;
mod transform;

pub use canon::{canonical_ranks, canonical_smiles, symmetry_classes};
pub use element::Element;
pub use fingerprint::{
    fingerprint, fingerprint_with_len, tanimoto, Fingerprint, LengthMismatch, FINGERPRINT_BITS,
    FINGERPRINT_HASH_SEED,
};
pub use pattern::{match_pattern, match_pattern_unique, AtomQuery, BondQuery, Pattern, PatternError};
pub use rings::{relevant_cycles, sssr};
pub use sanitize::{kekulize, sanitize, ValidityIssue, ValidityReport};
pub use smiles::{parse_smiles, SmilesError};
pub use transform::{transform_library, Transform, TransformError};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's sigma+pi valence, counting aromatic bonds as 1
    /// (the extra pi electron is handled by kekulization).
    pub fn valence_units(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "-",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => ":",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    pub aromatic: bool,
    /// Attached hydrogens, whether written in brackets or implied by valence.
    pub hydrogens: u8,
    /// Hydrogen count was written explicitly and must not be recomputed.
    pub bracket: bool,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            charge: 0,
            aromatic: false,
            hydrogens: 0,
            bracket: false,
            in_ring: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {0} references atom {1}, which does not exist")]
    DanglingBond(usize, usize),
    #[error("bond {0} connects atom {1} to itself")]
    SelfBond(usize, usize),
    #[error("atoms {0} and {1} are joined by more than one bond")]
    DuplicateBond(usize, usize),
}

/// An attributed molecular graph with hydrogens stored as atom counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, usize)>>,
    source: String,
}

impl Molecule {
    /// Builds a molecule from raw parts, checking graph invariants, marking
    /// ring membership, assigning implicit hydrogens to non-bracket atoms and
    /// perceiving aromaticity of kekulé six-rings.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source: impl Into<String>,
    ) -> Result<Self, GraphError> {
        let mut mol = Molecule::assemble(atoms, bonds, source.into())?;
        mol.assign_implicit_hydrogens();
        mol.perceive_six_ring_aromaticity();
        mol.demote_acyclic_aromatic_bonds();
        Ok(mol)
    }

    fn assemble(atoms: Vec<Atom>, bonds: Vec<Bond>, source: String) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            for end in [bond.a, bond.b] {
                if end >= atoms.len() {
                    return Err(GraphError::DanglingBond(i, end));
                }
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfBond(i, bond.a));
            }
            if adjacency[bond.a].iter().any(|&(n, _)| n == bond.b) {
                return Err(GraphError::DuplicateBond(bond.a, bond.b));
            }
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        let mut mol = Molecule {
            atoms,
            bonds,
            adjacency,
            source,
        };
        mol.mark_rings();
        Ok(mol)
    }

    fn mark_rings(&mut self) {
        let ring_bonds = rings::ring_bonds(self);
        for (i, bond) in self.bonds.iter_mut().enumerate() {
            bond.in_ring = ring_bonds[i];
        }
        for atom in self.atoms.iter_mut() {
            atom.in_ring = false;
        }
        for bond in &self.bonds {
            if bond.in_ring {
                self.atoms[bond.a].in_ring = true;
                self.atoms[bond.b].in_ring = true;
            }
        }
    }

    /// Recomputes hydrogens on every non-bracket atom from its default valence.
    pub(crate) fn assign_implicit_hydrogens(&mut self) {
        for i in 0..self.atoms.len() {
            if !self.atoms[i].bracket {
                self.atoms[i].hydrogens = self.default_hydrogens(i);
            }
        }
    }

    /// Hydrogen count an unbracketed atom would carry given its bonds.
    pub fn default_hydrogens(&self, idx: usize) -> u8 {
        let atom = &self.atoms[idx];
        let bond_sum = self.bond_valence_sum(idx);
        let valences = atom.element.allowed_valences(atom.charge);
        let Some(&target) = valences.iter().find(|&&v| v >= bond_sum) else {
            return 0;
        };
        let mut free = target - bond_sum;
        if atom.aromatic && free >= 1 && self.has_aromatic_bond(idx) {
            // One unit goes to the pi bond of the kekulé form.
            free -= 1;
        }
        free
    }

    fn has_aromatic_bond(&self, idx: usize) -> bool {
        self.adjacency[idx]
            .iter()
            .any(|&(_, b)| self.bonds[b].order == BondOrder::Aromatic)
    }

    /// Sum of bond valence units around an atom (aromatic bonds count 1).
    pub fn bond_valence_sum(&self, idx: usize) -> u8 {
        self.adjacency[idx]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence_units())
            .sum()
    }

    /// Hückel detection restricted to six-membered rings of C/N written in
    /// kekulé form: a ring whose atoms each carry a double bond inside the
    /// ring (or are already aromatic) becomes aromatic. Iterated so fused
    /// systems like naphthalene are picked up ring by ring.
    fn perceive_six_ring_aromaticity(&mut self) {
        let rings: Vec<Vec<usize>> = rings::sssr(self)
            .into_iter()
            .filter(|r| r.len() == 6)
            .collect();
        if rings.is_empty() {
            return;
        }
        loop {
            let mut changed = false;
            for ring in &rings {
                if ring.iter().all(|&a| self.atoms[a].aromatic) {
                    continue;
                }
                if !self.six_ring_is_huckel(ring) {
                    continue;
                }
                for k in 0..6 {
                    let (a, b) = (ring[k], ring[(k + 1) % 6]);
                    if let Some(bi) = self.bond_between(a, b) {
                        self.bonds[bi].order = BondOrder::Aromatic;
                    }
                    self.atoms[a].aromatic = true;
                }
                changed = true;
            }
            if !changed {
                break;
            }
        }
    }

    fn six_ring_is_huckel(&self, ring: &[usize]) -> bool {
        let in_ring = |x: usize| ring.contains(&x);
        ring.iter().all(|&a| {
            let atom = &self.atoms[a];
            if !matches!(atom.element, Element::C | Element::N) || atom.charge != 0 {
                return false;
            }
            if atom.aromatic {
                return true;
            }
            let mut ring_double = false;
            for &(n, b) in &self.adjacency[a] {
                match self.bonds[b].order {
                    BondOrder::Double if in_ring(n) => ring_double = true,
                    BondOrder::Double | BondOrder::Triple => return false,
                    _ => {}
                }
            }
            ring_double
        })
    }

    /// Aromatic bonds outside rings (e.g. the biphenyl link written without
    /// an explicit `-`) are single bonds.
    fn demote_acyclic_aromatic_bonds(&mut self) {
        for bond in self.bonds.iter_mut() {
            if bond.order == BondOrder::Aromatic && !bond.in_ring {
                bond.order = BondOrder::Single;
            }
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn source_text(&self) -> &str {
        &self.source
    }

    /// `(neighbour, bond index)` pairs in bond insertion order.
    pub fn neighbors(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    /// Heavy-atom degree.
    pub fn degree(&self, idx: usize) -> usize {
        self.adjacency[idx].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| bi)
    }

    /// Number of rings in the smallest set of smallest rings.
    pub fn ring_count(&self) -> usize {
        // cyclomatic number: E - V + components
        (self.bonds.len() + self.component_count()).saturating_sub(self.atoms.len())
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Component label for each atom, labels assigned in order of first atom.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.atoms.len()];
        let mut next = 0;
        for start in 0..self.atoms.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(a) = stack.pop() {
                for &(n, _) in &self.adjacency[a] {
                    if label[n] == usize::MAX {
                        label[n] = next;
                        stack.push(n);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Returns a copy with atoms reordered so that new atom `i` is old atom
    /// `order[i]`. Bonds are reindexed and re-sorted; the graph is unchanged.
    pub fn permuted(&self, order: &[usize]) -> Molecule {
        assert_eq!(order.len(), self.atoms.len(), "permutation length mismatch");
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let atoms = order.iter().map(|&old| self.atoms[old].clone()).collect();
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: inverse[b.a],
                b: inverse[b.b],
                order: b.order,
                in_ring: b.in_ring,
            })
            .collect();
        bonds.sort_by_key(|b| (b.a.min(b.b), b.a.max(b.b)));
        Molecule::assemble(atoms, bonds, self.source.clone()).expect("permutation keeps graph valid")
    }

    /// Rebuilds derived data after an edit: ring flags and implicit hydrogens
    /// of unbracketed atoms. Used by structural transforms.
    pub(crate) fn rebuilt(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source: String,
    ) -> Result<Molecule, GraphError> {
        let mut mol = Molecule::assemble(atoms, bonds, source)?;
        mol.assign_implicit_hydrogens();
        mol.demote_acyclic_aromatic_bonds();
        // Aromatic flags on atoms that lost their ring are meaningless.
        for i in 0..mol.atoms.len() {
            if mol.atoms[i].aromatic && !mol.atoms[i].in_ring {
                mol.atoms[i].aromatic = false;
            }
        }
        mol.assign_implicit_hydrogens();
        Ok(mol)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Molecule {
        self.source = source.into();
        self
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub fn total_hydrogens(&self) -> usize {
        self.atoms.iter().map(|a| a.hydrogens as usize).sum::<usize>()
            + self.atoms.iter().filter(|a| a.element == Element::H).count()
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_smiles(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_graphs() {
        let atoms = vec![Atom::new(Element::C), Atom::new(Element::C)];
        let self_bond = vec![Bond { a: 0, b: 0, order: BondOrder::Single, in_ring: false }];
        assert!(matches!(
            Molecule::from_parts(atoms.clone(), self_bond, ""),
            Err(GraphError::SelfBond(0, 0))
        ));
        let dup = vec![
            Bond { a: 0, b: 1, order: BondOrder::Single, in_ring: false },
            Bond { a: 1, b: 0, order: BondOrder::Double, in_ring: false },
        ];
        assert!(matches!(
            Molecule::from_parts(atoms.clone(), dup, ""),
            Err(GraphError::DuplicateBond(1, 0))
        ));
        let dangling = vec![Bond { a: 0, b: 5, order: BondOrder::Single, in_ring: false }];
        assert!(Molecule::from_parts(atoms, dangling, "").is_err());
    }

    #[test]
    fn kekule_benzene_becomes_aromatic() {
        let mol = parse_smiles("C1=CC=CC=C1").unwrap();
        assert!(mol.atoms().iter().all(|a| a.aromatic && a.hydrogens == 1));
        assert!(mol.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
    }

    #[test]
    fn kekule_naphthalene_becomes_aromatic() {
        let mol = parse_smiles("C1=CC=C2C=CC=CC2=C1").unwrap();
        assert!(mol.atoms().iter().all(|a| a.aromatic));
        assert_eq!(mol.ring_count(), 2);
    }

    #[test]
    fn cyclohexene_stays_aliphatic() {
        let mol = parse_smiles("C1=CCCCC1").unwrap();
        assert!(mol.atoms().iter().all(|a| !a.aromatic));
    }

    #[test]
    fn biphenyl_link_is_single() {
        let mol = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let link = mol.bond_between(5, 6).unwrap();
        assert_eq!(mol.bonds()[link].order, BondOrder::Single);
        assert!(!mol.bonds()[link].in_ring);
    }
}
