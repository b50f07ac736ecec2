//! Counting descriptors computed straight from the graph.

use std::sync::OnceLock;

use crate::molgraph::{match_pattern, relevant_cycles, symmetry_classes, BondOrder, Element, Molecule, Pattern};

const HYDROGEN_MASS: f64 = 1.008;

/// Average molecular weight including implicit hydrogens.
pub fn molecular_weight(mol: &Molecule) -> f64 {
    mol.atoms()
        .iter()
        .map(|a| a.element.atomic_weight() + HYDROGEN_MASS * a.hydrogens as f64)
        .sum()
}

fn is_n_or_o(e: Element) -> bool {
    matches!(e, Element::N | Element::O)
}

/// N or O atoms carrying at least one hydrogen.
pub fn hbd_count(mol: &Molecule) -> usize {
    mol.atoms()
        .iter()
        .filter(|a| is_n_or_o(a.element) && a.hydrogens > 0)
        .count()
}

/// N or O atoms that are not positively charged.
pub fn hba_count(mol: &Molecule) -> usize {
    mol.atoms()
        .iter()
        .filter(|a| is_n_or_o(a.element) && a.charge <= 0)
        .count()
}

/// Relevant-cycle count (the symmetrized smallest ring set).
pub fn ring_count(mol: &Molecule) -> usize {
    relevant_cycles(mol).len()
}

/// Relevant cycles whose bonds are all aromatic.
pub fn aromatic_ring_count(mol: &Molecule) -> usize {
    relevant_cycles(mol)
        .iter()
        .filter(|ring| {
            (0..ring.len()).all(|k| {
                let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
                mol.bond_between(a, b)
                    .is_some_and(|bd| mol.bonds()[bd].order == BondOrder::Aromatic)
            })
        })
        .count()
}

pub fn formal_charge_total(mol: &Molecule) -> i32 {
    mol.atoms().iter().map(|a| a.charge as i32).sum()
}

pub fn charged_atom_count(mol: &Molecule) -> usize {
    mol.atoms().iter().filter(|a| a.charge != 0).count()
}

/// Non-aromatic atoms with three or more heavy neighbours.
pub fn branching_degree(mol: &Molecule) -> usize {
    (0..mol.atom_count())
        .filter(|&i| !mol.atom(i).aromatic && mol.degree(i) >= 3)
        .count()
}

pub fn halogen_count(mol: &Molecule) -> usize {
    mol.atoms().iter().filter(|a| a.element.is_halogen()).count()
}

pub fn element_count(mol: &Molecule, el: Element) -> usize {
    mol.atoms().iter().filter(|a| a.element == el).count()
}

pub fn heteroatom_count(mol: &Molecule) -> usize {
    mol.atoms()
        .iter()
        .filter(|a| !matches!(a.element, Element::C | Element::H))
        .count()
}

/// Connected clusters of N and O atoms: a hydroxyl is one group, a nitro
/// group is one, an amide contributes two.
pub fn polar_group_count(mol: &Molecule) -> usize {
    let polar: Vec<bool> = mol.atoms().iter().map(|a| is_n_or_o(a.element)).collect();
    let mut seen = vec![false; mol.atom_count()];
    let mut groups = 0;
    for start in 0..mol.atom_count() {
        if !polar[start] || seen[start] {
            continue;
        }
        groups += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in mol.neighbors(v) {
                if polar[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    groups
}

/// Carbons bonded only to carbon or hydrogen.
pub fn hydrophobic_carbon_count(mol: &Molecule) -> usize {
    (0..mol.atom_count())
        .filter(|&i| {
            mol.atom(i).element == Element::C
                && mol
                    .neighbors(i)
                    .iter()
                    .all(|&(j, _)| mol.atom(j).element == Element::C)
        })
        .count()
}

/// Mean heavy degree of the atoms bonded to N or O; 0 without polar atoms.
pub fn polar_steric_hindrance(mol: &Molecule) -> f64 {
    let mut total = 0usize;
    let mut n = 0usize;
    for i in 0..mol.atom_count() {
        if !is_n_or_o(mol.atom(i).element) {
            continue;
        }
        for &(j, _) in mol.neighbors(i) {
            total += mol.degree(j);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// sp3 carbons over all carbons; 0 without carbon.
pub fn fraction_csp3(mol: &Molecule) -> f64 {
    let carbons: Vec<usize> = (0..mol.atom_count())
        .filter(|&i| mol.atom(i).element == Element::C)
        .collect();
    if carbons.is_empty() {
        return 0.0;
    }
    let sp3 = carbons
        .iter()
        .filter(|&&i| {
            !mol.atom(i).aromatic
                && mol
                    .neighbors(i)
                    .iter()
                    .all(|&(_, b)| mol.bonds()[b].order == BondOrder::Single)
        })
        .count();
    sp3 as f64 / carbons.len() as f64
}

const FUNCTIONAL_GROUPS: [(&str, &[&str]); 12] = [
    ("hydroxyl", &["[O;H1;A][C]"]),
    ("carbonyl", &["[C;A]=O"]),
    ("carboxyl", &["C(=O)[O;H1]"]),
    ("carboxylate", &["C(=O)[O;-1]"]),
    ("amine", &["[N;A;+0][C]"]),
    ("amide", &["[N;A]C=O"]),
    ("ether", &["[C][O;A;D2][C]"]),
    ("nitro", &["[N;+1](=O)[O;-1]"]),
    ("nitrile", &["C#N"]),
    ("halide", &["[C]F", "[C]Cl", "[C]Br", "[C]I"]),
    ("sulfonyl", &["S(=O)=O"]),
    ("aromatic_nitrogen", &["n"]),
];

type GroupPatterns = Vec<(&'static str, Vec<Pattern>)>;

fn functional_patterns() -> &'static GroupPatterns {
    static PATS: OnceLock<GroupPatterns> = OnceLock::new();
    PATS.get_or_init(|| {
        FUNCTIONAL_GROUPS
            .iter()
            .map(|(n, ps)| {
                let pats = ps
                    .iter()
                    .map(|p| Pattern::parse(p).expect("built-in functional group"))
                    .collect();
                (*n, pats)
            })
            .collect()
    })
}

/// Names of the built-in functional group kinds present.
pub fn functional_groups(mol: &Molecule) -> Vec<&'static str> {
    functional_patterns()
        .iter()
        .filter(|(_, ps)| ps.iter().any(|p| !match_pattern(mol, p).is_empty()))
        .map(|(n, _)| *n)
        .collect()
}

pub fn functional_group_count(mol: &Molecule) -> usize {
    functional_groups(mol).len()
}

/// Groups expected to carry a charge near neutral pH: carboxylic and
/// sulfonic acids (or their anions), basic aliphatic amines, and charged
/// nitrogens outside nitro groups.
pub fn ionizable_group_count(mol: &Molecule) -> usize {
    let mut count = 0;
    for i in 0..mol.atom_count() {
        let a = mol.atom(i);
        match a.element {
            Element::C | Element::S => {
                let acid_o = mol.neighbors(i).iter().any(|&(j, b)| {
                    let o = mol.atom(j);
                    o.element == Element::O
                        && mol.bonds()[b].order == BondOrder::Single
                        && (o.hydrogens == 1 || o.charge == -1)
                });
                let oxo = mol.neighbors(i).iter().any(|&(j, b)| {
                    mol.atom(j).element == Element::O && mol.bonds()[b].order == BondOrder::Double
                });
                if acid_o && oxo && !a.aromatic {
                    count += 1;
                }
            }
            Element::N if a.charge > 0 => {
                let nitro = mol.neighbors(i).iter().any(|&(j, _)| mol.atom(j).charge < 0);
                if !nitro {
                    count += 1;
                }
            }
            Element::N if a.charge == 0 && !a.aromatic => {
                let basic = mol.neighbors(i).iter().all(|&(j, b)| {
                    let nb = mol.atom(j);
                    mol.bonds()[b].order == BondOrder::Single
                        && !nb.aromatic
                        && nb.element == Element::C
                        && !mol.neighbors(j).iter().any(|&(_, b2)| mol.bonds()[b2].order != BondOrder::Single)
                });
                if basic {
                    count += 1;
                }
            }
            _ => {}
        }
    }
    count
}

pub fn symmetry(mol: &Molecule) -> usize {
    symmetry_classes(mol)
}
