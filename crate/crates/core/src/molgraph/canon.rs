use std::collections::BTreeSet;

use super::{BondOrder, Molecule};

fn order_code(o: BondOrder) -> u8 {
    match o {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Dense ranks (0-based) of `keys`, equal keys sharing a rank.
fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let distinct: BTreeSet<K> = keys.iter().cloned().collect();
    let sorted: Vec<K> = distinct.into_iter().collect();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().collect::<BTreeSet<_>>().len()
}

fn initial_ranks(mol: &Molecule) -> Vec<usize> {
    let keys: Vec<_> = mol
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                a.element.atomic_number(),
                mol.degree(i),
                a.charge,
                a.hydrogens,
                a.aromatic,
                a.in_ring,
            )
        })
        .collect();
    dense_ranks(&keys)
}

/// Iterates neighbour-rank refinement until the partition stops splitting.
fn refine(mol: &Molecule, mut ranks: Vec<usize>) -> Vec<usize> {
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nbrs: Vec<(usize, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(n, b)| (ranks[n], order_code(mol.bonds()[b].order)))
                    .collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = dense_ranks(&keys);
        if class_count(&next) == class_count(&ranks) {
            return next;
        }
        ranks = next;
    }
}

/// Number of topologically equivalent atom classes (refined ranks before
/// any tie breaking).
pub fn symmetry_classes(mol: &Molecule) -> usize {
    if mol.atom_count() == 0 {
        return 0;
    }
    class_count(&refine(mol, initial_ranks(mol)))
}

/// Canonical atom ranks: a permutation of `0..n` that depends only on the
/// graph, not on input atom order.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    let n = mol.atom_count();
    let mut ranks = refine(mol, initial_ranks(mol));
    while class_count(&ranks) < n {
        // smallest tied class; promote its first member
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).expect("a tie exists");
        let chosen = (0..n).find(|&i| ranks[i] == tied).expect("class member");
        let broken: Vec<usize> = (0..n)
            .map(|i| {
                if i == chosen {
                    2 * ranks[i]
                } else {
                    2 * ranks[i] + 1
                }
            })
            .collect();
        ranks = refine(mol, dense_ranks(&broken));
    }
    ranks
}

/// Canonical SMILES: identical for any atom ordering of the same graph.
///
/// Aromatic atoms are written lowercase; components are emitted separately
/// and joined with `.` in sorted order.
pub fn canonical_smiles(mol: &Molecule) -> String {
    let n = mol.atom_count();
    if n == 0 {
        return String::new();
    }
    let ranks = canonical_ranks(mol);
    let comps = mol.components();
    let mut parts: Vec<String> = Vec::new();
    let mut done = vec![false; n];
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| ranks[i]);
    for &start in &by_rank {
        if done[comps[start]] {
            continue;
        }
        done[comps[start]] = true;
        parts.push(Writer::new(mol, &ranks).write_component(start));
    }
    parts.sort();
    parts.join(".")
}

struct Writer<'a> {
    mol: &'a Molecule,
    ranks: &'a [usize],
    visited: Vec<bool>,
    ring_bond: Vec<bool>,
    children: Vec<Vec<(usize, usize)>>,
    // ring bonds touching each atom, in discovery order
    rings_at: Vec<Vec<usize>>,
    tree_bond: Vec<bool>,
}

impl<'a> Writer<'a> {
    fn new(mol: &'a Molecule, ranks: &'a [usize]) -> Self {
        let n = mol.atom_count();
        Writer {
            mol,
            ranks,
            visited: vec![false; n],
            ring_bond: vec![false; mol.bond_count()],
            children: vec![Vec::new(); n],
            rings_at: vec![Vec::new(); n],
            tree_bond: vec![false; mol.bond_count()],
        }
    }

    fn sorted_neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let mut nbrs = self.mol.neighbors(v).to_vec();
        nbrs.sort_by_key(|&(w, _)| self.ranks[w]);
        nbrs
    }

    fn explore(&mut self, v: usize, parent_bond: Option<usize>) {
        self.visited[v] = true;
        for (w, b) in self.sorted_neighbors(v) {
            if Some(b) == parent_bond || self.ring_bond[b] || self.tree_bond[b] {
                continue;
            }
            if self.visited[w] {
                self.ring_bond[b] = true;
                self.rings_at[w].push(b);
                self.rings_at[v].push(b);
            } else {
                self.tree_bond[b] = true;
                self.children[v].push((w, b));
                self.explore(w, Some(b));
            }
        }
    }

    fn write_component(mut self, start: usize) -> String {
        self.explore(start, None);
        let mut out = String::new();
        let mut digit_of: Vec<Option<u32>> = vec![None; self.mol.bond_count()];
        let mut in_use: BTreeSet<u32> = BTreeSet::new();
        self.emit(start, &mut out, &mut digit_of, &mut in_use);
        out
    }

    fn emit(
        &self,
        v: usize,
        out: &mut String,
        digit_of: &mut [Option<u32>],
        in_use: &mut BTreeSet<u32>,
    ) {
        out.push_str(&atom_token(self.mol, v));
        let mut freed = Vec::new();
        for &b in &self.rings_at[v] {
            match digit_of[b] {
                Some(d) => {
                    push_label(out, d);
                    freed.push(d);
                }
                None => {
                    let d = (1..).find(|d| !in_use.contains(d)).expect("free label");
                    in_use.insert(d);
                    digit_of[b] = Some(d);
                    let bond = &self.mol.bonds()[b];
                    out.push_str(bond_token(self.mol, bond.a, bond.b, bond.order));
                    push_label(out, d);
                }
            }
        }
        for d in freed {
            in_use.remove(&d);
        }
        let kids = &self.children[v];
        for (k, &(w, b)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(bond_token(self.mol, v, w, self.mol.bonds()[b].order));
            self.emit(w, out, digit_of, in_use);
            if !last {
                out.push(')');
            }
        }
    }
}

fn push_label(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}

fn bond_token(mol: &Molecule, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atom(a).aromatic && mol.atom(b).aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn atom_token(mol: &Molecule, i: usize) -> String {
    let atom = mol.atom(i);
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    let plain = atom.element.is_organic_subset()
        && atom.charge == 0
        && atom.hydrogens == mol.default_hydrogens(i);
    if plain {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match atom.hydrogens {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        q => s.push_str(&format!("{q:+}")),
    }
    s.push(']');
    s
}
