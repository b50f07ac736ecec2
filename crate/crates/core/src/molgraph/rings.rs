use std::collections::{BTreeSet, VecDeque};

use super::Molecule;

/// Marks bonds that lie on at least one cycle (i.e. are not bridges).
pub(crate) fn ring_bonds(mol: &Molecule) -> Vec<bool> {
    let n = mol.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; mol.bond_count()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (atom, parent bond, next neighbour position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent_bond, ref mut pos)) = stack.last_mut() {
            if *pos < mol.neighbors(v).len() {
                let (w, b) = mol.neighbors(v)[*pos];
                *pos += 1;
                if b == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, b, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        is_bridge[parent_bond] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

/// Smallest set of smallest rings, each ring given as atoms in cycle order.
///
/// Candidates come from Horton's construction (shortest paths from every ring
/// atom closed by every ring bond) and are selected greedily by size with
/// GF(2) independence over bond incidence vectors.
pub fn sssr(mol: &Molecule) -> Vec<Vec<usize>> {
    let target = mol.ring_count();
    if target == 0 {
        return Vec::new();
    }
    let ring_atoms: Vec<usize> = (0..mol.atom_count())
        .filter(|&a| mol.atom(a).in_ring)
        .collect();
    let ring_bond_ids: Vec<usize> = (0..mol.bond_count())
        .filter(|&b| mol.bonds()[b].in_ring)
        .collect();

    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut candidates: Vec<(Vec<usize>, Vec<usize>)> = Vec::new(); // (atom cycle, sorted bond ids)
    for &v in &ring_atoms {
        let parent = bfs_tree(mol, v);
        for &b in &ring_bond_ids {
            let bond = &mol.bonds()[b];
            let (x, y) = (bond.a, bond.b);
            if parent[x].is_none() || parent[y].is_none() {
                continue;
            }
            let px = tree_path(&parent, v, x);
            let py = tree_path(&parent, v, y);
            // paths must share only the root
            let shared = px.iter().skip(1).any(|a| py[1..].contains(a));
            if shared || px.last() == py.last() {
                continue;
            }
            let mut cycle = px.clone();
            cycle.extend(py.iter().skip(1).rev());
            if cycle.len() < 3 {
                continue;
            }
            let mut bond_ids: Vec<usize> = (0..cycle.len())
                .filter_map(|k| mol.bond_between(cycle[k], cycle[(k + 1) % cycle.len()]))
                .collect();
            if bond_ids.len() != cycle.len() {
                continue;
            }
            bond_ids.sort_unstable();
            if seen.insert(bond_ids.clone()) {
                candidates.push((cycle, bond_ids));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.len().cmp(&b.0.len()).then_with(|| {
            let mut sa = a.0.clone();
            let mut sb = b.0.clone();
            sa.sort_unstable();
            sb.sort_unstable();
            sa.cmp(&sb)
        })
    });

    let words = mol.bond_count().div_ceil(64);
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new(); // (pivot bit, reduced vector)
    let mut rings = Vec::new();
    for (cycle, bond_ids) in candidates {
        let mut vec = vec![0u64; words];
        for b in bond_ids {
            vec[b / 64] |= 1 << (b % 64);
        }
        for (pivot, row) in &basis {
            if vec[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (w, r) in vec.iter_mut().zip(row) {
                    *w ^= r;
                }
            }
        }
        let Some(pivot) = first_bit(&vec) else {
            continue;
        };
        // keep rows reduced on the new pivot
        for (_, row) in basis.iter_mut() {
            if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (r, w) in row.iter_mut().zip(&vec) {
                    *r ^= w;
                }
            }
        }
        basis.push((pivot, vec));
        rings.push(cycle);
        if rings.len() == target {
            break;
        }
    }
    rings
}

/// Relevant cycles: every cycle that is not a GF(2) sum of strictly shorter
/// cycles. Equals the smallest-ring set for most molecules but keeps all
/// symmetry-equivalent rings, e.g. three rings for a bicyclo[2.2.2] core.
pub fn relevant_cycles(mol: &Molecule) -> Vec<Vec<usize>> {
    let smallest = sssr(mol);
    let Some(max_len) = smallest.iter().map(Vec::len).max() else {
        return Vec::new();
    };
    let Some(mut cycles) = simple_cycles(mol, max_len, 20_000) else {
        return smallest;
    };
    cycles.sort_by_key(|(c, _)| c.len());
    let words = mol.bond_count().div_ceil(64);
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut out = Vec::new();
    let mut k = 0;
    while k < cycles.len() {
        let len = cycles[k].0.len();
        let group_end = cycles[k..].iter().position(|(c, _)| c.len() != len).map_or(cycles.len(), |p| k + p);
        let mut additions = Vec::new();
        for (cycle, bond_ids) in &cycles[k..group_end] {
            let mut vec = vec![0u64; words];
            for &b in bond_ids {
                vec[b / 64] |= 1 << (b % 64);
            }
            reduce(&basis, &mut vec);
            if let Some(pivot) = first_bit(&vec) {
                out.push(cycle.clone());
                additions.push((pivot, vec));
            }
        }
        // shorter cycles only: extend the basis after the whole length class
        for (_, mut vec) in additions {
            reduce(&basis, &mut vec);
            if let Some(pivot) = first_bit(&vec) {
                for (_, row) in basis.iter_mut() {
                    if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                        for (r, w) in row.iter_mut().zip(&vec) {
                            *r ^= w;
                        }
                    }
                }
                basis.push((pivot, vec));
            }
        }
        k = group_end;
    }
    out
}

fn reduce(basis: &[(usize, Vec<u64>)], vec: &mut [u64]) {
    for (pivot, row) in basis {
        if vec[pivot / 64] >> (pivot % 64) & 1 == 1 {
            for (w, r) in vec.iter_mut().zip(row) {
                *w ^= r;
            }
        }
    }
}

/// All simple cycles up to `max_len` atoms; `None` past `limit` cycles.
fn simple_cycles(mol: &Molecule, max_len: usize, limit: usize) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut path = Vec::new();
    let mut on_path = vec![false; mol.atom_count()];
    for start in 0..mol.atom_count() {
        if !mol.atom(start).in_ring {
            continue;
        }
        path.push(start);
        on_path[start] = true;
        let ok = cycle_walk(mol, start, max_len, limit, &mut path, &mut on_path, &mut seen, &mut out);
        on_path[start] = false;
        path.pop();
        if !ok {
            return None;
        }
    }
    Some(out)
}

#[allow(clippy::too_many_arguments)]
fn cycle_walk(
    mol: &Molecule,
    start: usize,
    max_len: usize,
    limit: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    seen: &mut BTreeSet<Vec<usize>>,
    out: &mut Vec<(Vec<usize>, Vec<usize>)>,
) -> bool {
    let last = *path.last().expect("non-empty");
    for &(next, b) in mol.neighbors(last) {
        if !mol.bonds()[b].in_ring {
            continue;
        }
        if next == start && path.len() >= 3 {
            let mut bonds: Vec<usize> = (0..path.len())
                .filter_map(|k| mol.bond_between(path[k], path[(k + 1) % path.len()]))
                .collect();
            bonds.sort_unstable();
            if seen.insert(bonds.clone()) {
                out.push((path.clone(), bonds));
                if out.len() > limit {
                    return false;
                }
            }
            continue;
        }
        if next < start || on_path[next] || path.len() == max_len {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        let ok = cycle_walk(mol, start, max_len, limit, path, on_path, seen, out);
        on_path[next] = false;
        path.pop();
        if !ok {
            return false;
        }
    }
    true
}

fn first_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn bfs_tree(mol: &Molecule, root: usize) -> Vec<Option<usize>> {
    let mut parent = vec![None; mol.atom_count()];
    parent[root] = Some(root);
    let mut queue = VecDeque::from([root]);
    while let Some(a) = queue.pop_front() {
        for &(n, b) in mol.neighbors(a) {
            if mol.bonds()[b].in_ring && parent[n].is_none() {
                parent[n] = Some(a);
                queue.push_back(n);
            }
        }
    }
    parent
}

fn tree_path(parent: &[Option<usize>], root: usize, to: usize) -> Vec<usize> {
    let mut path = vec![to];
    let mut cur = to;
    while cur != root {
        cur = parent[cur].expect("node reachable from root");
        path.push(cur);
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    fn ring_sizes(smiles: &str) -> Vec<usize> {
        let mol = parse_smiles(smiles).unwrap();
        let mut sizes: Vec<usize> = sssr(&mol).iter().map(Vec::len).collect();
        sizes.sort_unstable();
        sizes
    }

    #[test]
    fn ring_sets() {
        assert_eq!(ring_sizes("CCO"), Vec::<usize>::new());
        assert_eq!(ring_sizes("c1ccccc1"), vec![6]);
        assert_eq!(ring_sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(ring_sizes("C1CC2CCC1C2"), vec![5, 5]);
        assert_eq!(ring_sizes("C12C3C4C1C5C2C3C45"), vec![4, 4, 4, 4, 4]);
    }

    #[test]
    fn relevant_cycles_keep_symmetric_rings() {
        let count = |s: &str| relevant_cycles(&parse_smiles(s).unwrap()).len();
        assert_eq!(count("C1CN2CCC1CC2"), 3);
        assert_eq!(count("C12C3C4C1C5C2C3C45"), 6);
        assert_eq!(count("c1ccc2ccccc2c1"), 2);
        assert_eq!(count("CCO"), 0);
    }

    #[test]
    fn bridges_are_not_ring_bonds() {
        let mol = parse_smiles("C1CC1CC").unwrap();
        let flags = ring_bonds(&mol);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 3);
    }
}
