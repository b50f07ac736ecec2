use std::hash::Hasher;

use thiserror::Error;
use twox_hash::XxHash64;

use super::{BondOrder, Molecule};

pub const FINGERPRINT_BITS: usize = 2048;
/// Seed for the XXH64 path hash; written into search trace headers.
pub const FINGERPRINT_HASH_SEED: u64 = 0x5EED_0F_A7B5;
const MAX_PATH_BONDS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fingerprint lengths differ: {0} vs {1}")]
pub struct LengthMismatch(pub usize, pub usize);

impl Fingerprint {
    pub fn empty(len: usize) -> Self {
        Fingerprint {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Hashed linear-path fingerprint over all simple paths of 1 to 7 bonds.
pub fn fingerprint(mol: &Molecule) -> Fingerprint {
    fingerprint_with_len(mol, FINGERPRINT_BITS)
}

pub fn fingerprint_with_len(mol: &Molecule, bits: usize) -> Fingerprint {
    let mut fp = Fingerprint::empty(bits);
    let mut path = Vec::with_capacity(MAX_PATH_BONDS + 1);
    let mut on_path = vec![false; mol.atom_count()];
    for start in 0..mol.atom_count() {
        path.push(start);
        on_path[start] = true;
        walk(mol, &mut path, &mut on_path, &mut fp);
        on_path[start] = false;
        path.pop();
    }
    fp
}

fn walk(mol: &Molecule, path: &mut Vec<usize>, on_path: &mut [bool], fp: &mut Fingerprint) {
    let last = *path.last().expect("non-empty path");
    for &(next, _) in mol.neighbors(last) {
        if on_path[next] {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        let bit = (path_hash(mol, path) % fp.len as u64) as usize;
        fp.set(bit);
        if path.len() <= MAX_PATH_BONDS {
            walk(mol, path, on_path, fp);
        }
        on_path[next] = false;
        path.pop();
    }
}

fn atom_code(mol: &Molecule, i: usize) -> [u8; 3] {
    let a = mol.atom(i);
    [a.element.atomic_number(), a.aromatic as u8, a.charge as u8]
}

fn bond_code(o: BondOrder) -> u8 {
    match o {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Direction-independent path hash: the smaller of the forward and reverse
/// encodings is hashed.
fn path_hash(mol: &Molecule, path: &[usize]) -> u64 {
    let encode = |seq: &mut dyn Iterator<Item = &usize>| -> Vec<u8> {
        let ids: Vec<usize> = seq.copied().collect();
        let mut out = Vec::with_capacity(ids.len() * 4);
        for (k, &a) in ids.iter().enumerate() {
            out.extend_from_slice(&atom_code(mol, a));
            if k + 1 < ids.len() {
                let b = mol.bond_between(a, ids[k + 1]).expect("path follows bonds");
                out.push(bond_code(mol.bonds()[b].order));
            }
        }
        out
    };
    let fwd = encode(&mut path.iter());
    let rev = encode(&mut path.iter().rev());
    let key = fwd.min(rev);
    let mut h = XxHash64::with_seed(FINGERPRINT_HASH_SEED);
    h.write(&key);
    h.finish()
}

/// |a and b| / |a or b|, with two empty fingerprints counting as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, LengthMismatch> {
    if a.len != b.len {
        return Err(LengthMismatch(a.len, b.len));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    if either == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / either as f64)
}
