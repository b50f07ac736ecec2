//! Substructure patterns.
//!
//! Grammar (SMILES-shaped):
//!
//! ```text
//! pattern  := chain ('.' chain)*          ('.' only in replacement fragments)
//! chain    := atom (bond? (atom | ring-digit) | '(' bond? chain ')')*
//! atom     := organic | '*' | 'a' | 'A' | '[' spec (';' modifier)* ']'
//! organic  := B C N O P S F Cl Br I       aliphatic
//!           | b c n o p s                 aromatic
//! spec     := ('a:' | 'A:')? (element | aromatic-element | '*')
//! modifier := 'H' n? | 'D' n | '+' n? | '-' n? | 'R' | '!R' | 'a' | 'A'
//! bond     := '-' | '=' | '#' | ':' | '~'
//! ```
//!
//! Inside brackets an uppercase element leaves aromaticity open unless an
//! `a`/`A` flag is given. An omitted bond matches single or aromatic.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{BondOrder, Element, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pattern error at position {pos}: {msg}")]
pub struct PatternError {
    pub pos: usize,
    pub msg: String,
}

fn perr(pos: usize, msg: impl Into<String>) -> PatternError {
    PatternError {
        pos,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AtomQuery {
    pub element: Option<Element>,
    pub aromatic: Option<bool>,
    pub charge: Option<i8>,
    pub in_ring: Option<bool>,
    pub degree: Option<u8>,
    pub hydrogens: Option<u8>,
}

impl AtomQuery {
    pub fn matches(&self, mol: &Molecule, idx: usize) -> bool {
        let atom = mol.atom(idx);
        self.element.is_none_or(|e| e == atom.element)
            && self.aromatic.is_none_or(|a| a == atom.aromatic)
            && self.charge.is_none_or(|c| c == atom.charge)
            && self.in_ring.is_none_or(|r| r == atom.in_ring)
            && self.degree.is_none_or(|d| d as usize == mol.degree(idx))
            && self.hydrogens.is_none_or(|h| h == atom.hydrogens)
    }

    pub fn is_wildcard(&self) -> bool {
        self.element.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondQuery {
    Single,
    Double,
    Triple,
    Aromatic,
    SingleOrAromatic,
    Any,
}

impl BondQuery {
    pub fn matches(self, order: BondOrder) -> bool {
        match self {
            BondQuery::Single => order == BondOrder::Single,
            BondQuery::Double => order == BondOrder::Double,
            BondQuery::Triple => order == BondOrder::Triple,
            BondQuery::Aromatic => order == BondOrder::Aromatic,
            BondQuery::SingleOrAromatic => {
                matches!(order, BondOrder::Single | BondOrder::Aromatic)
            }
            BondQuery::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    atoms: Vec<AtomQuery>,
    bonds: Vec<(usize, usize, BondQuery)>,
    adjacency: Vec<Vec<(usize, BondQuery)>>,
    source: String,
}

impl Pattern {
    /// Parses a connected pattern.
    pub fn parse(src: &str) -> Result<Pattern, PatternError> {
        let pat = Self::parse_inner(src, false)?;
        if !pat.is_connected() {
            return Err(perr(0, "pattern must be connected"));
        }
        Ok(pat)
    }

    /// Parses a fragment that may contain several `.`-separated parts.
    pub(crate) fn parse_fragment(src: &str) -> Result<Pattern, PatternError> {
        Self::parse_inner(src, true)
    }

    fn parse_inner(src: &str, allow_dot: bool) -> Result<Pattern, PatternError> {
        let mut p = PatternParser {
            s: src.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
        };
        p.run(allow_dot)?;
        if p.atoms.is_empty() {
            return Err(perr(0, "pattern has no atoms"));
        }
        let mut adjacency = vec![Vec::new(); p.atoms.len()];
        for &(a, b, q) in &p.bonds {
            adjacency[a].push((b, q));
            adjacency[b].push((a, q));
        }
        Ok(Pattern {
            atoms: p.atoms,
            bonds: p.bonds,
            adjacency,
            source: src.to_string(),
        })
    }

    pub fn atoms(&self) -> &[AtomQuery] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[(usize, usize, BondQuery)] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &(n, _) in &self.adjacency[a] {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

impl FromStr for Pattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::parse(s)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct PatternParser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<AtomQuery>,
    bonds: Vec<(usize, usize, BondQuery)>,
}

impl PatternParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn run(&mut self, allow_dot: bool) -> Result<(), PatternError> {
        let mut prev: Option<usize> = None;
        let mut stack: Vec<usize> = Vec::new();
        let mut pending: Option<(BondQuery, usize)> = None;
        let mut rings: [Option<(usize, Option<BondQuery>, usize)>; 10] = [None; 10];

        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(perr(at, "branch before any atom"));
                    };
                    if pending.is_some() {
                        return Err(perr(at, "bond before '('"));
                    }
                    stack.push(p);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(perr(at, "bond before ')'"));
                    }
                    prev = Some(stack.pop().ok_or_else(|| perr(at, "unmatched ')'"))?);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'~' => {
                    if pending.is_some() {
                        return Err(perr(at, "two bonds in a row"));
                    }
                    let q = match c {
                        b'-' => BondQuery::Single,
                        b'=' => BondQuery::Double,
                        b'#' => BondQuery::Triple,
                        b':' => BondQuery::Aromatic,
                        _ => BondQuery::Any,
                    };
                    pending = Some((q, at));
                    self.pos += 1;
                }
                b'.' => {
                    if !allow_dot {
                        return Err(perr(at, "'.' is not allowed in a match pattern"));
                    }
                    if pending.is_some() || prev.is_none() {
                        return Err(perr(at, "misplaced '.'"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'1'..=b'9' => {
                    let Some(p) = prev else {
                        return Err(perr(at, "ring digit before any atom"));
                    };
                    let d = (c - b'0') as usize;
                    let written = pending.take().map(|(q, _)| q);
                    match rings[d].take() {
                        None => rings[d] = Some((p, written, at)),
                        Some((open, q0, _)) => {
                            let q = written.or(q0).unwrap_or(BondQuery::SingleOrAromatic);
                            self.add_bond(open, p, q, at)?;
                        }
                    }
                    self.pos += 1;
                }
                _ => {
                    let q = self.atom()?;
                    self.atoms.push(q);
                    let idx = self.atoms.len() - 1;
                    if let Some(p) = prev {
                        let q = pending.take().map_or(BondQuery::SingleOrAromatic, |(q, _)| q);
                        self.add_bond(p, idx, q, at)?;
                    } else if let Some((_, bat)) = pending {
                        return Err(perr(bat, "bond with no preceding atom"));
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some((_, at)) = pending {
            return Err(perr(at, "bond at end of pattern"));
        }
        if !stack.is_empty() {
            return Err(perr(self.s.len(), "unclosed branch"));
        }
        if let Some((_, _, at)) = rings.iter().flatten().next() {
            return Err(perr(*at, "unclosed ring digit"));
        }
        Ok(())
    }

    fn add_bond(&mut self, a: usize, b: usize, q: BondQuery, at: usize) -> Result<(), PatternError> {
        if a == b || self.bonds.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a)) {
            return Err(perr(at, "duplicate or self bond"));
        }
        self.bonds.push((a, b, q));
        Ok(())
    }

    fn atom(&mut self) -> Result<AtomQuery, PatternError> {
        let at = self.pos;
        let rest = &self.s[self.pos..];
        if rest[0] == b'[' {
            return self.bracket();
        }
        let mut q = AtomQuery::default();
        let len = match rest[0] {
            b'*' => 1,
            b'a' => {
                q.aromatic = Some(true);
                1
            }
            b'A' => {
                q.aromatic = Some(false);
                1
            }
            _ if rest.starts_with(b"Cl") || rest.starts_with(b"Br") => {
                q.element = Some(if rest[0] == b'C' { Element::Cl } else { Element::Br });
                q.aromatic = Some(false);
                2
            }
            c => {
                let (e, arom) = match c {
                    b'B' => (Element::B, false),
                    b'C' => (Element::C, false),
                    b'N' => (Element::N, false),
                    b'O' => (Element::O, false),
                    b'P' => (Element::P, false),
                    b'S' => (Element::S, false),
                    b'F' => (Element::F, false),
                    b'I' => (Element::I, false),
                    b'b' => (Element::B, true),
                    b'c' => (Element::C, true),
                    b'n' => (Element::N, true),
                    b'o' => (Element::O, true),
                    b'p' => (Element::P, true),
                    b's' => (Element::S, true),
                    other => return Err(perr(at, format!("unexpected '{}'", other as char))),
                };
                q.element = Some(e);
                q.aromatic = Some(arom);
                1
            }
        };
        self.pos += len;
        Ok(q)
    }

    fn bracket(&mut self) -> Result<AtomQuery, PatternError> {
        let open = self.pos;
        let Some(close) = self.s[open..].iter().position(|&c| c == b']') else {
            return Err(perr(open, "unclosed '['"));
        };
        let body = std::str::from_utf8(&self.s[open + 1..open + close])
            .map_err(|_| perr(open, "non-ASCII pattern"))?;
        let mut q = AtomQuery::default();
        let mut offset = open + 1;
        for (k, part) in body.split(';').enumerate() {
            let part_at = offset;
            offset += part.len() + 1;
            if k == 0 {
                let mut sym = part;
                if let Some(rest) = sym.strip_prefix("a:") {
                    q.aromatic = Some(true);
                    sym = rest;
                } else if let Some(rest) = sym.strip_prefix("A:") {
                    q.aromatic = Some(false);
                    sym = rest;
                }
                if sym == "*" {
                    continue;
                }
                let (e, lower) = Element::from_bracket_symbol(sym)
                    .ok_or_else(|| perr(part_at, format!("unknown element '{sym}'")))?;
                q.element = Some(e);
                if lower {
                    q.aromatic = Some(true);
                }
                continue;
            }
            apply_modifier(&mut q, part).map_err(|m| perr(part_at, m))?;
        }
        self.pos = open + close + 1;
        Ok(q)
    }
}

fn apply_modifier(q: &mut AtomQuery, m: &str) -> Result<(), String> {
    let num = |s: &str, default: u8| -> Result<u8, String> {
        if s.is_empty() {
            Ok(default)
        } else {
            s.parse().map_err(|_| format!("bad number in modifier '{m}'"))
        }
    };
    match m {
        "R" => q.in_ring = Some(true),
        "!R" => q.in_ring = Some(false),
        "a" => q.aromatic = Some(true),
        "A" => q.aromatic = Some(false),
        _ if m.starts_with('H') => q.hydrogens = Some(num(&m[1..], 1)?),
        _ if m.starts_with('D') && m.len() > 1 => q.degree = Some(num(&m[1..], 0)?),
        _ if m.starts_with('+') => q.charge = Some(num(&m[1..], 1)? as i8),
        _ if m.starts_with('-') => q.charge = Some(-(num(&m[1..], 1)? as i8)),
        _ => return Err(format!("unknown modifier '{m}'")),
    }
    Ok(())
}

/// Every embedding of `pat` into `mol`, as `mapping[pattern atom] = mol atom`.
///
/// Embeddings are enumerated in lexicographic order of the mapped atoms taken
/// in pattern-search order, so the result is deterministic.
pub fn match_pattern(mol: &Molecule, pat: &Pattern) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if pat.atom_count() > mol.atom_count() {
        return out;
    }
    let order = search_order(pat);
    let mut mapping = vec![usize::MAX; pat.atom_count()];
    let mut used = vec![false; mol.atom_count()];
    extend(mol, pat, &order, 0, &mut mapping, &mut used, &mut out);
    out
}

/// Embeddings deduplicated by their atom sets, keeping the first of each.
pub fn match_pattern_unique(mol: &Molecule, pat: &Pattern) -> Vec<Vec<usize>> {
    let mut seen = BTreeSet::new();
    match_pattern(mol, pat)
        .into_iter()
        .filter(|m| {
            let mut key = m.clone();
            key.sort_unstable();
            seen.insert(key)
        })
        .collect()
}

/// Breadth-first order from pattern atom 0, each atom paired with an
/// already-placed neighbour to anchor the candidate search.
fn search_order(pat: &Pattern) -> Vec<(usize, Option<usize>)> {
    let n = pat.atom_count();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    for root in 0..n {
        if placed[root] {
            continue;
        }
        placed[root] = true;
        order.push((root, None));
        let mut head = order.len() - 1;
        while head < order.len() {
            let (a, _) = order[head];
            head += 1;
            for &(b, _) in &pat.adjacency[a] {
                if !placed[b] {
                    placed[b] = true;
                    order.push((b, Some(a)));
                }
            }
        }
    }
    order
}

fn extend(
    mol: &Molecule,
    pat: &Pattern,
    order: &[(usize, Option<usize>)],
    depth: usize,
    mapping: &mut [usize],
    used: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    if depth == order.len() {
        out.push(mapping.to_vec());
        return;
    }
    let (p, anchor) = order[depth];
    let candidates: Vec<usize> = match anchor {
        Some(pa) => mol.neighbors(mapping[pa]).iter().map(|&(n, _)| n).collect(),
        None => (0..mol.atom_count()).collect(),
    };
    for m in candidates {
        if used[m] || !pat.atoms[p].matches(mol, m) {
            continue;
        }
        let bonds_ok = pat.adjacency[p].iter().all(|&(q, bq)| {
            if mapping[q] == usize::MAX {
                return true;
            }
            mol.bond_between(m, mapping[q])
                .is_some_and(|b| bq.matches(mol.bonds()[b].order))
        });
        if !bonds_ok {
            continue;
        }
        mapping[p] = m;
        used[m] = true;
        extend(mol, pat, order, depth + 1, mapping, used, out);
        used[m] = false;
        mapping[p] = usize::MAX;
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    fn count(smiles: &str, pat: &str) -> usize {
        match_pattern_unique(&parse_smiles(smiles).unwrap(), &Pattern::parse(pat).unwrap()).len()
    }

    #[test]
    fn nitro_and_hydroxyl() {
        let nitro = "[N;+1](=O)[O;-1]";
        assert_eq!(count("O=C(O)c1cn(COCCO)c2ccc([N+](=O)[O-])cc2c1=O", nitro), 1);
        assert_eq!(count("OCCO", "[O;H1]"), 2);
        assert_eq!(count("Oc1ccccc1", "[O;H1]c"), 1);
        assert_eq!(count("CO", "[O;H1]c"), 0);
    }

    #[test]
    fn ring_pattern_too_big() {
        assert_eq!(count("C", "c1ccccc1"), 0);
        assert_eq!(count("c1ccccc1", "c1ccccc1"), 1);
        assert_eq!(match_pattern(&parse_smiles("c1ccccc1").unwrap(), &"c1ccccc1".parse().unwrap()).len(), 12);
    }

    #[test]
    fn modifiers() {
        assert_eq!(count("CC(C)(C)C", "[C;D4]"), 1);
        assert_eq!(count("C1CCCCC1CC", "[C;!R]"), 2);
        assert_eq!(count("C1CCCCC1CC", "[C;R]"), 6);
        assert_eq!(count("c1ccccc1C", "[a:C]"), 6);
        assert_eq!(count("c1ccccc1C", "[A:C]"), 1);
        assert_eq!(count("c1ccccc1C", "[C]"), 7);
        assert_eq!(count("CC(=O)O", "C~O"), 2);
        assert_eq!(count("CC(=O)O", "C-O"), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(Pattern::parse("").is_err());
        assert!(Pattern::parse("C.C").is_err());
        assert!(Pattern::parse_fragment("C.C").is_ok());
        assert_eq!(Pattern::parse("C[Xx]").unwrap_err().pos, 2);
        assert!(Pattern::parse("C(").is_err());
        assert!(Pattern::parse("[C;Q]").is_err());
    }
}
