use std::collections::BTreeMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unclosed ring bond {label} opened at position {pos}")]
    UnclosedRing { label: u32, pos: usize },
    #[error("unknown element '{symbol}' at position {pos}")]
    UnknownElement { symbol: String, pos: usize },
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
}

impl SmilesError {
    /// Byte offset the error points at, when it has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            SmilesError::Syntax { pos, .. }
            | SmilesError::UnclosedRing { pos, .. }
            | SmilesError::UnknownElement { pos, .. } => Some(*pos),
            _ => None,
        }
    }
}

/// Parses a SMILES string (no stereo, no isotopes) into a [`Molecule`].
///
/// Implicit hydrogens are assigned from default valences; explicit `[H]`
/// atoms hanging off a heavy atom are folded into its hydrogen count.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.trim().is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    let (atoms, bonds) = fold_explicit_hydrogens(p.atoms, p.bonds);
    Ok(Molecule::from_parts(atoms, bonds, text)?)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    // label -> (atom, bond written at the opening, position)
    rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)>,
}

fn syntax(pos: usize, msg: impl Into<String>) -> SmilesError {
    SmilesError::Syntax {
        pos,
        msg: msg.into(),
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut pending: Option<(BondOrder, usize)> = None;

        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(syntax(at, "branch opened before any atom"));
                    };
                    if pending.is_some() {
                        return Err(syntax(at, "bond symbol before '('"));
                    }
                    branches.push((p, at));
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(syntax(at, "bond symbol before ')'"));
                    }
                    let Some((p, _)) = branches.pop() else {
                        return Err(syntax(at, "unmatched ')'"));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if pending.is_some() {
                        return Err(syntax(at, "two bond symbols in a row"));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    pending = Some((order, at));
                    self.pos += 1;
                }
                b'/' | b'\\' => return Err(syntax(at, "stereo bond markers are not supported")),
                b'.' => {
                    if pending.is_some() {
                        return Err(syntax(at, "bond symbol before '.'"));
                    }
                    if prev.is_none() {
                        return Err(syntax(at, "'.' before any atom"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return Err(syntax(at, "ring bond before any atom"));
                    };
                    let label = self.ring_label()?;
                    let written = pending.take().map(|(o, _)| o);
                    self.ring_bond(p, label, written, at)?;
                }
                b'[' => {
                    let idx = self.bracket_atom()?;
                    self.attach(&mut prev, idx, &mut pending, at)?;
                }
                b'*' => return Err(syntax(at, "wildcard atoms are not allowed in molecules")),
                _ if c.is_ascii_alphabetic() => {
                    let idx = self.organic_atom()?;
                    self.attach(&mut prev, idx, &mut pending, at)?;
                }
                _ => return Err(syntax(at, format!("unexpected character '{}'", c as char))),
            }
        }
        if let Some((_, at)) = pending {
            return Err(syntax(at, "bond symbol at end of input"));
        }
        if let Some(&(_, at)) = branches.last() {
            return Err(syntax(at, "unclosed branch"));
        }
        if let Some((&label, &(_, _, at))) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing { label, pos: at });
        }
        Ok(())
    }

    fn attach(
        &mut self,
        prev: &mut Option<usize>,
        idx: usize,
        pending: &mut Option<(BondOrder, usize)>,
        at: usize,
    ) -> Result<(), SmilesError> {
        match *prev {
            Some(p) => {
                let order = pending.take().map(|(o, _)| o);
                self.add_bond(p, idx, order, at)?;
            }
            None => {
                if let Some((_, bat)) = pending {
                    return Err(syntax(*bat, "bond symbol with no preceding atom"));
                }
            }
        }
        *prev = Some(idx);
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: Option<BondOrder>,
        at: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(syntax(at, "atom bonded to itself"));
        }
        if self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return Err(syntax(at, "duplicate bond between the same atoms"));
        }
        let order = order.unwrap_or(if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        self.bonds.push(Bond {
            a,
            b,
            order,
            in_ring: false,
        });
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, SmilesError> {
        let at = self.pos;
        if self.peek() == Some(b'%') {
            self.pos += 1;
            let digits: Vec<u8> = self.s[self.pos..]
                .iter()
                .take(2)
                .copied()
                .take_while(u8::is_ascii_digit)
                .collect();
            if digits.len() != 2 {
                return Err(syntax(at, "'%' must be followed by two digits"));
            }
            self.pos += 2;
            Ok(((digits[0] - b'0') * 10 + (digits[1] - b'0')) as u32)
        } else {
            let d = self.s[self.pos] - b'0';
            self.pos += 1;
            Ok(d as u32)
        }
    }

    fn ring_bond(
        &mut self,
        atom: usize,
        label: u32,
        written: Option<BondOrder>,
        at: usize,
    ) -> Result<(), SmilesError> {
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, (atom, written, at));
                Ok(())
            }
            Some((open_atom, open_order, _)) => {
                let order = match (open_order, written) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(syntax(at, format!("conflicting bond orders on ring bond {label}")))
                    }
                    (Some(x), _) | (None, Some(x)) => Some(x),
                    (None, None) => None,
                };
                self.add_bond(open_atom, atom, order, at)
            }
        }
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let at = self.pos;
        let rest = &self.s[self.pos..];
        let (element, aromatic, len) = if rest.starts_with(b"Cl") {
            (Element::Cl, false, 2)
        } else if rest.starts_with(b"Br") {
            (Element::Br, false, 2)
        } else {
            let e = match rest[0] {
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
                other => {
                    return Err(SmilesError::UnknownElement {
                        symbol: (other as char).to_string(),
                        pos: at,
                    })
                }
            };
            (e.0, e.1, 1)
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        self.atoms.push(atom);
        Ok(self.atoms.len() - 1)
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(syntax(self.pos, "isotopes are not supported"));
        }
        let sym_at = self.pos;
        let (element, aromatic) = self.bracket_symbol()?;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.bracket = true;

        if matches!(self.peek(), Some(b'@')) {
            return Err(syntax(self.pos, "chirality markers are not supported"));
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            atom.hydrogens = self.number().unwrap_or(1).min(u8::MAX as u32) as u8;
        }
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let mut magnitude = 1i32;
            if let Some(n) = self.number() {
                magnitude = n as i32;
            } else {
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    magnitude += 1;
                }
            }
            if magnitude > 7 {
                return Err(syntax(sym_at, "formal charge out of range"));
            }
            atom.charge = if sign == b'+' { magnitude } else { -magnitude } as i8;
        }
        if self.peek() == Some(b':') {
            // atom-map labels carry no chemistry
            self.pos += 1;
            if self.number().is_none() {
                return Err(syntax(self.pos, "expected atom-map number after ':'"));
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(c) => {
                return Err(syntax(
                    self.pos,
                    format!("unexpected '{}' inside bracket atom", c as char),
                ))
            }
            None => return Err(syntax(open, "unclosed bracket atom")),
        }
        self.atoms.push(atom);
        Ok(self.atoms.len() - 1)
    }

    fn bracket_symbol(&mut self) -> Result<(Element, bool), SmilesError> {
        let at = self.pos;
        let rest = &self.s[self.pos..];
        let Some(&first) = rest.first() else {
            return Err(syntax(at, "unclosed bracket atom"));
        };
        if !first.is_ascii_alphabetic() {
            return Err(syntax(at, "expected element symbol"));
        }
        if rest.len() >= 2 && rest[1].is_ascii_lowercase() {
            let two = std::str::from_utf8(&rest[..2]).unwrap_or_default();
            if let Some(found) = Element::from_bracket_symbol(two) {
                self.pos += 2;
                return Ok(found);
            }
        }
        let one = (first as char).to_string();
        if let Some(found) = Element::from_bracket_symbol(&one) {
            self.pos += 1;
            return Ok(found);
        }
        let len = if rest.len() >= 2 && rest[1].is_ascii_lowercase() { 2 } else { 1 };
        Err(SmilesError::UnknownElement {
            symbol: String::from_utf8_lossy(&rest[..len]).into_owned(),
            pos: at,
        })
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }
}

/// Removes neutral `[H]` atoms attached to a single heavy atom, crediting
/// the hydrogen to that atom.
fn fold_explicit_hydrogens(mut atoms: Vec<Atom>, bonds: Vec<Bond>) -> (Vec<Atom>, Vec<Bond>) {
    let mut degree = vec![0usize; atoms.len()];
    for b in &bonds {
        degree[b.a] += 1;
        degree[b.b] += 1;
    }
    let mut drop = vec![false; atoms.len()];
    for b in &bonds {
        for (h, heavy) in [(b.a, b.b), (b.b, b.a)] {
            let is_plain_h = atoms[h].element == Element::H
                && atoms[h].charge == 0
                && atoms[h].hydrogens == 0
                && degree[h] == 1
                && b.order == BondOrder::Single;
            if is_plain_h && atoms[heavy].element != Element::H && !drop[h] {
                drop[h] = true;
                if atoms[heavy].bracket {
                    atoms[heavy].hydrogens += 1;
                }
            }
        }
    }
    if !drop.iter().any(|&d| d) {
        return (atoms, bonds);
    }
    let mut remap = vec![usize::MAX; atoms.len()];
    let mut kept = Vec::new();
    for (i, atom) in atoms.into_iter().enumerate() {
        if !drop[i] {
            remap[i] = kept.len();
            kept.push(atom);
        }
    }
    let bonds = bonds
        .into_iter()
        .filter(|b| !drop[b.a] && !drop[b.b])
        .map(|b| Bond {
            a: remap[b.a],
            b: remap[b.b],
            ..b
        })
        .collect();
    (kept, bonds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methane() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.bond_count(), 0);
        assert_eq!(m.atom(0).hydrogens, 4);
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.bond_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.hydrogens == 1 && a.in_ring));
    }

    #[test]
    fn brackets_and_charges() {
        let m = parse_smiles("c1ccccc1[N+](=O)[O-]").unwrap();
        assert_eq!(m.atom(6).charge, 1);
        assert_eq!(m.atom(8).charge, -1);
        assert_eq!(m.atom(6).hydrogens, 0);
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atom(0).hydrogens, 4);
        let m = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(m.atom(3).hydrogens, 1);
        assert_eq!(m.atom(0).hydrogens, 1);
    }

    #[test]
    fn two_digit_ring_labels() {
        let m = parse_smiles("C%12CCCCC%12").unwrap();
        assert_eq!(m.ring_count(), 1);
    }

    #[test]
    fn explicit_hydrogens_fold() {
        let m = parse_smiles("[H]OC([H])([H])[H]").unwrap();
        assert_eq!(m.atom_count(), 2);
        assert_eq!(m.total_hydrogens(), 4);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(parse_smiles("CC(C").unwrap_err().position(), Some(2));
        assert!(matches!(
            parse_smiles("C1CC").unwrap_err(),
            SmilesError::UnclosedRing { label: 1, pos: 1 }
        ));
        assert!(matches!(
            parse_smiles("C[Xx]").unwrap_err(),
            SmilesError::UnknownElement { pos: 2, .. }
        ));
        assert!(matches!(parse_smiles("CC=").unwrap_err(), SmilesError::Syntax { pos: 2, .. }));
        assert!(matches!(parse_smiles("F/C=C/F").unwrap_err(), SmilesError::Syntax { pos: 1, .. }));
        assert!(matches!(parse_smiles("[13CH4]").unwrap_err(), SmilesError::Syntax { .. }));
        assert_eq!(parse_smiles("").unwrap_err(), SmilesError::Empty);
    }

    #[test]
    fn ring_bond_order_from_either_end() {
        let m = parse_smiles("C=1CCCCC1").unwrap();
        let b = m.bond_between(0, 5).unwrap();
        assert_eq!(m.bonds()[b].order, BondOrder::Double);
        assert!(parse_smiles("C=1CCCCC#1").is_err());
    }

    #[test]
    fn dot_components() {
        let m = parse_smiles("[Na+].[Cl-]").unwrap();
        assert_eq!(m.component_count(), 2);
        assert_eq!(m.atom(1).hydrogens, 0);
    }
}
