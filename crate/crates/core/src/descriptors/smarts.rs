//! Restricted SMARTS evaluator for the parameter tables.
//!
//! Covers tree-shaped patterns only (no ring closures): atom primitives
//! `* a A #n`, element symbols, `H X D v R` with counts, charges, `$(...)`
//! recursion, the operators `! & , ;`, and bond primitives `- = # : ~ @`.
//! `D` counts heavy neighbours; `H` and `X` include every hydrogen.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::molgraph::{BondOrder, Element, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("table pattern '{pattern}' at {pos}: {msg}")]
pub struct SmartsError {
    pub pattern: String,
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone)]
enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

impl<P> Expr<P> {
    fn eval(&self, f: &mut impl FnMut(&P) -> bool) -> bool {
        match self {
            Expr::Prim(p) => f(p),
            Expr::Not(e) => !e.eval(f),
            Expr::And(es) => es.iter().all(|e| e.eval(f)),
            Expr::Or(es) => es.iter().any(|e| e.eval(f)),
        }
    }
}

#[derive(Debug, Clone)]
enum AtomPrim {
    Any,
    Aromatic(bool),
    Number(u8),
    Element(u8, bool),
    Hydrogens(u8),
    Connectivity(u8),
    Degree(u8),
    Valence(u8),
    Ring(bool),
    Charge(i8),
    Recursive(Box<Smarts>),
}

#[derive(Debug, Clone, Copy)]
enum BondPrim {
    Order(BondOrder),
    Any,
    Ring,
}

#[derive(Debug, Clone)]
struct PatAtom {
    expr: Expr<AtomPrim>,
    /// Parent index and bond expression (`None` is single-or-aromatic).
    parent: Option<(usize, Option<Expr<BondPrim>>)>,
}

/// A parsed table pattern. Atoms are stored in DFS order so every atom's
/// parent precedes it.
#[derive(Debug, Clone)]
pub struct Smarts {
    atoms: Vec<PatAtom>,
    source: String,
}

/// Atom-level view used for matching, optionally with hydrogens as nodes.
#[derive(Debug, Clone)]
pub struct MolView {
    z: Vec<u8>,
    aromatic: Vec<bool>,
    charge: Vec<i8>,
    hydrogens: Vec<u8>,
    in_ring: Vec<bool>,
    adj: Vec<Vec<(usize, BondOrder, bool)>>,
    heavy_atoms: usize,
}

impl MolView {
    /// Hydrogens stay implicit counts.
    pub fn implicit(mol: &Molecule) -> MolView {
        Self::build(mol, false)
    }

    /// Every hydrogen becomes a node appended after the original atoms.
    pub fn explicit(mol: &Molecule) -> MolView {
        Self::build(mol, true)
    }

    fn build(mol: &Molecule, expand: bool) -> MolView {
        let n = mol.atom_count();
        let mut v = MolView {
            z: mol.atoms().iter().map(|a| a.element.atomic_number()).collect(),
            aromatic: mol.atoms().iter().map(|a| a.aromatic).collect(),
            charge: mol.atoms().iter().map(|a| a.charge).collect(),
            hydrogens: mol.atoms().iter().map(|a| a.hydrogens).collect(),
            in_ring: mol.atoms().iter().map(|a| a.in_ring).collect(),
            adj: vec![Vec::new(); n],
            heavy_atoms: n,
        };
        for b in mol.bonds() {
            v.adj[b.a].push((b.b, b.order, b.in_ring));
            v.adj[b.b].push((b.a, b.order, b.in_ring));
        }
        // explicit H atoms already in the graph count towards their parent
        for i in 0..n {
            let extra = v.adj[i].iter().filter(|&&(j, _, _)| v.z[j] == 1).count() as u8;
            v.hydrogens[i] += extra;
        }
        if expand {
            for i in 0..n {
                for _ in 0..mol.atom(i).hydrogens {
                    let h = v.z.len();
                    v.z.push(1);
                    v.aromatic.push(false);
                    v.charge.push(0);
                    v.hydrogens.push(0);
                    v.in_ring.push(false);
                    v.adj.push(vec![(i, BondOrder::Single, false)]);
                    v.adj[i].push((h, BondOrder::Single, false));
                }
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Number of atoms of the source molecule (hydrogen nodes come after).
    pub fn heavy_atoms(&self) -> usize {
        self.heavy_atoms
    }

    pub fn atomic_number(&self, i: usize) -> u8 {
        self.z[i]
    }

    fn total_degree(&self, i: usize) -> usize {
        let explicit_h = self.adj[i].iter().filter(|&&(j, _, _)| self.z[j] == 1).count();
        self.adj[i].len() + self.hydrogens[i] as usize - explicit_h
    }

    fn heavy_degree(&self, i: usize) -> usize {
        self.adj[i].iter().filter(|&&(j, _, _)| self.z[j] != 1).count()
    }

    /// Twice the total valence, so aromatic bonds count 3.
    fn valence2(&self, i: usize) -> usize {
        let explicit_h = self.adj[i].iter().filter(|&&(j, _, _)| self.z[j] == 1).count();
        let bonds: usize = self.adj[i]
            .iter()
            .map(|&(_, o, _)| match o {
                BondOrder::Single => 2,
                BondOrder::Double => 4,
                BondOrder::Triple => 6,
                BondOrder::Aromatic => 3,
            })
            .sum();
        bonds + 2 * (self.hydrogens[i] as usize - explicit_h)
    }
}

impl Smarts {
    pub fn parse(text: &str) -> Result<Smarts, SmartsError> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
            text,
        };
        let atoms = p.chain()?;
        if p.pos != p.s.len() {
            return Err(p.err("unexpected character"));
        }
        if atoms.is_empty() {
            return Err(p.err("empty pattern"));
        }
        Ok(Smarts {
            atoms,
            source: text.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Whether some embedding maps the first pattern atom onto `root`.
    pub fn matches_at(&self, view: &MolView, root: usize) -> bool {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut used = vec![false; view.len()];
        if !self.atom_ok(view, 0, root) {
            return false;
        }
        map[0] = root;
        used[root] = true;
        self.extend(view, 1, &mut map, &mut used, &mut |_| true)
    }

    /// Embeddings counted once per distinct atom set.
    pub fn count_unique(&self, view: &MolView) -> usize {
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        for root in 0..view.len() {
            if !self.atom_ok(view, 0, root) {
                continue;
            }
            let mut map = vec![usize::MAX; self.atoms.len()];
            let mut used = vec![false; view.len()];
            map[0] = root;
            used[root] = true;
            self.extend(view, 1, &mut map, &mut used, &mut |m| {
                let mut key = m.to_vec();
                key.sort_unstable();
                seen.insert(key);
                false
            });
        }
        seen.len()
    }

    fn atom_ok(&self, view: &MolView, k: usize, i: usize) -> bool {
        self.atoms[k].expr.eval(&mut |p| atom_prim(p, view, i))
    }

    /// Returns true once `found` asks to stop.
    fn extend(
        &self,
        view: &MolView,
        k: usize,
        map: &mut [usize],
        used: &mut [bool],
        found: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if k == self.atoms.len() {
            return found(map);
        }
        let (parent, bond) = self.atoms[k].parent.as_ref().expect("non-root has a parent");
        let from = map[*parent];
        for &(j, order, ring) in &view.adj[from] {
            if used[j] || !bond_ok(bond.as_ref(), order, ring) || !self.atom_ok(view, k, j) {
                continue;
            }
            map[k] = j;
            used[j] = true;
            let stop = self.extend(view, k + 1, map, used, found);
            used[j] = false;
            if stop {
                return true;
            }
        }
        map[k] = usize::MAX;
        false
    }
}

fn bond_ok(expr: Option<&Expr<BondPrim>>, order: BondOrder, ring: bool) -> bool {
    match expr {
        None => matches!(order, BondOrder::Single | BondOrder::Aromatic),
        Some(e) => e.eval(&mut |p| match p {
            BondPrim::Order(o) => *o == order,
            BondPrim::Any => true,
            BondPrim::Ring => ring,
        }),
    }
}

fn atom_prim(p: &AtomPrim, view: &MolView, i: usize) -> bool {
    match p {
        AtomPrim::Any => true,
        AtomPrim::Aromatic(a) => view.aromatic[i] == *a,
        AtomPrim::Number(z) => view.z[i] == *z,
        AtomPrim::Element(z, a) => view.z[i] == *z && view.aromatic[i] == *a,
        AtomPrim::Hydrogens(h) => view.hydrogens[i] == *h,
        AtomPrim::Connectivity(x) => view.total_degree(i) == *x as usize,
        AtomPrim::Degree(d) => view.heavy_degree(i) == *d as usize,
        AtomPrim::Valence(v) => view.valence2(i) == 2 * *v as usize,
        AtomPrim::Ring(r) => view.in_ring[i] == *r,
        AtomPrim::Charge(q) => view.charge[i] == *q,
        AtomPrim::Recursive(s) => s.matches_at(view, i),
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> SmartsError {
        SmartsError {
            pattern: self.text.to_string(),
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u8> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn chain(&mut self) -> Result<Vec<PatAtom>, SmartsError> {
        let mut atoms = Vec::new();
        let first = self.atom()?.ok_or_else(|| self.err("expected atom"))?;
        atoms.push(PatAtom {
            expr: first,
            parent: None,
        });
        self.tail(&mut atoms, 0)?;
        Ok(atoms)
    }

    fn tail(&mut self, atoms: &mut Vec<PatAtom>, mut prev: usize) -> Result<(), SmartsError> {
        loop {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    self.bonded_chain(atoms, prev)?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("unclosed branch"));
                    }
                    self.pos += 1;
                }
                Some(c) if c.is_ascii_digit() || c == b'%' => {
                    return Err(self.err("ring closures are not supported"));
                }
                Some(b')') | None => return Ok(()),
                Some(_) => {
                    let bond = self.bond()?;
                    let expr = self.atom()?.ok_or_else(|| self.err("expected atom"))?;
                    atoms.push(PatAtom {
                        expr,
                        parent: Some((prev, bond)),
                    });
                    prev = atoms.len() - 1;
                }
            }
        }
    }

    fn bonded_chain(&mut self, atoms: &mut Vec<PatAtom>, from: usize) -> Result<(), SmartsError> {
        let bond = self.bond()?;
        let expr = self.atom()?.ok_or_else(|| self.err("expected atom in branch"))?;
        atoms.push(PatAtom {
            expr,
            parent: Some((from, bond)),
        });
        let at = atoms.len() - 1;
        self.tail(atoms, at)
    }

    fn bond(&mut self) -> Result<Option<Expr<BondPrim>>, SmartsError> {
        if !self
            .peek()
            .is_some_and(|c| b"-=#:~@!".contains(&c))
        {
            return Ok(None);
        }
        self.expr(Parser::bond_prim, false).map(Some)
    }

    fn bond_prim(&mut self) -> Result<Option<BondPrim>, SmartsError> {
        let prim = match self.peek() {
            Some(b'-') => BondPrim::Order(BondOrder::Single),
            Some(b'=') => BondPrim::Order(BondOrder::Double),
            Some(b'#') => BondPrim::Order(BondOrder::Triple),
            Some(b':') => BondPrim::Order(BondOrder::Aromatic),
            Some(b'~') => BondPrim::Any,
            Some(b'@') => BondPrim::Ring,
            _ => return Ok(None),
        };
        self.pos += 1;
        Ok(Some(prim))
    }

    fn atom(&mut self) -> Result<Option<Expr<AtomPrim>>, SmartsError> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let e = self.expr(Parser::atom_prim, true)?;
                if self.peek() != Some(b']') {
                    return Err(self.err("unclosed bracket"));
                }
                self.pos += 1;
                Ok(Some(e))
            }
            Some(_) => Ok(self.element(false)?.map(Expr::Prim)),
            None => Ok(None),
        }
    }

    /// Element symbol, `*`, `a` or `A`. Inside brackets any element works.
    fn element(&mut self, bracket: bool) -> Result<Option<AtomPrim>, SmartsError> {
        let Some(c) = self.peek() else { return Ok(None) };
        let prim = match c {
            b'*' => {
                self.pos += 1;
                AtomPrim::Any
            }
            b'a' => {
                self.pos += 1;
                AtomPrim::Aromatic(true)
            }
            b'A' => {
                self.pos += 1;
                AtomPrim::Aromatic(false)
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                self.pos += 1;
                let sym = (c as char).to_ascii_uppercase().to_string();
                let e: Element = sym.parse().map_err(|_| self.err("unknown element"))?;
                AtomPrim::Element(e.atomic_number(), true)
            }
            b'A'..=b'Z' => {
                let two = self
                    .s
                    .get(self.pos..self.pos + 2)
                    .and_then(|w| std::str::from_utf8(w).ok())
                    .and_then(|w| w.parse::<Element>().ok());
                let one = std::str::from_utf8(&self.s[self.pos..self.pos + 1])
                    .ok()
                    .and_then(|w| w.parse::<Element>().ok());
                let (e, len) = match (two, one) {
                    (Some(e), _) if bracket || matches!(e, Element::Cl | Element::Br) => (e, 2),
                    (_, Some(e)) if bracket || e.is_organic_subset() => (e, 1),
                    _ => return Err(self.err("unknown element")),
                };
                if e == Element::H {
                    return Ok(None);
                }
                self.pos += len;
                AtomPrim::Element(e.atomic_number(), false)
            }
            _ => return Ok(None),
        };
        Ok(Some(prim))
    }

    fn atom_prim(&mut self) -> Result<Option<AtomPrim>, SmartsError> {
        let Some(c) = self.peek() else { return Ok(None) };
        let prim = match c {
            b'#' => {
                self.pos += 1;
                AtomPrim::Number(self.number().ok_or_else(|| self.err("expected atomic number"))?)
            }
            b'H' | b'X' | b'D' | b'v' | b'R' => {
                self.pos += 1;
                let n = self.number();
                match c {
                    b'H' => AtomPrim::Hydrogens(n.unwrap_or(1)),
                    b'X' => AtomPrim::Connectivity(n.unwrap_or(1)),
                    b'D' => AtomPrim::Degree(n.unwrap_or(1)),
                    b'v' => AtomPrim::Valence(n.unwrap_or(1)),
                    _ => match n {
                        None => AtomPrim::Ring(true),
                        Some(0) => AtomPrim::Ring(false),
                        Some(_) => return Err(self.err("ring membership counts are not supported")),
                    },
                }
            }
            b'+' | b'-' => {
                let sign: i8 = if c == b'+' { 1 } else { -1 };
                self.pos += 1;
                let mut q = 1i8;
                if let Some(n) = self.number() {
                    q = n as i8;
                } else {
                    while self.peek() == Some(c) {
                        self.pos += 1;
                        q += 1;
                    }
                }
                AtomPrim::Charge(sign * q)
            }
            b'$' => {
                self.pos += 1;
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected '(' after '$'"));
                }
                let start = self.pos + 1;
                let mut depth = 0;
                let mut end = None;
                for (k, &ch) in self.s[self.pos..].iter().enumerate() {
                    match ch {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                end = Some(self.pos + k);
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                let end = end.ok_or_else(|| self.err("unclosed recursive pattern"))?;
                let inner = std::str::from_utf8(&self.s[start..end]).expect("ascii slice");
                self.pos = end + 1;
                AtomPrim::Recursive(Box::new(Smarts::parse(inner)?))
            }
            _ => return self.element(true),
        };
        Ok(Some(prim))
    }

    /// `;` binds loosest, then `,`, then `&` or juxtaposition, then `!`.
    fn expr<P>(
        &mut self,
        prim: fn(&mut Parser<'a>) -> Result<Option<P>, SmartsError>,
        bracket: bool,
    ) -> Result<Expr<P>, SmartsError> {
        let mut low = vec![self.or_expr(prim, bracket)?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            low.push(self.or_expr(prim, bracket)?);
        }
        Ok(collapse(low, Expr::And))
    }

    fn or_expr<P>(
        &mut self,
        prim: fn(&mut Parser<'a>) -> Result<Option<P>, SmartsError>,
        bracket: bool,
    ) -> Result<Expr<P>, SmartsError> {
        let mut alts = vec![self.and_expr(prim, bracket)?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            alts.push(self.and_expr(prim, bracket)?);
        }
        Ok(collapse(alts, Expr::Or))
    }

    fn and_expr<P>(
        &mut self,
        prim: fn(&mut Parser<'a>) -> Result<Option<P>, SmartsError>,
        bracket: bool,
    ) -> Result<Expr<P>, SmartsError> {
        let mut terms = Vec::new();
        loop {
            if self.peek() == Some(b'&') {
                self.pos += 1;
            }
            let mut negate = false;
            while self.peek() == Some(b'!') {
                self.pos += 1;
                negate = !negate;
            }
            match prim(self)? {
                Some(p) => {
                    let e = Expr::Prim(p);
                    terms.push(if negate { Expr::Not(Box::new(e)) } else { e });
                }
                None if negate => return Err(self.err("dangling '!'")),
                None => break,
            }
            if !bracket && !self.peek().is_some_and(|c| b"-=#:~@!&".contains(&c)) {
                break;
            }
        }
        if terms.is_empty() {
            return Err(self.err("expected primitive"));
        }
        Ok(collapse(terms, Expr::And))
    }
}

fn collapse<P>(mut es: Vec<Expr<P>>, wrap: fn(Vec<Expr<P>>) -> Expr<P>) -> Expr<P> {
    if es.len() == 1 {
        es.pop().expect("one element")
    } else {
        wrap(es)
    }
}
