use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Chemical elements understood by the parser.
///
/// The organic subset (B, C, N, O, P, S, F, Cl, Br, I) may appear without
/// brackets; everything else must be written as a bracket atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    Li,
    B,
    C,
    N,
    O,
    F,
    Na,
    Mg,
    Si,
    P,
    S,
    Cl,
    K,
    Ca,
    Se,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 18] = [
        Element::H,
        Element::Li,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Na,
        Element::Mg,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::K,
        Element::Ca,
        Element::Se,
        Element::Br,
        Element::I,
    ];

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::Li => 3,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Na => 11,
            Element::Mg => 12,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::K => 19,
            Element::Ca => 20,
            Element::Se => 34,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::Li => "Li",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Na => "Na",
            Element::Mg => "Mg",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::K => "K",
            Element::Ca => "Ca",
            Element::Se => "Se",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    /// Standard atomic weight in g/mol (IUPAC conventional values).
    pub fn atomic_weight(self) -> f64 {
        match self {
            Element::H => 1.008,
            Element::Li => 6.941,
            Element::B => 10.812,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::Na => 22.99,
            Element::Mg => 24.305,
            Element::Si => 28.086,
            Element::P => 30.974,
            Element::S => 32.067,
            Element::Cl => 35.453,
            Element::K => 39.098,
            Element::Ca => 40.078,
            Element::Se => 78.971,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }

    pub fn is_organic_subset(self) -> bool {
        matches!(
            self,
            Element::B
                | Element::C
                | Element::N
                | Element::O
                | Element::P
                | Element::S
                | Element::F
                | Element::Cl
                | Element::Br
                | Element::I
        )
    }

    pub fn is_halogen(self) -> bool {
        matches!(self, Element::F | Element::Cl | Element::Br | Element::I)
    }

    /// Elements that may be written aromatic (lowercase).
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S | Element::Se
        )
    }

    /// Neutral-atom valence list, ascending.
    fn neutral_valences(self) -> &'static [u8] {
        match self {
            Element::H => &[1],
            Element::Li | Element::Na | Element::K => &[1],
            Element::Mg | Element::Ca => &[2],
            Element::B => &[3],
            Element::C | Element::Si => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S | Element::Se => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }

    /// Allowed total valences (bond orders plus hydrogens) for this element
    /// carrying `charge`.
    ///
    /// Charged main-group atoms take the valences of their isoelectronic
    /// neighbour: N+ behaves like C, O+ like N, O- like F, C- like N, and so on.
    pub fn allowed_valences(self, charge: i8) -> Vec<u8> {
        if charge == 0 {
            return self.neutral_valences().to_vec();
        }
        let shift = |vals: &[u8], delta: i16| -> Vec<u8> {
            vals.iter()
                .map(|&v| v as i16 + delta)
                .filter(|&v| v >= 0)
                .map(|v| v as u8)
                .collect()
        };
        let q = charge as i16;
        match self {
            Element::N | Element::P | Element::O | Element::S | Element::Se => {
                shift(self.neutral_valences(), q)
            }
            Element::C | Element::Si if q.abs() == 1 => vec![3],
            Element::B if q == -1 => vec![4],
            Element::B if q == 1 => vec![2],
            Element::F | Element::Cl | Element::Br | Element::I if q == -1 => vec![0],
            Element::Cl | Element::Br | Element::I if q == 1 => vec![2],
            Element::Li | Element::Na | Element::K if q == 1 => vec![0],
            Element::Mg | Element::Ca if q == 2 => vec![0],
            Element::H if q.abs() == 1 => vec![0],
            _ => Vec::new(),
        }
    }

    /// Parses an element symbol as it would appear inside brackets. The
    /// second value tells whether the symbol was written aromatic.
    pub fn from_bracket_symbol(sym: &str) -> Option<(Element, bool)> {
        if let Ok(e) = sym.parse::<Element>() {
            return Some((e, false));
        }
        let aromatic = match sym {
            "b" => Element::B,
            "c" => Element::C,
            "n" => Element::N,
            "o" => Element::O,
            "p" => Element::P,
            "s" => Element::S,
            "se" => Element::Se,
            _ => return None,
        };
        Some((aromatic, true))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Element::ALL
            .iter()
            .copied()
            .find(|e| e.symbol() == s)
            .ok_or(())
    }
}
