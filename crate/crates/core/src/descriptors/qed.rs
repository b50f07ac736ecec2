use std::collections::BTreeMap;

use crate::molgraph::{match_pattern, Molecule, Pattern};

use super::smarts::{MolView, Smarts};
use super::tables::ParamTable;
use super::DescriptorError;

pub const QED_PROPERTIES: [&str; 8] = ["MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS"];

const ACCEPTORS: [&str; 11] = [
    "[oH0;X2]",
    "[OH1;X2;v2]",
    "[OH0;X2;v2]",
    "[OH0;X1;v2]",
    "[O-;X1]",
    "[SH0;X2;v2]",
    "[SH0;X1;v2]",
    "[S-;X1]",
    "[nH0;X2]",
    "[NH0;X1;v3]",
    "[$([N;+0;X3;v3]);!$(N[C,S]=O)]",
];

const DONOR: &str = "[$([N;!H0;v3]),$([N;!H0;+1;v4]),$([O,S;H1;+0]),$([n;H1;+0])]";

const LAX_END: &str = "!$(*#*)&!D1&!$(C(F)(F)F)&!$(C(Cl)(Cl)Cl)&!$(C(Br)(Br)Br)&!$(C([CH3])([CH3])[CH3])&!$([CH3])";
const STRICT_EXTRA: &str = "&!$([CD3](=[N,O,S])-!@[#7,O,S!D1])&!$([#7,O,S!D1]-!@[CD3]=[N,O,S])&!$([CD3](=[N+])-!@[#7!D1])&!$([#7!D1]-!@[CD3]=[N+])";

/// Asymmetric double sigmoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ads {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub dmax: f64,
}

impl Ads {
    pub fn desirability(&self, x: f64) -> f64 {
        let exp1 = 1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp();
        let exp2 = 1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp();
        (self.a + self.b / exp1 * (1.0 - 1.0 / exp2)) / self.dmax
    }
}

#[derive(Debug, Clone)]
pub struct QedModel {
    ads: [Ads; 8],
    weights: [f64; 8],
    alerts: Vec<(String, Vec<Pattern>)>,
    acceptors: Vec<Smarts>,
    donor: Smarts,
    rotatable: Smarts,
}

/// The eight raw inputs, in `QED_PROPERTIES` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QedInputs {
    pub mw: f64,
    pub alogp: f64,
    pub hba: usize,
    pub hbd: usize,
    pub psa: f64,
    pub rotb: usize,
    pub arom: usize,
    pub alerts: usize,
}

impl QedInputs {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.mw,
            self.alogp,
            self.hba as f64,
            self.hbd as f64,
            self.psa,
            self.rotb as f64,
            self.arom as f64,
            self.alerts as f64,
        ]
    }
}

impl QedModel {
    pub fn from_table(table: &ParamTable) -> Result<Self, DescriptorError> {
        let mut ads = [Ads {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 1.0,
            f: 1.0,
            dmax: 1.0,
        }; 8];
        let mut weights = [0.0; 8];
        for (k, prop) in QED_PROPERTIES.iter().enumerate() {
            let g = |p: &str| table.get(&format!("ads.{prop}.{p}"));
            ads[k] = Ads {
                a: g("A")?,
                b: g("B")?,
                c: g("C")?,
                d: g("D")?,
                e: g("E")?,
                f: g("F")?,
                dmax: g("DMAX")?,
            };
            weights[k] = table.get(&format!("weight.{prop}"))?;
        }
        let mut grouped: BTreeMap<String, Vec<Pattern>> = BTreeMap::new();
        let mut order = Vec::new();
        for row in &table.rows {
            if let Some(name) = row.id.strip_prefix("alert.") {
                if !grouped.contains_key(name) {
                    order.push(name.to_string());
                }
                grouped
                    .entry(name.to_string())
                    .or_default()
                    .push(Pattern::parse(&row.pattern)?);
            }
        }
        let alerts = order
            .into_iter()
            .map(|name| {
                let pats = grouped.remove(&name).unwrap_or_default();
                (name, pats)
            })
            .collect();
        let acceptors = ACCEPTORS
            .iter()
            .map(|s| Smarts::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let rotatable = format!("[{LAX_END}{STRICT_EXTRA}]-,:;!@[{LAX_END}]");
        Ok(QedModel {
            ads,
            weights,
            alerts,
            acceptors,
            donor: Smarts::parse(DONOR)?,
            rotatable: Smarts::parse(&rotatable)?,
        })
    }

    pub fn alert_names(&self) -> impl Iterator<Item = &str> {
        self.alerts.iter().map(|(n, _)| n.as_str())
    }

    /// Names of the alerts that fire on `mol`.
    pub fn alerts_hit(&self, mol: &Molecule) -> Vec<&str> {
        self.alerts
            .iter()
            .filter(|(_, pats)| pats.iter().any(|p| !match_pattern(mol, p).is_empty()))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Acceptor count used inside the drug-likeness score (broader than
    /// `hba_count`: includes sulfur and ring oxygens, excludes amide N).
    pub fn acceptors(&self, mol: &Molecule) -> usize {
        let view = MolView::implicit(mol);
        self.acceptors.iter().map(|p| p.count_unique(&view)).sum()
    }

    pub fn donors(&self, mol: &Molecule) -> usize {
        self.donor.count_unique(&MolView::implicit(mol))
    }

    /// Acyclic single bonds between non-terminal atoms, excluding
    /// amide-like C-N bonds and bonds to CX3 or tert-butyl groups.
    pub fn rotatable_bonds(&self, mol: &Molecule) -> usize {
        self.rotatable.count_unique(&MolView::implicit(mol))
    }

    pub fn score(&self, inputs: &QedInputs) -> f64 {
        let x = inputs.as_array();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..8 {
            let d = self.ads[k].desirability(x[k]).max(f64::MIN_POSITIVE);
            num += self.weights[k] * d.ln();
            den += self.weights[k];
        }
        (num / den).exp().clamp(0.0, 1.0)
    }
}

/// Rings left after removing aliphatic ring atoms that touch a non-aromatic
/// neighbour.
pub fn aromatic_ring_estimate(mol: &Molecule) -> usize {
    let n = mol.atom_count();
    let removed: Vec<bool> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            !a.aromatic && a.in_ring && mol.neighbors(i).iter().any(|&(j, _)| !mol.atom(j).aromatic)
        })
        .collect();
    let kept = removed.iter().filter(|r| !**r).count();
    let mut edges = 0;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut comps = kept;
    for b in mol.bonds() {
        if removed[b.a] || removed[b.b] {
            continue;
        }
        edges += 1;
        let (x, y) = (find(&mut parent, b.a), find(&mut parent, b.b));
        if x != y {
            parent[x] = y;
            comps -= 1;
        }
    }
    edges + comps - kept
}
