//! Discrete smoothness on finite spaces: local Lipschitz constants, cliff
//! detection, the worst-case error bound for smooth interpolants, and an
//! exhaustive-budget convergence check of the search engine.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcts::{lit, search, Proposer, Real, RewardTerms, SearchConfig, SearchTask};

/// Slack allowed when comparing against the bound.
pub const BOUND_TOL: f64 = 1e-12;
pub const MAX_ENUMERABLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("malformed space: {0}")]
    Malformed(String),
    #[error("point {0} is not in the space")]
    NoSuchPoint(usize),
    #[error("the fit does not interpolate the target at point {0}")]
    NotInterpolating(usize),
    #[error("fit exceeds its certified bound: {0}")]
    NotCertified(String),
    #[error("search budget must be at least 1")]
    ZeroBudget,
    #[error("space has {0} points; at most 10000 can be enumerated")]
    TooLarge(usize),
}

/// A finite space with a symmetric distance-1 neighbourhood and a target
/// function.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffSpace<F> {
    points: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    values: Vec<F>,
}

/// On-disk form of a [`CliffSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliffSpaceDocument {
    pub points: Vec<String>,
    pub neighbors: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

impl<F: Real> CliffSpace<F> {
    pub fn new(points: Vec<String>, neighbors: Vec<Vec<usize>>, values: Vec<F>) -> Result<Self, TheoryError> {
        let bad = |m: String| Err(TheoryError::Malformed(m));
        let n = points.len();
        if n == 0 {
            return bad("no points".into());
        }
        if neighbors.len() != n || values.len() != n {
            return bad(format!("{n} points, {} neighbour lists, {} values", neighbors.len(), values.len()));
        }
        let mut seen = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if let Some(j) = seen.insert(p.as_str(), i) {
                return bad(format!("points {j} and {i} are both '{p}'"));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return bad(format!("value of point {i} is not finite"));
        }
        for (i, ns) in neighbors.iter().enumerate() {
            for (k, &j) in ns.iter().enumerate() {
                if j >= n {
                    return bad(format!("point {i} lists neighbour {j} outside the space"));
                }
                if j == i {
                    return bad(format!("point {i} lists itself as a neighbour"));
                }
                if ns[..k].contains(&j) {
                    return bad(format!("point {i} lists neighbour {j} twice"));
                }
                if !neighbors[j].contains(&i) {
                    return bad(format!("neighbourhood not symmetric: {j} is a neighbour of {i} but not vice versa"));
                }
            }
        }
        Ok(CliffSpace {
            points,
            neighbors,
            values,
        })
    }

    /// Every string of length `len` over `alphabet`; neighbours differ in
    /// exactly one position.
    pub fn strings(alphabet: &[char], len: usize, f: impl Fn(&str) -> F) -> Result<Self, TheoryError> {
        let a = alphabet.len();
        let size = a.checked_pow(len as u32).filter(|s| *s <= MAX_ENUMERABLE);
        let Some(size) = size else {
            return Err(TheoryError::TooLarge(usize::MAX));
        };
        if a == 0 {
            return Err(TheoryError::Malformed("empty alphabet".into()));
        }
        let decode = |mut i: usize| -> Vec<usize> {
            let mut d = vec![0; len];
            for slot in d.iter_mut().rev() {
                *slot = i % a;
                i /= a;
            }
            d
        };
        let encode = |d: &[usize]| d.iter().fold(0, |acc, x| acc * a + x);
        let mut points = Vec::with_capacity(size);
        let mut neighbors = Vec::with_capacity(size);
        for i in 0..size {
            let d = decode(i);
            points.push(d.iter().map(|&c| alphabet[c]).collect::<String>());
            let mut ns = Vec::new();
            for pos in 0..len {
                for c in 0..a {
                    if c != d[pos] {
                        let mut e = d.clone();
                        e[pos] = c;
                        ns.push(encode(&e));
                    }
                }
            }
            neighbors.push(ns);
        }
        let values = points.iter().map(|p| f(p)).collect();
        Self::new(points, neighbors, values)
    }

    pub fn from_document(doc: &CliffSpaceDocument) -> Result<Self, TheoryError> {
        Self::new(doc.points.clone(), doc.neighbors.clone(), doc.values.iter().map(|v| lit(*v)).collect())
    }

    pub fn to_document(&self) -> CliffSpaceDocument {
        CliffSpaceDocument {
            points: self.points.clone(),
            neighbors: self.neighbors.clone(),
            values: self.values.iter().map(|v| v.to_f64().expect("finite")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &str {
        &self.points[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn with_values(&self, values: Vec<F>) -> Result<Self, TheoryError> {
        Self::new(self.points.clone(), self.neighbors.clone(), values)
    }

    /// Hop distance from `from` to every point; `None` when unreachable.
    pub fn distances(&self, from: usize) -> Vec<Option<usize>> {
        let mut d = vec![None; self.len()];
        d[from] = Some(0);
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            let du = d[u].expect("queued points have a distance");
            for &v in &self.neighbors[u] {
                if d[v].is_none() {
                    d[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
        d
    }
}

/// max over neighbours y of |f(x) − f(y)|; zero for isolated points.
pub fn local_lipschitz<F: Real>(f: &[F], x: usize, space: &CliffSpace<F>) -> Result<F, TheoryError> {
    if x >= space.len() || f.len() != space.len() {
        return Err(TheoryError::NoSuchPoint(x));
    }
    Ok(space.neighbors(x).iter().fold(F::zero(), |m, &y| m.max((f[x] - f[y]).abs())))
}

/// Points where the target's local constant is at least `k`.
pub fn find_cliffs<F: Real>(space: &CliffSpace<F>, k: F) -> Vec<usize> {
    (0..space.len())
        .filter(|&x| local_lipschitz(space.values(), x, space).expect("x in range") >= k)
        .collect()
}

/// A predictor on the space together with a bound on its local constant
/// that has been checked at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit<F> {
    pub values: Vec<F>,
    pub kappa: F,
}

impl<F: Real> SmoothFit<F> {
    /// Verifies `values` against `kappa` by a full scan.
    pub fn certify(space: &CliffSpace<F>, values: Vec<F>, kappa: F) -> Result<Self, TheoryError> {
        if values.len() != space.len() {
            return Err(TheoryError::Malformed("fit has the wrong length".into()));
        }
        let slack = lit::<F>(BOUND_TOL) * (F::one() + kappa);
        for x in 0..space.len() {
            let l = local_lipschitz(&values, x, space)?;
            if l > kappa + slack {
                return Err(TheoryError::NotCertified(format!(
                    "local constant {l:?} at point {x} exceeds {kappa:?}"
                )));
            }
        }
        Ok(SmoothFit { values, kappa })
    }

    /// The κ-Lipschitz function closest to the target from below, clamped
    /// into the cone of slope κ around `anchor` so it matches the target
    /// exactly there.
    pub fn clamped(space: &CliffSpace<F>, anchor: usize, kappa: F) -> Result<Self, TheoryError> {
        if anchor >= space.len() {
            return Err(TheoryError::NoSuchPoint(anchor));
        }
        if !(kappa >= F::zero()) {
            return Err(TheoryError::Malformed("kappa must be non-negative".into()));
        }
        // largest κ-Lipschitz minorant, by relaxation to a fixed point
        let mut m = space.values().to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for y in 0..space.len() {
                for &z in space.neighbors(y) {
                    let via = m[z] + kappa;
                    if via < m[y] {
                        m[y] = via;
                        changed = true;
                    }
                }
            }
        }
        let a = space.values()[anchor];
        let d = space.distances(anchor);
        let values = m
            .into_iter()
            .zip(d)
            .map(|(v, dist)| match dist {
                Some(h) => {
                    let r = kappa * lit(h as f64);
                    v.min(a + r).max(a - r)
                }
                None => v,
            })
            .collect();
        Self::certify(space, values, kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck<F> {
    pub point: usize,
    pub local_k: F,
    pub kappa: F,
    pub bound: F,
    pub observed: F,
    pub holds: bool,
}

/// At a point where the fit interpolates the target, the worst error over
/// its neighbours is at least K(x) − κ.
pub fn error_lower_bound_check<F: Real>(
    space: &CliffSpace<F>,
    fit: &SmoothFit<F>,
    x: usize,
) -> Result<BoundCheck<F>, TheoryError> {
    if x >= space.len() {
        return Err(TheoryError::NoSuchPoint(x));
    }
    let target = space.values();
    if fit.values[x] != target[x] {
        return Err(TheoryError::NotInterpolating(x));
    }
    let local_k = local_lipschitz(target, x, space)?;
    let bound = local_k - fit.kappa;
    let observed = space
        .neighbors(x)
        .iter()
        .fold(F::zero(), |m, &y| m.max((fit.values[y] - target[y]).abs()));
    Ok(BoundCheck {
        point: x,
        local_k,
        kappa: fit.kappa,
        bound,
        observed,
        holds: observed >= bound - lit(BOUND_TOL),
    })
}

/// A generated space with one planted cliff.
#[derive(Debug, Clone)]
pub struct CliffInstance<F> {
    pub space: CliffSpace<F>,
    pub cliff: usize,
    pub k: F,
    pub kappa: F,
}

/// Random string space with a gentle background and a cliff planted at one
/// point so that its local constant is exactly `k ∈ [1, 5]`; κ is drawn
/// from `[0, k)`.
pub fn generate_instance<F: Real>(rng: &mut ChaCha8Rng) -> CliffInstance<F> {
    let alphabet: Vec<char> = "ACGT".chars().take(rng.gen_range(2..=4)).collect();
    let len = rng.gen_range(2..=4);
    // one substitution moves the background by less than 0.9, so any two
    // neighbours of the cliff differ by less than 1.8
    let slope: f64 = rng.gen_range(0.0..0.3);
    let weights: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let base = move |s: &str| -> f64 {
        s.chars()
            .zip(&weights)
            .map(|(c, w)| w * slope * (c as u32 % 4) as f64)
            .sum()
    };
    let space = CliffSpace::<F>::strings(&alphabet, len, |s| lit(base(s))).expect("small space");
    let cliff = rng.gen_range(0..space.len());
    let k: f64 = rng.gen_range(1.0..=5.0);
    let mut values = space.values().to_vec();
    let low = space
        .neighbors(cliff)
        .iter()
        .fold(F::infinity(), |m, &y| m.min(values[y]));
    values[cliff] = low + lit(k);
    let space = space.with_values(values).expect("same shape");
    let local = local_lipschitz(space.values(), cliff, &space).expect("in range");
    let kappa = lit::<F>(rng.gen_range(0.0..1.0)) * local;
    CliffInstance {
        space,
        cliff,
        k: local,
        kappa,
    }
}

/// Runs the bound check on `count` generated instances.
pub fn bound_sweep<F: Real>(seed: u64, count: usize) -> Vec<BoundCheck<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let inst = generate_instance::<F>(&mut rng);
            let fit = SmoothFit::clamped(&inst.space, inst.cliff, inst.kappa).expect("construction is certified");
            error_lower_bound_check(&inst.space, &fit, inst.cliff).expect("fit interpolates at the anchor")
        })
        .collect()
}

/// Walk over a [`CliffSpace`] rewarded by the target value.
pub struct SpaceWalk<'a, F> {
    pub space: &'a CliffSpace<F>,
    pub start: usize,
}

impl<F: Real> SearchTask<F> for SpaceWalk<'_, F> {
    type State = usize;
    type Action = usize;

    fn root(&self) -> usize {
        self.start
    }

    fn key(&self, s: &usize) -> String {
        self.space.point(*s).to_string()
    }

    fn describe_state(&self, s: &usize) -> String {
        self.space.point(*s).to_string()
    }

    fn describe_action(&self, a: &usize) -> String {
        format!("move to {}", self.space.point(*a))
    }

    fn apply(&self, s: &usize, a: &usize) -> Result<usize, String> {
        if self.space.neighbors(*s).contains(a) {
            Ok(*a)
        } else {
            Err(format!("{} is not a neighbour of {}", self.space.point(*a), self.space.point(*s)))
        }
    }

    fn evaluate(&self, s: &usize) -> Result<RewardTerms<F>, String> {
        Ok(RewardTerms {
            task: self.space.values()[*s],
            heuristic: F::zero(),
            penalty: F::zero(),
        })
    }
}

/// Proposes every neighbour, in an order shuffled per state from `seed`.
pub struct NeighborProposer {
    pub seed: u64,
}

impl<'a, F: Real> Proposer<F, SpaceWalk<'a, F>> for NeighborProposer {
    fn id(&self) -> String {
        format!("neighbors:{}", self.seed)
    }

    fn propose(&self, task: &SpaceWalk<'a, F>, state: &usize, _k: usize) -> Result<Vec<usize>, String> {
        let mut v = task.space.neighbors(*state).to_vec();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ (*state as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        Ok(v)
    }
}

/// Searches from point 0 with `budget` iterations and reports whether the
/// best value found is the global maximum of the target.
pub fn exhaustive_convergence_check<F: Real>(space: &CliffSpace<F>, budget: usize, seed: u64) -> Result<bool, TheoryError> {
    if budget == 0 {
        return Err(TheoryError::ZeroBudget);
    }
    if space.len() > MAX_ENUMERABLE {
        return Err(TheoryError::TooLarge(space.len()));
    }
    let width = (0..space.len()).map(|i| space.neighbors(i).len()).max().unwrap_or(0).max(1);
    let config = SearchConfig {
        iterations: budget,
        exploration: lit(std::f64::consts::SQRT_2),
        width,
        lambda: F::zero(),
        gamma: F::zero(),
        seed,
        dedup: true,
        r_min: lit(crate::mcts::R_MIN),
    };
    let walk = SpaceWalk { space, start: 0 };
    let out = search(&walk, &NeighborProposer { seed }, config).map_err(|e| TheoryError::Malformed(e.to_string()))?;
    let truth = space.values().iter().fold(F::neg_infinity(), |m, v| m.max(*v));
    Ok(space.values()[out.best_state()] == truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(values: &[f64]) -> CliffSpace<f64> {
        let n = values.len();
        let points = (0..n).map(|i| format!("p{i}")).collect();
        let neighbors = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        CliffSpace::new(points, neighbors, values.to_vec()).unwrap()
    }

    #[test]
    fn lipschitz_examples() {
        let s = CliffSpace::<f64>::strings(&['a', 'b'], 3, |_| 1.0).unwrap();
        assert!((0..s.len()).all(|x| local_lipschitz(s.values(), x, &s).unwrap() == 0.0));
        assert!(find_cliffs(&s, 0.5).is_empty());

        let step = path(&[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(local_lipschitz(step.values(), 1, &step).unwrap(), 2.0);
        assert_eq!(find_cliffs(&step, 2.0), [1, 2]);
        assert!(local_lipschitz(step.values(), 9, &step).is_err());
    }

    #[test]
    fn string_space_shape() {
        let s = CliffSpace::<f64>::strings(&['a', 'b', 'c'], 2, |p| p.len() as f64).unwrap();
        assert_eq!(s.len(), 9);
        assert!((0..9).all(|i| s.neighbors(i).len() == 4));
        assert_eq!(s.point(5), "bc");
        let back = CliffSpace::<f64>::from_document(&s.to_document()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn asymmetric_neighbours_rejected() {
        let r = CliffSpace::new(vec!["a".into(), "b".into()], vec![vec![1], vec![]], vec![0.0, 1.0]);
        assert!(matches!(r, Err(TheoryError::Malformed(_))));
    }

    #[test]
    fn clamped_fit_meets_bound() {
        let s = path(&[0.0, 0.0, 2.0, 2.0, 2.0]);
        let fit = SmoothFit::clamped(&s, 2, 0.1).unwrap();
        assert_eq!(fit.values[2], 2.0);
        let c = error_lower_bound_check(&s, &fit, 2).unwrap();
        assert!((c.bound - 1.9).abs() < 1e-12);
        assert!(c.observed >= 1.9 - 1e-12 && c.holds);

        let fit = SmoothFit::clamped(&s, 1, 2.0).unwrap();
        let c = error_lower_bound_check(&s, &fit, 1).unwrap();
        assert_eq!(c.bound, 0.0);
        assert!(c.holds);

        let mut wrong = fit.clone();
        wrong.values[1] += 1.0;
        assert_eq!(error_lower_bound_check(&s, &wrong, 1), Err(TheoryError::NotInterpolating(1)));
        assert!(SmoothFit::certify(&s, s.values().to_vec(), 0.5).is_err());
    }

    #[test]
    fn sweep_holds() {
        let checks = bound_sweep::<f64>(7, 50);
        assert!(checks.iter().all(|c| c.holds && (1.0 - 1e-9..=5.0 + 1e-9).contains(&c.local_k) && c.kappa < c.local_k));
    }

    #[test]
    fn six_state_toy_converges() {
        let s = path(&[0.3, 0.1, 0.9, 0.2, 1.5, 0.4]);
        assert!(exhaustive_convergence_check(&s, 6, 0).unwrap());
        assert_eq!(exhaustive_convergence_check(&s, 0, 0), Err(TheoryError::ZeroBudget));
    }

    #[test]
    fn tiny_budget_is_not_guaranteed() {
        let s = path(&(0..100).map(|i| i as f64).collect::<Vec<_>>());
        assert!(!exhaustive_convergence_check(&s, 1, 0).unwrap());
    }
}
