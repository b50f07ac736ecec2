//! Small downstream models and metrics: ridge, logistic regression, CART.

use serde::{Deserialize, Serialize};

use crate::mcts::{lit, Real};

use super::TaskError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Ridge,
    Logistic,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorParams {
    pub ridge_alpha: f64,
    pub logistic_alpha: f64,
    pub logistic_tol: f64,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
}

impl Default for EvaluatorParams {
    fn default() -> Self {
        EvaluatorParams {
            ridge_alpha: 1.0,
            logistic_alpha: 1e-2,
            logistic_tol: 1e-8,
            tree_max_depth: 4,
            tree_min_leaf: 3,
        }
    }
}

/// Column means and scales from training rows; constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler<F> {
    mean: Vec<F>,
    scale: Vec<F>,
}

impl<F: Real> Scaler<F> {
    fn fit(x: &[Vec<F>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = lit::<F>(x.len() as f64);
        let mut mean = vec![F::zero(); d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m = *m + *v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut scale = vec![F::zero(); d];
        for row in x {
            for j in 0..d {
                let dv = row[j] - mean[j];
                scale[j] = scale[j] + dv * dv;
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if !(*s > lit(1e-12)) {
                *s = F::one();
            }
        }
        Scaler { mean, scale }
    }

    fn apply(&self, row: &[F]) -> Vec<F> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (*v - *m) / *s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<F> {
    Leaf(F),
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<F> {
    Ridge {
        scaler: Scaler<F>,
        coef: Vec<F>,
        intercept: F,
        alpha: F,
    },
    Logistic {
        scaler: Scaler<F>,
        coef: Vec<F>,
        intercept: F,
    },
    Tree {
        nodes: Vec<TreeNode<F>>,
    },
}

impl<F: Real> Model<F> {
    pub fn predict(&self, row: &[F]) -> F {
        match self {
            Model::Ridge {
                scaler,
                coef,
                intercept,
                ..
            } => dot(coef, &scaler.apply(row)) + *intercept,
            Model::Logistic {
                scaler,
                coef,
                intercept,
            } => sigmoid(dot(coef, &scaler.apply(row)) + *intercept),
            Model::Tree { nodes } => {
                let mut i = 0;
                loop {
                    match &nodes[i] {
                        TreeNode::Leaf(v) => return *v,
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => i = if row[*feature] <= *threshold { *left } else { *right },
                    }
                }
            }
        }
    }

    pub fn predict_all(&self, x: &[Vec<F>]) -> Vec<F> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    /// Regularization actually used by a ridge fit.
    pub fn ridge_alpha(&self) -> Option<F> {
        match self {
            Model::Ridge { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (x, y)| s + *x * *y)
}

fn sigmoid<F: Real>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

fn check_shape<F: Real>(x: &[Vec<F>], y: &[F]) -> Result<usize, TaskError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(TaskError::Model(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(TaskError::Model("ragged feature matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(TaskError::Model("non-finite feature or label".into()));
    }
    Ok(d)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is numerically zero.
fn solve<F: Real>(mut a: Vec<Vec<F>>, mut b: Vec<F>) -> Option<Vec<F>> {
    let n = b.len();
    let big = a.iter().flatten().fold(F::zero(), |m, v| m.max(v.abs()));
    let eps = lit::<F>(1e-12) * big.max(F::one());
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))?;
        if a[piv][col].abs() < eps {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == F::zero() {
                continue;
            }
            for c in col..n {
                a[r][c] = a[r][c] - f * a[col][c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![F::zero(); n];
    for r in (0..n).rev() {
        let s = (r + 1..n).fold(b[r], |s, c| s - a[r][c] * x[c]);
        x[r] = s / a[r][r];
    }
    Some(x)
}

fn gram<F: Real>(z: &[Vec<F>], w: Option<&[F]>, alpha: F) -> Vec<Vec<F>> {
    let d = z[0].len();
    let mut g = vec![vec![F::zero(); d]; d];
    for (i, row) in z.iter().enumerate() {
        let wi = w.map_or(F::one(), |w| w[i]);
        for a in 0..d {
            for b in a..d {
                g[a][b] = g[a][b] + wi * row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[a][b] = g[b][a];
        }
        g[a][a] = g[a][a] + alpha;
    }
    g
}

/// Closed-form ridge on standardized features with an unpenalized
/// intercept. A singular system is retried with ten times the penalty.
pub fn fit_ridge<F: Real>(x: &[Vec<F>], y: &[F], alpha: F) -> Result<Model<F>, TaskError> {
    let d = check_shape(x, y)?;
    let scaler = Scaler::fit(x);
    let z: Vec<Vec<F>> = x.iter().map(|r| scaler.apply(r)).collect();
    let ybar = y.iter().fold(F::zero(), |s, v| s + *v) / lit(y.len() as f64);
    let mut rhs = vec![F::zero(); d];
    for (row, yi) in z.iter().zip(y) {
        for j in 0..d {
            rhs[j] = rhs[j] + row[j] * (*yi - ybar);
        }
    }
    let mut alpha = alpha.max(F::zero());
    for _ in 0..12 {
        if let Some(coef) = solve(gram(&z, None, alpha), rhs.clone()) {
            return Ok(Model::Ridge {
                scaler,
                coef,
                intercept: ybar,
                alpha,
            });
        }
        let next = if alpha > F::zero() { alpha * lit(10.0) } else { lit(1e-6) };
        log::warn!("ridge system singular at alpha {alpha:?}; retrying with {next:?}");
        alpha = next;
    }
    Err(TaskError::Model("ridge system stayed singular".into()))
}

/// L2-regularized logistic regression by Newton iterations. Labels above
/// 0.5 are positives.
pub fn fit_logistic<F: Real>(x: &[Vec<F>], y: &[F], alpha: F, tol: F) -> Result<Model<F>, TaskError> {
    let d = check_shape(x, y)?;
    let scaler = Scaler::fit(x);
    // intercept as a trailing constant column, left unpenalized
    let z: Vec<Vec<F>> = x
        .iter()
        .map(|r| {
            let mut v = scaler.apply(r);
            v.push(F::one());
            v
        })
        .collect();
    let t: Vec<F> = y.iter().map(|v| if *v > lit(0.5) { F::one() } else { F::zero() }).collect();
    let mut w = vec![F::zero(); d + 1];
    for _ in 0..100 {
        let p: Vec<F> = z.iter().map(|r| sigmoid(dot(&w, r))).collect();
        let mut grad = vec![F::zero(); d + 1];
        for (row, (pi, ti)) in z.iter().zip(p.iter().zip(&t)) {
            for j in 0..=d {
                grad[j] = grad[j] + (*pi - *ti) * row[j];
            }
        }
        for j in 0..d {
            grad[j] = grad[j] + alpha * w[j];
        }
        let weights: Vec<F> = p.iter().map(|pi| (*pi * (F::one() - *pi)).max(lit(1e-10))).collect();
        let mut h = gram(&z, Some(&weights), alpha);
        h[d][d] = h[d][d] - alpha + lit(1e-10);
        let step = solve(h, grad).ok_or_else(|| TaskError::Model("logistic Hessian singular".into()))?;
        let mut delta = F::zero();
        for j in 0..=d {
            w[j] = w[j] - step[j];
            delta = delta.max(step[j].abs());
        }
        if delta < tol {
            break;
        }
    }
    let intercept = w.pop().expect("intercept weight");
    Ok(Model::Logistic {
        scaler,
        coef: w,
        intercept,
    })
}

/// CART with squared-error splits (for 0/1 labels this ranks splits like
/// Gini impurity). Leaves predict the mean label.
pub fn fit_tree<F: Real>(x: &[Vec<F>], y: &[F], max_depth: usize, min_leaf: usize) -> Result<Model<F>, TaskError> {
    check_shape(x, y)?;
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..y.len()).collect();
    grow(x, y, idx, max_depth, min_leaf.max(1), &mut nodes);
    Ok(Model::Tree { nodes })
}

fn grow<F: Real>(
    x: &[Vec<F>],
    y: &[F],
    idx: Vec<usize>,
    depth: usize,
    min_leaf: usize,
    nodes: &mut Vec<TreeNode<F>>,
) -> usize {
    let me = nodes.len();
    let n = lit::<F>(idx.len() as f64);
    let sum = idx.iter().fold(F::zero(), |s, &i| s + y[i]);
    nodes.push(TreeNode::Leaf(sum / n));
    if depth == 0 || idx.len() < 2 * min_leaf {
        return me;
    }
    let sq = idx.iter().fold(F::zero(), |s, &i| s + y[i] * y[i]);
    let parent_sse = sq - sum * sum / n;
    let mut best: Option<(F, usize, F)> = None;
    for f in 0..x[0].len() {
        let mut order = idx.clone();
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).expect("finite").then(a.cmp(&b)));
        let (mut ls, mut lq) = (F::zero(), F::zero());
        for k in 0..order.len() - 1 {
            let v = y[order[k]];
            ls = ls + v;
            lq = lq + v * v;
            let nl = k + 1;
            let nr = order.len() - nl;
            if nl < min_leaf || nr < min_leaf || x[order[k]][f] == x[order[k + 1]][f] {
                continue;
            }
            let (fl, fr) = (lit::<F>(nl as f64), lit::<F>(nr as f64));
            let (rs, rq) = (sum - ls, sq - lq);
            let sse = (lq - ls * ls / fl) + (rq - rs * rs / fr);
            if best.is_none_or(|(b, _, _)| sse < b) {
                let thr = (x[order[k]][f] + x[order[k + 1]][f]) / lit(2.0);
                best = Some((sse, f, thr));
            }
        }
    }
    let Some((sse, feature, threshold)) = best else {
        return me;
    };
    if !(sse < parent_sse - lit(1e-12)) {
        return me;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x[i][feature] <= threshold);
    let left = grow(x, y, l, depth - 1, min_leaf, nodes);
    let right = grow(x, y, r, depth - 1, min_leaf, nodes);
    nodes[me] = TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    };
    me
}

pub fn train_evaluator<F: Real>(
    kind: EvaluatorKind,
    params: &EvaluatorParams,
    x: &[Vec<F>],
    y: &[F],
) -> Result<Model<F>, TaskError> {
    match kind {
        EvaluatorKind::Ridge => fit_ridge(x, y, lit(params.ridge_alpha)),
        EvaluatorKind::Logistic => fit_logistic(x, y, lit(params.logistic_alpha), lit(params.logistic_tol)),
        EvaluatorKind::Tree => fit_tree(x, y, params.tree_max_depth, params.tree_min_leaf),
    }
}

pub fn rmse<F: Real>(pred: &[F], y: &[F]) -> Result<F, TaskError> {
    if pred.is_empty() || pred.len() != y.len() {
        return Err(TaskError::Model("RMSE needs matching, non-empty inputs".into()));
    }
    let s = pred.iter().zip(y).fold(F::zero(), |s, (p, t)| s + (*p - *t) * (*p - *t));
    Ok((s / lit(y.len() as f64)).sqrt())
}

/// Rank-based ROC AUC; tied scores share their average rank.
pub fn auc<F: Real>(scores: &[F], y: &[F]) -> Result<F, TaskError> {
    if scores.len() != y.len() {
        return Err(TaskError::Model("AUC needs matching inputs".into()));
    }
    let pos: Vec<bool> = y.iter().map(|v| *v > lit(0.5)).collect();
    let n_pos = pos.iter().filter(|p| **p).count();
    let n_neg = pos.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(TaskError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| pos[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok(lit((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ridge_fits_linear_data() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - 3.0 * r[1] + 1.0).collect();
        let m = fit_ridge(&x, &y, 0.0).unwrap();
        assert!(rmse(&m.predict_all(&x), &y).unwrap() < 1e-9);
    }

    #[test]
    fn ridge_recovers_from_singular_system() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = fit_ridge(&x, &y, 0.0).unwrap();
        assert!(m.ridge_alpha().unwrap() > 0.0);
        assert!(rmse(&m.predict_all(&x), &y).unwrap() < 0.1);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(TaskError::SingleClass));
    }

    #[test]
    fn permuted_labels_give_chance_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        for _ in 0..20 {
            let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let y: Vec<f64> = (0..200).map(|_| f64::from(rng.gen_bool(0.5))).collect();
            let m = fit_logistic(&x[..100], &y[..100], 1e-2, 1e-8).unwrap();
            total += auc(&m.predict_all(&x[100..]), &y[100..]).unwrap();
        }
        assert_abs_diff_eq!(total / 20.0, 0.5, epsilon = 0.1);
    }

    #[test]
    fn logistic_separates() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 + if i % 3 == 0 { 5.0 } else { 0.0 }]).collect();
        let y: Vec<f64> = (0..40).map(|i| f64::from(i >= 20)).collect();
        let m = fit_logistic(&x, &y, 1e-2, 1e-8).unwrap();
        assert!(auc(&m.predict_all(&x), &y).unwrap() > 0.95);
    }

    #[test]
    fn tree_learns_step() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 5.0 }).collect();
        let m = fit_tree(&x, &y, 3, 2).unwrap();
        assert_eq!(rmse(&m.predict_all(&x), &y).unwrap(), 0.0);
        assert_eq!(m.predict(&[3.5, 0.0]), 1.0);
    }

    #[test]
    fn noise_feature_does_not_help_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut base, mut noisy) = (0.0, 0.0);
        for _ in 0..10 {
            let xs: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = xs.iter().map(|v| 3.0 * v + rng.gen_range(-0.3..0.3)).collect();
            let one: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v]).collect();
            let two: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v, rng.gen_range(-1.0..1.0)]).collect();
            let m1 = fit_ridge(&one[..40], &y[..40], 1.0).unwrap();
            let m2 = fit_ridge(&two[..40], &y[..40], 1.0).unwrap();
            base += rmse(&m1.predict_all(&one[40..]), &y[40..]).unwrap();
            noisy += rmse(&m2.predict_all(&two[40..]), &y[40..]).unwrap();
        }
        assert!(noisy >= base - 1e-3, "{noisy} < {base}");
    }
}
