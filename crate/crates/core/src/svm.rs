//! Anchor-feature binary concept learning.
//!
//! Each example term is converted to a feature vector of its distances to
//! a fixed list of anchor terms, then a soft-margin RBF classifier is
//! trained on the labeled vectors with an SMO-style coordinate-ascent
//! solver. Kernel width and error cost are picked from a grid by k-fold
//! cross validation, ties resolved toward the smallest error cost and
//! then the smallest kernel width.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::ngd;
use crate::error::{Error, Result};
use crate::provider::{Provider, Query};

/// Anchor-distance representation of a term: entry `i` is the distance
/// from the term to anchor `i`, with infinities capped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub term: String,
    pub values: Vec<f64>,
}

/// One hyperparameter candidate: soft-margin error cost and RBF kernel
/// width parameter (the exponent coefficient, LIBSVM's `gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub cost: f64,
    pub kernel_width: f64,
}

/// Cost in `{2^-2 .. 2^6}`, kernel width in `{2^-6 .. 2^2}`, powers of 2.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for ce in -2..=6 {
        for ge in -6..=2 {
            grid.push(GridPoint {
                cost: 2f64.powi(ce),
                kernel_width: 2f64.powi(ge),
            });
        }
    }
    grid
}

/// Trained soft-margin RBF classifier in support-vector form:
/// `f(x) = sum_i coeff_i K(sv_i, x) + bias`, `coeff_i = alpha_i y_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Svm {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub cost: f64,
    pub kernel_width: f64,
}

pub fn rbf_kernel(a: &[f64], b: &[f64], kernel_width: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-kernel_width * sq).exp()
}

impl Svm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut out = self.bias;
        for (sv, c) in self.support_vectors.iter().zip(&self.coefficients) {
            out += c * rbf_kernel(sv, x, self.kernel_width);
        }
        out
    }
}

const SMO_TOL: f64 = 1e-3;
const ALPHA_EPS: f64 = 1e-8;

/// SMO solver state over a precomputed kernel matrix.
struct Smo<'a> {
    kernel: &'a [Vec<f64>],
    labels: &'a [f64],
    cost: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
}

impl<'a> Smo<'a> {
    fn new(kernel: &'a [Vec<f64>], labels: &'a [f64], cost: f64) -> Smo<'a> {
        let n = labels.len();
        Smo {
            kernel,
            labels,
            cost,
            alpha: vec![0.0; n],
            errors: labels.iter().map(|y| -y).collect(),
            bias: 0.0,
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.labels[i1], self.labels[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (low, high) = if (y1 - y2).abs() > 0.5 {
            ((a2_old - a1_old).max(0.0), (self.cost + a2_old - a1_old).min(self.cost))
        } else {
            ((a1_old + a2_old - self.cost).max(0.0), (a1_old + a2_old).min(self.cost))
        };
        if high - low < 1e-12 {
            return false;
        }
        let (k11, k12, k22) = (
            self.kernel[i1][i1],
            self.kernel[i1][i2],
            self.kernel[i2][i2],
        );
        let eta = k11 + k22 - 2.0 * k12;
        if eta <= 0.0 {
            return false;
        }
        let mut a2 = a2_old + y2 * (e1 - e2) / eta;
        a2 = a2.clamp(low, high);
        if (a2 - a2_old).abs() < 1e-10 * (a2 + a2_old + 1e-10) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1 > ALPHA_EPS && a1 < self.cost - ALPHA_EPS {
            b1
        } else if a2 > ALPHA_EPS && a2 < self.cost - ALPHA_EPS {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let bias_delta = new_bias - self.bias;
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = new_bias;
        for i in 0..self.errors.len() {
            self.errors[i] += d1 * self.kernel[i1][i] + d2 * self.kernel[i2][i] + bias_delta;
        }
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.labels[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -SMO_TOL && a2 < self.cost - ALPHA_EPS)
            || (r2 > SMO_TOL && a2 > ALPHA_EPS);
        if !violates {
            return false;
        }
        // Second-choice heuristic: maximize |E1 - E2| over non-bound
        // multipliers, deterministically.
        let mut best: Option<(f64, usize)> = None;
        for i1 in 0..self.alpha.len() {
            if i1 == i2 || self.alpha[i1] <= ALPHA_EPS || self.alpha[i1] >= self.cost - ALPHA_EPS {
                continue;
            }
            let gap = (self.errors[i1] - e2).abs();
            if best.map_or(true, |(g, _)| gap > g) {
                best = Some((gap, i1));
            }
        }
        if let Some((_, i1)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.alpha.len() {
            if self.alpha[i1] > ALPHA_EPS && self.alpha[i1] < self.cost - ALPHA_EPS {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        for i1 in 0..self.alpha.len() {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

/// Trains on labeled vectors, labels in {-1, +1}.
pub fn smo_train(
    vectors: &[Vec<f64>],
    labels: &[f64],
    cost: f64,
    kernel_width: f64,
) -> Svm {
    let n = vectors.len();
    let kernel: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rbf_kernel(&vectors[i], &vectors[j], kernel_width))
                .collect()
        })
        .collect();
    let mut smo = Smo::new(&kernel, labels, cost);
    let mut examine_all = true;
    let mut changed = 0usize;
    let mut rounds = 0usize;
    while (changed > 0 || examine_all) && rounds < 10_000 {
        rounds += 1;
        changed = 0;
        for i in 0..n {
            let non_bound = smo.alpha[i] > ALPHA_EPS && smo.alpha[i] < cost - ALPHA_EPS;
            if examine_all || non_bound {
                if smo.examine(i) {
                    changed += 1;
                }
            }
        }
        examine_all = if examine_all { false } else { changed == 0 };
    }
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        if smo.alpha[i] > ALPHA_EPS {
            support_vectors.push(vectors[i].clone());
            coefficients.push(smo.alpha[i] * labels[i]);
        }
    }
    Svm {
        support_vectors,
        coefficients,
        bias: smo.bias,
        cost,
        kernel_width,
    }
}

/// Anchor list plus trained classifier and the provider context it was
/// trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorModel {
    pub anchors: Vec<String>,
    pub svm: Svm,
    pub n: f64,
    pub inf_cap: f64,
    pub cv_accuracy: f64,
    pub cv_folds: usize,
}

impl AnchorModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AnchorModel> {
        serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| Error::MalformedModel(e.to_string()))
    }
}

/// Converts a term to its anchor-distance vector. Anchor singleton counts
/// come from the provider's cache after the first call, so a session of
/// many terms fetches each anchor count once.
pub fn featurize(
    term: &str,
    anchors: &[String],
    provider: &Provider,
    inf_cap: f64,
) -> Result<FeatureVector> {
    if anchors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let for_pair = |a: &str, e: Error| Error::ForPair {
        x: term.to_string(),
        y: a.to_string(),
        source: Box::new(e),
    };
    let n = provider.n();
    let f_term = provider
        .get_count(&Query::term(term).map_err(|e| for_pair(term, e))?)
        .map_err(|e| for_pair(term, e))?
        .count as f64;
    let mut values = Vec::with_capacity(anchors.len());
    for anchor in anchors {
        let f_anchor = provider
            .get_count(&Query::term(anchor).map_err(|e| for_pair(anchor, e))?)
            .map_err(|e| for_pair(anchor, e))?
            .count as f64;
        let f_pair = provider
            .get_count(&Query::pair(term, anchor).map_err(|e| for_pair(anchor, e))?)
            .map_err(|e| for_pair(anchor, e))?
            .count as f64;
        let d = ngd(f_term, f_anchor, f_pair, n).map_err(|e| for_pair(anchor, e))?;
        values.push(if d.is_infinite() { inf_cap } else { d });
    }
    Ok(FeatureVector {
        term: term.to_string(),
        values,
    })
}

/// Canonical example order: sorted by term then label, so training is
/// independent of input order.
fn canonical<'a>(
    positives: &'a [String],
    negatives: &'a [String],
) -> Vec<(&'a str, f64)> {
    let mut out: Vec<(&str, f64)> = positives
        .iter()
        .map(|t| (t.as_str(), 1.0))
        .chain(negatives.iter().map(|t| (t.as_str(), -1.0)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    out
}

/// Trains the anchor model: featurize, pick hyperparameters by k-fold
/// cross validation over the grid, then retrain on all examples.
pub fn train(
    positives: &[String],
    negatives: &[String],
    anchors: &[String],
    provider: &Provider,
    inf_cap: f64,
    cv_folds: usize,
    grid: &[GridPoint],
) -> Result<AnchorModel> {
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(Error::TooFewExamples {
            pos: positives.len(),
            neg: negatives.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let examples = canonical(positives, negatives);
    let vectors: Vec<Vec<f64>> = examples
        .iter()
        .map(|(t, _)| featurize(t, anchors, provider, inf_cap).map(|f| f.values))
        .collect::<Result<_>>()?;
    let labels: Vec<f64> = examples.iter().map(|&(_, y)| y).collect();
    if vectors.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFeatures);
    }

    // Stratified round-robin fold assignment over the canonical order.
    let folds = cv_folds.clamp(2, examples.len());
    let mut fold_of = vec![0usize; examples.len()];
    let mut pos_seen = 0usize;
    let mut neg_seen = 0usize;
    for (i, &(_, y)) in examples.iter().enumerate() {
        if y > 0.0 {
            fold_of[i] = pos_seen % folds;
            pos_seen += 1;
        } else {
            fold_of[i] = neg_seen % folds;
            neg_seen += 1;
        }
    }

    let mut best: Option<(f64, GridPoint)> = None;
    for point in grid {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_idx = Vec::new();
            for i in 0..examples.len() {
                if fold_of[i] == fold {
                    test_idx.push(i);
                } else {
                    train_x.push(vectors[i].clone());
                    train_y.push(labels[i]);
                }
            }
            if test_idx.is_empty() || train_x.is_empty() {
                continue;
            }
            let svm = smo_train(&train_x, &train_y, point.cost, point.kernel_width);
            for &i in &test_idx {
                total += 1;
                if svm.decision(&vectors[i]).is_sign_positive() == (labels[i] > 0.0) {
                    correct += 1;
                }
            }
        }
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        let better = match &best {
            None => true,
            Some((best_acc, best_point)) => {
                accuracy > *best_acc
                    || (accuracy == *best_acc
                        && (point.cost < best_point.cost
                            || (point.cost == best_point.cost
                                && point.kernel_width < best_point.kernel_width)))
            }
        };
        if better {
            best = Some((accuracy, *point));
        }
    }
    let (cv_accuracy, point) = best.expect("non-empty grid");
    let svm = smo_train(&vectors, &labels, point.cost, point.kernel_width);
    Ok(AnchorModel {
        anchors: anchors.to_vec(),
        svm,
        n: provider.n(),
        inf_cap,
        cv_accuracy,
        cv_folds: folds,
    })
}

/// Per-term classification outcome; a provider failure for one term does
/// not abort the rest.
#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub term: String,
    pub label: Option<bool>,
    pub margin: Option<f64>,
    pub error: Option<String>,
}

pub fn predict(model: &AnchorModel, terms: &[String], provider: &Provider) -> Vec<Prediction> {
    terms
        .iter()
        .map(
            |term| match featurize(term, &model.anchors, provider, model.inf_cap) {
                Ok(fv) => {
                    let margin = model.svm.decision(&fv.values);
                    Prediction {
                        term: term.clone(),
                        label: Some(margin.is_sign_positive()),
                        margin: Some(margin),
                        error: None,
                    }
                }
                Err(e) => Prediction {
                    term: term.clone(),
                    label: None,
                    margin: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}

/// Exposes the raw multipliers for invariants checks: `(alpha_i, y_i)`
/// recovered from the stored coefficients.
pub fn dual_variables(svm: &Svm) -> Vec<(f64, f64)> {
    svm.coefficients
        .iter()
        .map(|&c| (c.abs(), c.signum()))
        .collect()
}

/// Classification report rows as CSV: term, label, margin.
pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("term,label,margin\n");
    for p in predictions {
        let label = match p.label {
            Some(true) => "positive",
            Some(false) => "negative",
            None => "error",
        };
        let margin = p
            .margin
            .map(|m| format!("{m}"))
            .unwrap_or_else(|| p.error.clone().unwrap_or_default().replace(',', ";"));
        out.push_str(&format!("{},{},{}\n", csv_field(&p.term), label, margin));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Groups predictions against expected labels, for accuracy summaries.
pub fn accuracy(predictions: &[Prediction], expected: &BTreeMap<String, bool>) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for p in predictions {
        if let (Some(label), Some(&want)) = (p.label, expected.get(&p.term)) {
            total += 1;
            if label == want {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{FixtureSource, ProviderConfig, Query};
    use std::collections::HashMap;

    const N: f64 = 1e6;
    const BASE: u64 = 1000;

    /// Fixture where every term has the same singleton count and a pair
    /// count of BASE (distance 0) to anchors of its own class and 1
    /// (distance 1) to anchors of the other class.
    fn planted_provider(positives: &[&str], negatives: &[&str], anchors: &[&str]) -> Provider {
        let mut counts = HashMap::new();
        for t in positives.iter().chain(negatives).chain(anchors) {
            counts.insert(Query::term(t).unwrap(), BASE);
        }
        let class = |t: &str| t.starts_with("pos") || t.starts_with("cat");
        for t in positives.iter().chain(negatives) {
            for a in anchors {
                let c = if class(t) == class(a) { BASE } else { 1 };
                counts.insert(Query::pair(t, a).unwrap(), c);
            }
        }
        Provider::new(
            Box::new(FixtureSource::from_counts(counts)),
            ProviderConfig::local(N),
        )
        .unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn rbf_kernel_basics() {
        let a = [0.0, 1.0];
        let b = [1.0, 0.0];
        assert_eq!(rbf_kernel(&a, &a, 0.5), 1.0);
        assert_eq!(rbf_kernel(&a, &b, 0.5), rbf_kernel(&b, &a, 0.5));
        assert!((rbf_kernel(&a, &b, 0.5) - (-1.0f64).exp()).abs() < 1e-12);
        assert!(rbf_kernel(&a, &b, 8.0) < rbf_kernel(&a, &b, 0.5));
    }

    #[test]
    fn smo_separates_linear_data() {
        let vectors: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.2],
            vec![0.2, 0.0],
            vec![1.0, 1.0],
            vec![0.9, 0.8],
            vec![1.1, 1.0],
        ];
        let labels = vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let svm = smo_train(&vectors, &labels, 16.0, 1.0);
        for (v, y) in vectors.iter().zip(&labels) {
            assert_eq!(svm.decision(v).is_sign_positive(), *y > 0.0, "{v:?}");
        }
        // Dual feasibility: sum alpha_i y_i = 0 and 0 <= alpha_i <= C.
        let sum: f64 = svm.coefficients.iter().sum();
        assert!(sum.abs() < 1e-6, "sum {sum}");
        for (alpha, _) in dual_variables(&svm) {
            assert!(alpha >= 0.0 && alpha <= 16.0 + 1e-9);
        }
    }

    #[test]
    fn smo_separates_xor_with_rbf() {
        let vectors: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let labels = vec![1.0, 1.0, -1.0, -1.0];
        let svm = smo_train(&vectors, &labels, 64.0, 2.0);
        for (v, y) in vectors.iter().zip(&labels) {
            assert_eq!(svm.decision(v).is_sign_positive(), *y > 0.0, "{v:?}");
        }
    }

    #[test]
    fn featurize_produces_anchor_distances() {
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let p = planted_provider(&["pos0"], &["neg0"], &["posa", "nega"]);
        let fv = featurize("pos0", &anchors, &p, 2.0).unwrap();
        assert!(fv.values[0] < 1e-9, "{:?}", fv.values);
        assert!((fv.values[1] - 1.0).abs() < 1e-9, "{:?}", fv.values);
        let fv = featurize("neg0", &anchors, &p, 2.0).unwrap();
        assert!((fv.values[0] - 1.0).abs() < 1e-9);
        assert!(fv.values[1] < 1e-9);
        // Unknown terms have zero frequency; every distance is 1 by the
        // zero-count rule.
        let fv = featurize("unseen", &anchors, &p, 2.0).unwrap();
        assert!(fv.values.iter().all(|&v| v == 1.0));
    }

    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    #[test]
    fn train_and_predict_end_to_end() {
        let positives = names("pos", 6);
        let negatives = names("neg", 6);
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let mut all_pos: Vec<&str> = refs(&positives);
        all_pos.extend(["posx", "posy"]);
        let mut all_neg: Vec<&str> = refs(&negatives);
        all_neg.extend(["negx", "negy"]);
        let p = planted_provider(&all_pos, &all_neg, &refs(&anchors));
        let model = train(&positives, &negatives, &anchors, &p, 2.0, 5, &default_grid()).unwrap();
        assert_eq!(model.cv_accuracy, 1.0);
        assert_eq!(model.n, N);

        let test: Vec<String> = ["posx", "posy", "negx", "negy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let predictions = predict(&model, &test, &p);
        assert_eq!(predictions[0].label, Some(true));
        assert_eq!(predictions[1].label, Some(true));
        assert_eq!(predictions[2].label, Some(false));
        assert_eq!(predictions[3].label, Some(false));
        assert!(predictions.iter().all(|p| p.error.is_none()));
    }

    #[test]
    fn training_is_order_independent() {
        let positives = names("pos", 5);
        let negatives = names("neg", 5);
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let p = planted_provider(&refs(&positives), &refs(&negatives), &refs(&anchors));
        let m1 = train(&positives, &negatives, &anchors, &p, 2.0, 5, &default_grid()).unwrap();
        let mut shuffled_pos = positives.clone();
        shuffled_pos.reverse();
        let mut shuffled_neg = negatives.clone();
        shuffled_neg.rotate_left(2);
        let m2 = train(&shuffled_pos, &shuffled_neg, &anchors, &p, 2.0, 5, &default_grid()).unwrap();
        assert_eq!(m1.svm.bias, m2.svm.bias);
        assert_eq!(m1.svm.coefficients, m2.svm.coefficients);
        assert_eq!(m1.svm.cost, m2.svm.cost);
        assert_eq!(m1.svm.kernel_width, m2.svm.kernel_width);
        assert_eq!(m1.cv_accuracy, m2.cv_accuracy);
    }

    #[test]
    fn grid_ties_prefer_small_cost_then_small_width() {
        let positives = names("pos", 4);
        let negatives = names("neg", 4);
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let p = planted_provider(&refs(&positives), &refs(&negatives), &refs(&anchors));
        // Deliberately listed from large to small: selection must not
        // depend on grid order.
        let grid = vec![
            GridPoint { cost: 4.0, kernel_width: 1.0 },
            GridPoint { cost: 1.0, kernel_width: 1.0 },
            GridPoint { cost: 1.0, kernel_width: 0.5 },
        ];
        let model = train(&positives, &negatives, &anchors, &p, 2.0, 4, &grid).unwrap();
        assert_eq!(model.cv_accuracy, 1.0);
        assert_eq!(model.svm.cost, 1.0);
        assert_eq!(model.svm.kernel_width, 0.5);
    }

    #[test]
    fn model_round_trips_through_json() {
        let positives = names("pos", 3);
        let negatives = names("neg", 3);
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let p = planted_provider(&refs(&positives), &refs(&negatives), &refs(&anchors));
        let model = train(&positives, &negatives, &anchors, &p, 2.0, 3, &default_grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = AnchorModel::load(&path).unwrap();
        assert_eq!(loaded.anchors, model.anchors);
        assert_eq!(loaded.svm.bias, model.svm.bias);
        assert_eq!(loaded.svm.coefficients, model.svm.coefficients);
        assert!(AnchorModel::load(&dir.path().join("missing.json")).is_err());
        std::fs::write(dir.path().join("bad.json"), b"{").unwrap();
        assert!(matches!(
            AnchorModel::load(&dir.path().join("bad.json")),
            Err(Error::MalformedModel(_))
        ));
    }

    #[test]
    fn degenerate_features_are_rejected() {
        // Every term featurizes identically (all counts equal).
        let mut counts = HashMap::new();
        for t in ["p0", "p1", "n0", "n1", "a0"] {
            counts.insert(Query::term(t).unwrap(), BASE);
        }
        let p = Provider::new(
            Box::new(FixtureSource::from_counts(counts)),
            ProviderConfig::local(N),
        )
        .unwrap();
        let result = train(
            &names("p", 2),
            &names("n", 2),
            &["a0".to_string()],
            &p,
            2.0,
            2,
            &default_grid(),
        );
        assert!(matches!(result, Err(Error::DegenerateFeatures)));
    }

    #[test]
    fn input_validation() {
        let p = planted_provider(&["pos0"], &["neg0"], &["posa"]);
        let anchors = vec!["posa".to_string()];
        assert!(matches!(
            train(&names("pos", 1), &names("neg", 2), &anchors, &p, 2.0, 2, &default_grid()),
            Err(Error::TooFewExamples { pos: 1, neg: 2 })
        ));
        assert!(matches!(
            train(&names("pos", 2), &names("neg", 2), &anchors, &p, 2.0, 2, &[]),
            Err(Error::EmptyGrid)
        ));
        assert!(matches!(
            featurize("pos0", &[], &p, 2.0),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn predict_survives_per_term_failures() {
        let positives = names("pos", 3);
        let negatives = names("neg", 3);
        let anchors = vec!["posa".to_string(), "nega".to_string()];
        let p = planted_provider(&refs(&positives), &refs(&negatives), &refs(&anchors));
        let model = train(&positives, &negatives, &anchors, &p, 2.0, 3, &default_grid()).unwrap();

        // A quota-limited clone of the provider: enough for the anchors
        // plus one term, then errors.
        let mut counts = HashMap::new();
        for t in ["pos0", "posa", "nega"] {
            counts.insert(Query::term(t).unwrap(), BASE);
        }
        counts.insert(Query::pair("pos0", "posa").unwrap(), BASE);
        counts.insert(Query::pair("pos0", "nega").unwrap(), 1);
        let mut config = ProviderConfig::local(N);
        config.daily_quota = 5;
        let limited = Provider::new(Box::new(FixtureSource::from_counts(counts)), config).unwrap();
        let out = predict(
            &model,
            &["pos0".to_string(), "neg0".to_string()],
            &limited,
        );
        assert_eq!(out[0].label, Some(true));
        assert!(out[1].label.is_none());
        assert!(out[1].error.as_deref().unwrap().contains("quota"));
    }

    #[test]
    fn csv_report_formats_predictions() {
        let rows = vec![
            Prediction {
                term: "a,b".into(),
                label: Some(true),
                margin: Some(1.5),
                error: None,
            },
            Prediction {
                term: "c".into(),
                label: None,
                margin: None,
                error: Some("boom".into()),
            },
        ];
        let csv = predictions_to_csv(&rows);
        assert!(csv.starts_with("term,label,margin\n"));
        assert!(csv.contains("\"a,b\",positive,1.5"));
        assert!(csv.contains("c,error,boom"));
        let mut expected = BTreeMap::new();
        expected.insert("a,b".to_string(), true);
        expected.insert("c".to_string(), true);
        assert_eq!(accuracy(&rows, &expected), 1.0);
    }
}
