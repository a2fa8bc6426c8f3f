//! Randomized classification trials against expert category files.
//!
//! A trial draws anchors and labeled examples from a positive category
//! file and a negative dictionary file, trains the anchor classifier
//! with cross validation, and scores it on held-out examples. Repeated
//! trials aggregate into an accuracy histogram with summary statistics
//! and query-budget accounting.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::svm::{self, Prediction};

/// One term per line; blank lines and `#` comments are ignored.
/// Duplicates are dropped, original order kept.
pub fn load_term_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let mut terms = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !terms.iter().any(|t| t == line) {
            terms.push(line.to_string());
        }
    }
    if terms.is_empty() {
        return Err(Error::InsufficientVocabulary {
            file: path.display().to_string(),
            detail: "no terms found".into(),
        });
    }
    Ok(terms)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Positive lexicon.
    pub category: Vec<String>,
    /// Negative pool.
    pub dictionary: Vec<String>,
    /// Total labeled training examples, split evenly between classes.
    pub train_size: usize,
    /// Held-out examples, balanced between classes.
    pub test_size: usize,
    /// Total anchors, drawn half from the category and half from the
    /// dictionary.
    pub anchors: usize,
    pub seed: u64,
    pub inf_cap: f64,
    pub cv_folds: usize,
}

impl TrialConfig {
    pub fn new(category: Vec<String>, dictionary: Vec<String>, seed: u64) -> TrialConfig {
        TrialConfig {
            category,
            dictionary,
            train_size: 50,
            test_size: 20,
            anchors: 6,
            seed,
            inf_cap: 2.0,
            cv_folds: 5,
        }
    }

    fn demand(&self) -> (usize, usize) {
        // Positive draws: half the anchors, half of train, half of test,
        // all disjoint. Same for negative draws from the dictionary.
        let pos = self.anchors / 2 + self.train_size / 2 + self.test_size / 2;
        let neg = self.anchors - self.anchors / 2
            + (self.train_size - self.train_size / 2)
            + (self.test_size - self.test_size / 2);
        (pos, neg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub accuracy: f64,
    pub anchors: Vec<String>,
    pub predictions: Vec<Prediction>,
    pub cv_accuracy: f64,
    /// Remote fetches attributable to this trial.
    pub remote_fetches: u64,
    pub cache_hits: u64,
}

/// Draws `count` items without replacement from the shuffled pool slice,
/// advancing the cursor so later draws stay disjoint.
fn draw(pool: &[String], cursor: &mut usize, count: usize) -> Vec<String> {
    let out = pool[*cursor..*cursor + count].to_vec();
    *cursor += count;
    out
}

pub fn run_trial(config: &TrialConfig, provider: &Provider) -> Result<TrialResult> {
    let (need_pos, need_neg) = config.demand();
    if config.category.len() < need_pos {
        return Err(Error::InsufficientVocabulary {
            file: "category".into(),
            detail: format!(
                "need {} distinct terms for anchors, training, and testing; have {}",
                need_pos,
                config.category.len()
            ),
        });
    }
    if config.dictionary.len() < need_neg {
        return Err(Error::InsufficientVocabulary {
            file: "dictionary".into(),
            detail: format!(
                "need {} distinct terms for anchors, training, and testing; have {}",
                need_neg,
                config.dictionary.len()
            ),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut category = config.category.clone();
    let mut dictionary = config.dictionary.clone();
    category.shuffle(&mut rng);
    dictionary.shuffle(&mut rng);

    let mut pos_cursor = 0usize;
    let mut neg_cursor = 0usize;
    let mut anchors = draw(&category, &mut pos_cursor, config.anchors / 2);
    anchors.extend(draw(
        &dictionary,
        &mut neg_cursor,
        config.anchors - config.anchors / 2,
    ));
    let train_pos = draw(&category, &mut pos_cursor, config.train_size / 2);
    let train_neg = draw(
        &dictionary,
        &mut neg_cursor,
        config.train_size - config.train_size / 2,
    );
    let test_pos = draw(&category, &mut pos_cursor, config.test_size / 2);
    let test_neg = draw(
        &dictionary,
        &mut neg_cursor,
        config.test_size - config.test_size / 2,
    );

    let before = provider.accounting();
    let model = svm::train(
        &train_pos,
        &train_neg,
        &anchors,
        provider,
        config.inf_cap,
        config.cv_folds,
        &svm::default_grid(),
    )?;

    let mut test_terms = test_pos.clone();
    test_terms.extend(test_neg.iter().cloned());
    let predictions = svm::predict(&model, &test_terms, provider);
    let mut correct = 0usize;
    for (i, p) in predictions.iter().enumerate() {
        let want = i < test_pos.len();
        if p.label == Some(want) {
            correct += 1;
        }
    }
    let after = provider.accounting();
    Ok(TrialResult {
        seed: config.seed,
        accuracy: correct as f64 / predictions.len() as f64,
        anchors,
        predictions,
        cv_accuracy: model.cv_accuracy,
        remote_fetches: after.remote_fetches - before.remote_fetches,
        cache_hits: after.cache_hits - before.cache_hits,
    })
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    /// Inclusive lower edge; the last bin also includes 1.0.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trials: Vec<TrialResult>,
    /// Trials that failed, with the offending seed.
    pub failures: Vec<(u64, String)>,
    pub histogram: Vec<HistogramBin>,
    pub mean: f64,
    /// Population variance over the completed trials.
    pub variance: f64,
    pub std_dev: f64,
    pub total_remote_fetches: u64,
    pub total_cache_hits: u64,
}

/// Accuracies in [0,1] binned at width 0.05: [0,0.05), ..., [0.95,1.0].
pub fn histogram(accuracies: &[f64]) -> Vec<HistogramBin> {
    let bins = (1.0 / HISTOGRAM_BIN_WIDTH).round() as usize;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: i as f64 * HISTOGRAM_BIN_WIDTH,
            upper: (i + 1) as f64 * HISTOGRAM_BIN_WIDTH,
            count: 0,
        })
        .collect();
    for &a in accuracies {
        // The epsilon keeps exact bin edges (0.05, 0.9, ...) in the bin
        // they open despite binary rounding of the quotient.
        let idx = (((a / HISTOGRAM_BIN_WIDTH) + 1e-9).floor() as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, variance)
}

/// Runs `n` trials with seeds `base_seed .. base_seed + n`. A failed
/// trial is recorded and the remaining trials continue.
pub fn run_trials(n: usize, template: &TrialConfig, provider: &Provider) -> Result<TrialSummary> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for i in 0..n {
        let mut config = template.clone();
        config.seed = template.seed.wrapping_add(i as u64);
        match run_trial(&config, provider) {
            Ok(result) => trials.push(result),
            Err(e) => failures.push((config.seed, e.to_string())),
        }
    }
    let accuracies: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
    let (mean, variance) = mean_variance(&accuracies);
    let total_remote_fetches = trials.iter().map(|t| t.remote_fetches).sum();
    let total_cache_hits = trials.iter().map(|t| t.cache_hits).sum();
    Ok(TrialSummary {
        histogram: histogram(&accuracies),
        trials,
        failures,
        mean,
        variance,
        std_dev: variance.sqrt(),
        total_remote_fetches,
        total_cache_hits,
    })
}

/// Histogram rows as CSV: bin lower edge, bin upper edge, count.
pub fn histogram_to_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("lower,upper,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.lower, b.upper, b.count));
    }
    out
}
