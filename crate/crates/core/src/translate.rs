//! Cross-language vocabulary alignment from distance structure.
//!
//! Given a basis vocabulary of known word pairs in a source and a target
//! language, both sides induce a square distance matrix over the basis.
//! The permutation of target words that maximizes the Pearson correlation
//! between the two flattened matrices is taken as the alignment; an
//! unknown source word is then translated by appending it to the basis
//! and scoring each candidate target word the same way.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::dist::DistanceMatrix;
use crate::error::{Error, Result};
use crate::provider::Provider;

pub const MAX_BASIS: usize = 8;

/// Known-translation pairs; row `i` of the source matrix corresponds to
/// `source[i]`, and the target matrix is built over `target` in the same
/// index order before any permutation is applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisVocabulary {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl BasisVocabulary {
    pub fn new(source: Vec<String>, target: Vec<String>) -> Result<BasisVocabulary> {
        if source.len() != target.len() {
            return Err(Error::InvalidBasis(format!(
                "{} source words vs {} target words",
                source.len(),
                target.len()
            )));
        }
        if source.len() < 2 {
            return Err(Error::InvalidBasis("need at least 2 basis pairs".into()));
        }
        if source.len() > MAX_BASIS {
            return Err(Error::PermutationSpaceTooLarge(source.len()));
        }
        for side in [&source, &target] {
            let mut seen = side.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != side.len() {
                return Err(Error::InvalidBasis("duplicate basis word".into()));
            }
        }
        Ok(BasisVocabulary { source, target })
    }

    /// Tab-separated `source<TAB>target` lines, `#` comments and blank
    /// lines ignored.
    pub fn parse_tsv(text: &str) -> Result<BasisVocabulary> {
        let mut source = Vec::new();
        let mut target = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(t), None) if !s.trim().is_empty() && !t.trim().is_empty() => {
                    source.push(s.trim().to_string());
                    target.push(t.trim().to_string());
                }
                _ => {
                    return Err(Error::InvalidBasis(format!(
                        "line {}: expected two tab-separated words",
                        lineno + 1
                    )))
                }
            }
        }
        BasisVocabulary::new(source, target)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Pearson product-moment correlation of two equal-length sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::BadSequenceLength);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Row-major flattening of the full square matrix, diagonal included.
fn flatten(m: &DistanceMatrix) -> Vec<f64> {
    let k = m.len();
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            out.push(m.get(i, j));
        }
    }
    out
}

/// Reorders rows and columns of `m` so index `i` refers to the element
/// previously at `perm[i]`.
fn permute(m: &[f64], k: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(k * k);
    for &i in perm {
        for &j in perm {
            out.push(m[i * k + j]);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationSearch {
    /// Best-scoring assignment: target word for each source index.
    pub assignment: Vec<String>,
    pub permutation: Vec<usize>,
    pub correlation: f64,
    pub permutations_scored: usize,
    /// Whether the identity pairing given in the basis file was the
    /// winner.
    pub identity_optimal: bool,
}

/// Scores every permutation of the target words against the source
/// matrix, in lexicographic order of the index permutation. Ties keep
/// the earlier permutation.
pub fn infer_permutation(
    source_matrix: &DistanceMatrix,
    target_matrix: &DistanceMatrix,
    basis: &BasisVocabulary,
) -> Result<PermutationSearch> {
    let k = basis.len();
    if source_matrix.len() != k || target_matrix.len() != k {
        return Err(Error::InvalidBasis(format!(
            "matrix sizes {} and {} do not match basis of {}",
            source_matrix.len(),
            target_matrix.len(),
            k
        )));
    }
    let src = flatten(source_matrix);
    let tgt = flatten(target_matrix);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut scored = 0usize;
    for perm in (0..k).permutations(k) {
        scored += 1;
        let candidate = permute(&tgt, k, &perm);
        let r = match pearson(&src, &candidate) {
            Ok(r) => r,
            Err(Error::ZeroVariance) => return Err(Error::ZeroVariance),
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |(b, _)| r > *b) {
            best = Some((r, perm));
        }
    }
    let (correlation, permutation) = best.ok_or(Error::EmptyInput)?;
    let identity: Vec<usize> = (0..k).collect();
    let assignment = permutation
        .iter()
        .map(|&i| basis.target[i].clone())
        .collect();
    Ok(PermutationSearch {
        assignment,
        permutation: permutation.clone(),
        correlation,
        permutations_scored: scored,
        identity_optimal: permutation == identity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateScore {
    pub word: String,
    pub correlation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum TranslationOutcome {
    Success {
        word: String,
        correlation: f64,
        ranking: Vec<CandidateScore>,
    },
    NoPositiveCorrelation {
        ranking: Vec<CandidateScore>,
    },
}

/// Translates one unknown source word: the source matrix is extended by
/// the unknown word, and each candidate target word extends the target
/// matrix in turn; the candidate with the highest positive correlation
/// between the two extended flattened matrices wins. Equal scores are
/// broken toward the candidate listed first.
pub fn translate_word(
    basis: &BasisVocabulary,
    unknown: &str,
    candidates: &[String],
    source_provider: &Provider,
    target_provider: &Provider,
    inf_cap: f64,
) -> Result<TranslationOutcome> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut source_terms = basis.source.clone();
    source_terms.push(unknown.to_string());
    let source_matrix = DistanceMatrix::compute(&source_terms, source_provider, inf_cap)?;
    let src = flatten(&source_matrix);
    let mut ranking = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let mut target_terms = basis.target.clone();
        target_terms.push(candidate.clone());
        let target_matrix = DistanceMatrix::compute(&target_terms, target_provider, inf_cap)?;
        let tgt = flatten(&target_matrix);
        let correlation = pearson(&src, &tgt)?;
        ranking.push(CandidateScore {
            word: candidate.clone(),
            correlation,
        });
    }
    let mut order: Vec<usize> = (0..ranking.len()).collect();
    order.sort_by(|&a, &b| {
        ranking[b]
            .correlation
            .partial_cmp(&ranking[a].correlation)
            .unwrap()
            .then(a.cmp(&b))
    });
    let ranking: Vec<CandidateScore> = order.into_iter().map(|i| ranking[i].clone()).collect();
    let best = &ranking[0];
    if best.correlation > 0.0 {
        Ok(TranslationOutcome::Success {
            word: best.word.clone(),
            correlation: best.correlation,
            ranking: ranking.clone(),
        })
    } else {
        Ok(TranslationOutcome::NoPositiveCorrelation { ranking })
    }
}
