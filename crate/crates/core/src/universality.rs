//! Finite-corpus verification of the distribution's domination properties.
//!
//! The corpus is partitioned into disjoint classes ("web authors"), each
//! inducing its own event distribution `g_i` with normalizer `N_i`. The
//! global distribution mixes the class distributions with weights
//! `N_i / N`, hence dominates each of them; the corresponding statements
//! about code lengths and distances are checked exactly, pair by pair.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::dist::{google_code, GoogleDistribution};
use crate::error::{Error, Result};
use crate::index::Index;

const SLACK_TOL: f64 = 1e-12;
const HOLD_TOL: f64 = 1e-9;

/// Disjoint non-empty document-id classes covering the whole corpus.
#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    classes: Vec<Vec<u32>>,
}

impl Partition {
    pub fn new(classes: Vec<Vec<u32>>, doc_count: u32) -> Result<Partition> {
        let mut seen = vec![false; doc_count as usize];
        for (i, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::InvalidPartition(format!("class {i} is empty")));
            }
            for &id in class {
                if id >= doc_count {
                    return Err(Error::InvalidPartition(format!(
                        "class {i} contains out-of-range document {id}"
                    )));
                }
                if seen[id as usize] {
                    return Err(Error::InvalidPartition(format!(
                        "document {id} appears in more than one class"
                    )));
                }
                seen[id as usize] = true;
            }
        }
        let gaps: Vec<u32> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(i, _)| i as u32)
            .collect();
        if !gaps.is_empty() {
            return Err(Error::InvalidPartition(format!(
                "documents not covered: {gaps:?}"
            )));
        }
        let classes = classes
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        Ok(Partition { classes })
    }

    /// The one-class partition.
    pub fn trivial(doc_count: u32) -> Partition {
        Partition {
            classes: vec![(0..doc_count).collect()],
        }
    }

    /// Uniform random partition into exactly `num_classes` non-empty
    /// classes.
    pub fn random<R: Rng>(doc_count: u32, num_classes: usize, rng: &mut R) -> Result<Partition> {
        if num_classes == 0 || num_classes > doc_count as usize {
            return Err(Error::InvalidPartition(format!(
                "cannot split {doc_count} documents into {num_classes} non-empty classes"
            )));
        }
        let mut ids: Vec<u32> = (0..doc_count).collect();
        ids.shuffle(rng);
        let mut classes: Vec<Vec<u32>> = vec![Vec::new(); num_classes];
        // First one document per class, then the rest at random.
        for (i, id) in ids.iter().enumerate() {
            let slot = if i < num_classes {
                i
            } else {
                rng.gen_range(0..num_classes)
            };
            classes[slot].push(*id);
        }
        Partition::new(classes, doc_count)
    }

    pub fn classes(&self) -> &[Vec<u32>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Counts and distribution of a single class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassStats {
    pub m_i: u64,
    pub n_i: u64,
    counts: BTreeMap<(String, String), u64>,
}

impl ClassStats {
    pub fn count(&self, x: &str, y: &str) -> u64 {
        self.counts.get(&ordered(x, y)).copied().unwrap_or(0)
    }

    /// `g_i(x, y)`.
    pub fn g(&self, x: &str, y: &str) -> f64 {
        if self.n_i == 0 {
            0.0
        } else {
            self.count(x, y) as f64 / self.n_i as f64
        }
    }

    /// `G_i(x, y)` in bits.
    pub fn code(&self, x: &str, y: &str) -> f64 {
        google_code(self.g(x, y))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    pub fn total_mass(&self) -> f64 {
        if self.n_i == 0 {
            0.0
        } else {
            self.counts.values().sum::<u64>() as f64 / self.n_i as f64
        }
    }
}

fn ordered(x: &str, y: &str) -> (String, String) {
    if x <= y {
        (x.to_string(), y.to_string())
    } else {
        (y.to_string(), x.to_string())
    }
}

/// Per-class count tables over a common vocabulary, plus the global table
/// they mix into.
#[derive(Debug, Clone, Serialize)]
pub struct AuthorStats {
    pub vocab: Vec<String>,
    pub classes: Vec<ClassStats>,
    pub n: u64,
}

impl AuthorStats {
    /// Exact integer mixture: `sum_i f_i(x, y)`, which must equal the
    /// global count.
    pub fn mixture_count(&self, x: &str, y: &str) -> u64 {
        self.classes.iter().map(|c| c.count(x, y)).sum()
    }
}

/// Restricts the index counts to each class of the partition.
pub fn author_stats(
    index: &Index,
    partition: &Partition,
    vocabulary: Option<&[String]>,
) -> Result<AuthorStats> {
    // Validate against this index even if the partition was built elsewhere.
    let partition = Partition::new(partition.classes.clone(), index.doc_count())?;
    let vocab: Vec<String> = match vocabulary {
        Some(v) => {
            let mut out: Vec<String> = v
                .iter()
                .map(|t| index.tokenizer().normalize_term(t))
                .collect::<Result<_>>()?;
            out.sort();
            out.dedup();
            out
        }
        None => index.terms().map(str::to_owned).collect(),
    };
    if vocab.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sets: Vec<Vec<u32>> = vocab
        .iter()
        .map(|t| index.doc_set(t))
        .collect::<Result<_>>()?;

    let mut classes = Vec::with_capacity(partition.len());
    let mut n_total: u64 = 0;
    for class in partition.classes() {
        let mut member = vec![false; index.doc_count() as usize];
        for &id in class {
            member[id as usize] = true;
        }
        let restricted: Vec<Vec<u32>> = sets
            .iter()
            .map(|s| {
                s.iter()
                    .copied()
                    .filter(|&id| member[id as usize])
                    .collect()
            })
            .collect();
        let mut counts = BTreeMap::new();
        let mut n_i: u64 = 0;
        for i in 0..vocab.len() {
            for j in i..vocab.len() {
                let c = if i == j {
                    restricted[i].len() as u64
                } else {
                    sorted_intersection_size(&restricted[i], &restricted[j])
                };
                if c > 0 {
                    counts.insert((vocab[i].clone(), vocab[j].clone()), c);
                }
                n_i += c;
            }
        }
        n_total += n_i;
        classes.push(ClassStats {
            m_i: class.len() as u64,
            n_i,
            counts,
        });
    }
    Ok(AuthorStats {
        vocab,
        classes,
        n: n_total,
    })
}

fn sorted_intersection_size(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j) = (0, 0);
    let mut out = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out += 1;
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Domination margins for `g(x,y) >= (N_i / N) * g_i(x,y)`.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub pairs_checked: usize,
    pub violations: Vec<Theorem1Violation>,
    pub min_slack: f64,
    /// Class and pair realizing the minimum slack.
    pub tightest: Option<(usize, String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Violation {
    pub class: usize,
    pub x: String,
    pub y: String,
    pub slack: f64,
}

/// Checks domination for every class and every pair carried by any class.
/// Violations are reported, not thrown.
pub fn check_theorem1(g: &GoogleDistribution, stats: &AuthorStats) -> Theorem1Report {
    let n = g.n() as f64;
    let mut report = Theorem1Report {
        pairs_checked: 0,
        violations: Vec::new(),
        min_slack: f64::INFINITY,
        tightest: None,
    };
    for (ci, class) in stats.classes.iter().enumerate() {
        let weight = class.n_i as f64 / n;
        for ((x, y), _) in class.iter() {
            let slack = g.prob(x, y) - weight * class.g(x, y);
            report.pairs_checked += 1;
            if slack < report.min_slack {
                report.min_slack = slack;
                report.tightest = Some((ci, x.clone(), y.clone()));
            }
            if slack < -SLACK_TOL {
                report.violations.push(Theorem1Violation {
                    class: ci,
                    x: x.clone(),
                    y: y.clone(),
                    slack,
                });
            }
        }
    }
    if report.pairs_checked == 0 {
        report.min_slack = 0.0;
    }
    report
}

/// Explicit witness that the uniform distribution over `s` terms is not
/// universal for `a >= 2` authors: concentrate one author's mass on a
/// single term, forcing `1/s >= c_i >= 1/a`, impossible for `s > a`.
#[derive(Debug, Clone, Serialize)]
pub struct UniformWitness {
    pub s: usize,
    pub a: usize,
    /// `L(x) = 1/s`, the mass the uniform distribution can offer.
    pub uniform_prob: f64,
    /// `c_i * g_i(x) = c_i >= 1/a`, the mass universality demands.
    pub required: f64,
    pub violated: bool,
}

pub fn check_nonuniversality_of_uniform(s: usize, a: usize) -> Result<UniformWitness> {
    if a < 2 || s <= a {
        return Err(Error::UniformWitnessBounds { s, a });
    }
    let uniform_prob = 1.0 / s as f64;
    let required = 1.0 / a as f64;
    Ok(UniformWitness {
        s,
        a,
        uniform_prob,
        required,
        violated: uniform_prob < required,
    })
}

/// Per-pair distance-domination comparison for one class.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub x: String,
    pub y: String,
    pub k: u64,
    pub beta: f64,
    pub gamma: f64,
    pub beta_bound: f64,
    pub gamma_bound: f64,
    pub ngd_global: f64,
    pub ngd_author: f64,
    /// Global distance within `beta * author distance + gamma` (exact
    /// beta and gamma).
    pub exact_holds: bool,
    /// beta and gamma within their displayed k-dependent bounds.
    pub bounds_hold: bool,
    pub holds: bool,
    /// `g_i` mass of this pair.
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    pub class: usize,
    pub k: u64,
    /// `g_i`-mass of pairs where the inequality and its displayed bounds
    /// hold.
    pub satisfied_mass: f64,
    /// `(1 - 1/k)^2`.
    pub threshold: f64,
    pub pairs: Vec<BoundReport>,
}

/// Distance from a code-length table: `(G(x,y) - min codes) / max codes`.
/// A degenerate zero max code (an event of probability one) is treated as
/// distance zero.
fn code_ngd(gxy: f64, gx: f64, gy: f64) -> f64 {
    let max = gx.max(gy);
    if max <= 0.0 {
        return 0.0;
    }
    (gxy - gx.min(gy)) / max
}

/// Evaluates the distance-domination inequality with exact `beta`/`gamma`
/// and the displayed k-dependent bounds for every pair the class gives
/// positive mass, and sums the mass of the pairs where everything holds.
///
/// Zero-mass pairs carry no `g_i` mass and are excluded. A pair whose
/// author distance is infinite while the global one is finite is counted
/// against the mass.
pub fn theorem2_mass(
    g: &GoogleDistribution,
    stats: &AuthorStats,
    class_index: usize,
    k: u64,
) -> Result<Theorem2Report> {
    let class = stats
        .classes
        .get(class_index)
        .ok_or_else(|| Error::InvalidPartition(format!("no class {class_index}")))?;
    if class.n_i == 0 {
        return Err(Error::EmptyAuthorClass(class_index));
    }
    let k = k.max(1);
    let n = g.n() as f64;
    let n_ratio = n / class.n_i as f64;
    let log_2k = (2.0 * k as f64).log2();
    let mut report = Theorem2Report {
        class: class_index,
        k,
        satisfied_mass: 0.0,
        threshold: (1.0 - 1.0 / k as f64).powi(2),
        pairs: Vec::new(),
    };
    for ((x, y), count) in class.iter() {
        debug_assert!(count > 0);
        let mass = class.g(x, y);
        let gi_x = class.code(x, x);
        let gi_y = class.code(y, y);
        let gi_xy = class.code(x, y);
        let g_x = g.code(x, x);
        let g_y = g.code(y, y);
        let g_xy = g.code(x, y);

        let ngd_author = code_ngd(gi_xy, gi_x, gi_y);
        let ngd_global = code_ngd(g_xy, g_x, g_y);

        let max_g = g_x.max(g_y);
        let (beta, gamma, beta_bound, gamma_bound, exact_holds, bounds_hold) = if max_g <= 0.0 {
            // Probability-one events on both sides; distances degenerate
            // to zero and the inequality holds trivially.
            (1.0, 0.0, 1.0, 0.0, true, true)
        } else {
            let beta = gi_x.max(gi_y) / max_g;
            let gamma = (gi_x.min(gi_y) - g_x.min(g_y) + n_ratio.log2()) / max_g;
            let beta_bound = 1.0 + log_2k / max_g;
            let gamma_bound = (2.0 * k as f64 * n_ratio).log2() / max_g;
            let exact_holds = if ngd_author.is_infinite() {
                ngd_global.is_infinite()
            } else {
                ngd_global <= beta * ngd_author + gamma + HOLD_TOL
            };
            let bounds_hold = beta <= beta_bound + SLACK_TOL && gamma <= gamma_bound + SLACK_TOL;
            (beta, gamma, beta_bound, gamma_bound, exact_holds, bounds_hold)
        };
        let holds = exact_holds && bounds_hold;
        if holds {
            report.satisfied_mass += mass;
        }
        report.pairs.push(BoundReport {
            x: x.clone(),
            y: y.clone(),
            k,
            beta,
            gamma,
            beta_bound,
            gamma_bound,
            ngd_global,
            ngd_author,
            exact_holds,
            bounds_hold,
            holds,
            mass,
        });
    }
    Ok(report)
}
