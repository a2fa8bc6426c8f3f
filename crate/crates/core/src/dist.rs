//! The distance core: event probabilities, prefix code lengths, the
//! normalized distance over page counts, the compressor-based companion
//! distance, and distance-matrix assembly.
//!
//! Code lengths are base-2 bits throughout. The normalized distance is a
//! ratio of logarithms and therefore base-invariant; base 2 is
//! presentation only.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Index;
use crate::provider::{Provider, Query};

/// `g(x,y) = f(x,y) / N`.
pub fn google_prob(f_xy: f64, n: f64) -> Result<f64> {
    if n <= 0.0 {
        return Err(Error::InvalidNormalizer(n));
    }
    if f_xy < 0.0 {
        return Err(Error::NegativeCount(f_xy));
    }
    if f_xy > n {
        return Err(Error::NormalizerTooSmall {
            n,
            min_count: f_xy,
        });
    }
    Ok(f_xy / n)
}

/// Prefix code length in bits, `G = -log2 g`; `g = 0` codes to +infinity.
pub fn google_code(g: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&g));
    if g == 0.0 {
        f64::INFINITY
    } else {
        -g.log2()
    }
}

/// Normalized distance from page counts:
///
/// `(max{log f_x, log f_y} - log f_xy) / (log N - min{log f_x, log f_y})`
///
/// Special cases: `f_x = f_y = f_xy > 0` gives 0; a zero-frequency term on
/// either side gives 1 by definition; `f_xy = 0` with both terms present
/// gives +infinity. Untrustworthy counts with `f_xy > max(f_x, f_y)` yield
/// a negative value, returned raw.
pub fn ngd(f_x: f64, f_y: f64, f_xy: f64, n: f64) -> Result<f64> {
    if n <= 1.0 {
        return Err(Error::InvalidNormalizer(n));
    }
    for f in [f_x, f_y, f_xy] {
        if f < 0.0 || !f.is_finite() {
            return Err(Error::NegativeCount(f));
        }
    }
    if f_x == 0.0 || f_y == 0.0 {
        return Ok(1.0);
    }
    if f_x == f_y && f_y == f_xy {
        return Ok(0.0);
    }
    let min_f = f_x.min(f_y);
    let denom = n.log2() - min_f.log2();
    if denom <= 0.0 {
        return Err(Error::NormalizerTooSmall { n, min_count: min_f });
    }
    if n < f_x.max(f_y) {
        log::warn!("normalizer N = {n} is below max count {}", f_x.max(f_y));
    }
    if f_xy == 0.0 {
        return Ok(f64::INFINITY);
    }
    let numer = f_x.max(f_y).log2() - f_xy.log2();
    Ok(numer / denom)
}

/// The event probability mass function over singleton and doubleton terms
/// of a vocabulary, normalized so the masses sum to 1.
#[derive(Debug, Clone)]
pub struct GoogleDistribution {
    /// Keyed by lexicographically ordered term pair; singletons as (x, x).
    probabilities: BTreeMap<(String, String), f64>,
    n: u64,
}

impl GoogleDistribution {
    /// Builds the distribution from exact index counts over `vocabulary`
    /// (defaults to all indexed single-word terms).
    pub fn from_index(index: &Index, vocabulary: Option<&[String]>) -> Result<GoogleDistribution> {
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
        let mut counts = BTreeMap::new();
        let mut n: u64 = 0;
        for i in 0..vocab.len() {
            for j in i..vocab.len() {
                let c = if i == j {
                    sets[i].len() as u64
                } else {
                    intersection_size(&sets[i], &sets[j])
                };
                n += c;
                counts.insert((vocab[i].clone(), vocab[j].clone()), c);
            }
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let probabilities = counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / n as f64))
            .collect();
        Ok(GoogleDistribution { probabilities, n })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn key(x: &str, y: &str) -> (String, String) {
        if x <= y {
            (x.to_string(), y.to_string())
        } else {
            (y.to_string(), x.to_string())
        }
    }

    /// `g(x, y)`; `g(x, x)` is the singleton mass.
    pub fn prob(&self, x: &str, y: &str) -> f64 {
        self.probabilities
            .get(&Self::key(x, y))
            .copied()
            .unwrap_or(0.0)
    }

    /// Code length `G(x, y)` in bits.
    pub fn code(&self, x: &str, y: &str) -> f64 {
        google_code(self.prob(x, y))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), f64)> {
        self.probabilities.iter().map(|(k, &v)| (k, v))
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.values().sum()
    }

    /// `sum over events of 2^(-G)`; equals the total mass, so the Kraft
    /// inequality holds with equality.
    pub fn kraft_sum(&self) -> f64 {
        self.probabilities
            .values()
            .map(|&g| {
                let code = google_code(g);
                if code.is_infinite() {
                    0.0
                } else {
                    2f64.powf(-code)
                }
            })
            .sum()
    }

    /// Distance between two vocabulary terms straight from the code
    /// lengths: `(G(x,y) - min(G(x), G(y))) / max(G(x), G(y))`.
    pub fn ngd(&self, x: &str, y: &str) -> Result<f64> {
        let n = self.n as f64;
        let f_x = self.prob(x, x) * n;
        let f_y = self.prob(y, y) * n;
        let f_xy = self.prob(x, y) * n;
        ngd(f_x.round(), f_y.round(), f_xy.round(), n)
    }
}

fn intersection_size(a: &[u32], b: &[u32]) -> u64 {
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

/// Length-of-compressed-output oracle for the compression distance.
pub trait Compressor {
    fn compressed_len(&self, data: &[u8]) -> Result<usize>;
}

/// Deflate-class compressor backed by zlib.
pub struct DeflateCompressor {
    pub level: u32,
}

impl Default for DeflateCompressor {
    fn default() -> Self {
        Self { level: 6 }
    }
}

impl Compressor for DeflateCompressor {
    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        let mut encoder = flate2::write::ZlibEncoder::new(
            Vec::new(),
            flate2::Compression::new(self.level),
        );
        encoder.write_all(data)?;
        Ok(encoder.finish()?.len())
    }
}

/// Normalized compression distance:
/// `(C(xy) - min(C(x), C(y))) / max(C(x), C(y))`.
pub fn ncd(x: &[u8], y: &[u8], compressor: &dyn Compressor) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cx = compressor.compressed_len(x)? as f64;
    let cy = compressor.compressed_len(y)? as f64;
    let mut xy = Vec::with_capacity(x.len() + y.len());
    xy.extend_from_slice(x);
    xy.extend_from_slice(y);
    let cxy = compressor.compressed_len(&xy)? as f64;
    Ok((cxy - cx.min(cy)) / cx.max(cy))
}

/// Symmetric labeled matrix of pairwise distances. Infinite entries are
/// replaced by a finite cap and flagged; slightly negative entries
/// (count-noise symptoms) are kept raw and flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    /// Capped entries: infinities replaced by `inf_cap`.
    pub entries: Vec<Vec<f64>>,
    /// (row, col) positions, row < col, where the raw value was +infinity.
    pub inf_entries: Vec<(usize, usize)>,
    /// (row, col) positions, row < col, with a negative raw value.
    pub negative_entries: Vec<(usize, usize)>,
    pub inf_cap: f64,
    pub n_used: f64,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// The entry before capping: `inf` for flagged infinite positions.
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        if self.inf_entries.contains(&key) {
            f64::INFINITY
        } else {
            self.entries[i][j]
        }
    }

    /// Assembles the matrix of all pairwise distances among `terms`,
    /// consulting the provider's cache so every singleton count is fetched
    /// once.
    pub fn compute(terms: &[String], provider: &Provider, inf_cap: f64) -> Result<DistanceMatrix> {
        if inf_cap <= 0.0 {
            return Err(Error::Other(format!("inf_cap must be > 0, got {inf_cap}")));
        }
        let tokenizer = crate::index::TokenizerConfig::default();
        let mut labels = Vec::new();
        for t in terms {
            let norm = tokenizer.normalize_term(t)?;
            if !labels.contains(&norm) {
                labels.push(norm);
            }
        }
        if labels.len() < 2 {
            return Err(Error::TooFewTerms);
        }
        let n = provider.n();
        let for_pair = |x: &str, y: &str, e: Error| Error::ForPair {
            x: x.to_string(),
            y: y.to_string(),
            source: Box::new(e),
        };
        let mut singles = Vec::with_capacity(labels.len());
        for t in &labels {
            let rec = provider
                .get_count(&Query::term(t)?)
                .map_err(|e| for_pair(t, t, e))?;
            singles.push(rec.count as f64);
        }
        let dim = labels.len();
        let mut entries = vec![vec![0.0; dim]; dim];
        let mut inf_entries = Vec::new();
        let mut negative_entries = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let rec = provider
                    .get_count(&Query::pair(&labels[i], &labels[j])?)
                    .map_err(|e| for_pair(&labels[i], &labels[j], e))?;
                let d = ngd(singles[i], singles[j], rec.count as f64, n)
                    .map_err(|e| for_pair(&labels[i], &labels[j], e))?;
                let value = if d.is_infinite() {
                    inf_entries.push((i, j));
                    inf_cap
                } else {
                    if d < 0.0 {
                        negative_entries.push((i, j));
                    }
                    d
                };
                entries[i][j] = value;
                entries[j][i] = value;
            }
        }
        Ok(DistanceMatrix {
            labels,
            entries,
            inf_entries,
            negative_entries,
            inf_cap,
            n_used: n,
        })
    }

    /// CSV with a header row and a label column. With `raw`, infinite
    /// entries are written as the literal `inf` instead of the cap.
    pub fn to_csv(&self, raw: bool) -> String {
        let mut out = String::new();
        out.push_str("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(&csv_quote(l));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&csv_quote(&self.labels[i]));
            for j in 0..self.len() {
                let v = if raw { self.raw(i, j) } else { self.get(i, j) };
                if v.is_infinite() {
                    out.push_str(",inf");
                } else {
                    out.push_str(&format!(",{v}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads a labeled CSV matrix. Asymmetric input (as published
    /// matrices sometimes are) is symmetrized by averaging the two
    /// triangles; the diagonal is forced to zero. `inf` literals are
    /// capped and flagged.
    pub fn from_csv(text: &str, inf_cap: f64, n_used: f64) -> Result<DistanceMatrix> {
        let mut rows = parse_csv(text);
        if rows.is_empty() {
            return Err(Error::MalformedMatrix("empty file".into()));
        }
        // Header may or may not carry a leading corner cell.
        let header = rows.remove(0);
        let labels: Vec<String> = if header.len() == rows.len() + 1 {
            header[1..].to_vec()
        } else if header.len() == rows.len() {
            header
        } else {
            return Err(Error::MalformedMatrix(format!(
                "header has {} cells for {} data rows",
                header.len(),
                rows.len()
            )));
        };
        let dim = labels.len();
        let mut m = vec![vec![0.0f64; dim]; dim];
        let mut raw_inf = vec![vec![false; dim]; dim];
        for (i, row) in rows.iter().enumerate() {
            let values = if row.len() == dim + 1 {
                if row[0] != labels[i] {
                    return Err(Error::MalformedMatrix(format!(
                        "row label {:?} does not match header label {:?}",
                        row[0], labels[i]
                    )));
                }
                &row[1..]
            } else if row.len() == dim {
                &row[..]
            } else {
                return Err(Error::MalformedMatrix(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    row.len(),
                    dim + 1
                )));
            };
            for (j, cell) in values.iter().enumerate() {
                let cell = cell.trim();
                if cell.eq_ignore_ascii_case("inf") {
                    raw_inf[i][j] = true;
                } else {
                    m[i][j] = cell.parse().map_err(|_| {
                        Error::MalformedMatrix(format!("bad number {cell:?} at row {}", i + 1))
                    })?;
                }
            }
        }
        let mut entries = vec![vec![0.0f64; dim]; dim];
        let mut inf_entries = Vec::new();
        let mut negative_entries = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = if raw_inf[i][j] || raw_inf[j][i] {
                    inf_entries.push((i, j));
                    inf_cap
                } else {
                    let v = (m[i][j] + m[j][i]) / 2.0;
                    if v < 0.0 {
                        negative_entries.push((i, j));
                    }
                    v
                };
                entries[i][j] = v;
                entries[j][i] = v;
            }
        }
        Ok(DistanceMatrix {
            labels,
            entries,
            inf_entries,
            negative_entries,
            inf_cap,
            n_used,
        })
    }

    pub fn from_csv_path(path: &Path, inf_cap: f64) -> Result<DistanceMatrix> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, inf_cap, 0.0)
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Minimal CSV parse supporting double-quoted fields.
fn parse_csv(text: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = Vec::new();
        let mut cell = String::new();
        let mut chars = line.chars().peekable();
        let mut in_quotes = false;
        while let Some(c) = chars.next() {
            match c {
                '"' if in_quotes => {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        cell.push('"');
                    } else {
                        in_quotes = false;
                    }
                }
                '"' => in_quotes = true,
                ',' if !in_quotes => {
                    cells.push(cell.trim().to_string());
                    cell = String::new();
                }
                _ => cell.push(c),
            }
        }
        cells.push(cell.trim().to_string());
        rows.push(cells);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::TokenizerConfig;
    use crate::provider::FixtureSource;
    use crate::provider::ProviderConfig;
    use proptest::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn horse_rider_regressions() {
        let d = ngd(46_700_000.0, 12_200_000.0, 2_630_000.0, 8_058_044_651.0).unwrap();
        assert!((d - 0.443).abs() < 1e-3, "got {d}");
        let d = ngd(23_700_000.0, 6_270_000.0, 1_180_000.0, 4_285_199_774.0).unwrap();
        assert!((d - 0.460).abs() < 1e-3, "got {d}");
    }

    #[test]
    fn hand_computed_small_case() {
        // max log2 = 2, log2 f_xy = 1, log2 N - min log2 f = 4 - 1 = 3.
        assert!((ngd(4.0, 2.0, 2.0, 16.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn special_cases() {
        assert_eq!(ngd(5.0, 5.0, 5.0, 100.0).unwrap(), 0.0);
        assert_eq!(ngd(0.0, 5.0, 0.0, 100.0).unwrap(), 1.0);
        assert_eq!(ngd(5.0, 0.0, 0.0, 100.0).unwrap(), 1.0);
        assert_eq!(ngd(5.0, 7.0, 0.0, 100.0).unwrap(), f64::INFINITY);
        assert!(matches!(
            ngd(5.0, 7.0, 2.0, 1.0),
            Err(Error::InvalidNormalizer(_))
        ));
        assert!(matches!(
            ngd(-1.0, 7.0, 2.0, 100.0),
            Err(Error::NegativeCount(_))
        ));
        assert!(matches!(
            ngd(100.0, 100.0, 50.0, 64.0),
            Err(Error::NormalizerTooSmall { .. })
        ));
    }

    #[test]
    fn untrustworthy_counts_go_negative_unclamped() {
        // f_xy above both singleton counts: numerator is negative and is
        // reported as-is.
        let d = ngd(4.0, 4.0, 8.0, 1024.0).unwrap();
        assert!(d < 0.0);
        assert!((d - (-1.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn non_metricity_witness() {
        for n in [1e4f64, 1e8, 1e12] {
            let s = n.sqrt();
            let d_xz = ngd(s, 2.0 * s, s, n).unwrap();
            assert!((d_xz - 2.0 / n.log2()).abs() < 1e-12, "N = {n}: {d_xz}");
            let d_xy = ngd(s, s, 0.0, n).unwrap();
            assert_eq!(d_xy, f64::INFINITY);
        }
    }

    #[test]
    fn base_invariance() {
        // The same ratio computed with natural logs.
        let (fx, fy, fxy, n): (f64, f64, f64, f64) = (1234.0, 987.0, 55.0, 1e7);
        let expect = (fx.max(fy).ln() - fxy.ln()) / (n.ln() - fx.min(fy).ln());
        assert!((ngd(fx, fy, fxy, n).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn prob_and_code_basics() {
        assert_eq!(google_prob(1.0, 4.0).unwrap(), 0.25);
        assert_eq!(google_code(0.25), 2.0);
        assert_eq!(google_code(0.0), f64::INFINITY);
        assert!(matches!(
            google_prob(5.0, 4.0),
            Err(Error::NormalizerTooSmall { .. })
        ));
    }

    #[test]
    fn toy_distribution_hand_values() {
        let index = Index::build(vec!["a", "a b"], TokenizerConfig::default(), false).unwrap();
        let g = GoogleDistribution::from_index(&index, None).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.prob("a", "a"), 0.5);
        assert_eq!(g.prob("b", "b"), 0.25);
        assert_eq!(g.prob("a", "b"), 0.25);
        assert_eq!(g.code("a", "a"), 1.0);
        assert_eq!(g.code("a", "b"), 2.0);
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
        assert!((g.kraft_sum() - 1.0).abs() < 1e-12);
    }

    fn random_index(rng: &mut ChaCha8Rng, docs: usize, vocab: usize) -> Index {
        let texts: Vec<String> = (0..docs)
            .map(|_| {
                let len = rng.gen_range(1..=10);
                (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        Index::build(texts.iter(), TokenizerConfig::default(), false).unwrap()
    }

    #[test]
    fn distribution_sums_to_one_on_random_corpora() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let index = random_index(&mut rng, 30, 12);
            let g = GoogleDistribution::from_index(&index, None).unwrap();
            assert!((g.total_mass() - 1.0).abs() < 1e-9);
            assert!((g.kraft_sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distribution_ngd_matches_count_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let index = random_index(&mut rng, 50, 8);
        let g = GoogleDistribution::from_index(&index, None).unwrap();
        let n = g.n() as f64;
        let vocab: Vec<String> = index.terms().map(String::from).collect();
        for x in &vocab {
            for y in &vocab {
                let direct = ngd(
                    index.doc_freq(x).unwrap() as f64,
                    index.doc_freq(y).unwrap() as f64,
                    index.pair_freq(x, y).unwrap() as f64,
                    n,
                );
                match (g.ngd(x, y), direct) {
                    (Ok(a), Ok(b)) => {
                        assert!(a == b || (a - b).abs() < 1e-12, "{x},{y}: {a} vs {b}")
                    }
                    (Err(_), Err(_)) => {}
                    (a, b) => panic!("{x},{y}: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn ncd_behaves_like_a_similarity() {
        let compressor = DeflateCompressor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<u8> = (0..2000).map(|_| rng.gen()).collect();
        let same = ncd(&x, &x, &compressor).unwrap();
        assert!(same < 0.1, "self distance {same}");
        let y: Vec<u8> = (0..2000).map(|_| rng.gen()).collect();
        let far = ncd(&x, &y, &compressor).unwrap();
        assert!(far > same);
        assert!((0.0..=1.2).contains(&far), "got {far}");
        assert!(matches!(ncd(&[], &x, &compressor), Err(Error::EmptyInput)));
    }

    fn fixture_provider(n: f64) -> Provider {
        let mut counts = std::collections::HashMap::new();
        counts.insert(Query::term("horse").unwrap(), 46_700_000);
        counts.insert(Query::term("rider").unwrap(), 12_200_000);
        counts.insert(Query::term("ghost").unwrap(), 120);
        counts.insert(Query::pair("horse", "rider").unwrap(), 2_630_000);
        // ghost co-occurs with nothing: infinite distances.
        Provider::new(
            Box::new(FixtureSource::from_counts(counts)),
            ProviderConfig::local(n),
        )
        .unwrap()
    }

    #[test]
    fn matrix_assembly_and_flags() {
        let p = fixture_provider(8_058_044_651.0);
        let terms: Vec<String> = ["horse", "rider", "ghost", "horse"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = DistanceMatrix::compute(&terms, &p, 2.0).unwrap();
        assert_eq!(m.labels, vec!["horse", "rider", "ghost"]);
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(0, 1) - 0.443).abs() < 1e-3);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.raw(0, 2), f64::INFINITY);
        assert_eq!(m.inf_entries, vec![(0, 2), (1, 2)]);
        assert!(m.negative_entries.is_empty());
    }

    #[test]
    fn matrix_needs_two_terms() {
        let p = fixture_provider(1e9);
        let terms = vec!["horse".to_string(), "Horse".to_string()];
        assert!(matches!(
            DistanceMatrix::compute(&terms, &p, 2.0),
            Err(Error::TooFewTerms)
        ));
    }

    #[test]
    fn csv_round_trip_preserves_entries_and_flags() {
        let p = fixture_provider(8_058_044_651.0);
        let terms: Vec<String> = ["horse", "rider", "ghost"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = DistanceMatrix::compute(&terms, &p, 2.0).unwrap();
        let back = DistanceMatrix::from_csv(&m.to_csv(true), 2.0, m.n_used).unwrap();
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.inf_entries, m.inf_entries);
        // The capped form loses the flags but keeps values.
        let capped = DistanceMatrix::from_csv(&m.to_csv(false), 2.0, m.n_used).unwrap();
        assert_eq!(capped.entries, m.entries);
        assert!(capped.inf_entries.is_empty());
    }

    #[test]
    fn asymmetric_csv_is_symmetrized() {
        let text = "label,a,b\na,0.1,0.4\nb,0.2,0.0\n";
        let m = DistanceMatrix::from_csv(text, 2.0, 0.0).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(0, 1) - 0.3).abs() < 1e-12);
        assert_eq!(m.get(0, 1), m.get(1, 0));

        // Headerless corner cell and quoted labels both parse.
        let text = "label,\"x,1\",y\n\"x,1\",0,1\ny,1,0\n";
        let m = DistanceMatrix::from_csv(text, 2.0, 0.0).unwrap();
        assert_eq!(m.labels, vec!["x,1", "y"]);
        assert!(DistanceMatrix::from_csv("label,a\nb,0\n", 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn ngd_is_symmetric(
            fx in 1u64..10_000,
            fy in 1u64..10_000,
            fxy in 0u64..10_000,
            n in 20_000u64..1_000_000,
        ) {
            let fxy = fxy.min(fx).min(fy);
            let a = ngd(fx as f64, fy as f64, fxy as f64, n as f64).unwrap();
            let b = ngd(fy as f64, fx as f64, fxy as f64, n as f64).unwrap();
            prop_assert!(a == b || (a - b).abs() < 1e-15);
        }

        #[test]
        fn ngd_is_scale_invariant(
            fx in 1u64..10_000,
            fy in 1u64..10_000,
            fxy in 1u64..10_000,
            n in 20_000u64..1_000_000,
            c in 1u64..1000,
        ) {
            let fxy = fxy.min(fx).min(fy);
            let base = ngd(fx as f64, fy as f64, fxy as f64, n as f64).unwrap();
            let scaled = ngd(
                (fx * c) as f64,
                (fy * c) as f64,
                (fxy * c) as f64,
                (n * c) as f64,
            )
            .unwrap();
            prop_assert!((base - scaled).abs() < 1e-9, "{base} vs {scaled}");
        }

        #[test]
        fn ngd_decreases_as_n_grows(
            fx in 2u64..10_000,
            fy in 2u64..10_000,
            fxy in 1u64..10_000,
            n in 20_000u64..1_000_000,
        ) {
            let fxy = fxy.min(fx).min(fy);
            let small = ngd(fx as f64, fy as f64, fxy as f64, n as f64).unwrap();
            let large = ngd(fx as f64, fy as f64, fxy as f64, (n * 16) as f64).unwrap();
            prop_assert!(large <= small + 1e-15);
        }

        #[test]
        fn ngd_range_when_counts_are_plausible(
            fx in 1u64..10_000,
            fy in 1u64..10_000,
            fxy in 1u64..10_000,
            n in 100_000_000u64..10_000_000_000,
        ) {
            let fxy = fxy.min(fx).min(fy);
            let d = ngd(fx as f64, fy as f64, fxy as f64, n as f64).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(d.is_finite());
        }
    }
}
