//! Offline inverted index over a document collection.
//!
//! The index serves exact document frequencies for single terms (postings
//! lookup) and multi-word phrases (contiguous token-sequence match over
//! retained normalized text), plus pairwise co-occurrence counts with AND
//! semantics. A page contributes at most once per term, irrespective of
//! location or multiplicity.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization applied to documents and query terms alike: lowercase,
/// split on any non-alphanumeric character, no stemming, no stopwords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub split_non_alphanumeric: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            split_non_alphanumeric: true,
        }
    }
}

impl TokenizerConfig {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lowered;
        let text = if self.lowercase {
            lowered = text.to_lowercase();
            &lowered
        } else {
            text
        };
        if self.split_non_alphanumeric {
            text.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect()
        } else {
            text.split_whitespace().map(str::to_owned).collect()
        }
    }

    /// Normalized form of a query term: tokens joined by single spaces.
    pub fn normalize_term(&self, term: &str) -> Result<String> {
        let toks = self.tokenize(term);
        if toks.is_empty() {
            return Err(Error::EmptyTerm);
        }
        Ok(toks.join(" "))
    }
}

/// Corpus-level statistics: `M` pages, normalizer `N` (sum of all singleton
/// and doubleton event cardinalities over the vocabulary), and the implied
/// mean number of distinct terms per page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub m: u64,
    pub n: u64,
    pub alpha_estimate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    doc_count: u32,
    skipped_docs: u32,
    tokenizer: TokenizerConfig,
    has_texts: bool,
    term_count: u64,
}

/// Immutable inverted index. Postings are sorted document-id lists; the
/// normalized texts are optionally retained to answer phrase queries.
#[derive(Debug, Clone)]
pub struct Index {
    postings: BTreeMap<String, Vec<u32>>,
    doc_count: u32,
    skipped_docs: u32,
    texts: Option<Vec<String>>,
    tokenizer: TokenizerConfig,
}

impl Index {
    /// Builds an index over raw document texts. Documents that tokenize to
    /// nothing are skipped (and counted); an entirely empty input is an
    /// error.
    pub fn build<I, S>(documents: I, tokenizer: TokenizerConfig, keep_texts: bool) -> Result<Index>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut texts = Vec::new();
        let mut doc_count: u32 = 0;
        let mut skipped: u32 = 0;
        let mut any_input = false;
        for doc in documents {
            any_input = true;
            let tokens = tokenizer.tokenize(doc.as_ref());
            if tokens.is_empty() {
                skipped += 1;
                continue;
            }
            let id = doc_count;
            doc_count += 1;
            for tok in &tokens {
                let list = postings.entry(tok.clone()).or_default();
                if list.last() != Some(&id) {
                    list.push(id);
                }
            }
            if keep_texts {
                texts.push(tokens.join(" "));
            }
        }
        if !any_input || doc_count == 0 {
            return Err(Error::EmptyCorpus);
        }
        if skipped > 0 {
            log::warn!("skipped {skipped} documents with no tokens");
        }
        Ok(Index {
            postings,
            doc_count,
            skipped_docs: skipped,
            texts: keep_texts.then_some(texts),
            tokenizer,
        })
    }

    /// Number of indexed pages, `M`.
    pub fn doc_count(&self) -> u32 {
        self.doc_count
    }

    pub fn skipped_docs(&self) -> u32 {
        self.skipped_docs
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn has_texts(&self) -> bool {
        self.texts.is_some()
    }

    /// All indexed single-word terms, sorted.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// Sorted document ids containing `term` (single word or contiguous
    /// phrase).
    pub fn doc_set(&self, term: &str) -> Result<Vec<u32>> {
        let norm = self.tokenizer.normalize_term(term)?;
        let words: Vec<&str> = norm.split(' ').collect();
        if words.len() == 1 {
            return Ok(self.postings.get(words[0]).cloned().unwrap_or_default());
        }
        let texts = self.texts.as_ref().ok_or(Error::PhraseNeedsText)?;
        // Candidates must contain every constituent word; verify contiguity
        // by scanning the retained token sequence.
        let mut candidates: Option<Vec<u32>> = None;
        for w in &words {
            let list = match self.postings.get(*w) {
                Some(l) => l,
                None => return Ok(Vec::new()),
            };
            candidates = Some(match candidates {
                None => list.clone(),
                Some(cur) => intersect_sorted(&cur, list),
            });
        }
        let mut out = Vec::new();
        for id in candidates.unwrap_or_default() {
            let toks: Vec<&str> = texts[id as usize].split(' ').collect();
            if toks.windows(words.len()).any(|w| w == words.as_slice()) {
                out.push(id);
            }
        }
        Ok(out)
    }

    /// `f(x)`: number of pages containing the term.
    pub fn doc_freq(&self, term: &str) -> Result<u64> {
        Ok(self.doc_set(term)?.len() as u64)
    }

    /// `f(x,y)`: number of pages containing both terms anywhere.
    /// `pair_freq(x, x) = doc_freq(x)`.
    pub fn pair_freq(&self, x: &str, y: &str) -> Result<u64> {
        let nx = self.tokenizer.normalize_term(x)?;
        let ny = self.tokenizer.normalize_term(y)?;
        if nx == ny {
            return self.doc_freq(&nx);
        }
        let a = self.doc_set(&nx)?;
        let b = self.doc_set(&ny)?;
        Ok(intersect_sorted(&a, &b).len() as u64)
    }

    /// Computes `M`, `N` and the mean-terms-per-page estimate.
    ///
    /// With no vocabulary restriction, `N` over all single-word terms is
    /// computed per document: a page with `t` distinct terms contributes
    /// `t` singleton memberships and `t(t-1)/2` doubleton memberships, so
    /// `N = sum_d t_d (t_d + 1) / 2`. A vocabulary subset restricts `t_d`
    /// to terms in the subset.
    pub fn corpus_stats(&self, vocabulary: Option<&[String]>) -> Result<CorpusStats> {
        let mut per_doc = vec![0u64; self.doc_count as usize];
        match vocabulary {
            None => {
                for list in self.postings.values() {
                    for &id in list {
                        per_doc[id as usize] += 1;
                    }
                }
            }
            Some(vocab) => {
                let mut seen = std::collections::BTreeSet::new();
                for raw in vocab {
                    let term = self.tokenizer.normalize_term(raw)?;
                    if !seen.insert(term.clone()) {
                        continue;
                    }
                    for id in self.doc_set(&term)? {
                        per_doc[id as usize] += 1;
                    }
                }
            }
        }
        let n: u64 = per_doc.iter().map(|&t| t * (t + 1) / 2).sum();
        let m = self.doc_count as u64;
        Ok(CorpusStats {
            m,
            n,
            alpha_estimate: n as f64 / m as f64,
        })
    }

    /// Persists the index as a directory: `meta.json`, `postings.bin`
    /// (term-sorted, delta-encoded id lists) and optionally `texts.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = Meta {
            format_version: 1,
            doc_count: self.doc_count,
            skipped_docs: self.skipped_docs,
            tokenizer: self.tokenizer.clone(),
            has_texts: self.texts.is_some(),
            term_count: self.postings.len() as u64,
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;

        let mut buf = Vec::new();
        for (term, list) in &self.postings {
            write_varint(&mut buf, term.len() as u64);
            buf.extend_from_slice(term.as_bytes());
            write_varint(&mut buf, list.len() as u64);
            let mut prev = 0u32;
            for (i, &id) in list.iter().enumerate() {
                let delta = if i == 0 { id } else { id - prev - 1 };
                write_varint(&mut buf, delta as u64);
                prev = id;
            }
        }
        fs::write(dir.join("postings.bin"), &buf)?;

        if let Some(texts) = &self.texts {
            let mut buf = Vec::new();
            write_varint(&mut buf, texts.len() as u64);
            for t in texts {
                write_varint(&mut buf, t.len() as u64);
                buf.extend_from_slice(t.as_bytes());
            }
            fs::write(dir.join("texts.bin"), &buf)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Index> {
        let corrupt = |detail: &str| Error::CorruptIndex {
            path: dir.to_path_buf(),
            detail: detail.to_string(),
        };
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        if meta.format_version != 1 {
            return Err(corrupt("unsupported format version"));
        }

        let mut data = Vec::new();
        fs::File::open(dir.join("postings.bin"))?.read_to_end(&mut data)?;
        let mut pos = 0usize;
        let mut postings = BTreeMap::new();
        for _ in 0..meta.term_count {
            let len = read_varint(&data, &mut pos).ok_or_else(|| corrupt("truncated term"))?;
            let term = std::str::from_utf8(
                data.get(pos..pos + len as usize)
                    .ok_or_else(|| corrupt("truncated term bytes"))?,
            )
            .map_err(|_| corrupt("non-utf8 term"))?
            .to_string();
            pos += len as usize;
            let count =
                read_varint(&data, &mut pos).ok_or_else(|| corrupt("truncated posting length"))?;
            let mut list = Vec::with_capacity(count as usize);
            let mut prev = 0u32;
            for i in 0..count {
                let delta =
                    read_varint(&data, &mut pos).ok_or_else(|| corrupt("truncated posting"))?;
                let id = if i == 0 {
                    delta as u32
                } else {
                    prev + 1 + delta as u32
                };
                if id >= meta.doc_count {
                    return Err(corrupt("posting id out of range"));
                }
                list.push(id);
                prev = id;
            }
            postings.insert(term, list);
        }

        let texts = if meta.has_texts {
            let mut data = Vec::new();
            fs::File::open(dir.join("texts.bin"))?.read_to_end(&mut data)?;
            let mut pos = 0usize;
            let count = read_varint(&data, &mut pos).ok_or_else(|| corrupt("truncated texts"))?;
            let mut texts = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len =
                    read_varint(&data, &mut pos).ok_or_else(|| corrupt("truncated text length"))?;
                let t = std::str::from_utf8(
                    data.get(pos..pos + len as usize)
                        .ok_or_else(|| corrupt("truncated text bytes"))?,
                )
                .map_err(|_| corrupt("non-utf8 text"))?
                .to_string();
                pos += len as usize;
                texts.push(t);
            }
            Some(texts)
        } else {
            None
        };

        Ok(Index {
            postings,
            doc_count: meta.doc_count,
            skipped_docs: meta.skipped_docs,
            texts,
            tokenizer: meta.tokenizer,
        })
    }
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn write_varint(buf: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

fn read_varint(data: &[u8], pos: &mut usize) -> Option<u64> {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let byte = *data.get(*pos)?;
        *pos += 1;
        v |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return Some(v);
        }
        shift += 7;
        if shift > 63 {
            return None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build(docs: &[&str]) -> Index {
        Index::build(docs.iter().copied(), TokenizerConfig::default(), true).unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        let t = TokenizerConfig::default();
        assert_eq!(t.tokenize("The horse, Rider!"), vec!["the", "horse", "rider"]);
        assert_eq!(t.tokenize("a-b_c"), vec!["a", "b", "c"]);
        assert!(t.tokenize("...").is_empty());
    }

    #[test]
    fn normalize_rejects_empty() {
        let t = TokenizerConfig::default();
        assert!(matches!(t.normalize_term("!!"), Err(Error::EmptyTerm)));
        assert_eq!(t.normalize_term("  Horse  Rider ").unwrap(), "horse rider");
    }

    #[test]
    fn two_doc_counts() {
        let idx = build(&["a", "a b"]);
        assert_eq!(idx.doc_freq("a").unwrap(), 2);
        assert_eq!(idx.doc_freq("b").unwrap(), 1);
        assert_eq!(idx.pair_freq("a", "b").unwrap(), 1);
        assert_eq!(idx.pair_freq("a", "a").unwrap(), 2);
        assert_eq!(idx.doc_freq("zzz").unwrap(), 0);
        let stats = idx.corpus_stats(None).unwrap();
        assert_eq!(stats.m, 2);
        assert_eq!(stats.n, 4);
    }

    #[test]
    fn single_doc_stats() {
        let idx = build(&["a"]);
        let stats = idx.corpus_stats(None).unwrap();
        assert_eq!((stats.m, stats.n), (1, 1));
        assert_eq!(stats.alpha_estimate, 1.0);
    }

    #[test]
    fn multiplicity_counted_once() {
        let idx = build(&["a a a a", "b"]);
        assert_eq!(idx.doc_freq("a").unwrap(), 1);
    }

    #[test]
    fn empty_corpus_rejected() {
        let none: Vec<&str> = vec![];
        assert!(matches!(
            Index::build(none, TokenizerConfig::default(), false),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            Index::build(vec!["...", "!!"], TokenizerConfig::default(), false),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn blank_docs_skipped() {
        let idx = Index::build(vec!["a b", "...", "b c"], TokenizerConfig::default(), false)
            .unwrap();
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.skipped_docs(), 1);
    }

    #[test]
    fn phrase_queries_need_text() {
        let idx = Index::build(vec!["the quick fox", "quick the fox"], TokenizerConfig::default(), false)
            .unwrap();
        assert!(matches!(idx.doc_freq("the quick"), Err(Error::PhraseNeedsText)));
        let idx = build(&["the quick fox", "quick the fox"]);
        assert_eq!(idx.doc_freq("the quick").unwrap(), 1);
        assert_eq!(idx.doc_freq("quick the fox").unwrap(), 1);
        assert_eq!(idx.doc_freq("fox the").unwrap(), 0);
        assert_eq!(idx.pair_freq("the quick", "fox").unwrap(), 1);
    }

    fn random_corpus(rng: &mut ChaCha8Rng, n_docs: usize, vocab: usize) -> Vec<String> {
        (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(1..=8);
                (0..len)
                    .map(|_| format!("t{}", rng.gen_range(0..vocab)))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn stats_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let docs = random_corpus(&mut rng, 12, 9);
            let idx = Index::build(docs.iter(), TokenizerConfig::default(), false).unwrap();
            let vocab: Vec<String> = idx.terms().map(String::from).collect();
            let mut brute = 0u64;
            for (i, x) in vocab.iter().enumerate() {
                brute += idx.doc_freq(x).unwrap();
                for y in &vocab[i + 1..] {
                    brute += idx.pair_freq(x, y).unwrap();
                }
            }
            let stats = idx.corpus_stats(None).unwrap();
            assert_eq!(stats.n, brute);
            let restricted = idx.corpus_stats(Some(&vocab)).unwrap();
            assert_eq!(restricted.n, brute);
        }
    }

    #[test]
    fn vocabulary_subset_restricts_n() {
        let idx = build(&["a b c", "a c"]);
        let sub = vec!["a".to_string(), "c".to_string()];
        // Both docs have t=2 under {a,c}: 2*3/2 + 2*3/2 = 6.
        assert_eq!(idx.corpus_stats(Some(&sub)).unwrap().n, 6);
        // Duplicated vocabulary entries count once.
        let dup = vec!["a".to_string(), "A".to_string(), "c".to_string()];
        assert_eq!(idx.corpus_stats(Some(&dup)).unwrap().n, 6);
    }

    #[test]
    fn counts_match_full_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let docs = random_corpus(&mut rng, 200, 25);
        let idx = Index::build(docs.iter(), TokenizerConfig::default(), false).unwrap();
        let tok = TokenizerConfig::default();
        let scans: Vec<std::collections::BTreeSet<String>> = docs
            .iter()
            .map(|d| tok.tokenize(d).into_iter().collect())
            .collect();
        let vocab: Vec<String> = idx.terms().map(String::from).collect();
        for x in &vocab {
            let fx = scans.iter().filter(|s| s.contains(x)).count() as u64;
            assert_eq!(idx.doc_freq(x).unwrap(), fx);
        }
        for _ in 0..100 {
            let x = &vocab[rng.gen_range(0..vocab.len())];
            let y = &vocab[rng.gen_range(0..vocab.len())];
            let fxy = scans
                .iter()
                .filter(|s| s.contains(x) && s.contains(y))
                .count() as u64;
            assert_eq!(idx.pair_freq(x, y).unwrap(), fxy);
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let docs = random_corpus(&mut rng, 40, 15);
        let idx = Index::build(docs.iter(), TokenizerConfig::default(), true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("one");
        let d2 = dir.path().join("two");
        idx.save(&d1).unwrap();
        let reloaded = Index::load(&d1).unwrap();
        assert_eq!(reloaded.doc_count(), idx.doc_count());
        assert_eq!(reloaded.term_count(), idx.term_count());
        for t in idx.terms() {
            assert_eq!(reloaded.doc_set(t).unwrap(), idx.doc_set(t).unwrap());
        }
        assert_eq!(
            reloaded.doc_freq("t1 t2").is_ok(),
            idx.doc_freq("t1 t2").is_ok()
        );
        reloaded.save(&d2).unwrap();
        for f in ["meta.json", "postings.bin", "texts.bin"] {
            assert_eq!(
                std::fs::read(d1.join(f)).unwrap(),
                std::fs::read(d2.join(f)).unwrap(),
                "{f} differs after round trip"
            );
        }
    }

    #[test]
    fn load_rejects_corrupt_postings() {
        let idx = build(&["a b", "b c"]);
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let p = dir.path().join("postings.bin");
        let data = std::fs::read(&p).unwrap();
        std::fs::write(&p, &data[..data.len() - 1]).unwrap();
        assert!(matches!(
            Index::load(dir.path()),
            Err(Error::CorruptIndex { .. })
        ));
    }

    #[test]
    fn varint_round_trip() {
        let mut buf = Vec::new();
        let values = [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX];
        for &v in &values {
            write_varint(&mut buf, v);
        }
        let mut pos = 0;
        for &v in &values {
            assert_eq!(read_varint(&buf, &mut pos), Some(v));
        }
        assert_eq!(pos, buf.len());
    }

    proptest! {
        #[test]
        fn pair_freq_is_symmetric_and_bounded(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let docs = random_corpus(&mut rng, 15, 8);
            let idx = Index::build(docs.iter(), TokenizerConfig::default(), false).unwrap();
            let vocab: Vec<String> = idx.terms().map(String::from).collect();
            let x = &vocab[rng.gen_range(0..vocab.len())];
            let y = &vocab[rng.gen_range(0..vocab.len())];
            let fxy = idx.pair_freq(x, y).unwrap();
            prop_assert_eq!(fxy, idx.pair_freq(y, x).unwrap());
            prop_assert!(fxy <= idx.doc_freq(x).unwrap().min(idx.doc_freq(y).unwrap()));
            prop_assert_eq!(idx.pair_freq(x, x).unwrap(), idx.doc_freq(x).unwrap());
        }

        #[test]
        fn n_is_bounded_by_m_and_alpha_m(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let docs = random_corpus(&mut rng, 10, 6);
            let idx = Index::build(docs.iter(), TokenizerConfig::default(), false).unwrap();
            let stats = idx.corpus_stats(None).unwrap();
            let max_terms = docs
                .iter()
                .map(|d| {
                    TokenizerConfig::default()
                        .tokenize(d)
                        .into_iter()
                        .collect::<std::collections::BTreeSet<_>>()
                        .len() as u64
                })
                .max()
                .unwrap();
            prop_assert!(stats.m <= stats.n);
            // t(t+1)/2 <= t * max_t for t <= max_t, so N <= alpha*M with
            // alpha = max distinct terms per doc.
            prop_assert!(stats.n <= max_terms * max_terms.max(1) * stats.m);
        }
    }
}
