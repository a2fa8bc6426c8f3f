//! `ngd`: build indexes, query counts, compute distances and matrices,
//! cluster, learn concepts, translate, and run evaluation trials.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ngd_core::dist::{ngd, DistanceMatrix};
use ngd_core::eval::{self, TrialConfig};
use ngd_core::index::{Index, TokenizerConfig};
use ngd_core::provider::{Provider, ProviderConfig, Query, RemoteSource};
use ngd_core::quartet::{hill_climb, ClimbParams};
use ngd_core::svm::{self, AnchorModel};
use ngd_core::translate::{infer_permutation, translate_word, BasisVocabulary};
use ngd_core::universality::{author_stats, check_theorem1, theorem2_mass, Partition};
use ngd_core::{Error, Result};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "ngd", version, about = "Normalized distance toolkit over page counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Count source selection: exactly one of the three.
#[derive(Args, Clone, Default)]
struct SourceArgs {
    /// Directory of a saved index.
    #[arg(long, global = false)]
    index: Option<PathBuf>,

    /// Remote count endpoint (template with `{query}` or a base URL).
    /// With no value, `NGD_PROVIDER_URL` is used.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    remote: Option<String>,

    /// JSONL fixture of planted counts.
    #[arg(long)]
    fixture: Option<PathBuf>,

    /// Normalizer N. Required for --remote and --fixture; overrides the
    /// corpus value for --index.
    #[arg(long)]
    n: Option<f64>,
}

/// Domain failures exit 1; command line mistakes exit 2.
enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Domain(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

impl SourceArgs {
    fn provider(&self) -> CliResult<Provider> {
        let picked =
            self.index.is_some() as u8 + self.remote.is_some() as u8 + self.fixture.is_some() as u8;
        if picked != 1 {
            return Err(usage(
                "exactly one of --index, --remote, --fixture is required",
            ));
        }
        if let Some(dir) = &self.index {
            return Ok(Provider::from_index(Index::load(dir)?, self.n)?);
        }
        let n = self
            .n
            .ok_or_else(|| usage("--n is required with --remote and --fixture"))?;
        if let Some(path) = &self.fixture {
            let mut config = ProviderConfig::local(n).apply_env();
            config.requests_per_second = f64::INFINITY;
            return Ok(Provider::new(
                Box::new(ngd_core::provider::FixtureSource::load(path)?),
                config,
            )?);
        }
        let mut url = self.remote.clone().unwrap();
        if url.is_empty() {
            url = std::env::var("NGD_PROVIDER_URL")
                .ok()
                .filter(|u| !u.is_empty())
                .ok_or_else(|| usage("--remote needs a URL or NGD_PROVIDER_URL set"))?;
        }
        Ok(Provider::new(
            Box::new(RemoteSource::new(&url)),
            ProviderConfig::new(n).apply_env(),
        )?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Index maintenance.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Page count of a term.
    Count {
        term: String,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Distance between two terms.
    Pair {
        x: String,
        y: String,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Pairwise distance matrix over a term list.
    Matrix {
        /// Terms on the command line; or use --terms-file.
        terms: Vec<String>,
        #[arg(long)]
        terms_file: Option<PathBuf>,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 2.0)]
        inf_cap: f64,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write infinite entries as the literal `inf` instead of the cap.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a ternary tree to a distance matrix by hill-climbing.
    Cluster {
        /// CSV matrix file (as produced by `matrix`).
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        inf_cap: f64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// newick or json.
        #[arg(long, default_value = "newick")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an anchor-feature concept classifier.
    Learn {
        /// Positive example terms, one per line.
        #[arg(long)]
        pos: PathBuf,
        /// Negative example terms, one per line.
        #[arg(long)]
        neg: PathBuf,
        /// Anchor terms, one per line.
        #[arg(long)]
        anchors: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        inf_cap: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Where to write the trained model (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify terms with a trained model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        terms: Vec<String>,
        #[arg(long)]
        terms_file: Option<PathBuf>,
        #[command(flatten)]
        source: SourceArgs,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align a bilingual basis, optionally translating one unknown word.
    Translate {
        /// TSV of known pairs: source<TAB>target.
        #[arg(long)]
        basis: PathBuf,
        /// Unknown source-language word.
        #[arg(long)]
        word: Option<String>,
        /// Comma-separated candidate target words (with --word).
        #[arg(long)]
        candidates: Option<String>,
        #[command(flatten)]
        source: SourceArgs,
        /// Target-language count source.
        #[arg(long)]
        target_index: Option<PathBuf>,
        #[arg(long)]
        target_remote: Option<String>,
        #[arg(long)]
        target_fixture: Option<PathBuf>,
        #[arg(long)]
        target_n: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        inf_cap: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized classification trials against category files.
    Eval {
        /// Positive lexicon, one term per line.
        #[arg(long)]
        category: PathBuf,
        /// Negative pool, one term per line.
        #[arg(long)]
        dictionary: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        train_size: usize,
        #[arg(long, default_value_t = 20)]
        test_size: usize,
        #[arg(long, default_value_t = 6)]
        anchors: usize,
        #[arg(long, default_value_t = 2.0)]
        inf_cap: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Domination checks over random author partitions of an index.
    Universality {
        /// Directory of a saved index.
        #[arg(long)]
        index: PathBuf,
        /// Number of author classes per partition.
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Number of random partitions to check.
        #[arg(long, default_value_t = 100)]
        partitions: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build an index from a file of documents (one per line).
    Build {
        /// Input document file.
        #[arg(long)]
        docs: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Retain normalized document text (enables phrase queries).
        #[arg(long)]
        keep_texts: bool,
    },
    /// Print corpus statistics of a saved index.
    Stats {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn emit(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn read_terms(terms: &[String], file: &Option<PathBuf>) -> CliResult<Vec<String>> {
    let mut out = terms.to_vec();
    if let Some(path) = file {
        out.extend(eval::load_term_file(path)?);
    }
    if out.is_empty() {
        return Err(usage("no terms given"));
    }
    Ok(out)
}

fn pair_distance(p: &Provider, x: &str, y: &str) -> Result<f64> {
    let tok = TokenizerConfig::default();
    if tok.normalize_term(x)? == tok.normalize_term(y)? {
        return Ok(0.0);
    }
    let fx = p.get_count(&Query::term(x)?)?.count as f64;
    let fy = p.get_count(&Query::term(y)?)?.count as f64;
    let fxy = p.get_count(&Query::pair(x, y)?)?.count as f64;
    ngd(fx, fy, fxy, p.n())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Index { command } => match command {
            IndexCommand::Build {
                docs,
                out,
                keep_texts,
            } => {
                let text = std::fs::read_to_string(&docs)?;
                let index =
                    Index::build(text.lines(), TokenizerConfig::default(), keep_texts)?;
                index.save(&out)?;
                println!(
                    "indexed {} documents, {} terms ({} skipped)",
                    index.doc_count(),
                    index.term_count(),
                    index.skipped_docs()
                );
            }
            IndexCommand::Stats { dir } => {
                let index = Index::load(&dir)?;
                let stats = index.corpus_stats(None)?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "documents": stats.m,
                        "normalizer": stats.n,
                        "alpha_estimate": stats.alpha_estimate,
                        "terms": index.term_count(),
                    }))?
                );
            }
        },
        Command::Count { term, source } => {
            let p = source.provider()?;
            println!("{}", p.get_count(&Query::term(&term)?)?.count);
        }
        Command::Pair { x, y, source } => {
            let p = source.provider()?;
            let d = pair_distance(&p, &x, &y)?;
            if d.is_infinite() {
                println!("inf");
            } else {
                println!("{d:.3}");
            }
        }
        Command::Matrix {
            terms,
            terms_file,
            source,
            inf_cap,
            format,
            raw,
            out,
        } => {
            let terms = read_terms(&terms, &terms_file)?;
            let p = source.provider()?;
            let m = DistanceMatrix::compute(&terms, &p, inf_cap)?;
            let content = match format.as_str() {
                "csv" => m.to_csv(raw),
                "json" => m.to_json()?,
                other => return Err(usage(format!("unknown format {other:?}"))),
            };
            emit(&out, &content)?;
        }
        Command::Cluster {
            matrix,
            seed,
            inf_cap,
            restarts,
            format,
            out,
        } => {
            let m = DistanceMatrix::from_csv_path(&matrix, inf_cap)?;
            let params = ClimbParams {
                restarts,
                ..ClimbParams::default()
            };
            let (tree, score) = hill_climb(&m, seed, params)?;
            let newick = tree.to_newick(&m.labels);
            let content = match format.as_str() {
                "newick" => format!("{newick}\nS(T) = {:.6}\n", score.s),
                "json" => serde_json::to_string_pretty(&serde_json::json!({
                    "newick": newick,
                    "score": score,
                    "seed": seed,
                }))? + "\n",
                other => return Err(usage(format!("unknown format {other:?}"))),
            };
            emit(&out, &content)?;
        }
        Command::Learn {
            pos,
            neg,
            anchors,
            source,
            seed: _,
            inf_cap,
            folds,
            out,
        } => {
            let positives = eval::load_term_file(&pos)?;
            let negatives = eval::load_term_file(&neg)?;
            let anchors = eval::load_term_file(&anchors)?;
            let p = source.provider()?;
            let model = svm::train(
                &positives,
                &negatives,
                &anchors,
                &p,
                inf_cap,
                folds,
                &svm::default_grid(),
            )?;
            model.save(&out)?;
            println!(
                "cv accuracy {:.4} (cost {}, kernel width {})",
                model.cv_accuracy, model.svm.cost, model.svm.kernel_width
            );
        }
        Command::Classify {
            model,
            terms,
            terms_file,
            source,
            format,
            out,
        } => {
            let model = AnchorModel::load(&model)?;
            let terms = read_terms(&terms, &terms_file)?;
            let p = source.provider()?;
            let predictions = svm::predict(&model, &terms, &p);
            let content = match format.as_str() {
                "csv" => svm::predictions_to_csv(&predictions),
                "json" => serde_json::to_string_pretty(&predictions)? + "\n",
                other => return Err(usage(format!("unknown format {other:?}"))),
            };
            emit(&out, &content)?;
        }
        Command::Translate {
            basis,
            word,
            candidates,
            source,
            target_index,
            target_remote,
            target_fixture,
            target_n,
            inf_cap,
            out,
        } => {
            let basis = BasisVocabulary::parse_tsv(&std::fs::read_to_string(&basis)?)?;
            let src = source.provider()?;
            let tgt = SourceArgs {
                index: target_index,
                remote: target_remote,
                fixture: target_fixture,
                n: target_n,
            }
            .provider()
            .map_err(|e| match e {
                CliError::Usage(m) => usage(format!("target provider: {m}")),
                CliError::Domain(d) => CliError::Domain(d),
            })?;
            let content = match word {
                Some(word) => {
                    let candidates: Vec<String> = candidates
                        .ok_or_else(|| usage("--candidates required with --word"))?
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    let outcome =
                        translate_word(&basis, &word, &candidates, &src, &tgt, inf_cap)?;
                    serde_json::to_string_pretty(&outcome)? + "\n"
                }
                None => {
                    let sm = DistanceMatrix::compute(&basis.source, &src, inf_cap)?;
                    let tm = DistanceMatrix::compute(&basis.target, &tgt, inf_cap)?;
                    let search = infer_permutation(&sm, &tm, &basis)?;
                    serde_json::to_string_pretty(&search)? + "\n"
                }
            };
            emit(&out, &content)?;
        }
        Command::Eval {
            category,
            dictionary,
            source,
            seed,
            trials,
            train_size,
            test_size,
            anchors,
            inf_cap,
            out,
        } => {
            let mut config = TrialConfig::new(
                eval::load_term_file(&category)?,
                eval::load_term_file(&dictionary)?,
                seed,
            );
            config.train_size = train_size;
            config.test_size = test_size;
            config.anchors = anchors;
            config.inf_cap = inf_cap;
            let p = source.provider()?;
            let summary = eval::run_trials(trials, &config, &p)?;
            let content = serde_json::to_string_pretty(&summary)? + "\n";
            emit(&out, &content)?;
        }
        Command::Universality {
            index,
            classes,
            partitions,
            seed,
            out,
        } => {
            let index = Index::load(&index)?;
            let g = ngd_core::dist::GoogleDistribution::from_index(&index, None)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut worst_slack = f64::INFINITY;
            let mut violations = 0usize;
            let mut pairs_checked = 0usize;
            let mut min_mass_margin = f64::INFINITY;
            for _ in 0..partitions {
                let partition = Partition::random(index.doc_count(), classes, &mut rng)?;
                let stats = author_stats(&index, &partition, None)?;
                let report = check_theorem1(&g, &stats);
                violations += report.violations.len();
                pairs_checked += report.pairs_checked;
                worst_slack = worst_slack.min(report.min_slack);
                for ci in 0..stats.classes.len() {
                    if stats.classes[ci].n_i == 0 {
                        continue;
                    }
                    let t2 = theorem2_mass(&g, &stats, ci, classes as u64)?;
                    min_mass_margin = min_mass_margin.min(t2.satisfied_mass - t2.threshold);
                }
            }
            let content = serde_json::to_string_pretty(&serde_json::json!({
                "partitions": partitions,
                "classes": classes,
                "pairs_checked": pairs_checked,
                "theorem1_violations": violations,
                "theorem1_min_slack": worst_slack,
                "theorem2_min_mass_margin": min_mass_margin,
            }))? + "\n";
            emit(&out, &content)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            std::process::exit(2);
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
