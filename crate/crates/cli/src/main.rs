//! `subjkit` command-line front end.
//!
//! Every subcommand prints one summary line on success. Module errors exit
//! with status 1; usage errors exit with status 2.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subjkit::corpus::{dataset_stats, merge_datasets, Split};
use subjkit::embedstore::{align_ids, write_embeddings, EmbeddingMatrix};
use subjkit::ensemble::{majority_vote, read_predictions, write_predictions, PredictionSet};
use subjkit::fewshot::{self, FewShotModel};
use subjkit::glmnet;
use subjkit::nalgebra::DMatrix;
use subjkit::io::write_atomic;
use subjkit::metrics::{confusion, report};
use subjkit::pairgen::{self, PairGenConfig};
use subjkit::pca;
use subjkit::pipeline::{load_dataset, load_embeddings, run_pipeline, PipelineConfig};
use subjkit::{Error, Label, LabeledDataset, Result};

#[derive(Parser)]
#[command(name = "subjkit", version, about = "Subjectivity-detection pipeline toolkit")]
struct Cli {
    /// Pipeline config (flat dotted `key = value` TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset TSV with header `sentence_id<TAB>sentence<TAB>label`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "en")]
    language: String,
    #[arg(long, default_value = "train")]
    split: Split,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset TSV and write its normalized copy.
    Ingest {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Print size, class balance and word-count quantiles.
    Stats {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Concatenate datasets, dropping sentences found in `--exclude`.
    Merge {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long, default_value = "en")]
        language: String,
    },
    /// Generate contrastive training pairs.
    Pairs {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Sentences drawn per class; falls back to `pairs.n_per_class`.
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        similarity_weight: Option<f64>,
    },
    /// Fit PCA on an embedding file.
    PcaFit {
        #[arg(long)]
        embeddings: PathBuf,
        /// Components; falls back to `pca.k`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Project an embedding file with a fitted PCA model.
    PcaTransform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Train the elastic-net logistic head.
    TrainLr {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Train the few-shot adapter and head.
    TrainFewshot {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Predict labels for embedding rows.
    Predict {
        /// Logistic head (SGLM1).
        #[arg(long)]
        model: PathBuf,
        /// Applied before the head.
        #[arg(long)]
        pca: Option<PathBuf>,
        /// Applied before the head, after `--pca`.
        #[arg(long)]
        adapter: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        /// Restricts and orders rows by this dataset's ids.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Majority vote over prediction files (ties go to OBJ).
    Ensemble {
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Score predictions against a gold dataset.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "en")]
        language: String,
    },
    /// Run every branch, the ensemble and the evaluation from `--config`.
    Pipeline,
}

struct Ctx {
    config: PipelineConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| self.config.paths.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir()?.join(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load(data: &DatasetArgs) -> Result<LabeledDataset> {
    load_dataset(&data.dataset, &data.language, data.split)
}

/// Ids paired with their aligned `f64` rows.
struct Rows {
    ids: Vec<String>,
    x: DMatrix<f64>,
}

fn rows_for<'a>(ids: impl IntoIterator<Item = &'a str>, m: &EmbeddingMatrix) -> Result<Rows> {
    let ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
    let alignment = align_ids(ids.iter().map(String::as_str), m)?;
    Ok(Rows { x: m.select_f64(&alignment.indices), ids })
}

fn run(cli: Cli) -> Result<String> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Ctx { config, out: cli.out };
    let cfg = &ctx.config;

    match cli.command {
        Command::Ingest { data } => {
            let ds = load(&data)?;
            let path = ctx.write(&format!("{}.clean.tsv", ds.name()), ds.to_tsv().as_bytes())?;
            Ok(format!(
                "ingest: {} sentences ({} SUBJ, {} OBJ) -> {}",
                ds.len(),
                ds.count(Label::Subj),
                ds.count(Label::Obj),
                path.display()
            ))
        }
        Command::Stats { data } => {
            let ds = load(&data)?;
            let s = dataset_stats(&ds)?;
            Ok(format!(
                "stats: {} sentences, SUBJ {:.6}, OBJ {:.6}, words mean {:.2} median {} p90 {}",
                s.size,
                s.fraction(Label::Subj),
                s.fraction(Label::Obj),
                s.mean_word_count,
                s.word_count_quantile(0.5),
                s.word_count_quantile(0.9)
            ))
        }
        Command::Merge { inputs, exclude, language } => {
            let parts = inputs
                .iter()
                .map(|p| load_dataset(p, &language, Split::Train))
                .collect::<Result<Vec<_>>>()?;
            let exclusion = match &exclude {
                Some(p) => load_dataset(p, &language, Split::Val)?,
                None => LabeledDataset::new("none", Split::Val, Vec::new())?,
            };
            let merged = merge_datasets(&parts, &exclusion)?;
            let total: usize = parts.iter().map(LabeledDataset::len).sum();
            let path = ctx.write("merged.tsv", merged.to_tsv().as_bytes())?;
            Ok(format!(
                "merge: {} of {} sentences kept -> {}",
                merged.len(),
                total,
                path.display()
            ))
        }
        Command::Pairs { data, embeddings, n_per_class, similarity_weight } => {
            let ds = load(&data)?;
            let m = load_embeddings(&embeddings)?;
            let section = cfg.pairs.as_ref();
            let n = n_per_class
                .or(section.map(|s| s.n_per_class))
                .ok_or_else(|| Error::Config("missing --n-per-class (or `pairs.n_per_class`)".into()))?;
            let mut pcfg = PairGenConfig::new(n, cfg.seed);
            if let Some(w) = similarity_weight.or(section.map(|s| s.similarity_weight)) {
                pcfg.similarity_weight = w;
            }
            let pairs = pairgen::generate_pairs(&ds, &m, &pcfg)?;
            let path = ctx.write("pairs.tsv", pairgen::write_pairs(&pairs).as_bytes())?;
            Ok(format!("pairs: {} pairs -> {}", pairs.len(), path.display()))
        }
        Command::PcaFit { embeddings, k } => {
            let m = load_embeddings(&embeddings)?;
            let model = pca::fit(&m, k.unwrap_or(cfg.pca.k))?;
            let path = ctx.write("pca.spca", &pca::write_model(&model)?)?;
            let ratio = model
                .explained_variance_ratio()
                .map(|r| format!("{r:.6}"))
                .unwrap_or_else(|_| "undefined".into());
            Ok(format!(
                "pca-fit: k={} d={} explained variance ratio {ratio} -> {}",
                model.n_components(),
                model.input_dim(),
                path.display()
            ))
        }
        Command::PcaTransform { model, embeddings } => {
            let model = pca::read_model(&read(&model)?)?;
            let m = load_embeddings(&embeddings)?;
            let reduced = model.transform(&m)?;
            let name = format!("{}_pca.semb", file_stem(&embeddings));
            let path = ctx.write(&name, &write_embeddings(&reduced)?)?;
            Ok(format!(
                "pca-transform: {} rows {} -> {} dims -> {}",
                reduced.len(),
                m.dim(),
                reduced.dim(),
                path.display()
            ))
        }
        Command::TrainLr { data, embeddings } => {
            let ds = load(&data)?;
            let m = load_embeddings(&embeddings)?;
            let rows = rows_for(ds.ids(), &m)?;
            let fit = glmnet::fit_saga(&rows.x, &ds.labels(), &cfg.train_config())?;
            let model = glmnet::LrModel {
                threshold: cfg.lr.threshold()?,
                ..fit.model
            };
            let path = ctx.write("lr.sglm", &glmnet::write_model(&model)?)?;
            let nonzero = model.weights.iter().filter(|w| **w != 0.0).count();
            Ok(format!(
                "train-lr: {} epochs, {}, {nonzero}/{} nonzero weights -> {}",
                fit.epochs,
                if fit.converged { "converged" } else { "not converged" },
                model.dim(),
                path.display()
            ))
        }
        Command::TrainFewshot { data, embeddings } => {
            let ds = load(&data)?;
            let m = load_embeddings(&embeddings)?;
            let model = fewshot::train_fewshot(&ds, &m, &cfg.fewshot_config())?;
            let adapter = ctx.write("fewshot_adapter.sadp", &fewshot::write_adapter(&model.adapter)?)?;
            let head = ctx.write("fewshot_head.sglm", &glmnet::write_model(&model.head)?)?;
            Ok(format!(
                "train-fewshot: adapter {} epochs, loss {:.6} -> {}, {}",
                model.adapter.trained_epochs,
                model.adapter.final_loss,
                adapter.display(),
                head.display()
            ))
        }
        Command::Predict { model, pca: pca_path, adapter, embeddings, dataset, name } => {
            let head = glmnet::read_model(&read(&model)?)?;
            let m = load_embeddings(&embeddings)?;
            let rows = match &dataset {
                Some(p) => {
                    let ds = load_dataset(p, "en", Split::Val)?;
                    rows_for(ds.ids(), &m)?
                }
                None => rows_for(m.ids().iter().map(String::as_str), &m)?,
            };
            let mut x = rows.x;
            if let Some(p) = &pca_path {
                x = pca::read_model(&read(p)?)?.transform_f64(&x)?;
            }
            let adapter = match &adapter {
                Some(p) => fewshot::read_adapter(&read(p)?)?,
                None => fewshot::AdapterModel::identity(x.ncols()),
            };
            let model = FewShotModel { adapter, head };
            let probs = model.predict_proba(&x)?;
            let labels = model.predict(&x)?;
            let set = PredictionSet::from_parts(&name, &rows.ids, &labels, Some(&probs))?;
            let path = ctx.write(&format!("predictions_{name}.tsv"), write_predictions(&set).as_bytes())?;
            let subj = labels.iter().filter(|l| **l == Label::Subj).count();
            Ok(format!("predict: {} rows, {subj} SUBJ -> {}", labels.len(), path.display()))
        }
        Command::Ensemble { predictions } => {
            let voters = predictions
                .iter()
                .map(|p| read_predictions(&read(p)?, &file_stem(p)))
                .collect::<Result<Vec<_>>>()?;
            let set = majority_vote(&voters)?;
            let path = ctx.write("predictions_ensemble.tsv", write_predictions(&set).as_bytes())?;
            Ok(format!(
                "ensemble: {} voters, {} ids -> {}",
                voters.len(),
                set.len(),
                path.display()
            ))
        }
        Command::Evaluate { predictions, gold, language } => {
            let set = read_predictions(&read(&predictions)?, &file_stem(&predictions))?;
            let gold = load_dataset(&gold, &language, Split::Val)?;
            let r = report(&confusion(&set, &gold)?)?;
            if ctx.out.is_some() {
                ctx.write("report.tsv", r.to_tsv().as_bytes())?;
                ctx.write("report.txt", r.to_text().as_bytes())?;
            }
            Ok(format!(
                "macro F1 {:.6} (SUBJ F1 {:.6}, OBJ F1 {:.6}, accuracy {:.6})",
                r.macro_f1,
                r.per_class[&Label::Subj].f1,
                r.per_class[&Label::Obj].f1,
                r.accuracy
            ))
        }
        Command::Pipeline => {
            if cli.config.is_none() {
                return Err(Error::Config("pipeline needs --config".into()));
            }
            let dir = ctx.out_dir()?;
            let summary = run_pipeline(cfg, &dir)?;
            let report = fs::read_to_string(dir.join("report.txt"))?;
            print!("{report}");
            let scores: Vec<String> = summary
                .reports
                .iter()
                .map(|(name, r)| format!("{name} {:.6}", r.macro_f1))
                .collect();
            Ok(format!(
                "pipeline: macro F1 {} ; {} artifacts -> {}",
                scores.join(", "),
                summary.artifacts.len(),
                dir.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
