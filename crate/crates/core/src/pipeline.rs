//! Config-driven three-branch run: PCA + elastic-net on (fine-tuned)
//! embeddings, a dual-stage few-shot learner, and external prediction files,
//! combined by majority vote and scored against the validation labels.
//!
//! The config is a flat `key = value` file with dotted section prefixes
//! (TOML syntax):
//!
//! ```text
//! seed = 42
//! paths.train_dataset = "data/train_en.tsv"
//! paths.val_dataset = "data/dev_en.tsv"
//! paths.train_embeddings = "emb/train_ft.semb"
//! paths.val_embeddings = "emb/dev_ft.semb"
//! pca.k = 110
//! lr.c = 0.5
//! fewshot.n_per_class = 20
//! external.xlmr = "preds/xlmr_dev.tsv"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::{parse_dataset, LabeledDataset, Split};
use crate::embedstore::{align, read_embeddings, EmbeddingMatrix};
use crate::ensemble::{majority_vote, read_predictions, write_predictions, PredictionSet};
use crate::error::{Error, Result};
use crate::fewshot::{self, FewShotConfig, Regime};
use crate::glmnet::{self, ClassWeightMode, TrainConfig};
use crate::io::write_atomic;
use crate::metrics::{confusion, report, ClassReport};
use crate::pairgen::{self, PairGenConfig};
use crate::pca;

pub const EMBEDDING_BRANCH: &str = "embedding";
pub const FEWSHOT_BRANCH: &str = "fewshot";
pub const ENSEMBLE_NAME: &str = "ensemble";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub pca: PcaSection,
    #[serde(default)]
    pub lr: LrSection,
    #[serde(default)]
    pub fewshot: FewShotSection,
    pub pairs: Option<PairsSection>,
    /// Name → predictions TSV of an externally trained model.
    #[serde(default)]
    pub external: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub train_dataset: Option<PathBuf>,
    pub val_dataset: Option<PathBuf>,
    #[serde(default = "default_language")]
    pub language: String,
    /// Embeddings for the PCA + elastic-net branch.
    pub train_embeddings: Option<PathBuf>,
    pub val_embeddings: Option<PathBuf>,
    /// Pretrained embeddings for the few-shot branch; default to the above.
    pub fewshot_train_embeddings: Option<PathBuf>,
    pub fewshot_val_embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

fn default_language() -> String {
    "en".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSection {
    pub k: usize,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self { k: 110 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeightSetting {
    None,
    Balanced,
}

/// Classifier knobs; every field falls back to [`TrainConfig::default`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSection {
    pub c: Option<f64>,
    pub l1_ratio: Option<f64>,
    pub class_weight: Option<ClassWeightSetting>,
    pub max_epochs: Option<usize>,
    pub tolerance: Option<f64>,
    pub standardize: Option<bool>,
    pub threshold: Option<f64>,
}

impl LrSection {
    /// Fields set here override `base`.
    pub fn apply(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            c: self.c.unwrap_or(base.c),
            l1_ratio: self.l1_ratio.unwrap_or(base.l1_ratio),
            class_weight_mode: match self.class_weight {
                Some(ClassWeightSetting::None) => ClassWeightMode::None,
                Some(ClassWeightSetting::Balanced) => ClassWeightMode::Balanced,
                None => base.class_weight_mode,
            },
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            tolerance: self.tolerance.unwrap_or(base.tolerance),
            seed,
            standardize: self.standardize.unwrap_or(base.standardize),
        }
    }

    pub fn threshold(&self) -> Result<f64> {
        let t = self.threshold.unwrap_or(0.5);
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("lr.threshold {t} outside (0, 1]")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeSetting {
    Single,
    Dual,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotSection {
    pub n_per_class: Option<usize>,
    pub regime: Option<RegimeSetting>,
    pub adapter_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub similarity_weight: Option<f64>,
    /// Head overrides on top of the `lr` section.
    #[serde(default)]
    pub head: LrSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsSection {
    pub n_per_class: usize,
    #[serde(default = "half")]
    pub similarity_weight: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Voter names; defaults to both internal branches plus every external.
    pub members: Option<Vec<String>>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.train_dataset);
        fix(&mut paths.val_dataset);
        fix(&mut paths.train_embeddings);
        fix(&mut paths.val_embeddings);
        fix(&mut paths.fewshot_train_embeddings);
        fix(&mut paths.fewshot_val_embeddings);
        fix(&mut paths.out_dir);
        for p in self.external.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.lr.apply(&TrainConfig::default(), self.seed)
    }

    pub fn fewshot_config(&self) -> FewShotConfig {
        let defaults = FewShotConfig::default();
        let head = self.fewshot.head.apply(&self.train_config(), self.seed);
        FewShotConfig {
            n_per_class: self.fewshot.n_per_class.unwrap_or(defaults.n_per_class),
            regime: match self.fewshot.regime {
                Some(RegimeSetting::Single) => Regime::SingleStage,
                Some(RegimeSetting::Dual) => Regime::DualStage,
                None => defaults.regime,
            },
            adapter_epochs: self.fewshot.adapter_epochs.unwrap_or(defaults.adapter_epochs),
            learning_rate: self.fewshot.learning_rate.unwrap_or(defaults.learning_rate),
            similarity_weight: self.fewshot.similarity_weight.unwrap_or(defaults.similarity_weight),
            seed: self.seed,
            head,
        }
    }

    pub fn members(&self) -> Vec<String> {
        self.ensemble.members.clone().unwrap_or_else(|| {
            [EMBEDDING_BRANCH.to_string(), FEWSHOT_BRANCH.to_string()]
                .into_iter()
                .chain(self.external.keys().cloned())
                .collect()
        })
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let path = p
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing `paths.{key}`")))?;
        if !path.exists() {
            return Err(Error::Config(format!("`paths.{key}` = {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// Checks that every referenced input exists and the member list is
    /// satisfiable.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        self.require(&p.train_dataset, "train_dataset")?;
        self.require(&p.val_dataset, "val_dataset")?;
        self.require(&p.train_embeddings, "train_embeddings")?;
        self.require(&p.val_embeddings, "val_embeddings")?;
        if p.fewshot_train_embeddings.is_some() {
            self.require(&p.fewshot_train_embeddings, "fewshot_train_embeddings")?;
        }
        if p.fewshot_val_embeddings.is_some() {
            self.require(&p.fewshot_val_embeddings, "fewshot_val_embeddings")?;
        }
        for (name, path) in &self.external {
            if !path.exists() {
                return Err(Error::Config(format!("`external.{name}` = {} does not exist", path.display())));
            }
        }
        let members = self.members();
        if members.is_empty() {
            return Err(Error::Config("ensemble has no members".into()));
        }
        for m in &members {
            if m != EMBEDDING_BRANCH && m != FEWSHOT_BRANCH && !self.external.contains_key(m) {
                return Err(Error::Config(format!("unknown ensemble member `{m}`")));
            }
        }
        Ok(())
    }
}

pub fn load_dataset(path: &Path, language: &str, split: Split) -> Result<LabeledDataset> {
    let raw = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset(&raw, &name, language, split)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let raw = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    read_embeddings(&raw)
}

/// Rows of `m` for the sentences of `ds`, in dataset order.
pub fn aligned_rows(ds: &LabeledDataset, m: &EmbeddingMatrix) -> Result<nalgebra::DMatrix<f64>> {
    Ok(m.select_f64(&align(ds, m)?.indices))
}

/// Artifacts and scores of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    /// Validation report per voter, then the ensemble, in member order.
    pub reports: Vec<(String, ClassReport)>,
    pub explained_variance_ratio: Option<f64>,
    pub artifacts: Vec<PathBuf>,
}

impl PipelineSummary {
    pub fn report(&self, name: &str) -> Option<&ClassReport> {
        self.reports.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }
}

struct BranchOutput {
    predictions: PredictionSet,
    files: Vec<(String, Vec<u8>)>,
    explained_variance: Option<f64>,
}

fn embedding_branch(
    train: &LabeledDataset,
    val: &LabeledDataset,
    m_train: &EmbeddingMatrix,
    m_val: &EmbeddingMatrix,
    cfg: &PipelineConfig,
) -> Result<BranchOutput> {
    let x_train = aligned_rows(train, m_train)?;
    let x_val = aligned_rows(val, m_val)?;
    let model = pca::fit_matrix(&x_train, cfg.pca.k)?;
    let ratio = model.explained_variance_ratio().ok();
    let z_train = model.transform_f64(&x_train)?;
    let z_val = model.transform_f64(&x_val)?;

    let fit = glmnet::fit_saga(&z_train, &train.labels(), &cfg.train_config())?;
    let head = glmnet::LrModel {
        threshold: cfg.lr.threshold()?,
        ..fit.model
    };
    let probs = glmnet::predict_proba(&head, &z_val)?;
    let labels = glmnet::predict(&head, &z_val)?;
    let ids: Vec<String> = val.ids().map(str::to_string).collect();
    let predictions = PredictionSet::from_parts(EMBEDDING_BRANCH, &ids, &labels, Some(&probs))?;

    Ok(BranchOutput {
        files: vec![
            ("pca.spca".into(), pca::write_model(&model)?),
            ("embedding_head.sglm".into(), glmnet::write_model(&head)?),
            (format!("predictions_{EMBEDDING_BRANCH}.tsv"), write_predictions(&predictions).into_bytes()),
        ],
        predictions,
        explained_variance: ratio,
    })
}

fn fewshot_branch(
    train: &LabeledDataset,
    val: &LabeledDataset,
    m_train: &EmbeddingMatrix,
    m_val: &EmbeddingMatrix,
    cfg: &PipelineConfig,
) -> Result<BranchOutput> {
    let fs_cfg = cfg.fewshot_config();
    let model = fewshot::train_fewshot(train, m_train, &fs_cfg)?;
    let x_val = aligned_rows(val, m_val)?;
    let probs = model.predict_proba(&x_val)?;
    let labels = model.predict(&x_val)?;
    let ids: Vec<String> = val.ids().map(str::to_string).collect();
    let predictions = PredictionSet::from_parts(FEWSHOT_BRANCH, &ids, &labels, Some(&probs))?;
    Ok(BranchOutput {
        files: vec![
            ("fewshot_adapter.sadp".into(), fewshot::write_adapter(&model.adapter)?),
            ("fewshot_head.sglm".into(), glmnet::write_model(&model.head)?),
            (format!("predictions_{FEWSHOT_BRANCH}.tsv"), write_predictions(&predictions).into_bytes()),
        ],
        predictions,
        explained_variance: None,
    })
}

/// Runs every branch, the ensemble and the evaluation, writing artifacts
/// into `out_dir`. Output bytes depend only on the inputs and `cfg.seed`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    cfg.validate()?;
    let p = &cfg.paths;
    let train = load_dataset(p.train_dataset.as_deref().unwrap(), &p.language, Split::Train)?;
    let val = load_dataset(p.val_dataset.as_deref().unwrap(), &p.language, Split::Val)?;
    let m_train = load_embeddings(p.train_embeddings.as_deref().unwrap())?;
    let m_val = load_embeddings(p.val_embeddings.as_deref().unwrap())?;
    let fs_train = match &p.fewshot_train_embeddings {
        Some(path) => load_embeddings(path)?,
        None => m_train.clone(),
    };
    let fs_val = match &p.fewshot_val_embeddings {
        Some(path) => load_embeddings(path)?,
        None => m_val.clone(),
    };

    let members = cfg.members();
    let wants = |name: &str| members.iter().any(|m| m == name);

    // the two internal branches share nothing mutable
    let (embedding, few) = std::thread::scope(|scope| {
        let emb = wants(EMBEDDING_BRANCH)
            .then(|| scope.spawn(|| embedding_branch(&train, &val, &m_train, &m_val, cfg)));
        let few = wants(FEWSHOT_BRANCH)
            .then(|| scope.spawn(|| fewshot_branch(&train, &val, &fs_train, &fs_val, cfg)));
        let join = |h: Option<std::thread::ScopedJoinHandle<'_, Result<BranchOutput>>>| {
            h.map(|h| h.join().expect("branch thread panicked")).transpose()
        };
        (join(emb), join(few))
    });
    let (embedding, few) = (embedding?, few?);

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if let Some(pairs_cfg) = &cfg.pairs {
        let pcfg = PairGenConfig {
            n_per_class: pairs_cfg.n_per_class,
            similarity_weight: pairs_cfg.similarity_weight,
            seed: cfg.seed,
        };
        let pairs = pairgen::generate_pairs(&train, &fs_train, &pcfg)?;
        files.push(("pairs.tsv".into(), pairgen::write_pairs(&pairs).into_bytes()));
    }

    let mut voters = Vec::new();
    let mut explained_variance_ratio = None;
    for name in &members {
        let set = if name == EMBEDDING_BRANCH {
            let out = embedding.as_ref().unwrap();
            explained_variance_ratio = out.explained_variance;
            out.predictions.clone()
        } else if name == FEWSHOT_BRANCH {
            few.as_ref().unwrap().predictions.clone()
        } else {
            let path = &cfg.external[name];
            let raw = fs::read(path)?;
            read_predictions(&raw, name)?.restrict(val.ids())?
        };
        voters.push(set);
    }
    for out in embedding.iter().chain(few.iter()) {
        files.extend(out.files.iter().cloned());
    }

    let mut ensemble = majority_vote(&voters)?;
    ensemble.model_name = ENSEMBLE_NAME.into();
    files.push(("predictions_ensemble.tsv".into(), write_predictions(&ensemble).into_bytes()));

    let mut reports = Vec::new();
    for set in voters.iter().chain(std::iter::once(&ensemble)) {
        reports.push((set.model_name.clone(), report(&confusion(set, &val)?)?));
    }
    let mut tsv = String::from("metric\tclass\tvalue\n");
    let mut text = String::new();
    for (name, r) in &reports {
        r.append_tsv_rows(&mut tsv, Some(name));
        for line in r.to_text().lines() {
            text.push_str(&format!("{name}.{line}\n"));
        }
    }
    if let Some(ratio) = explained_variance_ratio {
        text.push_str(&format!("pca.explained_variance_ratio = {ratio:.6}\n"));
    }
    files.push(("report.tsv".into(), tsv.into_bytes()));
    files.push(("report.txt".into(), text.into_bytes()));

    let mut artifacts = Vec::new();
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        artifacts.push(path);
    }
    Ok(PipelineSummary {
        reports,
        explained_variance_ratio,
        artifacts,
    })
}
