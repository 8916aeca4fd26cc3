//! Dual-stage few-shot training over frozen sentence embeddings.
//!
//! Stage one fits a `d × d` linear adapter `A` so that the cosine of adapted
//! embeddings regresses onto the contrastive pair targets:
//!
//! ```text
//! L(A) = (1/P) Σ_(a,b,t) (cos(A·e_a, A·e_b) − t)²
//! ```
//!
//! Stage two freezes `A` and trains the logistic head on the adapted
//! embeddings of the same class-balanced sample. The single-stage regime
//! skips the adapter and trains the head on raw embeddings.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::corpus::{stratified_sample, Label, LabeledDataset};
use crate::embedstore::{align, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::glmnet::{self, LrModel, TrainConfig};
use crate::io::{dim_u32, open_container, put_f64s};
use crate::pairgen::{generate_pairs, PairExample, PairGenConfig};

const MAGIC: &[u8; 4] = b"SADP";
const VERSION: u8 = 0x01;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterModel {
    pub matrix: DMatrix<f64>,
    pub trained_epochs: usize,
    pub final_loss: f64,
}

impl AdapterModel {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            trained_epochs: 0,
            final_loss: f64::NAN,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the adapter to every row of `x` (`n × d`).
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::domain(format!("adapter dimension {} vs rows of {}", self.dim(), x.ncols())));
        }
        Ok(x * self.matrix.transpose())
    }
}

pub fn adapter_forward(a: &AdapterModel, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != a.dim() {
        return Err(Error::domain(format!("adapter dimension {} vs vector of {}", a.dim(), e.len())));
    }
    Ok((&a.matrix * DVector::from_column_slice(e)).as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SingleStage,
    DualStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotConfig {
    pub n_per_class: usize,
    pub regime: Regime,
    pub adapter_epochs: usize,
    pub learning_rate: f64,
    pub similarity_weight: f64,
    pub seed: u64,
    pub head: TrainConfig,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            n_per_class: 20,
            regime: Regime::DualStage,
            adapter_epochs: 50,
            learning_rate: 1e-2,
            similarity_weight: 0.5,
            seed: 0,
            head: TrainConfig::default(),
        }
    }
}

impl FewShotConfig {
    fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::domain("n_per_class must be positive"));
        }
        if self.adapter_epochs == 0 {
            return Err(Error::domain("adapter_epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        self.head.validate()
    }

    fn pair_config(&self) -> PairGenConfig {
        PairGenConfig {
            n_per_class: self.n_per_class,
            similarity_weight: self.similarity_weight,
            seed: self.seed,
        }
    }
}

/// Pairs resolved against an embedding matrix: distinct embeddings plus
/// `(row_a, row_b, target)` index triples.
struct PairBatch {
    embeddings: DMatrix<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

impl PairBatch {
    fn new(pairs: &[PairExample], m: &EmbeddingMatrix) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("pair loss over an empty pair list"));
        }
        let index: HashMap<&str, usize> = m.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut local: HashMap<&str, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut resolve = |id: &str| -> Result<usize> {
            let src = *index.get(id).ok_or_else(|| Error::Alignment(id.to_string()))?;
            Ok(*local.entry(m.ids()[src].as_str()).or_insert_with(|| {
                rows.push(src);
                rows.len() - 1
            }))
        };
        let mut resolved = Vec::with_capacity(pairs.len());
        for p in pairs {
            let a = resolve(&p.id_a)?;
            let b = resolve(&p.id_b)?;
            resolved.push((a, b, p.target));
        }
        // columns are embeddings
        let embeddings = m.select_f64(&rows).transpose();
        Ok(Self {
            embeddings,
            pairs: resolved,
        })
    }

    fn adapted(&self, a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let u = a * &self.embeddings;
        let norms = u.column_iter().map(|c| c.norm()).collect();
        (u, norms)
    }

    fn loss(&self, a: &DMatrix<f64>) -> Result<f64> {
        let (u, norms) = self.adapted(a);
        let mut total = 0.0;
        for &(i, j, t) in &self.pairs {
            let denom = norms[i] * norms[j];
            if denom == 0.0 {
                return Err(Error::domain("adapter maps an embedding to the zero vector"));
            }
            let r = u.column(i).dot(&u.column(j)) / denom - t;
            total += r * r;
        }
        Ok(total / self.pairs.len() as f64)
    }

    fn gradient(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (u, norms) = self.adapted(a);
        if norms.contains(&0.0) {
            return Err(Error::domain("adapter maps an embedding to the zero vector"));
        }
        // dL/du_k accumulated per distinct embedding, then dL/dA = Σ_k g_k e_kᵀ
        let mut per_vector = DMatrix::zeros(u.nrows(), u.ncols());
        let scale = 2.0 / self.pairs.len() as f64;
        for &(i, j, t) in &self.pairs {
            let (ui, uj) = (u.column(i), u.column(j));
            let (ni, nj) = (norms[i], norms[j]);
            let cos = ui.dot(&uj) / (ni * nj);
            let coef = scale * (cos - t);
            // ∂cos/∂u = v/(|u||v|) − cos·u/|u|²
            let gi = uj / (ni * nj) - ui * (cos / (ni * ni));
            let gj = ui / (ni * nj) - uj * (cos / (nj * nj));
            per_vector.column_mut(i).axpy(coef, &gi, 1.0);
            per_vector.column_mut(j).axpy(coef, &gj, 1.0);
        }
        Ok(per_vector * self.embeddings.transpose())
    }
}

pub fn pair_loss(a: &AdapterModel, pairs: &[PairExample], m: &EmbeddingMatrix) -> Result<f64> {
    check_adapter(a, m)?;
    PairBatch::new(pairs, m)?.loss(&a.matrix)
}

pub fn pair_loss_gradient(a: &AdapterModel, pairs: &[PairExample], m: &EmbeddingMatrix) -> Result<DMatrix<f64>> {
    check_adapter(a, m)?;
    PairBatch::new(pairs, m)?.gradient(&a.matrix)
}

fn check_adapter(a: &AdapterModel, m: &EmbeddingMatrix) -> Result<()> {
    if a.dim() != m.dim() || a.matrix.ncols() != m.dim() {
        return Err(Error::domain(format!("adapter dimension {} vs embeddings of {}", a.dim(), m.dim())));
    }
    Ok(())
}

/// Outcome of adapter training, with the accepted loss after each epoch
/// (index 0 is the initial loss).
#[derive(Debug, Clone)]
pub struct AdapterFit {
    pub adapter: AdapterModel,
    pub loss_trace: Vec<f64>,
}

/// Full-batch gradient descent from the identity. A step that would raise
/// the loss is halved until it does not; the reduced step carries over to
/// later epochs.
pub fn fit_adapter(pairs: &[PairExample], m: &EmbeddingMatrix, epochs: usize, learning_rate: f64) -> Result<AdapterFit> {
    let batch = PairBatch::new(pairs, m)?;
    let mut a = DMatrix::identity(m.dim(), m.dim());
    let mut loss = batch.loss(&a)?;
    if !loss.is_finite() {
        return Err(Error::Training("initial pair loss is not finite".into()));
    }
    let mut trace = vec![loss];
    let mut step = learning_rate;

    for _ in 0..epochs {
        let grad = batch.gradient(&a)?;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("adapter gradient is not finite".into()));
        }
        for _ in 0..MAX_HALVINGS {
            let candidate = &a - &grad * step;
            match batch.loss(&candidate) {
                Ok(l) if l.is_finite() && l <= loss => {
                    a = candidate;
                    loss = l;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        trace.push(loss);
    }

    Ok(AdapterFit {
        adapter: AdapterModel {
            matrix: a,
            trained_epochs: epochs,
            final_loss: loss,
        },
        loss_trace: trace,
    })
}

/// Stage one: contrastive pairs from a seeded class-balanced sample, then
/// [`fit_adapter`].
pub fn train_adapter(ds: &LabeledDataset, m: &EmbeddingMatrix, cfg: &FewShotConfig) -> Result<AdapterFit> {
    cfg.validate()?;
    let pairs = generate_pairs(ds, m, &cfg.pair_config())?;
    fit_adapter(&pairs, m, cfg.adapter_epochs, cfg.learning_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotModel {
    pub adapter: AdapterModel,
    pub head: LrModel,
}

impl FewShotModel {
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        glmnet::predict_proba(&self.head, &self.adapter.apply_rows(x)?)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<Label>> {
        glmnet::predict(&self.head, &self.adapter.apply_rows(x)?)
    }
}

pub fn train_fewshot(ds: &LabeledDataset, m: &EmbeddingMatrix, cfg: &FewShotConfig) -> Result<FewShotModel> {
    cfg.validate()?;
    let sample = stratified_sample(ds, cfg.n_per_class, cfg.seed)?;
    let raw = m.select_f64(&align(&sample, m)?.indices);

    let adapter = match cfg.regime {
        Regime::SingleStage => AdapterModel::identity(m.dim()),
        Regime::DualStage => train_adapter(ds, m, cfg)?.adapter,
    };
    // stage two sees the adapter only through its output
    let features = adapter.apply_rows(&raw)?;
    let head = glmnet::fit_saga(&features, &sample.labels(), &cfg.head)?.model;
    Ok(FewShotModel { adapter, head })
}

pub fn write_adapter(a: &AdapterModel) -> Result<Vec<u8>> {
    let d = a.dim();
    let mut out = Vec::with_capacity(9 + 8 * d * d);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&dim_u32(d, "dimension")?.to_le_bytes());
    put_f64s(&mut out, a.matrix.transpose().iter().copied());
    Ok(out)
}

pub fn read_adapter(raw: &[u8]) -> Result<AdapterModel> {
    let mut r = open_container(raw, MAGIC, VERSION)?;
    let d = r.u32("dimension")? as usize;
    if d == 0 {
        return Err(Error::Format("adapter dimension is zero".into()));
    }
    let values = r.f64s(d.checked_mul(d).ok_or_else(|| Error::Format("adapter size overflows".into()))?, "adapter matrix")?;
    r.finish()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in adapter"));
    }
    Ok(AdapterModel {
        matrix: DMatrix::from_row_slice(d, d, &values),
        trained_epochs: 0,
        final_loss: f64::NAN,
    })
}
