//! Contrastive pair generation.
//!
//! Every ordered pair of distinct sentences drawn from a class-balanced
//! sample gets the target
//!
//! ```text
//! target(A, B) = w · cos(e_A, e_B) + (1 − w) · [class(A) == class(B)]
//! ```
//!
//! with `w = 0.5` by default, where `e` are the stored (pretrained)
//! embeddings. With `N` sentences per class this yields `2N(2N − 1)` pairs.

use crate::corpus::{stratified_sample, LabeledDataset};
use crate::embedstore::{align, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const PAIRS_HEADER: &str = "id_a\tid_b\ttarget";

#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub id_a: String,
    pub id_b: String,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGenConfig {
    pub n_per_class: usize,
    /// Weight of the embedding similarity; the class indicator gets the rest.
    pub similarity_weight: f64,
    pub seed: u64,
}

impl PairGenConfig {
    pub fn new(n_per_class: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            similarity_weight: 0.5,
            seed,
        }
    }

    pub fn label_weight(&self) -> f64 {
        1.0 - self.similarity_weight
    }

    fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::domain("n_per_class must be positive"));
        }
        if !(0.0..=1.0).contains(&self.similarity_weight) {
            return Err(Error::domain(format!(
                "similarity_weight {} outside [0, 1]",
                self.similarity_weight
            )));
        }
        Ok(())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("cosine of vectors with dims {} and {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("cosine of a zero-norm vector"));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

pub fn similarity_label(original_similarity: f64, same_class: bool, cfg: &PairGenConfig) -> f64 {
    let indicator = if same_class { 1.0 } else { 0.0 };
    cfg.similarity_weight * original_similarity + cfg.label_weight() * indicator
}

/// Samples `N` sentences per class and emits all `2N(2N − 1)` ordered pairs
/// with their targets. The pair order is row-major over the sample order.
pub fn generate_pairs(ds: &LabeledDataset, m: &EmbeddingMatrix, cfg: &PairGenConfig) -> Result<Vec<PairExample>> {
    cfg.validate()?;
    let sample = stratified_sample(ds, cfg.n_per_class, cfg.seed)?;
    let alignment = align(&sample, m)?;
    let rows: Vec<Vec<f64>> = alignment.indices.iter().map(|&r| m.row_f64(r)).collect();
    let sentences = sample.sentences();

    let n = sentences.len();
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cos = cosine(&rows[i], &rows[j])?;
            pairs.push(PairExample {
                id_a: sentences[i].id.clone(),
                id_b: sentences[j].id.clone(),
                target: similarity_label(cos, sentences[i].label == sentences[j].label, cfg),
            });
        }
    }
    Ok(pairs)
}

pub fn write_pairs(pairs: &[PairExample]) -> String {
    let mut out = String::with_capacity(32 * (pairs.len() + 1));
    out.push_str(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{:.6}\n", p.id_a, p.id_b, p.target));
    }
    out
}

pub fn read_pairs(raw: &[u8]) -> Result<Vec<PairExample>> {
    let text = std::str::from_utf8(raw).map_err(|_| Error::Parse {
        line: 0,
        message: "pairs file is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == PAIRS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{}`", PAIRS_HEADER.replace('\t', "\\t")),
            })
        }
    }
    let mut pairs = Vec::new();
    for (i, row) in lines {
        let line = i + 1;
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        let target: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::invalid_at(line, format!("bad target `{}`", cols[2])))?;
        if cols[0] == cols[1] {
            return Err(Error::invalid_at(line, "pair of a sentence with itself"));
        }
        if !(-0.5..=1.0).contains(&target) {
            return Err(Error::invalid_at(line, format!("target {target} outside [-0.5, 1]")));
        }
        pairs.push(PairExample {
            id_a: cols[0].to_string(),
            id_b: cols[1].to_string(),
            target,
        });
    }
    Ok(pairs)
}
