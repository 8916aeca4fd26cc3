#![allow(dead_code)]

pub mod oracles;

use subjkit::corpus::{Label, LabeledDataset, Sentence, Split};
use subjkit::EmbeddingMatrix;

use oracles::Lcg;

/// Two Gaussian clusters with unit noise: SUBJ around `+centre`, OBJ around
/// `-centre`. Labels alternate, starting with SUBJ.
pub fn gaussian_clusters(
    rng: &mut Lcg,
    n: usize,
    d: usize,
    separation: f64,
    prefix: &str,
    split: Split,
) -> (LabeledDataset, EmbeddingMatrix) {
    let centre: Vec<f64> = (0..d).map(|j| if j % 3 == 0 { 1.0 } else { 0.5 }).collect();
    let norm = centre.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut sentences = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Subj } else { Label::Obj };
        sentences.push(Sentence {
            id: format!("{prefix}{i}"),
            text: format!("synthetic sentence {i}"),
            label,
            language: "en".into(),
        });
        let shift = label.sign() * separation / (2.0 * norm);
        data.extend(centre.iter().map(|c| (shift * c + rng.normal()) as f32));
    }
    let ids = sentences.iter().map(|s| s.id.clone()).collect();
    (
        LabeledDataset::new(prefix, split, sentences).unwrap(),
        EmbeddingMatrix::new(ids, d, data).unwrap(),
    )
}
