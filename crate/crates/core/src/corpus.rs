//! Labeled sentence datasets: TSV ingestion, statistics, leakage-guarded
//! merging and stratified sampling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TSV_HEADER: [&str; 3] = ["sentence_id", "sentence", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Subj,
    Obj,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Subj, Label::Obj];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Subj => "SUBJ",
            Label::Obj => "OBJ",
        }
    }

    /// +1 for SUBJ, -1 for OBJ.
    pub fn sign(self) -> f64 {
        match self {
            Label::Subj => 1.0,
            Label::Obj => -1.0,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Subj => Label::Obj,
            Label::Obj => Label::Subj,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("SUBJ") {
            Ok(Label::Subj)
        } else if s.eq_ignore_ascii_case("OBJ") {
            Ok(Label::Obj)
        } else {
            Err(Error::invalid(format!("unknown label `{s}`")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub language: String,
}

impl Sentence {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// An ordered collection of sentences with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    name: String,
    split: Split,
    sentences: Vec<Sentence>,
}

impl LabeledDataset {
    /// Validates ids (non-empty, unique) and texts (non-empty after trim).
    pub fn new(name: impl Into<String>, split: Split, sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(sentences.len());
        for s in &sentences {
            if s.id.is_empty() {
                return Err(Error::invalid("empty sentence id"));
            }
            if s.text.trim().is_empty() {
                return Err(Error::invalid(format!("sentence `{}` has empty text", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sentence id `{}`", s.id)));
            }
        }
        Ok(Self {
            name: name.into(),
            split,
            sentences,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.id.as_str())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.sentences.iter().map(|s| s.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.sentences.iter().filter(|s| s.label == label).count()
    }

    /// Renders the dataset in the TSV layout accepted by [`parse_dataset`].
    pub fn to_tsv(&self) -> String {
        let mut out = TSV_HEADER.join("\t");
        out.push('\n');
        for s in &self.sentences {
            out.push_str(&s.id);
            out.push('\t');
            out.push_str(&s.text);
            out.push('\t');
            out.push_str(s.label.as_str());
            out.push('\n');
        }
        out
    }
}

/// Parses the task TSV: header `sentence_id, sentence, label`, one record
/// per line, no quoting. Line numbers in errors are 1-based and count the
/// header.
pub fn parse_dataset(
    raw: &[u8],
    name: &str,
    language: &str,
    split: Split,
) -> Result<LabeledDataset> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 1 + raw[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "input is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    if header != TSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", TSV_HEADER.join("\\t")),
        });
    }

    let mut sentences = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0].trim();
        let text = cols[1].trim();
        let label: Label = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::invalid_at(line, format!("unknown label `{}`", cols[2].trim())))?;
        if id.is_empty() {
            return Err(Error::invalid_at(line, "empty sentence id"));
        }
        if text.is_empty() {
            return Err(Error::invalid_at(line, "empty sentence text"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::invalid_at(line, format!("duplicate sentence id `{id}`")));
        }
        sentences.push(Sentence {
            id: id.to_string(),
            text: text.to_string(),
            label,
            language: language.to_string(),
        });
    }
    LabeledDataset::new(name, split, sentences)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub size: usize,
    pub count_per_class: BTreeMap<Label, usize>,
    pub class_fraction: BTreeMap<Label, f64>,
    pub mean_word_count: f64,
    sorted_word_counts: Vec<usize>,
}

impl DatasetStats {
    /// Nearest-rank quantile of the per-sentence word counts, `q` in [0, 1].
    pub fn word_count_quantile(&self, q: f64) -> usize {
        let n = self.sorted_word_counts.len();
        let q = q.clamp(0.0, 1.0);
        // epsilon absorbs products like 0.7 * 10 = 7.000000000000001
        let rank = ((q * n as f64 - 1e-9).ceil() as usize).max(1);
        self.sorted_word_counts[rank.min(n) - 1]
    }

    pub fn fraction(&self, label: Label) -> f64 {
        self.class_fraction[&label]
    }
}

pub fn dataset_stats(ds: &LabeledDataset) -> Result<DatasetStats> {
    if ds.is_empty() {
        return Err(Error::domain("statistics of an empty dataset"));
    }
    let n = ds.len();
    let count_per_class: BTreeMap<Label, usize> =
        Label::ALL.iter().map(|&l| (l, ds.count(l))).collect();
    let class_fraction = count_per_class
        .iter()
        .map(|(&l, &c)| (l, c as f64 / n as f64))
        .collect();
    let mut sorted_word_counts: Vec<usize> = ds.sentences.iter().map(Sentence::word_count).collect();
    sorted_word_counts.sort_unstable();
    let mean_word_count = sorted_word_counts.iter().sum::<usize>() as f64 / n as f64;
    Ok(DatasetStats {
        size: n,
        count_per_class,
        class_fraction,
        mean_word_count,
        sorted_word_counts,
    })
}

/// Concatenates `parts` in order, dropping every sentence whose trimmed
/// text or original id occurs in `exclusion`. Output ids are
/// `<part name>:<original id>`.
pub fn merge_datasets(parts: &[LabeledDataset], exclusion: &LabeledDataset) -> Result<LabeledDataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::domain("merge needs at least one dataset"))?;
    let excluded_texts: HashSet<&str> = exclusion.sentences.iter().map(|s| s.text.trim()).collect();
    let excluded_ids: HashSet<&str> = exclusion.ids().collect();

    let merged: Vec<Sentence> = parts
        .iter()
        .flat_map(|part| part.sentences.iter().map(move |s| (part.name(), s)))
        .filter(|(_, s)| {
            !excluded_texts.contains(s.text.trim()) && !excluded_ids.contains(s.id.as_str())
        })
        .map(|(name, s)| Sentence {
            id: format!("{name}:{}", s.id),
            ..s.clone()
        })
        .collect();
    if merged.is_empty() {
        return Err(Error::domain("merged dataset is empty after exclusion"));
    }
    let name = parts.iter().map(LabeledDataset::name).collect::<Vec<_>>().join("+");
    LabeledDataset::new(name, first.split, merged)
}

/// Draws exactly `n_per_class` sentences of each label using a seeded
/// permutation. Selected sentences keep their relative dataset order.
pub fn stratified_sample(ds: &LabeledDataset, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::domain("n_per_class must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; ds.len()];
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.sentences[i].label == label)
            .collect();
        if members.len() < n_per_class {
            return Err(Error::domain(format!(
                "need {n_per_class} {label} sentences, dataset `{}` has {}",
                ds.name,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_per_class] {
            keep[i] = true;
        }
    }
    let sentences = ds
        .sentences
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .collect();
    LabeledDataset::new(ds.name.clone(), ds.split, sentences)
}
