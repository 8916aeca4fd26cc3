//! Per-model prediction sets and the majority-vote ensemble.

use std::collections::HashSet;

use indexmap::IndexMap;

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Labels (and optionally SUBJ probabilities) keyed by sentence id, in
/// insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_name: String,
    pub predictions: IndexMap<String, Label>,
    pub probabilities: Option<IndexMap<String, f64>>,
}

impl PredictionSet {
    pub fn new(model_name: impl Into<String>, predictions: IndexMap<String, Label>) -> Self {
        Self {
            model_name: model_name.into(),
            predictions,
            probabilities: None,
        }
    }

    /// Builds a set from parallel id / label / probability lists.
    pub fn from_parts(
        model_name: impl Into<String>,
        ids: &[String],
        labels: &[Label],
        probabilities: Option<&[f64]>,
    ) -> Result<Self> {
        if ids.len() != labels.len() || probabilities.is_some_and(|p| p.len() != ids.len()) {
            return Err(Error::domain("prediction columns differ in length"));
        }
        let mut predictions = IndexMap::with_capacity(ids.len());
        for (id, &label) in ids.iter().zip(labels) {
            if predictions.insert(id.clone(), label).is_some() {
                return Err(Error::invalid(format!("duplicate prediction id `{id}`")));
            }
        }
        let probabilities = probabilities.map(|p| ids.iter().cloned().zip(p.iter().copied()).collect());
        Ok(Self {
            model_name: model_name.into(),
            predictions,
            probabilities,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<Label> {
        self.predictions.get(id).copied()
    }

    /// Keeps only `ids`, in that order; every id must be present.
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<PredictionSet> {
        let mut predictions = IndexMap::new();
        let mut probabilities = self.probabilities.as_ref().map(|_| IndexMap::new());
        for id in ids {
            let label = self.get(id).ok_or_else(|| {
                Error::domain(format!("`{}` has no prediction for `{id}`", self.model_name))
            })?;
            predictions.insert(id.to_string(), label);
            if let (Some(out), Some(src)) = (probabilities.as_mut(), self.probabilities.as_ref()) {
                out.insert(id.to_string(), src[id]);
            }
        }
        Ok(PredictionSet {
            model_name: self.model_name.clone(),
            predictions,
            probabilities,
        })
    }
}

pub fn read_predictions(raw: &[u8], model_name: &str) -> Result<PredictionSet> {
    let text = std::str::from_utf8(raw).map_err(|_| Error::Parse {
        line: 0,
        message: "predictions file is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split('\t').map(str::trim).collect(),
        None => Vec::new(),
    };
    let with_prob = match header.as_slice() {
        ["sentence_id", "label"] => false,
        ["sentence_id", "label", "prob"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `sentence_id\\tlabel[\\tprob]`".into(),
            })
        }
    };
    let width = header.len();

    let mut predictions = IndexMap::new();
    let mut probabilities = with_prob.then(IndexMap::new);
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').map(str::trim).collect();
        if cols.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.is_empty() {
            return Err(Error::invalid_at(line, "empty sentence id"));
        }
        let label: Label = cols[1]
            .parse()
            .map_err(|_| Error::invalid_at(line, format!("unknown label `{}`", cols[1])))?;
        if predictions.insert(id.to_string(), label).is_some() {
            return Err(Error::invalid_at(line, format!("duplicate id `{id}`")));
        }
        if let Some(probs) = probabilities.as_mut() {
            let p: f64 = cols[2]
                .parse()
                .map_err(|_| Error::invalid_at(line, format!("bad probability `{}`", cols[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid_at(line, format!("probability {p} outside [0, 1]")));
            }
            probs.insert(id.to_string(), p);
        }
    }
    Ok(PredictionSet {
        model_name: model_name.to_string(),
        predictions,
        probabilities,
    })
}

pub fn write_predictions(set: &PredictionSet) -> String {
    let mut out = String::from(match set.probabilities {
        Some(_) => "sentence_id\tlabel\tprob\n",
        None => "sentence_id\tlabel\n",
    });
    for (id, label) in &set.predictions {
        out.push_str(id);
        out.push('\t');
        out.push_str(label.as_str());
        if let Some(probs) = &set.probabilities {
            out.push_str(&format!("\t{:.6}", probs[id]));
        }
        out.push('\n');
    }
    out
}

/// Per id, the label with strictly more votes; ties go to OBJ.
///
/// The output does not depend on voter order: names are joined in sorted
/// order, and ids keep the voters' common order when they all agree on one,
/// otherwise they are sorted.
pub fn majority_vote(voters: &[PredictionSet]) -> Result<PredictionSet> {
    let first = voters.first().ok_or_else(|| Error::domain("majority vote needs at least one voter"))?;
    let reference: HashSet<&str> = first.predictions.keys().map(String::as_str).collect();
    for v in &voters[1..] {
        if let Some(id) = first.predictions.keys().find(|id| !v.predictions.contains_key(*id)) {
            return Err(Error::domain(format!("voter `{}` has no prediction for `{id}`", v.model_name)));
        }
        if let Some(id) = v.predictions.keys().find(|id| !reference.contains(id.as_str())) {
            return Err(Error::domain(format!(
                "voter `{}` predicts `{id}`, which `{}` does not",
                v.model_name, first.model_name
            )));
        }
    }

    let shared_order = voters.iter().all(|v| v.predictions.keys().eq(first.predictions.keys()));
    let mut ids: Vec<&String> = first.predictions.keys().collect();
    if !shared_order {
        ids.sort();
    }

    let predictions = ids
        .into_iter()
        .map(|id| {
            let subj = voters.iter().filter(|v| v.predictions[id] == Label::Subj).count();
            let obj = voters.len() - subj;
            let label = if subj > obj { Label::Subj } else { Label::Obj };
            (id.clone(), label)
        })
        .collect();

    let mut names: Vec<&str> = voters.iter().map(|v| v.model_name.as_str()).collect();
    names.sort_unstable();
    Ok(PredictionSet::new(names.join("+"), predictions))
}
