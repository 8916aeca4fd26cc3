//! Confusion counts and per-class / macro-averaged scores, SUBJ positive.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::corpus::{Label, LabeledDataset};
use crate::ensemble::PredictionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with OBJ taken as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn record(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Subj, Label::Subj) => self.tp += 1,
            (Label::Subj, Label::Obj) => self.fp += 1,
            (Label::Obj, Label::Subj) => self.fn_ += 1,
            (Label::Obj, Label::Obj) => self.tn += 1,
        }
    }
}

/// Counts over the gold ids; predictions for other ids are ignored.
pub fn confusion(pred: &PredictionSet, gold: &LabeledDataset) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for s in gold.sentences() {
        let p = pred.get(&s.id).ok_or_else(|| {
            Error::domain(format!("`{}` has no prediction for gold id `{}`", pred.model_name, s.id))
        })?;
        cm.record(p, s.label);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub per_class: BTreeMap<Label, ClassScores>,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn scores(tp: usize, fp: usize, fn_: usize) -> ClassScores {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    // 2PR/(P+R) rewritten on counts; 0/0 → 0
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    ClassScores { precision, recall, f1 }
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    if cm.total() == 0 {
        return Err(Error::domain("report on an empty confusion matrix"));
    }
    let subj = scores(cm.tp, cm.fp, cm.fn_);
    let obj = scores(cm.tn, cm.fn_, cm.fp);
    Ok(ClassReport {
        macro_f1: (subj.f1 + obj.f1) / 2.0,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        per_class: [(Label::Subj, subj), (Label::Obj, obj)].into_iter().collect(),
    })
}

impl ClassReport {
    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, s) in &self.per_class {
            let name = label.as_str().to_lowercase();
            writeln!(out, "{name}.precision = {:.6}", s.precision).unwrap();
            writeln!(out, "{name}.recall = {:.6}", s.recall).unwrap();
            writeln!(out, "{name}.f1 = {:.6}", s.f1).unwrap();
        }
        writeln!(out, "accuracy = {:.6}", self.accuracy).unwrap();
        writeln!(out, "macro_f1 = {:.6}", self.macro_f1).unwrap();
        out
    }

    /// `metric<TAB>class<TAB>value` rows; dataset-level metrics use class `all`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tclass\tvalue\n");
        self.append_tsv_rows(&mut out, None);
        out
    }

    /// Appends rows, prefixing metric names with `prefix.` when given.
    pub fn append_tsv_rows(&self, out: &mut String, prefix: Option<&str>) {
        let name = |m: &str| match prefix {
            Some(p) => format!("{p}.{m}"),
            None => m.to_string(),
        };
        for (label, s) in &self.per_class {
            for (metric, v) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
                writeln!(out, "{}\t{label}\t{v:.6}", name(metric)).unwrap();
            }
        }
        writeln!(out, "{}\tall\t{:.6}", name("accuracy"), self.accuracy).unwrap();
        writeln!(out, "{}\tall\t{:.6}", name("macro_f1"), self.macro_f1).unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Split};
    use proptest::prelude::*;

    fn gold(labels: &[Label]) -> LabeledDataset {
        LabeledDataset::new(
            "gold",
            Split::Val,
            labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Sentence { id: format!("s{i}"), text: "t".into(), label, language: "en".into() })
                .collect(),
        )
        .unwrap()
    }

    fn preds(labels: &[Label]) -> PredictionSet {
        PredictionSet::new("p", labels.iter().enumerate().map(|(i, &l)| (format!("s{i}"), l)).collect())
    }

    use Label::{Obj, Subj};

    #[test]
    fn perfect_predictions() {
        let labels = [Subj, Obj, Obj, Subj, Obj];
        let cm = confusion(&preds(&labels), &gold(&labels)).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let r = report(&cm).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.values().all(|s| s.precision == 1.0 && s.recall == 1.0 && s.f1 == 1.0));
    }

    #[test]
    fn all_subj_on_all_obj() {
        let cm = confusion(&preds(&[Subj; 4]), &gold(&[Obj; 4])).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 0, fp: 4, fn_: 0, tn: 0 });
        let r = report(&cm).unwrap();
        assert_eq!(r.per_class[&Subj].f1, 0.0);
        assert_eq!(r.per_class[&Obj].recall, 0.0);
        assert_eq!(r.macro_f1, 0.0);
    }

    #[test]
    fn hand_counted_ten_samples() {
        let gold_labels = [Subj, Subj, Subj, Subj, Obj, Obj, Obj, Obj, Obj, Obj];
        let predicted = [Subj, Obj, Subj, Obj, Subj, Obj, Obj, Obj, Obj, Obj];
        let cm = confusion(&preds(&predicted), &gold(&gold_labels)).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 1, fn_: 2, tn: 5 });
        let r = report(&cm).unwrap();
        let s = r.per_class[&Subj];
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 4.0 / 7.0).abs() < 1e-15);
        let o = r.per_class[&Obj];
        assert!((o.precision - 5.0 / 7.0).abs() < 1e-15);
        assert!((o.recall - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.7);
    }

    #[test]
    fn missing_prediction_and_empty_matrix() {
        assert!(matches!(confusion(&preds(&[Subj]), &gold(&[Subj, Obj])), Err(Error::Domain(_))));
        assert!(matches!(report(&ConfusionMatrix::default()), Err(Error::Domain(_))));
        // extra predictions are ignored
        let cm = confusion(&preds(&[Subj, Obj, Subj]), &gold(&[Subj, Obj])).unwrap();
        assert_eq!(cm.total(), 2);
    }

    #[test]
    fn output_formats() {
        let r = report(&ConfusionMatrix { tp: 2, fp: 1, fn_: 2, tn: 5 }).unwrap();
        let text = r.to_text();
        assert!(text.contains("subj.recall = 0.500000\n"));
        assert!(text.ends_with("macro_f1 = 0.670330\n"));
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("metric\tclass\tvalue\nprecision\tSUBJ\t0.666667\n"));
        assert!(tsv.contains("macro_f1\tall\t0.670330\n"));
    }

    proptest! {
        #[test]
        fn report_properties(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let cm = ConfusionMatrix { tp, fp, fn_, tn };
            prop_assume!(cm.total() > 0);
            let r = report(&cm).unwrap();
            let swapped = report(&cm.swapped()).unwrap();
            prop_assert!((r.macro_f1 - swapped.macro_f1).abs() < 1e-12);
            prop_assert_eq!(r.per_class[&Subj], swapped.per_class[&Obj]);
            prop_assert!((r.macro_f1 - (r.per_class[&Subj].f1 + r.per_class[&Obj].f1) / 2.0).abs() < 1e-12);
            for (label, s) in &r.per_class {
                prop_assert!(s.f1 >= 0.0 && s.f1 <= s.precision.max(s.recall) + 1e-15);
                let hits = if *label == Subj { tp } else { tn };
                prop_assert_eq!(s.f1 == 0.0, hits == 0);
            }
            let doubled = report(&ConfusionMatrix { tp: 2 * tp, fp: 2 * fp, fn_: 2 * fn_, tn: 2 * tn }).unwrap();
            prop_assert_eq!(doubled, r);
        }
    }
}
