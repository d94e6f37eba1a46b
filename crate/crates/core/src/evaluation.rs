//! Confusion matrices, accuracy/precision/recall, and test-set reports.

use std::path::Path;

use crate::datagen::ManifestRow;
use crate::error::{Error, Result};
use crate::files::load_grid;
use crate::model::{argmax_rows, Network};
use crate::nn::Tensor;
use crate::training::format_sig9;
use crate::Label;

/// `counts[true][predicted]`, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn get(&self, truth: Label, predicted: Label) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }
}

pub fn confusion(labels: &[Label], predictions: &[Label]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Argument(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Argument("confusion matrix needs at least one item".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in labels.iter().zip(predictions) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub positive_class: Label,
}

fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64> {
    if den == 0 {
        return Err(Error::UndefinedMetric(name));
    }
    Ok(num as f64 / den as f64)
}

fn other(l: Label) -> Label {
    match l {
        Label::Human => Label::Machine,
        Label::Machine => Label::Human,
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.correct(), cm.total(), "accuracy")
}

/// TP / (TP + FP).
pub fn precision(cm: &ConfusionMatrix, positive: Label) -> Result<f64> {
    let tp = cm.get(positive, positive);
    ratio(tp, tp + cm.get(other(positive), positive), "precision")
}

/// TP / (TP + FN).
pub fn recall(cm: &ConfusionMatrix, positive: Label) -> Result<f64> {
    let tp = cm.get(positive, positive);
    ratio(tp, tp + cm.get(positive, other(positive)), "recall")
}

pub fn metrics(cm: &ConfusionMatrix, positive: Label) -> Result<MetricsReport> {
    Ok(MetricsReport {
        accuracy: accuracy(cm)?,
        precision: precision(cm, positive)?,
        recall: recall(cm, positive)?,
        positive_class: positive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemPrediction {
    pub path: String,
    pub truth: Label,
    pub predicted: Label,
    pub p_human: f64,
    pub p_machine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub items: Vec<ItemPrediction>,
    pub matrix: ConfusionMatrix,
    pub positive_class: Label,
}

const CHUNK: usize = 16;

/// Classifies every row's grid (paths relative to `base`) in inference mode.
pub fn evaluate(model: &Network, rows: &[&ManifestRow], base: &Path, positive: Label) -> Result<EvaluationReport> {
    if model.num_classes() != 2 {
        return Err(Error::Argument(format!(
            "evaluation needs a 2-class model, this one has {}",
            model.num_classes()
        )));
    }
    if rows.is_empty() {
        return Err(Error::Argument("nothing to evaluate".into()));
    }
    let r = model.resolution();
    let mut items = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * r * r * r);
        for row in chunk {
            let path = base.join(&row.path);
            let grid = load_grid(&path)?;
            if grid.dims() != [r; 3] {
                return Err(Error::Shape(format!(
                    "model resolution {r} but {} has dims {:?}",
                    path.display(),
                    grid.dims()
                )));
            }
            data.extend(grid.to_f64());
        }
        let probs = model.predict(&Tensor::from_vec(&[chunk.len(), 1, r, r, r], data)?)?;
        for ((row, pred), p) in chunk.iter().zip(argmax_rows(&probs)?).zip(probs.data().chunks_exact(2)) {
            items.push(ItemPrediction {
                path: row.path.clone(),
                truth: row.label,
                predicted: Label::from_index(pred)?,
                p_human: p[0],
                p_machine: p[1],
            });
        }
    }
    let truth: Vec<Label> = items.iter().map(|i| i.truth).collect();
    let preds: Vec<Label> = items.iter().map(|i| i.predicted).collect();
    Ok(EvaluationReport {
        matrix: confusion(&truth, &preds)?,
        items,
        positive_class: positive,
    })
}

fn metric_cell(v: Result<f64>) -> String {
    v.map(format_sig9).unwrap_or_else(|_| "undefined".into())
}

/// Per-item CSV, a blank line, then `key,value` rows for the matrix and metrics.
pub fn report_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("path,true_label,pred_label,p_human,p_machine\n");
    for it in &report.items {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            it.path,
            it.truth,
            it.predicted,
            format_sig9(it.p_human),
            format_sig9(it.p_machine)
        ));
    }
    out.push('\n');
    out.push_str(&summary_csv(&report.matrix, report.positive_class));
    out
}

/// `key,value` rows: the four cells, then accuracy, precision and recall.
pub fn summary_csv(cm: &ConfusionMatrix, positive: Label) -> String {
    let mut out = String::from("key,value\n");
    for t in Label::ALL {
        for p in Label::ALL {
            out.push_str(&format!("{t}_{p},{}\n", cm.get(t, p)));
        }
    }
    out.push_str(&format!("positive_class,{positive}\n"));
    out.push_str(&format!("accuracy,{}\n", metric_cell(accuracy(cm))));
    out.push_str(&format!("precision,{}\n", metric_cell(precision(cm, positive))));
    out.push_str(&format!("recall,{}\n", metric_cell(recall(cm, positive))));
    out
}
