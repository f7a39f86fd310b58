use serde::{Deserialize, Serialize};

use super::EvalError;

fn check_pair(pred: &[u8], truth: &[u8]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Fraction of positions where the predicted membership equals the truth.
pub fn slice_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean of per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        let c = (t == 1) as usize;
        totals[c] += 1;
        hits[c] += (p == t) as usize;
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| totals[c] > 0)
        .map(|c| hits[c] as f64 / totals[c] as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceScore {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
}

impl SliceScore {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::BalancedAccuracy => self.balanced_accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Accuracy,
    BalancedAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub labels_used: usize,
    /// One score per slice, in slice order.
    pub slices: Vec<SliceScore>,
}

/// Test performance as a function of annotations consumed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub slice_names: Vec<String>,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// `(labels_used, score)` pairs for one slice and metric.
    pub fn series(&self, slice: usize, metric: Metric) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .map(|p| (p.labels_used, p.slices[slice].get(metric)))
            .collect()
    }

    /// CSV rows `round,labels_used,slice,accuracy,balanced_accuracy`, with
    /// header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,labels_used,slice,accuracy,balanced_accuracy\n");
        for p in &self.points {
            for (name, s) in self.slice_names.iter().zip(&p.slices) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.round,
                    p.labels_used,
                    csv_field(name),
                    s.accuracy,
                    s.balanced_accuracy
                ));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Smallest `labels_used` on the series whose score reaches `target`, or
/// `None` if the series never gets there.
pub fn labels_to_reach(series: &[(usize, f64)], target: f64) -> Option<usize> {
    series
        .iter()
        .filter(|(_, score)| *score >= target)
        .map(|(labels, _)| *labels)
        .min()
}
