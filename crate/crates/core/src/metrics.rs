//! Binary classification metrics with depression as the positive class.
//!
//! Precision, recall and F1 are 0 when their denominator is 0.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub acc: f64,
    pub rec: f64,
    pub pre: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let rec = ratio(tp, tp + fn_);
        let pre = ratio(tp, tp + fp);
        let f1 = if pre + rec > 0.0 { 2.0 * pre * rec / (pre + rec) } else { 0.0 };
        Self {
            tp,
            fp,
            fn_,
            tn,
            acc: ratio(tp + tn, tp + fp + fn_ + tn),
            rec,
            pre,
            f1,
        }
    }

    /// From class indices, 1 = positive.
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Self {
        assert_eq!(labels.len(), predictions.len(), "label/prediction count");
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&y, &p) in labels.iter().zip(predictions) {
            match (y == 1, p == 1) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Sums the confusion counts of several evaluations.
    pub fn pooled<'a>(all: impl IntoIterator<Item = &'a Metrics>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for m in all {
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            tn += m.tn;
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.acc, self.rec, self.pre, self.f1]
    }
}

/// The four rates, used for means and standard deviations across folds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc: f64,
    pub rec: f64,
    pub pre: f64,
    pub f1: f64,
}

impl MetricSummary {
    fn from_array(v: [f64; 4]) -> Self {
        Self {
            acc: v[0],
            rec: v[1],
            pre: v[2],
            f1: v[3],
        }
    }

    /// Mean and sample standard deviation (n − 1; 0 for a single value).
    pub fn mean_std(all: &[Metrics]) -> (Self, Self) {
        let n = all.len() as f64;
        let mut mean = [0.0; 4];
        for m in all {
            for (acc, v) in mean.iter_mut().zip(m.values()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n.max(1.0));
        let mut var = [0.0; 4];
        for m in all {
            for k in 0..4 {
                var[k] += (m.values()[k] - mean[k]).powi(2);
            }
        }
        let std = var.map(|v| if all.len() > 1 { (v / (n - 1.0)).sqrt() } else { 0.0 });
        (Self::from_array(mean), Self::from_array(std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = Metrics::from_counts(50, 10, 5, 35);
        assert!((m.acc - 0.85).abs() < 1e-4);
        assert!((m.rec - 0.9091).abs() < 1e-4);
        assert!((m.pre - 0.8333).abs() < 1e-4);
        assert!((m.f1 - 0.8696).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = Metrics::from_predictions(&[1, 0, 1], &[1, 0, 1]);
        assert_eq!(m.values(), [1.0; 4]);
        let m = Metrics::from_predictions(&[0, 0], &[0, 0]);
        assert_eq!((m.acc, m.pre, m.rec, m.f1), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(Metrics::from_counts(0, 0, 0, 0).acc, 0.0);
    }

    #[test]
    fn fn_field_serializes_as_fn() {
        let json = serde_json::to_string(&Metrics::from_counts(1, 2, 3, 4)).unwrap();
        assert!(json.contains("\"fn\":3"));
    }

    #[test]
    fn mean_std_and_pooling() {
        let a = Metrics::from_counts(1, 0, 0, 1);
        let b = Metrics::from_counts(0, 1, 1, 0);
        let (mean, std) = MetricSummary::mean_std(&[a, b]);
        assert_eq!(mean.acc, 0.5);
        assert!((std.acc - 0.5f64.sqrt()).abs() < 1e-15);
        let p = Metrics::pooled([&a, &b]);
        assert_eq!((p.tp, p.fp, p.fn_, p.tn), (1, 1, 1, 1));
    }
}
