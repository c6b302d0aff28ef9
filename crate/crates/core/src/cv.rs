//! Subject-exclusive k-fold cross-validation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricSummary, Metrics};
use crate::model::ModelConfig;
use crate::parallel::{with_threads, Execution};
use crate::rng::{stream, subseed};
use crate::train::{evaluate, EpochSummary, TrainConfig, Trainer};

pub const DEFAULT_FOLDS: usize = 10;

/// Sorts, shuffles with the `partition` stream of `seed`, and deals subjects
/// into `folds` groups whose sizes differ by at most one.
pub fn partition_subjects(subjects: &[String], folds: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut ids: Vec<String> = subjects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < folds {
        return Err(Error::NotEnoughSubjects {
            needed: folds,
            found: ids.len(),
        });
    }
    ids.shuffle(&mut stream(seed, "partition"));
    let (base, extra) = (ids.len() / folds, ids.len() % folds);
    let mut out = Vec::with_capacity(folds);
    let mut it = ids.into_iter();
    for k in 0..folds {
        let mut group: Vec<String> = it.by_ref().take(base + usize::from(k < extra)).collect();
        group.sort();
        out.push(group);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub train_segments: usize,
    pub test_segments: usize,
    pub final_loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folds: Vec<FoldResult>,
    /// Mean of the per-fold rates.
    pub mean: MetricSummary,
    /// Sample standard deviation of the per-fold rates.
    pub std: MetricSummary,
    /// Rates from confusion counts summed over all test segments.
    pub pooled: Metrics,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
}

impl FoldReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6}  {:>7}  {:>7}  {:>7}  {:>7}", "fold", "ACC", "REC", "PRE", "F1");
        for f in &self.folds {
            let m = &f.metrics;
            let _ = writeln!(s, "{:>6}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}", f.fold, m.acc, m.rec, m.pre, m.f1);
        }
        let (m, d) = (&self.mean, &self.std);
        let _ = writeln!(s, "{:>6}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}", "mean", m.acc, m.rec, m.pre, m.f1);
        let _ = writeln!(s, "{:>6}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}", "std", d.acc, d.rec, d.pre, d.f1);
        let p = &self.pooled;
        let _ = writeln!(s, "{:>6}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}", "pooled", p.acc, p.rec, p.pre, p.f1);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    pub folds: usize,
    /// Folds trained concurrently; 1 runs them in order on the caller.
    pub folds_parallel: usize,
    /// How samples within a batch are spread.
    pub execution: Execution,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            folds_parallel: 1,
            execution: Execution::Parallel,
        }
    }
}

/// Trains and tests one fold; `on_epoch` sees each epoch summary.
pub fn run_fold(
    dataset: &Dataset,
    groups: &[Vec<String>],
    fold: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    execution: Execution,
    on_epoch: impl FnMut(&EpochSummary),
) -> Result<(FoldResult, Trainer)> {
    let test_subjects = groups[fold].clone();
    let mut train_subjects: Vec<String> = groups
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != fold)
        .flat_map(|(_, g)| g.iter().cloned())
        .collect();
    train_subjects.sort();
    let train = dataset.segments_of(&train_subjects);
    let test = dataset.segments_of(&test_subjects);
    if train.is_empty() {
        return Err(Error::Empty("training shard"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test shard"));
    }
    let seed = subseed(train_config.seed, fold as u64);
    let fold_config = TrainConfig {
        seed,
        ..train_config.clone()
    };
    let mut trainer = Trainer::new(model_config.clone(), fold_config, execution)?;
    let log = trainer.fit(&train, on_epoch)?;
    let metrics = evaluate(&trainer.params, model_config, &test, execution)?;
    Ok((
        FoldResult {
            fold,
            seed,
            train_subjects,
            test_subjects,
            train_segments: train.len(),
            test_segments: test.len(),
            final_loss: log.last().map_or(f64::NAN, |s| s.mean_loss),
            metrics,
        },
        trainer,
    ))
}

pub fn cross_validate(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    options: CvOptions,
) -> Result<FoldReport> {
    model_config.validate()?;
    train_config.validate()?;
    if let Some(n) = dataset.channels() {
        if n != model_config.channels {
            return Err(Error::ChannelMismatch {
                expected: model_config.channels,
                got: n,
            });
        }
    }
    let groups = partition_subjects(&dataset.subjects(), options.folds, train_config.seed)?;
    let run = |fold: usize| {
        run_fold(dataset, &groups, fold, model_config, train_config, options.execution, |_| {}).map(|(r, _)| r)
    };
    let folds: Vec<FoldResult> = if options.folds_parallel > 1 {
        let results = with_threads(options.folds_parallel, || {
            crate::parallel::ordered_map(Execution::Parallel, &(0..options.folds).collect::<Vec<_>>(), |&k| run(k))
        });
        results.into_iter().collect::<Result<_>>()?
    } else {
        (0..options.folds).map(run).collect::<Result<_>>()?
    };
    Ok(summarize(folds, model_config, train_config))
}

/// Ten folds, folds in sequence.
pub fn ten_fold_cv(dataset: &Dataset, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<FoldReport> {
    cross_validate(dataset, model_config, train_config, CvOptions::default())
}

fn summarize(folds: Vec<FoldResult>, model_config: &ModelConfig, train_config: &TrainConfig) -> FoldReport {
    let per: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    let (mean, std) = MetricSummary::mean_std(&per);
    FoldReport {
        pooled: Metrics::pooled(&per),
        folds,
        mean,
        std,
        model_config: model_config.clone(),
        train_config: train_config.clone(),
    }
}
