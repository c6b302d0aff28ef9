use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hybgnn::cv::{cross_validate, CvOptions, FoldReport};
use hybgnn::data::{load_dataset, save_dataset, Dataset, EegSegment, Recording};
use hybgnn::model::predict;
use hybgnn::params_io::{load_params, load_params_for, save_params};
use hybgnn::report::{method_name, ResultTable};
use hybgnn::synth::synth_generate;
use hybgnn::train::{evaluate, Trainer};
use hybgnn::{Error, Tensor, Variant};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Creates the output directory and echoes the resolved configuration into it.
fn prepare_output(config: &RunConfig) -> Result<(), CliError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write(&dir.join("config.json"), config.to_json())
}

fn recordings(config: &RunConfig) -> Result<Vec<Recording>, CliError> {
    let recs = match &config.data.manifest {
        Some(path) => load_dataset(path)?,
        None => synth_generate(&config.data.synth),
    };
    if recs.is_empty() {
        return Err(CliError::Config("dataset has no recordings".into()));
    }
    let n = recs[0].channel_names.len();
    if let Some(bad) = recs.iter().find(|r| r.channel_names.len() != n) {
        return Err(CliError::Config(format!(
            "recording '{}' has {} channels, others have {n}",
            bad.subject_id,
            bad.channel_names.len()
        )));
    }
    Ok(recs)
}

fn load_data(config: &RunConfig) -> Result<Dataset, CliError> {
    let recs = recordings(config)?;
    let ds = Dataset::from_recordings(&recs, config.windowing.window_seconds, config.windowing.overlap)?;
    if ds.is_empty() {
        return Err(CliError::Config("no segment fits in any recording".into()));
    }
    Ok(ds)
}

fn check_channels(ds: &Dataset, expected: usize) -> Result<(), CliError> {
    match ds.channels() {
        Some(got) if got != expected => Err(Error::ChannelMismatch { expected, got }.into()),
        _ => Ok(()),
    }
}

fn options(config: &RunConfig) -> CvOptions {
    CvOptions {
        folds: config.folds,
        folds_parallel: config.folds_parallel,
        execution: config.execution,
    }
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

pub fn train(config: &RunConfig) -> Result<(), CliError> {
    let ds = load_data(config)?;
    check_channels(&ds, config.model.channels)?;
    prepare_output(config)?;
    let shard: Vec<&EegSegment> = ds.segments.iter().collect();
    let mut trainer = Trainer::new(config.model.clone(), config.train.clone(), config.execution)?;
    let mut log = String::from("epoch,mean_loss,grad_norm\n");
    trainer.fit(&shard, |s| {
        eprintln!("epoch {:>4}  loss {:.6}  grad-norm {:.6}", s.epoch, s.mean_loss, s.grad_norm);
        let _ = writeln!(log, "{},{},{}", s.epoch, s.mean_loss, s.grad_norm);
    })?;
    let dir = &config.output_dir;
    save_params(&dir.join("params.bin"), &config.model, &trainer.params)?;
    write(&dir.join("train_log.csv"), log)?;
    let metrics = evaluate(&trainer.params, &config.model, &shard, config.execution)?;
    write(&dir.join("train_metrics.json"), json(&metrics))?;
    println!(
        "trained on {} segments from {} subjects; ACC {:.4} F1 {:.4}",
        shard.len(),
        ds.subjects().len(),
        metrics.acc,
        metrics.f1
    );
    Ok(())
}

fn run_cv(config: &RunConfig, ds: &Dataset) -> Result<FoldReport, CliError> {
    let report = cross_validate(ds, &config.model, &config.train, options(config))?;
    for f in &report.folds {
        eprintln!(
            "variant {} fold {:>2}: ACC {:.4} F1 {:.4} ({} test segments)",
            config.model.variant, f.fold, f.metrics.acc, f.metrics.f1, f.test_segments
        );
    }
    Ok(report)
}

pub fn cv(config: &RunConfig) -> Result<(), CliError> {
    let ds = load_data(config)?;
    check_channels(&ds, config.model.channels)?;
    prepare_output(config)?;
    let report = run_cv(config, &ds)?;
    let table = ResultTable::from_reports(&config.data.name(), [(method_name(config.model.variant), &report)]);
    let text = format!("{}\n{}", report.to_table(), table.render());
    let dir = &config.output_dir;
    write(&dir.join("report.txt"), &text)?;
    write(&dir.join("report.json"), report.to_json())?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct VariantReport<'a> {
    variant: Variant,
    description: &'a str,
    report: &'a FoldReport,
}

#[derive(Serialize)]
struct AblationOutput<'a> {
    dataset: String,
    table: &'a ResultTable,
    variants: Vec<VariantReport<'a>>,
}

pub fn ablation(config: &RunConfig, variants: &[Variant]) -> Result<(), CliError> {
    let ds = load_data(config)?;
    check_channels(&ds, config.model.channels)?;
    prepare_output(config)?;
    let mut reports = Vec::with_capacity(variants.len());
    for &v in variants {
        let mut c = config.clone();
        c.model.variant = v;
        c.model.validate()?;
        reports.push((v, run_cv(&c, &ds)?));
    }
    let name = config.data.name();
    let table = ResultTable::from_reports(&name, reports.iter().map(|(v, r)| (method_name(*v), r)));
    let out = AblationOutput {
        dataset: name,
        table: &table,
        variants: reports
            .iter()
            .map(|(v, r)| VariantReport {
                variant: *v,
                description: v.description(),
                report: r,
            })
            .collect(),
    };
    let dir = &config.output_dir;
    let text = table.render();
    write(&dir.join("ablation.txt"), &text)?;
    write(&dir.join("ablation.json"), json(&out))?;
    print!("{text}");
    Ok(())
}

pub enum Sweep {
    NRegions(Vec<usize>),
    Lambda(Vec<f64>),
}

#[derive(Serialize)]
struct SweepPoint<'a> {
    value: f64,
    report: &'a FoldReport,
}

pub fn sweep(config: &RunConfig, sweep: Sweep) -> Result<(), CliError> {
    let ds = load_data(config)?;
    check_channels(&ds, config.model.channels)?;
    prepare_output(config)?;
    let (param, points): (&str, Vec<(String, RunConfig)>) = match sweep {
        Sweep::NRegions(values) => (
            "n_regions",
            values
                .into_iter()
                .map(|v| {
                    let mut c = config.clone();
                    c.model.n_regions = v;
                    (v.to_string(), c)
                })
                .collect(),
        ),
        Sweep::Lambda(values) => (
            "lambda",
            values
                .into_iter()
                .map(|v| {
                    let mut c = config.clone();
                    c.train.lambda = v;
                    (format!("{v:e}"), c)
                })
                .collect(),
        ),
    };
    let mut csv = format!("{param},mean_acc,std_acc\n");
    let mut reports = Vec::with_capacity(points.len());
    for (label, c) in &points {
        c.validate()?;
        let r = run_cv(c, &ds)?;
        let _ = writeln!(csv, "{label},{},{}", r.mean.acc, r.std.acc);
        reports.push((label.clone(), r));
    }
    let table = ResultTable::from_reports(
        &config.data.name(),
        reports.iter().map(|(label, r)| (format!("{param}={label}"), r)),
    );
    let values: Vec<SweepPoint> = reports
        .iter()
        .zip(&points)
        .map(|((_, r), (_, c))| SweepPoint {
            value: match param {
                "n_regions" => c.model.n_regions as f64,
                _ => c.train.lambda,
            },
            report: r,
        })
        .collect();
    let dir = &config.output_dir;
    write(&dir.join("sweep.csv"), &csv)?;
    write(&dir.join("sweep.txt"), table.render())?;
    write(&dir.join("sweep.json"), json(&values))?;
    print!("{csv}");
    Ok(())
}

/// One matrix row per line, values separated by single spaces, shortest round-trip form.
pub fn matrix_text(t: &Tensor) -> String {
    let (rows, _) = t.dims2();
    let mut s = String::new();
    for i in 0..rows {
        let line: Vec<String> = t.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn eval(config: &RunConfig, params_path: &Path, export_graphs: bool, model_explicit: bool) -> Result<(), CliError> {
    let (model, params) = if model_explicit {
        (config.model.clone(), load_params_for(params_path, &config.model)?)
    } else {
        load_params(params_path)?
    };
    let ds = load_data(config)?;
    check_channels(&ds, model.channels)?;
    let mut echo = config.clone();
    echo.model = model.clone();
    prepare_output(&echo)?;
    let segments: Vec<&EegSegment> = ds.segments.iter().collect();
    let metrics = evaluate(&params, &model, &segments, config.execution)?;
    let dir = &config.output_dir;
    let graphs = dir.join("graphs");
    if export_graphs {
        fs::create_dir_all(&graphs).map_err(|e| CliError::io(&graphs, e))?;
    }
    let mut csv = String::from("index,subject_id,offset,label,p_hc,p_mdd,predicted\n");
    let mut common_written = false;
    for (i, s) in segments.iter().enumerate() {
        let p = predict(&params, &model, &s.data)?;
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            s.subject_id,
            s.offset,
            s.label,
            p.probs[0],
            p.probs[1],
            if p.class() == 1 { "MDD" } else { "HC" }
        );
        if !export_graphs {
            continue;
        }
        if let (Some(a), false) = (&p.common_adj, common_written) {
            write(&graphs.join("common_adjacency.txt"), matrix_text(a))?;
            common_written = true;
        }
        let files = [
            ("individual_adjacency", &p.individual_adj),
            ("assignment", &p.individual_assignment),
            ("common_assignment", &p.common_assignment),
        ];
        for (name, m) in files {
            if let Some(m) = m {
                write(&graphs.join(format!("segment_{i:05}_{name}.txt")), matrix_text(m))?;
            }
        }
    }
    write(&dir.join("metrics.json"), json(&metrics))?;
    write(&dir.join("predictions.csv"), csv)?;
    println!(
        "evaluated {} segments: ACC {:.4} REC {:.4} PRE {:.4} F1 {:.4}",
        segments.len(),
        metrics.acc,
        metrics.rec,
        metrics.pre,
        metrics.f1
    );
    Ok(())
}

pub fn synth(config: &RunConfig) -> Result<(), CliError> {
    prepare_output(config)?;
    let recs = synth_generate(&config.data.synth);
    let manifest = save_dataset(&config.output_dir, &recs)?;
    println!("wrote {} recordings, manifest {}", recs.len(), manifest.display());
    Ok(())
}
