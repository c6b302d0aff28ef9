//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Positional arguments select criteria by number:
//! `cargo test --release --test acceptance -- 1 4 11`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hybgnn::adjacency::{individual_adjacency, normalize_adjacency, normalized, IndividualAdjacencyParams, SoftmaxAxis};
use hybgnn::cv::{cross_validate, CvOptions};
use hybgnn::data::{segment_count, segment_recording, Dataset, EegSegment, Label, Recording};
use hybgnn::gcn::{gcn_propagate, GcnStack};
use hybgnn::gpum::{assignment_matrix, pool};
use hybgnn::model::{forward, predict, ModelConfig, ModelParams, Variant};
use hybgnn::rng::stream;
use hybgnn::synth::{synth_generate, SynthSpec};
use hybgnn::train::{check_model_gradients, mean_assignment_entropy, MODEL_GRADCHECK_EPS};
use hybgnn::{Execution, Graph, Tensor, TrainConfig, Trainer};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn permute_rows(t: &Tensor, p: &[usize]) -> Tensor {
    let (_, c) = t.dims2();
    Tensor::from_fn(&[p.len(), c], |k| t.at2(p[k / c], k % c))
}

fn permute_both(t: &Tensor, p: &[usize]) -> Tensor {
    let n = p.len();
    Tensor::from_fn(&[n, n], |k| t.at2(p[k / n], p[k % n]))
}

fn naive_mm(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.dims2().0).map(|i| t.row(i).to_vec()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn gradients() -> Outcome {
    let mut worst = (0.0, String::new());
    for v in Variant::ALL {
        let cfg = ModelConfig {
            variant: v,
            ..ModelConfig::tiny()
        };
        for seed in 0..10 {
            let c = check_model_gradients(&cfg, 32, seed, 0.1, MODEL_GRADCHECK_EPS).map_err(|e| e.to_string())?;
            let (name, err) = c.worst();
            if err > worst.0 {
                worst = (err, format!("variant {v} seed {seed} {name}"));
            }
        }
    }
    ensure(worst.0 < 1e-4, format!("max relative error {:.2e} ({}), 6 variants x 10 seeds", worst.0, worst.1))
}

fn gcn_oracle() -> Outcome {
    let mut rng = stream(2, "acceptance");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let steps = rng.gen_range(0..=4);
        let (f, d) = (rng.gen_range(1..6), rng.gen_range(1..5));
        let a_hat = normalized(&uniform(&mut rng, &[n, n], 0.0, 1.0)).map_err(|e| e.to_string())?;
        let x = uniform(&mut rng, &[n, f], -1.0, 1.0);
        let stack = GcnStack::init(steps, f, d, &mut rng);
        let mut g = Graph::new();
        let (av, xv) = (g.constant(a_hat.clone()), g.constant(x.clone()));
        let w = stack.bind(&mut g, false);
        let y = gcn_propagate(&mut g, av, xv, &w).map_err(|e| e.to_string())?;

        let a = rows(&a_hat);
        let mut want = vec![vec![0.0; d]; n];
        for (l, w) in stack.weights.iter().enumerate() {
            let mut power: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            for _ in 0..l {
                power = naive_mm(&power, &a);
            }
            let term = naive_mm(&naive_mm(&power, &rows(&x)), &rows(w));
            for i in 0..n {
                for j in 0..d {
                    want[i][j] += term[i][j];
                }
            }
        }
        let got = g.value(y);
        for i in 0..n {
            for j in 0..d {
                worst = worst.max((want[i][j] - got.at2(i, j)).abs());
            }
        }
    }
    ensure(worst < 1e-10, format!("max |incremental - matrix power| {worst:.2e} over 100 graphs"))
}

fn pool_oracle() -> Outcome {
    let mut rng = stream(3, "acceptance");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, nr, f) = (rng.gen_range(1..12), rng.gen_range(1..7), rng.gen_range(1..6));
        let r = uniform(&mut rng, &[n, nr], 0.0, 1.0);
        let a = uniform(&mut rng, &[n, n], 0.0, 1.0);
        let x = uniform(&mut rng, &[n, f], -1.0, 1.0);
        let mut g = Graph::new();
        let (rv, av, xv) = (g.constant(r.clone()), g.constant(a.clone()), g.constant(x.clone()));
        let (ar, xr) = pool(&mut g, rv, av, xv).map_err(|e| e.to_string())?;
        for p in 0..nr {
            for q in 0..nr {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += r.at2(i, p) * a.at2(i, j) * r.at2(j, q);
                    }
                }
                worst = worst.max((s - g.value(ar).at2(p, q)).abs());
            }
            for c in 0..f {
                let s: f64 = (0..n).map(|i| r.at2(i, p) * x.at2(i, c)).sum();
                worst = worst.max((s - g.value(xr).at2(p, c)).abs());
            }
        }
    }
    ensure(worst < 1e-12, format!("max |pool - triple product| {worst:.2e} over 100 trials"))
}

fn stochasticity() -> Outcome {
    let mut rng = stream(4, "acceptance");
    let (mut col, mut row): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let (n, f, fm, nr) = (rng.gen_range(2..20), rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..7));
        let scale = rng.gen_range(0.1..3.0);
        let x = uniform(&mut rng, &[n, f], -scale, scale);
        let p = IndividualAdjacencyParams::init(f, fm, &mut rng);
        let q = uniform(&mut rng, &[f, nr], -1.0, 1.0);
        let mut g = Graph::new();
        let (xv, w1, w2, qv) = (g.constant(x), g.constant(p.w1), g.constant(p.w2), g.constant(q));
        let a = individual_adjacency(&mut g, xv, w1, w2, SoftmaxAxis::Column).map_err(|e| e.to_string())?;
        let a_hat = normalize_adjacency(&mut g, a).map_err(|e| e.to_string())?;
        let r = assignment_matrix(&mut g, a_hat, xv, qv).map_err(|e| e.to_string())?;
        let (av, rv) = (g.value(a), g.value(r));
        for j in 0..n {
            col = col.max(((0..n).map(|i| av.at2(i, j)).sum::<f64>() - 1.0).abs());
            row = row.max((rv.row(j).iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(
        col < 1e-12 && row < 1e-12,
        format!("max column-sum error of A_I {col:.2e}, row-sum error of R {row:.2e}, 1000 inputs"),
    )
}

fn hand_case() -> Outcome {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
    let w1 = g.constant(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
    let w2 = g.constant(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
    let a = individual_adjacency(&mut g, x, w1, w2, SoftmaxAxis::Column).map_err(|e| e.to_string())?;
    // h = [[1, 2], [2, 4]]; column j holds softmax over i of h[i][j].
    let e = f64::exp;
    let want = [e(1.0) / (e(1.0) + e(2.0)), e(2.0) / (e(2.0) + e(4.0)), e(2.0) / (e(1.0) + e(2.0)), e(4.0) / (e(2.0) + e(4.0))];
    let got = g.value(a).data().to_vec();
    let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let table = [0.2689, 0.1192, 0.7311, 0.8808];
    let err_table = got.iter().zip(table).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err < 1e-3 && err_table < 1e-3, format!("A_I = {got:.4?}, max error {err_table:.1e}"))
}

fn permutation() -> Outcome {
    let cfg = ModelConfig {
        channels: 6,
        ..ModelConfig::tiny()
    };
    let mut rng = stream(6, "acceptance");
    let mut params = ModelParams::init(&cfg, &mut rng).map_err(|e| e.to_string())?;
    let seg = uniform(&mut rng, &[6, 64], -1.0, 1.0);
    let individual = |params: &ModelParams, s: &Tensor| -> Tensor {
        let mut g = Graph::new();
        let b = params.bind(&mut g, false);
        let out = forward(&mut g, &b, &cfg, s).expect("forward");
        g.value(out.individual_out.expect("individual branch")).clone()
    };
    let base_y = individual(&params, &seg);
    let base_p = predict(&params, &cfg, &seg).map_err(|e| e.to_string())?.probs;
    let (mut ey, mut ep): (f64, f64) = (0.0, 0.0);
    let raw = params.common_adj.as_ref().expect("full variant").raw.clone();
    for _ in 0..50 {
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let moved = permute_rows(&seg, &perm);
        ey = ey.max(individual(&params, &moved).max_abs_diff(&permute_rows(&base_y, &perm)));
        // The common graph is a per-electrode parameter, relabelled with the electrodes.
        params.common_adj.as_mut().unwrap().raw = permute_both(&raw, &perm);
        let p = predict(&params, &cfg, &moved).map_err(|e| e.to_string())?.probs;
        params.common_adj.as_mut().unwrap().raw = raw.clone();
        ep = ep.max((p[0] - base_p[0]).abs());
    }
    ensure(
        ey < 1e-10 && ep < 1e-10,
        format!("max |Y'_I(PX) - P Y'_I(X)| {ey:.2e}, max class-prob change {ep:.2e}, 50 permutations"),
    )
}

/// Reduced-cost setting for the training criteria: 8 electrodes at 64 Hz.
fn small_spec(subjects_per_class: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        subjects_per_class,
        seconds: 60.0,
        channels: 8,
        sampling_rate: 64.0,
        seed,
        ..SynthSpec::default()
    }
}

fn entropy_effect() -> Outcome {
    let cfg = ModelConfig {
        channels: 8,
        ..ModelConfig::default()
    };
    let mut diffs = Vec::new();
    for seed in 0..5 {
        let ds = Dataset::from_recordings(&synth_generate(&small_spec(20, seed)), 4.0, 0.0).map_err(|e| e.to_string())?;
        let shard: Vec<&EegSegment> = ds.segments.iter().collect();
        let run = |lambda: f64| -> Result<f64, String> {
            let tc = TrainConfig {
                seed,
                lambda,
                max_epochs: 20,
                ..TrainConfig::default()
            };
            let mut t = Trainer::new(cfg.clone(), tc, Execution::Parallel).map_err(|e| e.to_string())?;
            t.fit(&shard, |_| {}).map_err(|e| e.to_string())?;
            mean_assignment_entropy(&t.params, &cfg, &shard, Execution::Parallel)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| "no assignment matrices".to_string())
        };
        let (with, without) = (run(1e-3)?, run(0.0)?);
        diffs.push((with, without));
    }
    let med_with = median(diffs.iter().map(|d| d.0).collect());
    let med_without = median(diffs.iter().map(|d| d.1).collect());
    ensure(
        med_with < med_without,
        format!("median mean row entropy of R: lambda=1e-3 {med_with:.4}, lambda=0 {med_without:.4} (5 seeds, 8 ch @ 64 Hz)"),
    )
}

fn end_to_end() -> Outcome {
    let ds = Dataset::from_recordings(&synth_generate(&SynthSpec::default()), 4.0, 0.0).map_err(|e| e.to_string())?;
    let report = cross_validate(&ds, &ModelConfig::default(), &TrainConfig::default(), CvOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(
        report.mean.acc >= 0.90 && report.mean.f1 >= 0.90,
        format!("10-fold mean ACC {:.4}, F1 {:.4} on {} segments", report.mean.acc, report.mean.f1, ds.len()),
    )
}

fn ablation_order() -> Outcome {
    let variants = [Variant::Full, Variant::A, Variant::B];
    let mut acc = vec![Vec::new(); 3];
    for seed in 0..3 {
        let ds = Dataset::from_recordings(&synth_generate(&small_spec(10, seed)), 4.0, 0.0).map_err(|e| e.to_string())?;
        for (k, &v) in variants.iter().enumerate() {
            let cfg = ModelConfig {
                channels: 8,
                variant: v,
                ..ModelConfig::default()
            };
            let tc = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let r = cross_validate(&ds, &cfg, &tc, CvOptions::default()).map_err(|e| e.to_string())?;
            acc[k].push(r.mean.acc);
        }
    }
    let m: Vec<f64> = acc.into_iter().map(median).collect();
    ensure(
        m[0] >= m[1] && m[0] >= m[2],
        format!("median ACC full {:.4}, a {:.4}, b {:.4} (3 seeds, 10 subjects/class, 8 ch @ 64 Hz)", m[0], m[1], m[2]),
    )
}

fn hybgnn(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_hybgnn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("hybgnn {}: {}", args.join(" "), String::from_utf8_lossy(&o.stderr)))
    }
}

fn json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "cv", "--synth", "--channels", "8", "--sampling-rate", "64", "--seconds", "20",
            "--subjects-per-class", "10", "--epochs", "3", "--out", out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        hybgnn(&args).map(|_| out.join("report.json"))
    };
    let a = run("a", &["--sequential"])?;
    let b = run("b", &["--sequential"])?;
    let c = run("c", &["--sequential", "--folds-parallel", "4"])?;
    let identical = fs::read(&a).map_err(|e| e.to_string())? == fs::read(&b).map_err(|e| e.to_string())?;
    let (ja, jc) = (json(&a)?, json(&c)?);
    let same_metrics = ["folds", "mean", "std", "pooled"].iter().all(|k| ja[k] == jc[k]);
    ensure(
        identical && same_metrics,
        format!("repeat run byte-identical: {identical}; --folds-parallel 4 metrics identical: {same_metrics}"),
    )
}

fn segmentation() -> Outcome {
    let fs_hz = 256.0;
    let rec = Recording {
        subject_id: "s".into(),
        label: Label::Hc,
        sampling_rate: fs_hz,
        channel_names: vec!["Fp1".into()],
        signal: Tensor::zeros(&[1, 300 * 256]),
        condition: None,
    };
    let enumerate = |window: usize, stride: usize| (0..).map(|k| k * stride).take_while(|s| s + window <= 300 * 256).count();
    let overlapped = segment_recording(&rec, 4.0, 0.75).map_err(|e| e.to_string())?.len();
    let disjoint = segment_recording(&rec, 4.0, 0.0).map_err(|e| e.to_string())?.len();
    let oracle = (enumerate(1024, 256), enumerate(1024, 1024));
    ensure(
        (overlapped, disjoint) == (297, 75) && oracle == (297, 75) && segment_count(300 * 256, 1024, 256) == 297,
        format!("75% overlap {overlapped}, no overlap {disjoint}, enumeration {oracle:?}"),
    )
}

/// Writes a manifest in the documented format. HUSM-style datasets list
/// eyes-open and eyes-closed sessions as separate entries.
fn write_manifest(dir: &Path, subjects: usize, seconds: usize, fs_hz: usize, conditions: &[&str]) -> Result<String, String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        subjects_per_class: subjects,
        seconds: seconds as f64,
        channels: 6,
        sampling_rate: fs_hz as f64,
        ..SynthSpec::default()
    };
    let mut entries = Vec::new();
    for (ci, cond) in conditions.iter().enumerate() {
        for rec in synth_generate(&SynthSpec { seed: ci as u64, ..spec.clone() }) {
            let file = if cond.is_empty() { format!("{}.bin", rec.subject_id) } else { format!("{}_{cond}.bin", rec.subject_id) };
            let bytes: Vec<u8> = rec.signal.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(dir.join(&file), bytes).map_err(|e| e.to_string())?;
            let mut e = serde_json::json!({
                "subject_id": rec.subject_id,
                "label": rec.label.to_string(),
                "sampling_rate": fs_hz,
                "channels": rec.channel_names,
                "n_samples": rec.n_samples(),
                "data_file": file,
            });
            if !cond.is_empty() {
                e["condition"] = Value::from(*cond);
            }
            entries.push(e);
        }
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::json!({ "entries": entries }).to_string()).map_err(|e| e.to_string())?;
    Ok(path.to_string_lossy().into_owned())
}

fn report_shapes() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let modma = write_manifest(&dir.path().join("MODMA"), 2, 8, 64, &[""])?;
    let husm = write_manifest(&dir.path().join("HUSM"), 2, 8, 64, &["EO", "EC"])?;
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"folds": 2, "model": {"channels": 6}}"#).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let out = |s: &str| dir.path().join(s).to_string_lossy().into_owned();

    hybgnn(&["cv", "--config", cfg, "--preset", "modma", "--manifest", &modma, "--out", &out("cv")])?;
    hybgnn(&["ablation", "--config", cfg, "--preset", "husm", "--manifest", &husm, "--out", &out("ab")])?;

    let mut problems = Vec::new();
    let cv = json(&dir.path().join("cv/report.json"))?;
    let expect = |problems: &mut Vec<String>, what: &str, got: &Value, want: Value| {
        if *got != want {
            problems.push(format!("{what}: {got} != {want}"));
        }
    };
    expect(&mut problems, "modma lr", &cv["train_config"]["learning_rate"], 0.09.into());
    expect(&mut problems, "modma epochs", &cv["train_config"]["max_epochs"], 100.into());
    expect(&mut problems, "modma N_r", &cv["model_config"]["n_regions"], 5.into());
    let segs: u64 = cv["folds"].as_array().map_or(0, |f| f.iter().filter_map(|x| x["test_segments"].as_u64()).sum());
    // 8 s at 4 s / 75% overlap gives 5 windows per recording.
    expect(&mut problems, "modma segments", &Value::from(segs), 20.into());
    for k in ["acc", "rec", "pre", "f1"] {
        if !cv["mean"][k].is_number() || !cv["std"][k].is_number() {
            problems.push(format!("cv report lacks {k}"));
        }
    }
    let text = fs::read_to_string(dir.path().join("cv/report.txt")).map_err(|e| e.to_string())?;
    if !(text.contains("MODMA") && text.contains("ACC(%)") && text.contains("F1") && text.contains("Ours")) {
        problems.push("cv table header".into());
    }

    let ab = json(&dir.path().join("ab/ablation.json"))?;
    let methods: Vec<&str> = ab["table"]["rows"].as_array().map_or(vec![], |r| r.iter().filter_map(|x| x["method"].as_str()).collect());
    if methods != ["Variant a", "Variant b", "Variant c", "Variant d", "Variant e", "Ours"] {
        problems.push(format!("ablation rows {methods:?}"));
    }
    let first = &ab["variants"][0]["report"];
    expect(&mut problems, "husm lr", &first["train_config"]["learning_rate"], 0.001.into());
    expect(&mut problems, "husm epochs", &first["train_config"]["max_epochs"], 60.into());
    expect(&mut problems, "husm N_r", &first["model_config"]["n_regions"], 4.into());
    let subjects: usize = first["folds"].as_array().map_or(0, |f| f.iter().map(|x| x["test_subjects"].as_array().map_or(0, Vec::len)).sum());
    expect(&mut problems, "husm subjects merged across conditions", &Value::from(subjects), 4.into());
    ensure(
        problems.is_empty(),
        if problems.is_empty() {
            "cv (modma) and ablation (husm) reports carry the metric columns, six method rows and preset hyperparameters".into()
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient integrity", gradients),
        ("propagation oracle", gcn_oracle),
        ("pooling oracle", pool_oracle),
        ("stochasticity", stochasticity),
        ("hand-computed adjacency", hand_case),
        ("permutation equivariance", permutation),
        ("entropy regularizer effect", entropy_effect),
        ("end-to-end synthetic benchmark", end_to_end),
        ("ablation ordering", ablation_order),
        ("determinism", determinism),
        ("segmentation counts", segmentation),
        ("report shapes", report_shapes),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
