use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybgnn::{OptimizerKind, Preset, Variant};

mod commands;
mod config;
mod error;

use config::{resolve, RunConfig};
use error::CliError;

/// Train and evaluate hybrid graph neural networks on multichannel EEG.
#[derive(Parser, Debug)]
#[command(name = "hybgnn", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model on the whole dataset and save its parameters.
    Train(CommonArgs),
    /// Subject-exclusive k-fold cross-validation.
    Cv(CvArgs),
    /// Cross-validate every ablation variant on the same folds.
    Ablation(AblationArgs),
    /// Cross-validate over a grid of region counts or entropy weights.
    Sweep(SweepArgs),
    /// Evaluate saved parameters on a dataset.
    Eval(EvalArgs),
    /// Write a synthetic dataset in the manifest format.
    Synth(CommonArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset: modma (4 s / 75% overlap, SGD lr 0.09, 100 epochs, 5 regions)
    /// or husm (4 s / no overlap, Adam lr 0.001, 60 epochs, 4 regions).
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Dataset manifest (JSON).
    #[arg(long, conflicts_with = "synth")]
    manifest: Option<PathBuf>,
    /// Use generated synthetic data even if the config names a manifest.
    #[arg(long)]
    synth: bool,
    /// Output directory [default: hybgnn-output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for initialization, shuffling, fold assignment and synthetic data [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs [default: 10].
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 0.005].
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 128].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Assignment entropy weight [default: 1e-5].
    #[arg(long)]
    lambda: Option<f64>,
    /// Optimizer [default: adam].
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Model variant: a, b, c, d, e or full [default: full].
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Region count of the pooling modules [default: 5].
    #[arg(long)]
    n_regions: Option<usize>,
    /// Propagation steps in both branches [default: 2].
    #[arg(long)]
    gcn_steps: Option<usize>,
    /// Propagation steps at region level [default: 1].
    #[arg(long)]
    region_steps: Option<usize>,
    /// Branch output width [default: 16].
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Electrode count of the model and of generated data [default: 19].
    #[arg(long)]
    channels: Option<usize>,
    /// Window length in seconds [default: 4].
    #[arg(long)]
    window: Option<f64>,
    /// Window overlap fraction in [0, 1) [default: 0].
    #[arg(long)]
    overlap: Option<f64>,
    /// Synthetic subjects per class [default: 20].
    #[arg(long)]
    subjects_per_class: Option<usize>,
    /// Synthetic recording length in seconds [default: 60].
    #[arg(long)]
    seconds: Option<f64>,
    /// Synthetic sampling rate in Hz [default: 256].
    #[arg(long)]
    sampling_rate: Option<f64>,
    /// Keep every computation on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Clone)]
struct CvArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of folds [default: 10].
    #[arg(long)]
    folds: Option<usize>,
    /// Folds trained concurrently [default: 1].
    #[arg(long)]
    folds_parallel: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct AblationArgs {
    #[command(flatten)]
    cv: CvArgs,
    /// Variants to compare [default: a,b,c,d,e,full].
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    #[value(name = "n_regions")]
    NRegions,
    #[value(name = "lambda")]
    Lambda,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[command(flatten)]
    cv: CvArgs,
    /// Hyperparameter to vary.
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Values to try [default: 2..8 for n_regions, 1e-7..1e-3 by decades for lambda].
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter file written by `train`.
    #[arg(long)]
    params: PathBuf,
    /// Also write per-segment adjacency and assignment matrices.
    #[arg(long)]
    export_graphs: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: hybgnn::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: hybgnn::Error| e.to_string())
}

impl CommonArgs {
    fn model_flag_given(&self) -> bool {
        self.variant.is_some()
            || self.n_regions.is_some()
            || self.gcn_steps.is_some()
            || self.region_steps.is_some()
            || self.hidden_dim.is_some()
            || self.channels.is_some()
    }

    /// Layers defaults, preset, config file and these flags.
    fn resolve(&self) -> Result<(RunConfig, bool), CliError> {
        let resolved = resolve(self.config.as_deref(), self.preset)?;
        let model_explicit = resolved.model_from_file || self.model_flag_given();
        let mut c = resolved.config;
        if let Some(m) = &self.manifest {
            c.data.manifest = Some(m.clone());
        }
        if self.synth {
            c.data.manifest = None;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            c.train.seed = s;
            c.data.synth.seed = s;
        }
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(c.train.max_epochs, self.epochs);
        set!(c.train.learning_rate, self.lr);
        set!(c.train.batch_size, self.batch_size);
        set!(c.train.lambda, self.lambda);
        set!(
            c.train.optimizer,
            self.optimizer.map(|o| match o {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adam => OptimizerKind::Adam,
            })
        );
        set!(c.model.variant, self.variant);
        set!(c.model.n_regions, self.n_regions);
        set!(c.model.gcn_steps, self.gcn_steps);
        set!(c.model.region_steps, self.region_steps);
        set!(c.model.hidden_dim, self.hidden_dim);
        if let Some(n) = self.channels {
            c.model.channels = n;
            c.data.synth.channels = n;
        }
        set!(c.windowing.window_seconds, self.window);
        set!(c.windowing.overlap, self.overlap);
        set!(c.data.synth.subjects_per_class, self.subjects_per_class);
        set!(c.data.synth.seconds, self.seconds);
        set!(c.data.synth.sampling_rate, self.sampling_rate);
        if self.sequential {
            c.execution = hybgnn::Execution::Sequential;
        }
        Ok((c, model_explicit))
    }
}

impl CvArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let (mut c, _) = self.common.resolve()?;
        if let Some(f) = self.folds {
            c.folds = f;
        }
        if let Some(k) = self.folds_parallel {
            c.folds_parallel = k;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let (c, _) = args.resolve()?;
            c.validate()?;
            commands::train(&c)
        }
        Command::Cv(args) => commands::cv(&args.resolve()?),
        Command::Ablation(args) => {
            let variants = if args.variants.is_empty() { Variant::ALL.to_vec() } else { args.variants };
            commands::ablation(&args.cv.resolve()?, &variants)
        }
        Command::Sweep(args) => {
            let c = args.cv.resolve()?;
            match args.param {
                SweepParam::NRegions => {
                    let values = if args.values.is_empty() {
                        (2..=8).collect()
                    } else {
                        args.values
                            .iter()
                            .map(|&v| {
                                if v >= 1.0 && v.fract() == 0.0 {
                                    Ok(v as usize)
                                } else {
                                    Err(CliError::Config(format!("n_regions values must be positive integers, got {v}")))
                                }
                            })
                            .collect::<Result<Vec<_>, _>>()?
                    };
                    commands::sweep(&c, commands::Sweep::NRegions(values))
                }
                SweepParam::Lambda => {
                    let values = if args.values.is_empty() {
                        vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3]
                    } else {
                        args.values
                    };
                    commands::sweep(&c, commands::Sweep::Lambda(values))
                }
            }
        }
        Command::Eval(args) => {
            let (c, model_explicit) = args.common.resolve()?;
            c.validate()?;
            commands::eval(&c, &args.params, args.export_graphs, model_explicit)
        }
        Command::Synth(args) => {
            let (c, _) = args.resolve()?;
            c.validate()?;
            commands::synth(&c)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
