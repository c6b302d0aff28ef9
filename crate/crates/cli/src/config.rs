//! Run configuration: built-in defaults, then a dataset preset, then the
//! JSON config file, then command-line flags. Later layers win.

use std::path::{Path, PathBuf};

use hybgnn::parallel::Execution;
use hybgnn::{ModelConfig, Preset, SynthSpec, TrainConfig, Windowing};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    /// Manifest of a recorded dataset; synthetic data is generated when absent.
    pub manifest: Option<PathBuf>,
    pub synth: SynthSpec,
}

impl DataSource {
    /// Label for report columns.
    pub fn name(&self) -> String {
        match &self.manifest {
            None => "synthetic".to_string(),
            Some(m) => m
                .parent()
                .and_then(Path::file_name)
                .filter(|n| !n.is_empty())
                .or_else(|| m.file_stem())
                .map_or_else(|| "dataset".to_string(), |n| n.to_string_lossy().into_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataSource,
    pub windowing: Windowing,
    pub output_dir: PathBuf,
    pub folds: usize,
    pub folds_parallel: usize,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataSource::default(),
            windowing: Windowing::default(),
            output_dir: PathBuf::from("hybgnn-output"),
            folds: hybgnn::cv::DEFAULT_FOLDS,
            folds_parallel: 1,
            execution: Execution::Parallel,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Result of layering defaults, preset and config file.
pub struct Resolved {
    pub config: RunConfig,
    /// Whether the config file set any model field.
    pub model_from_file: bool,
}

pub fn resolve(config_file: Option<&Path>, preset_flag: Option<Preset>) -> Result<Resolved, CliError> {
    let file: Option<Value> = match config_file {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !v.is_object() {
                return Err(CliError::Config(format!("{}: top level must be an object", path.display())));
            }
            Some(v)
        }
    };
    let file_preset = match file.as_ref().and_then(|v| v.get("preset")) {
        None | Some(Value::Null) => None,
        Some(p) => Some(
            serde_json::from_value::<Preset>(p.clone())
                .map_err(|e| CliError::Config(format!("preset: {e}")))?,
        ),
    };
    let preset = preset_flag.or(file_preset);

    let mut base = RunConfig::default();
    if let Some(p) = preset {
        p.apply(&mut base.model, &mut base.train);
        base.windowing = p.windowing();
    }
    let mut value = serde_json::to_value(&base).expect("config serializes");
    let model_from_file = file.as_ref().is_some_and(|v| v.get("model").is_some());
    if let Some(f) = file {
        merge(&mut value, f);
    }
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("config: {e}")))?;
    config.preset = preset;
    Ok(Resolved {
        config,
        model_from_file,
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        if self.folds < 2 {
            return Err(CliError::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.folds_parallel == 0 {
            return Err(CliError::Config("folds_parallel must be at least 1".into()));
        }
        let s = &self.data.synth;
        if self.data.manifest.is_none()
            && (s.subjects_per_class == 0 || s.seconds <= 0.0 || s.channels == 0 || s.sampling_rate <= 0.0)
        {
            return Err(CliError::Config("synthetic data spec must be positive in every size".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
