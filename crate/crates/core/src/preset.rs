//! Per-dataset hyperparameter presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::ModelConfig;
use crate::train::{OptimizerKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 4 s windows with 75% overlap, lr 0.09, 100 epochs, 5 regions.
    Modma,
    /// 4 s non-overlapping windows, lr 0.001, 60 epochs, 4 regions.
    Husm,
}

/// Windowing used when segmenting recordings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Windowing {
    pub window_seconds: f64,
    pub overlap: f64,
}

impl Default for Windowing {
    fn default() -> Self {
        Self {
            window_seconds: 4.0,
            overlap: 0.0,
        }
    }
}

impl Preset {
    pub fn windowing(self) -> Windowing {
        match self {
            Preset::Modma => Windowing {
                window_seconds: 4.0,
                overlap: 0.75,
            },
            Preset::Husm => Windowing {
                window_seconds: 4.0,
                overlap: 0.0,
            },
        }
    }

    pub fn apply(self, model: &mut ModelConfig, train: &mut TrainConfig) {
        model.gcn_steps = 2;
        model.region_steps = 1;
        train.batch_size = 128;
        train.lambda = 1e-5;
        match self {
            Preset::Modma => {
                model.n_regions = 5;
                train.learning_rate = 0.09;
                train.max_epochs = 100;
                train.optimizer = OptimizerKind::Sgd;
            }
            Preset::Husm => {
                model.n_regions = 4;
                train.learning_rate = 0.001;
                train.max_epochs = 60;
                train.optimizer = OptimizerKind::Adam;
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Modma => "modma",
            Preset::Husm => "husm",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "modma" => Ok(Preset::Modma),
            "husm" => Ok(Preset::Husm),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected modma or husm)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let (mut m, mut t) = (ModelConfig::default(), TrainConfig::default());
        Preset::Husm.apply(&mut m, &mut t);
        assert_eq!((m.n_regions, t.max_epochs, t.learning_rate), (4, 60, 0.001));
        Preset::Modma.apply(&mut m, &mut t);
        assert_eq!((m.n_regions, t.max_epochs, t.learning_rate), (5, 100, 0.09));
        assert_eq!((t.batch_size, t.lambda, m.gcn_steps, m.region_steps), (128, 1e-5, 2, 1));
        assert_eq!(Preset::Modma.windowing().overlap, 0.75);
        assert_eq!("HUSM".parse::<Preset>().unwrap(), Preset::Husm);
    }
}
