//! Class-conditional synthetic EEG.
//!
//! Every subject shares one alpha-band (8–12 Hz) latent source across
//! channels. Healthy controls couple the frontal group strongly to it;
//! depressed subjects couple it weakly and add an independent theta-band
//! (4–7 Hz) component on every channel. Per-subject gains and jittered
//! coupling keep subjects distinct. Output is a pure function of the spec.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Label, Recording};
use crate::rng::{stream, subseed, StreamRng};
use crate::tensor::Tensor;

/// Standard 10-20 montage, frontal sites first.
pub const STANDARD_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub subjects_per_class: usize,
    pub seconds: f64,
    pub channels: usize,
    pub sampling_rate: f64,
    pub seed: u64,
    /// Frontal coupling to the shared source for healthy controls.
    pub hc_frontal_coupling: f64,
    /// Multiplier applied to the frontal coupling for the depressed class.
    pub mdd_coupling_factor: f64,
    /// Coupling of non-frontal channels, both classes.
    pub posterior_coupling: f64,
    /// Amplitude of the independent theta component (depressed class).
    pub theta_amplitude: f64,
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects_per_class: 20,
            seconds: 60.0,
            channels: 19,
            sampling_rate: 256.0,
            seed: 0,
            hc_frontal_coupling: 1.0,
            mdd_coupling_factor: 0.35,
            posterior_coupling: 0.5,
            theta_amplitude: 0.8,
            noise_std: 0.5,
        }
    }
}

/// Size of the designated frontal group.
pub fn frontal_count(channels: usize) -> usize {
    ((channels * 7 + 9) / 19).clamp(2.min(channels), channels)
}

pub fn channel_names(channels: usize) -> Vec<String> {
    if channels == STANDARD_19.len() {
        STANDARD_19.iter().map(|s| s.to_string()).collect()
    } else {
        (0..channels).map(|c| format!("Ch{c:02}")).collect()
    }
}

/// Unit-variance sum of random sinusoids with frequencies in `band`.
fn band_source(rng: &mut StreamRng, band: (f64, f64), components: usize, fs: f64, len: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64)> = (0..components)
        .map(|_| (TAU * rng.gen_range(band.0..band.1) / fs, rng.gen_range(0.0..TAU)))
        .collect();
    let scale = (2.0 / components as f64).sqrt();
    (0..len)
        .map(|t| scale * waves.iter().map(|&(w, phi)| (w * t as f64 + phi).sin()).sum::<f64>())
        .collect()
}

fn subject(spec: &SynthSpec, label: Label, index: usize) -> Recording {
    let class_tag = match label {
        Label::Hc => "hc",
        Label::Mdd => "mdd",
    };
    let id = format!("{class_tag}_{index:03}");
    let mut rng = stream(subseed(spec.seed, (label.index() * 1_000_003 + index) as u64), "synth-subject");
    let len = (spec.seconds * spec.sampling_rate).round() as usize;
    let n = spec.channels;
    let frontal = frontal_count(n);

    let alpha = band_source(&mut rng, (8.0, 12.0), 4, spec.sampling_rate, len);
    let frontal_coupling = match label {
        Label::Hc => spec.hc_frontal_coupling * rng.gen_range(0.9..1.1),
        Label::Mdd => spec.hc_frontal_coupling * spec.mdd_coupling_factor * rng.gen_range(0.75..1.25),
    };
    let theta = match label {
        Label::Hc => 0.0,
        Label::Mdd => spec.theta_amplitude * rng.gen_range(0.75..1.25),
    };

    let mut data = Vec::with_capacity(n * len);
    for c in 0..n {
        let gain = rng.gen_range(0.8..1.2);
        let coupling = if c < frontal { frontal_coupling } else { spec.posterior_coupling };
        let own = (theta > 0.0).then(|| band_source(&mut rng, (4.0, 7.0), 3, spec.sampling_rate, len));
        for t in 0..len {
            let noise: f64 = rng.sample(StandardNormal);
            let mut v = coupling * alpha[t] + spec.noise_std * noise;
            if let Some(own) = &own {
                v += theta * own[t];
            }
            data.push(gain * v);
        }
    }
    Recording {
        subject_id: id,
        label,
        sampling_rate: spec.sampling_rate,
        channel_names: channel_names(n),
        signal: Tensor::new(vec![n, len], data).expect("synthetic shape"),
        condition: None,
    }
}

/// Healthy controls first, then depressed subjects.
pub fn synth_generate(spec: &SynthSpec) -> Vec<Recording> {
    [Label::Hc, Label::Mdd]
        .into_iter()
        .flat_map(|label| (0..spec.subjects_per_class).map(move |i| (label, i)))
        .map(|(label, i)| subject(spec, label, i))
        .collect()
}

/// Pearson correlation of two equal-length series.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Mean pairwise correlation among the frontal channels of one recording.
pub fn frontal_correlation(rec: &Recording) -> f64 {
    let k = frontal_count(rec.channel_names.len());
    let (mut total, mut pairs) = (0.0, 0);
    for i in 0..k {
        for j in i + 1..k {
            total += correlation(rec.signal.row(i), rec.signal.row(j));
            pairs += 1;
        }
    }
    total / pairs as f64
}
