//! Seeded synthetic traces with separable class templates.
//!
//! Each (class, channel) pair gets a template `A·sin(2πft + φ) + drift·t`;
//! every trial of the class samples that template for a random length and
//! adds Gaussian noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{default_channel_names, LabeledDataset, Sample, Trace, DEFAULT_SAMPLE_RATE_HZ};
use crate::config::FlatConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub frame_min: usize,
    pub frame_max: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub sample_rate_hz: f64,
    /// Defaults to `task1`, `task2`, ...
    pub class_names: Option<Vec<String>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            trials_per_class: 20,
            channels: 24,
            frame_min: 800,
            frame_max: 1600,
            noise_std: 0.5,
            seed: 0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            class_names: None,
        }
    }
}

const KEYS: &[&str] = &[
    "classes",
    "trials",
    "channels",
    "frames_min",
    "frames_max",
    "noise_std",
    "seed",
    "sample_rate_hz",
    "class_names",
];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("synthetic data needs at least 2 classes, got {}", self.num_classes)));
        }
        if self.trials_per_class == 0 || self.channels == 0 {
            return Err(Error::Config("trials and channels must be positive".into()));
        }
        if self.frame_min < 10 || self.frame_max < self.frame_min {
            return Err(Error::Config(format!(
                "frame range [{}, {}] must satisfy 10 <= min <= max",
                self.frame_min, self.frame_max
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be nonnegative, got {}", self.noise_std)));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return Err(Error::Config(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vec<String> {
        self.class_names
            .clone()
            .unwrap_or_else(|| (1..=self.num_classes).map(|k| format!("task{k}")).collect())
    }

    /// Reads `classes`, `trials`, `channels`, `frames_min`, `frames_max`,
    /// `noise_std`, `seed`, `sample_rate_hz`, `class_names`; missing keys
    /// keep their defaults.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        cfg.expect_keys(KEYS, "synthetic spec")?;
        let d = Self::default();
        let class_names: Option<Vec<String>> = cfg.get_list("class_names")?;
        // a name list alone fixes the class count
        let default_classes = class_names.as_ref().map_or(d.num_classes, Vec::len);
        let spec = Self {
            num_classes: cfg.get_or("classes", default_classes)?,
            trials_per_class: cfg.get_or("trials", d.trials_per_class)?,
            channels: cfg.get_or("channels", d.channels)?,
            frame_min: cfg.get_or("frames_min", d.frame_min)?,
            frame_max: cfg.get_or("frames_max", d.frame_max)?,
            noise_std: cfg.get_or("noise_std", d.noise_std)?,
            seed: cfg.get_or("seed", d.seed)?,
            sample_rate_hz: cfg.get_or("sample_rate_hz", d.sample_rate_hz)?,
            class_names,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config(&self) -> FlatConfig {
        let mut cfg = FlatConfig::new();
        cfg.set("classes", self.num_classes);
        cfg.set("trials", self.trials_per_class);
        cfg.set("channels", self.channels);
        cfg.set("frames_min", self.frame_min);
        cfg.set("frames_max", self.frame_max);
        cfg.set("noise_std", self.noise_std);
        cfg.set("seed", self.seed);
        cfg.set("sample_rate_hz", self.sample_rate_hz);
        if let Some(names) = &self.class_names {
            cfg.set("class_names", names.join(","));
        }
        cfg
    }
}

/// Noise-free signal parameters of one (class, channel) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTemplate {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
    pub drift: f64,
}

impl ChannelTemplate {
    /// Template value at time `t` seconds.
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency_hz * t + self.phase).sin() + self.drift * t
    }
}

fn draw_templates(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<ChannelTemplate>> {
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.channels)
                .map(|_| ChannelTemplate {
                    amplitude: rng.random_range(0.5..2.0),
                    frequency_hz: rng.random_range(0.2..1.5),
                    phase: rng.random_range(0.0..2.0 * PI),
                    drift: rng.random_range(-0.2..0.2),
                })
                .collect()
        })
        .collect()
}

/// Templates indexed `[class][channel]`, as used by [`synth_generate`].
pub fn class_templates(spec: &SynthSpec) -> Result<Vec<Vec<ChannelTemplate>>> {
    spec.validate()?;
    Ok(draw_templates(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)))
}

/// Smallest distance between two class templates: the root of the summed
/// per-channel mean squared difference over the first `frame_min` frames.
pub fn template_separation(spec: &SynthSpec) -> Result<f64> {
    let templates = class_templates(spec)?;
    let mut best = f64::INFINITY;
    for a in 0..templates.len() {
        for b in a + 1..templates.len() {
            let mut total = 0.0;
            for (ta, tb) in templates[a].iter().zip(&templates[b]) {
                let ms: f64 = (0..spec.frame_min)
                    .map(|i| {
                        let t = i as f64 / spec.sample_rate_hz;
                        (ta.value(t) - tb.value(t)).powi(2)
                    })
                    .sum::<f64>()
                    / spec.frame_min as f64;
                total += ms;
            }
            best = best.min(total.sqrt());
        }
    }
    Ok(best)
}

/// Generates `num_classes × trials_per_class` traces, class by class.
pub fn synth_generate(spec: &SynthSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let templates = draw_templates(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("noise_std: {e}")))?;
    let names = default_channel_names(spec.channels);
    let mut samples = Vec::with_capacity(spec.num_classes * spec.trials_per_class);
    for (label, class) in templates.iter().enumerate() {
        for _ in 0..spec.trials_per_class {
            let frames = rng.random_range(spec.frame_min..=spec.frame_max);
            let rows = class
                .iter()
                .map(|tpl| {
                    (0..frames)
                        .map(|i| {
                            let v = tpl.value(i as f64 / spec.sample_rate_hz);
                            if spec.noise_std > 0.0 {
                                v + noise.sample(&mut rng)
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect();
            samples.push(Sample {
                trace: Trace::new(names.clone(), rows, spec.sample_rate_hz)?,
                label,
            });
        }
    }
    LabeledDataset::new(samples, spec.vocab())
}
