//! Trace ingestion and preprocessing.
//!
//! Traces keep `f64` values in channel-major order together with the number
//! of recorded frames; anything past `valid_frames` is zero padding and is
//! excluded from statistics.

mod csv_io;
mod preprocess;
mod relabel;
mod split;
mod synth;

use crate::numerics::{FeatureMap, Real};
use crate::{Error, Result};

pub use csv_io::{
    label_from_filename, load_dataset_dir, parse_trace_csv, parse_trace_csv_with_rate, read_manifest,
    trace_file_name, write_dataset_dir, write_trace_csv, ManifestEntry, MANIFEST_FILE,
};
pub use preprocess::{pad_traces, padded_length, standardize_apply, standardize_fit, standardize_trace, StandardizationStats, STD_FLOOR};
pub use relabel::{merge_datasets, relabel_binary, select_classes};
pub use split::{stratified_split, SplitParts, SplitSpec};
pub use synth::{class_templates, synth_generate, template_separation, ChannelTemplate, SynthSpec};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
/// Default padding block, in frames.
pub const DEFAULT_BLOCK_FRAMES: usize = 1000;

/// One recording: `channels × frames` values plus channel metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    channels: usize,
    frames: usize,
    valid_frames: usize,
    values: Vec<f64>,
    channel_names: Vec<String>,
    sample_rate_hz: f64,
}

impl Trace {
    /// Builds a trace from one `Vec` per channel. All frames count as recorded.
    pub fn new(channel_names: Vec<String>, rows: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        if rows.len() != channel_names.len() {
            return Err(Error::Dimension(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                rows.len()
            )));
        }
        let frames = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || frames == 0 {
            return Err(Error::Input("a trace needs at least one channel and one frame".into()));
        }
        if rows.iter().any(|r| r.len() != frames) {
            return Err(Error::Dimension("trace channels differ in length".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Input(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        let values = rows.concat();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("trace contains a non-finite value".into()));
        }
        Ok(Self {
            channels: channel_names.len(),
            frames,
            valid_frames: frames,
            values,
            channel_names,
            sample_rate_hz,
        })
    }

    /// Builds a trace from frame rows (one `Vec` of channel values per frame).
    pub fn from_frames(channel_names: Vec<String>, frames: &[Vec<f64>], sample_rate_hz: f64) -> Result<Self> {
        let channels = channel_names.len();
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != channels) {
            return Err(Error::Dimension(format!(
                "frame {t} has {} values, expected {channels}",
                f.len()
            )));
        }
        let rows = (0..channels).map(|c| frames.iter().map(|f| f[c]).collect()).collect();
        Self::new(channel_names, rows, sample_rate_hz)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total frames including padding.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Recorded frames; the rest is zero padding.
    pub fn valid_frames(&self) -> usize {
        self.valid_frames
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.frames..(c + 1) * self.frames]
    }

    /// The recorded part of channel `c`.
    pub fn valid_channel(&self, c: usize) -> &[f64] {
        &self.channel(c)[..self.valid_frames]
    }

    /// Values of frame `t` across channels.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.values[c * self.frames + t]).collect()
    }

    /// Appends zero frames up to `frames`; never truncates.
    pub fn padded_to(&self, frames: usize) -> Trace {
        if frames <= self.frames {
            return self.clone();
        }
        let mut values = Vec::with_capacity(self.channels * frames);
        for c in 0..self.channels {
            values.extend_from_slice(self.channel(c));
            values.resize((c + 1) * frames, 0.0);
        }
        Trace {
            frames,
            values,
            channel_names: self.channel_names.clone(),
            ..*self
        }
    }

    /// Applies `f(channel, value)` to recorded values; padding stays zero.
    pub(crate) fn map_valid(&self, f: impl Fn(usize, f64) -> f64) -> Trace {
        let mut out = self.clone();
        for c in 0..self.channels {
            let row = &mut out.values[c * self.frames..c * self.frames + self.valid_frames];
            for v in row {
                *v = f(c, *v);
            }
        }
        out
    }

    pub fn to_feature_map<T: Real>(&self) -> FeatureMap<T> {
        FeatureMap::from_parts(
            self.channels,
            self.frames,
            self.values.iter().map(|&v| T::of(v)).collect(),
        )
    }
}

/// A trace with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trace: Trace,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    vocab: Vec<String>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>, vocab: Vec<String>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= vocab.len()) {
            return Err(Error::Input(format!(
                "label {} out of range for {} classes",
                s.label,
                vocab.len()
            )));
        }
        if let Some(first) = samples.first() {
            let names = first.trace.channel_names();
            if samples.iter().any(|s| s.trace.channel_names() != names) {
                return Err(Error::Dimension("traces do not share channel names".into()));
            }
        }
        Ok(Self { samples, vocab })
    }

    /// A dataset with a vocabulary but no samples.
    pub fn empty(vocab: Vec<String>) -> Self {
        Self {
            samples: Vec::new(),
            vocab,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn num_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.samples.first().map(|s| s.trace.channel_names())
    }

    pub fn channels(&self) -> Option<usize> {
        self.samples.first().map(|s| s.trace.channels())
    }

    /// Longest trace, padding included.
    pub fn max_frames(&self) -> usize {
        self.samples.iter().map(|s| s.trace.frames()).max().unwrap_or(0)
    }

    /// Sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocab.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.vocab.iter().position(|v| v == name)
    }

    /// The samples at `indices`, in that order, with the same vocabulary.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }

    pub(crate) fn map_traces(&self, f: impl Fn(&Trace) -> Trace) -> LabeledDataset {
        LabeledDataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    trace: f(&s.trace),
                    label: s.label,
                })
                .collect(),
            vocab: self.vocab.clone(),
        }
    }
}

/// `ch01`, `ch02`, ...
pub fn default_channel_names(channels: usize) -> Vec<String> {
    (1..=channels).map(|c| format!("ch{c:02}")).collect()
}
