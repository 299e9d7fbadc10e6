//! Zero padding and per-channel standardization.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{LabeledDataset, Trace};
use crate::{Error, Result};

/// Channels whose standard deviation falls below this are left unscaled.
pub const STD_FLOOR: f64 = 1e-9;

/// Smallest multiple of `block_frames` that holds `longest` frames.
pub fn padded_length(longest: usize, block_frames: usize) -> usize {
    assert!(block_frames >= 1, "block_frames must be at least 1");
    longest.div_ceil(block_frames).max(1) * block_frames
}

/// Pads every trace with trailing zero frames to the block-aligned length of
/// the longest trace.
pub fn pad_traces(dataset: &LabeledDataset, block_frames: usize) -> LabeledDataset {
    let target = padded_length(dataset.max_frames(), block_frames);
    dataset.map_traces(|t| t.padded_to(target))
}

/// Per-channel mean and standard deviation of the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl StandardizationStats {
    pub fn new(channel_names: Vec<String>, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != channel_names.len() || std.len() != channel_names.len() {
            return Err(Error::Dimension(format!(
                "{} channel names, {} means, {} stds",
                channel_names.len(),
                mean.len(),
                std.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Input("standardization stats need finite means and positive stds".into()));
        }
        Ok(Self {
            mean,
            std,
            channel_names,
        })
    }

    /// Zero mean and unit std for every channel.
    pub fn identity(channel_names: Vec<String>) -> Self {
        let n = channel_names.len();
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
            channel_names,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std` for channel `c`.
    pub fn apply_value(&self, c: usize, x: f64) -> f64 {
        (x - self.mean[c]) / self.std[c]
    }

    /// Writes `channel,mean,std` rows; floats use the shortest exact form.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(self.to_csv().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,mean,std\n");
        for ((name, m), sd) in self.channel_names.iter().zip(&self.mean).zip(&self.std) {
            s.push_str(&format!("{name},{m},{sd}\n"));
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_csv(&text, &path.display().to_string())
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::format(context, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["channel", "mean", "std"] {
            return Err(Error::format(context, "expected header channel,mean,std"));
        }
        let (mut names, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::format(context, format!("row {}: {e}", i + 1)))?;
            let num = |j: usize| -> Result<f64> {
                record[j]
                    .parse()
                    .map_err(|_| Error::format(context, format!("row {}: bad number {:?}", i + 1, &record[j])))
            };
            names.push(record[0].to_string());
            mean.push(num(1)?);
            std.push(num(2)?);
        }
        if names.is_empty() {
            return Err(Error::format(context, "no channels"));
        }
        Self::new(names, mean, std).map_err(|e| Error::format(context, e.to_string()))
    }
}

/// Population mean and std per channel over the recorded frames of every trace.
pub fn standardize_fit(train: &LabeledDataset) -> Result<StandardizationStats> {
    let first = train
        .samples()
        .first()
        .ok_or_else(|| Error::Input("cannot fit standardization on an empty dataset".into()))?;
    let channels = first.trace.channels();
    let mut mean = vec![0.0; channels];
    let mut std = vec![0.0; channels];
    let count: usize = train.samples().iter().map(|s| s.trace.valid_frames()).sum();
    let n = count as f64;
    for c in 0..channels {
        let sum: f64 = train.samples().iter().flat_map(|s| s.trace.valid_channel(c)).sum();
        let mu = sum / n;
        let ss: f64 = train
            .samples()
            .iter()
            .flat_map(|s| s.trace.valid_channel(c))
            .map(|x| (x - mu) * (x - mu))
            .sum();
        let sd = (ss / n).sqrt();
        mean[c] = mu;
        std[c] = if sd < STD_FLOOR { 1.0 } else { sd };
    }
    StandardizationStats::new(first.trace.channel_names().to_vec(), mean, std)
}

/// Standardizes one trace with training statistics; padding stays zero.
pub fn standardize_trace(trace: &Trace, stats: &StandardizationStats) -> Result<Trace> {
    if trace.channels() != stats.channels() {
        return Err(Error::Dimension(format!(
            "stats cover {} channels, trace has {}",
            stats.channels(),
            trace.channels()
        )));
    }
    Ok(trace.map_valid(|c, x| stats.apply_value(c, x)))
}

/// Maps recorded values to `(x - mean) / std`; padding stays zero.
pub fn standardize_apply(dataset: &LabeledDataset, stats: &StandardizationStats) -> Result<LabeledDataset> {
    if let Some(ch) = dataset.channels() {
        if ch != stats.channels() {
            return Err(Error::Dimension(format!(
                "stats cover {} channels, dataset has {ch}",
                stats.channels()
            )));
        }
    }
    Ok(dataset.map_traces(|t| t.map_valid(|c, x| stats.apply_value(c, x))))
}
