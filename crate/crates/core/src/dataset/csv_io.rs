//! Trace CSV files and the `task<K>_trial<M>.csv` labeling convention.
//!
//! A trace file has a header `t,<ch1>,...,<chN>` and one row per frame; the
//! first column is time in seconds and must be strictly increasing.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{LabeledDataset, Sample, Trace, DEFAULT_SAMPLE_RATE_HZ};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Sample rates may deviate this much (relative) from the declared rate.
const RATE_TOLERANCE: f64 = 0.01;

pub fn parse_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    parse_trace_csv_with_rate(path, DEFAULT_SAMPLE_RATE_HZ)
}

/// Parses a trace file, checking its median sample rate against `declared_hz`.
pub fn parse_trace_csv_with_rate(path: impl AsRef<Path>, declared_hz: f64) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_trace_reader(file, &path.display().to_string(), declared_hz)
}

pub(crate) fn parse_trace_reader<R: Read>(reader: R, context: &str, declared_hz: f64) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(context, format!("unreadable header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::format(context, "header needs a time column and at least one channel"));
    }
    let mut seen = HashSet::new();
    for (j, name) in headers.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::format(context, format!("missing header name in column {}", j + 1)));
        }
        if !seen.insert(name) {
            return Err(Error::format(context, format!("duplicate header name {name:?}")));
        }
    }
    let channel_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); channel_names.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::format(context, format!("data row {row}: {e}")))?;
        let mut parsed = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(
                    context,
                    format!("data row {row}, column {} ({}): non-numeric value {cell:?}", j + 1, &headers[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    context,
                    format!("data row {row}, column {} ({}): non-finite value", j + 1, &headers[j]),
                ));
            }
            parsed.push(v);
        }
        if let Some(&last) = times.last() {
            if parsed[0] <= last {
                return Err(Error::NonMonotonicTime {
                    context: context.to_string(),
                    row,
                });
            }
        }
        times.push(parsed[0]);
        for (dst, v) in rows.iter_mut().zip(&parsed[1..]) {
            dst.push(*v);
        }
    }
    if times.is_empty() {
        return Err(Error::format(context, "no data rows"));
    }
    let rate = if times.len() >= 2 {
        let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        deltas.sort_by(f64::total_cmp);
        let n = deltas.len();
        let median = if n % 2 == 1 {
            deltas[n / 2]
        } else {
            0.5 * (deltas[n / 2 - 1] + deltas[n / 2])
        };
        let rate = 1.0 / median;
        if ((rate - declared_hz) / declared_hz).abs() > RATE_TOLERANCE {
            return Err(Error::format(
                context,
                format!("median sample rate {rate:.3} Hz is not within 1% of {declared_hz} Hz"),
            ));
        }
        rate
    } else {
        declared_hz
    };
    Trace::new(channel_names, rows, rate)
}

/// Writes the recorded frames of `trace` (padding is not written).
pub fn write_trace_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut out)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_trace<W: Write>(trace: &Trace, out: &mut W) -> Result<()> {
    write!(out, "t")?;
    for name in trace.channel_names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    let mut line = String::new();
    for t in 0..trace.valid_frames() {
        line.clear();
        line.push_str(&format!("{:.6}", t as f64 / trace.sample_rate_hz()));
        for c in 0..trace.channels() {
            line.push_str(&format!(",{:.8e}", trace.channel(c)[t]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses `task<K>_trial<M>.csv` into `(K, M)`; `K` starts at 1.
pub fn label_from_filename(name: &str) -> Result<(u32, u32)> {
    let file = Path::new(name).file_name().and_then(|f| f.to_str()).unwrap_or(name);
    let err = || Error::Labeling { name: name.to_string() };
    let stem = file.strip_suffix(".csv").ok_or_else(err)?;
    let rest = stem.strip_prefix("task").ok_or_else(err)?;
    let (task, trial) = rest.split_once("_trial").ok_or_else(err)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(task) || !digits(trial) {
        return Err(err());
    }
    let task: u32 = task.parse().map_err(|_| err())?;
    let trial: u32 = trial.parse().map_err(|_| err())?;
    if task == 0 {
        return Err(err());
    }
    Ok((task, trial))
}

pub fn trace_file_name(task: u32, trial: u32) -> String {
    format!("task{task}_trial{trial:02}.csv")
}

/// One line of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub task: u32,
    pub trial: u32,
    pub class_name: String,
    pub frames: usize,
}

/// Writes every sample as `task<label+1>_trial<n>.csv` plus a manifest.
pub fn write_dataset_dir(dataset: &LabeledDataset, dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut trials = vec![0u32; dataset.num_classes()];
    let mut entries = Vec::with_capacity(dataset.len());
    for sample in dataset.samples() {
        trials[sample.label] += 1;
        let task = sample.label as u32 + 1;
        let trial = trials[sample.label];
        let file = trace_file_name(task, trial);
        write_trace_csv(&sample.trace, dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            task,
            trial,
            class_name: dataset.vocab()[sample.label].clone(),
            frames: sample.trace.valid_frames(),
        });
    }
    let mut out = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    writeln!(out, "file,task,trial,class_name,frames")?;
    for e in &entries {
        writeln!(out, "{},{},{},{},{}", e.file, e.task, e.trial, e.class_name, e.frames)?;
    }
    out.flush()?;
    Ok(entries)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let context = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::format(&context, e.to_string()))?;
    let mut entries = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(&context, format!("row {}: {e}", i + 1)))?;
        let field = |j: usize| record.get(j).ok_or_else(|| Error::format(&context, format!("row {}: missing column {}", i + 1, j + 1)));
        let bad = |what: &str| Error::format(&context, format!("row {}: bad {what}", i + 1));
        entries.push(ManifestEntry {
            file: field(0)?.to_string(),
            task: field(1)?.parse().map_err(|_| bad("task"))?,
            trial: field(2)?.parse().map_err(|_| bad("trial"))?,
            class_name: field(3)?.to_string(),
            frames: field(4)?.parse().map_err(|_| bad("frames"))?,
        });
    }
    Ok(entries)
}

/// Loads every `task<K>_trial<M>.csv` in `dir`, ordered by task then trial.
///
/// Class names come from `manifest.csv` when present, otherwise `task<K>`.
pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !name.ends_with(".csv") {
            continue;
        }
        match label_from_filename(&name) {
            Ok((task, trial)) => files.push((task, trial, entry.path())),
            Err(_) => log::warn!("skipping {name}: not named task<K>_trial<M>.csv"),
        }
    }
    files.sort();
    let mut names: BTreeMap<u32, String> = BTreeMap::new();
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        for e in read_manifest(&manifest)? {
            names.insert(e.task, e.class_name);
        }
    }
    let classes = files.iter().map(|f| f.0).chain(names.keys().copied()).max().unwrap_or(0);
    let vocab = (1..=classes)
        .map(|k| names.get(&k).cloned().unwrap_or_else(|| format!("task{k}")))
        .collect();
    let samples = files
        .into_iter()
        .map(|(task, _, path)| {
            Ok(Sample {
                trace: parse_trace_csv(&path)?,
                label: task as usize - 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, vocab)
}
