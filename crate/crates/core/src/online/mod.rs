//! Sliding-window classification of a live frame stream.
//!
//! Frames are standardized as they arrive. Every `hop_frames` frames the last
//! `window_frames` of them are front-filled with zeros if the stream is still
//! shorter than a window, zero-padded at the back to the network's input
//! length, and classified in infer mode.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::dataset::{StandardizationStats, Trace, DEFAULT_BLOCK_FRAMES, DEFAULT_SAMPLE_RATE_HZ};
use crate::model::{predict, NetworkParams};
use crate::{Error, Result};

pub const DEFAULT_HOP_FRAMES: usize = 100;

#[derive(Debug, Clone)]
pub struct WindowConfig {
    pub window_frames: usize,
    pub hop_frames: usize,
    pub stats: StandardizationStats,
    pub params: NetworkParams<f32>,
    /// Names printed beside each label; defaults to `class<k>`.
    pub class_names: Vec<String>,
}

impl WindowConfig {
    pub fn new(params: NetworkParams<f32>, stats: StandardizationStats) -> Result<Self> {
        let class_names = (0..params.num_classes()).map(|k| format!("class{k}")).collect();
        let window_frames = DEFAULT_BLOCK_FRAMES.min(params.input_frames());
        let cfg = Self {
            window_frames,
            hop_frames: DEFAULT_HOP_FRAMES.min(window_frames),
            stats,
            params,
            class_names,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_window(mut self, window_frames: usize, hop_frames: usize) -> Result<Self> {
        self.window_frames = window_frames;
        self.hop_frames = hop_frames;
        self.validate()?;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        self.class_names = names;
        self.validate()?;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.stats.channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_frames == 0 || self.window_frames == 0 {
            return Err(Error::Config("window and hop must be positive".into()));
        }
        if self.hop_frames > self.window_frames {
            return Err(Error::Config(format!(
                "hop {} exceeds window {}",
                self.hop_frames, self.window_frames
            )));
        }
        if self.window_frames > self.params.input_frames() {
            return Err(Error::Config(format!(
                "window {} is longer than the model input of {} frames",
                self.window_frames,
                self.params.input_frames()
            )));
        }
        if self.stats.channels() != self.params.input_channels() {
            return Err(Error::Stream(format!(
                "stats cover {} channels but the model expects {}",
                self.stats.channels(),
                self.params.input_channels()
            )));
        }
        if self.class_names.len() != self.params.num_classes() {
            return Err(Error::Config(format!(
                "{} class names for a {}-class model",
                self.class_names.len(),
                self.params.num_classes()
            )));
        }
        Ok(())
    }
}

/// Builds the network input for the window ending at frame `end` of a
/// standardized frame sequence: zero front-fill to `window_frames`, then zero
/// back-padding to `input_frames`.
pub fn window_trace(
    frames: &[Vec<f64>],
    end: usize,
    window_frames: usize,
    input_frames: usize,
    channel_names: &[String],
) -> Result<Trace> {
    let channels = channel_names.len();
    if end >= frames.len() {
        return Err(Error::Stream(format!("window end {end} past {} frames", frames.len())));
    }
    let start = (end + 1).saturating_sub(window_frames);
    let fill = window_frames - (end + 1 - start);
    let mut rows = vec![vec![0.0; input_frames]; channels];
    for (t, frame) in frames[start..=end].iter().enumerate() {
        if frame.len() != channels {
            return Err(Error::Stream(format!("frame has {} values, expected {channels}", frame.len())));
        }
        for (c, &v) in frame.iter().enumerate() {
            rows[c][fill + t] = v;
        }
    }
    Trace::new(channel_names.to_vec(), rows, DEFAULT_SAMPLE_RATE_HZ)
}

/// End indices of the windows emitted over `total_frames` frames.
pub fn window_ends(total_frames: usize, hop_frames: usize) -> Vec<usize> {
    (1..=total_frames / hop_frames.max(1)).map(|k| k * hop_frames - 1).collect()
}

/// Windows over an already standardized buffer, one per hop boundary.
pub fn window_extract(frames: &[Vec<f64>], cfg: &WindowConfig) -> Result<Vec<(usize, Trace)>> {
    window_ends(frames.len(), cfg.hop_frames)
        .into_iter()
        .map(|end| {
            window_trace(
                frames,
                end,
                cfg.window_frames,
                cfg.params.input_frames(),
                &cfg.stats.channel_names,
            )
            .map(|t| (end, t))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamPrediction {
    /// Index of the last frame in the window.
    pub frame_index: usize,
    pub label: usize,
    pub probs: Vec<f32>,
    /// The stream was shorter than a full window.
    pub warm_up: bool,
}

impl StreamPrediction {
    /// `frame_index,label,class_name,p_0,...,p_{K-1},warm_up`
    pub fn to_line(&self, class_names: &[String]) -> String {
        let mut line = format!("{},{},{}", self.frame_index, self.label, class_names[self.label]);
        for p in &self.probs {
            line.push(',');
            line.push_str(&p.to_string());
        }
        line.push_str(if self.warm_up { ",1" } else { ",0" });
        line
    }
}

/// Incremental state for one stream.
#[derive(Debug)]
pub struct StreamClassifier<'a> {
    cfg: &'a WindowConfig,
    buffer: VecDeque<Vec<f64>>,
    frames_seen: usize,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(cfg: &'a WindowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            buffer: VecDeque::with_capacity(cfg.window_frames + 1),
            frames_seen: 0,
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Adds one raw frame; returns a prediction when it completes a hop.
    pub fn push_frame(&mut self, frame: &[f64]) -> Result<Option<StreamPrediction>> {
        let channels = self.cfg.channels();
        if frame.len() != channels {
            return Err(Error::Stream(format!("frame has {} values, expected {channels}", frame.len())));
        }
        let standardized = frame
            .iter()
            .enumerate()
            .map(|(c, &x)| self.cfg.stats.apply_value(c, x))
            .collect();
        if self.buffer.len() == self.cfg.window_frames {
            self.buffer.pop_front();
        }
        self.buffer.push_back(standardized);
        self.frames_seen += 1;
        if !self.frames_seen.is_multiple_of(self.cfg.hop_frames) {
            return Ok(None);
        }
        let frames: Vec<Vec<f64>> = self.buffer.iter().cloned().collect();
        let trace = window_trace(
            &frames,
            frames.len() - 1,
            self.cfg.window_frames,
            self.cfg.params.input_frames(),
            &self.cfg.stats.channel_names,
        )?;
        let (label, probs) = predict(&self.cfg.params, &trace)?;
        Ok(Some(StreamPrediction {
            frame_index: self.frames_seen - 1,
            label,
            probs,
            warm_up: self.frames_seen < self.cfg.window_frames,
        }))
    }
}

/// Parses one wire-format line: comma-separated decimal floats.
pub fn parse_frame_line(line: &str, channels: usize) -> Result<Vec<f64>> {
    let values = line
        .trim()
        .split(',')
        .enumerate()
        .map(|(j, field)| {
            let field = field.trim();
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Input(format!("field {} ({field:?}) is not a finite number", j + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != channels {
        return Err(Error::Input(format!("expected {channels} values, got {}", values.len())));
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamSummary {
    pub frames: usize,
    pub predictions: usize,
    pub errors: usize,
}

/// Reads frames line by line and writes one prediction line per hop.
///
/// A line that does not parse produces `error,<line>,<message>` and is
/// skipped. Blank lines are ignored.
pub fn run_stream<R: BufRead, W: Write>(input: R, mut output: W, cfg: &WindowConfig) -> Result<StreamSummary> {
    let mut classifier = StreamClassifier::new(cfg)?;
    let mut summary = StreamSummary::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_frame_line(&line, cfg.channels()) {
            Ok(frame) => {
                if let Some(p) = classifier.push_frame(&frame)? {
                    writeln!(output, "{}", p.to_line(&cfg.class_names))?;
                    output.flush()?;
                    summary.predictions += 1;
                }
            }
            Err(e) => {
                log::warn!("line {}: {e}", i + 1);
                let message = e.to_string().replace(['"', ','], " ");
                writeln!(output, "error,{},{message}", i + 1)?;
                summary.errors += 1;
            }
        }
    }
    summary.frames = classifier.frames_seen();
    output.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::default_channel_names;
    use crate::model::{build_network, NetworkConfig, Profile};

    fn small_cfg(window: usize, hop: usize) -> WindowConfig {
        let net = NetworkConfig {
            profile: Profile::Custom,
            conv_filters: vec![2],
            kernel_width: 3,
            fc_sizes: vec![4],
            num_classes: 3,
            input_channels: 2,
            input_frames: 40,
            ..NetworkConfig::default()
        };
        let stats = StandardizationStats::new(default_channel_names(2), vec![0.5, -1.0], vec![2.0, 0.25]).unwrap();
        WindowConfig::new(build_network(&net, 4).unwrap(), stats)
            .unwrap()
            .with_window(window, hop)
            .unwrap()
    }

    #[test]
    fn window_arithmetic() {
        let ends = window_ends(1000, 100);
        assert_eq!(ends.len(), 10);
        assert_eq!(ends[0], 99);
        assert_eq!(ends[9], 999);
        assert!(window_ends(0, 100).is_empty());
        assert_eq!(window_ends(99, 100), Vec::<usize>::new());
    }

    #[test]
    fn warm_up_windows_are_front_filled() {
        let names = default_channel_names(1);
        let frames: Vec<Vec<f64>> = (1..=5).map(|v| vec![v as f64]).collect();
        let t = window_trace(&frames, 2, 4, 6, &names).unwrap();
        assert_eq!(t.channel(0), &[0.0, 1.0, 2.0, 3.0, 0.0, 0.0]);
        let t = window_trace(&frames, 4, 4, 4, &names).unwrap();
        assert_eq!(t.channel(0), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn hop_equal_to_window_tiles() {
        let cfg = small_cfg(10, 10);
        let frames: Vec<Vec<f64>> = (0..30).map(|v| vec![v as f64, 0.0]).collect();
        let windows = window_extract(&frames, &cfg).unwrap();
        assert_eq!(windows.len(), 3);
        for (k, (end, t)) in windows.iter().enumerate() {
            assert_eq!(*end, 10 * k + 9);
            assert_eq!(t.channel(0)[0], (10 * k) as f64);
        }
        assert!(window_extract(&[], &cfg).unwrap().is_empty());
    }

    #[test]
    fn stream_matches_batch_and_reports_bad_lines() {
        let cfg = small_cfg(20, 5);
        let raw: Vec<Vec<f64>> = (0..47).map(|t| vec![(t as f64 * 0.3).sin(), (t as f64 * 0.1).cos()]).collect();
        let mut text = String::new();
        for (t, f) in raw.iter().enumerate() {
            if t == 7 {
                text.push_str("1.0\nabc,2\n\n");
            }
            text.push_str(&format!("{},{}\n", f[0], f[1]));
        }
        let mut out = Vec::new();
        let summary = run_stream(text.as_bytes(), &mut out, &cfg).unwrap();
        assert_eq!(summary, StreamSummary { frames: 47, predictions: 9, errors: 2 });
        let out = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[1].starts_with("error,8,"));
        assert!(lines[2].starts_with("error,9,"));

        let standardized: Vec<Vec<f64>> = raw
            .iter()
            .map(|f| f.iter().enumerate().map(|(c, &x)| cfg.stats.apply_value(c, x)).collect())
            .collect();
        let preds: Vec<&str> = lines.iter().copied().filter(|l| !l.starts_with("error")).collect();
        for ((end, trace), line) in window_extract(&standardized, &cfg).unwrap().iter().zip(&preds) {
            let (label, probs) = predict(&cfg.params, trace).unwrap();
            let expected = StreamPrediction {
                frame_index: *end,
                label,
                probs,
                warm_up: *end + 1 < 20,
            };
            assert_eq!(*line, expected.to_line(&cfg.class_names));
        }
    }

    #[test]
    fn wrong_frame_width_terminates_push_frame() {
        let cfg = small_cfg(20, 5);
        let mut s = StreamClassifier::new(&cfg).unwrap();
        assert!(matches!(s.push_frame(&[1.0]), Err(Error::Stream(_))));
    }

    #[test]
    fn config_checks() {
        let cfg = small_cfg(20, 5);
        assert!(cfg.clone().with_window(10, 11).is_err());
        assert!(cfg.clone().with_window(41, 10).is_err());
        assert!(cfg.clone().with_class_names(vec!["a".into()]).is_err());
        let stats = StandardizationStats::identity(default_channel_names(3));
        assert!(WindowConfig::new(cfg.params.clone(), stats).is_err());
    }
}
