//! Network and training hyperparameters.

use std::fmt;
use std::str::FromStr;

use crate::config::FlatConfig;
use crate::numerics::pooled_frames;
use crate::{Error, Result};

/// Where the single batch normalization layer sits and what it normalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchNormPosition {
    /// After the conv/pool stack, one statistic per channel over all frames.
    #[default]
    AfterLastConv,
    /// On the flattened vector feeding the first dense layer, one statistic
    /// per element.
    BeforeFirstFc,
}

impl FromStr for BatchNormPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_last_conv" => Ok(Self::AfterLastConv),
            "before_first_fc" => Ok(Self::BeforeFirstFc),
            other => Err(Error::Config(format!(
                "batchnorm position {other:?}: expected after_last_conv or before_first_fc"
            ))),
        }
    }
}

impl fmt::Display for BatchNormPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AfterLastConv => "after_last_conv",
            Self::BeforeFirstFc => "before_first_fc",
        })
    }
}

/// `Standard` fixes four conv/pool stages and two hidden dense layers;
/// `Custom` accepts any counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Standard,
    Custom,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Config(format!("profile {other:?}: expected standard or custom"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub profile: Profile,
    pub conv_filters: Vec<usize>,
    pub kernel_width: usize,
    pub pool: usize,
    pub pool_stride: usize,
    pub fc_sizes: Vec<usize>,
    pub batchnorm_position: BatchNormPosition,
    pub num_classes: usize,
    pub input_channels: usize,
    pub input_frames: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Standard,
            conv_filters: vec![16, 32, 64, 64],
            kernel_width: 5,
            pool: 2,
            pool_stride: 2,
            fc_sizes: vec![128, 64],
            batchnorm_position: BatchNormPosition::AfterLastConv,
            num_classes: 2,
            input_channels: 24,
            input_frames: 2000,
        }
    }
}

/// Output shape of one layer in a built network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub channels: usize,
    pub frames: usize,
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10} {} x {}", self.name, self.channels, self.frames)
    }
}

const NET_KEYS: &[&str] = &[
    "profile",
    "conv_filters",
    "kernel_width",
    "pool",
    "pool_stride",
    "fc_sizes",
    "batchnorm",
    "num_classes",
    "input_channels",
    "input_frames",
];

impl NetworkConfig {
    /// Layer-by-layer output shapes; fails naming the first layer whose
    /// input has too few frames.
    pub fn shape_report(&self) -> Result<Vec<LayerShape>> {
        self.validate_counts()?;
        let mut shapes = vec![LayerShape {
            name: "input".into(),
            channels: self.input_channels,
            frames: self.input_frames,
        }];
        let mut channels = self.input_channels;
        let mut frames = self.input_frames;
        for (i, &filters) in self.conv_filters.iter().enumerate() {
            let stage = i + 1;
            if frames < self.kernel_width {
                return Err(Error::Config(format!(
                    "input_frames {} is exhausted at conv{stage}: kernel width {} needs {} frames, {frames} remain",
                    self.input_frames, self.kernel_width, self.kernel_width
                )));
            }
            frames = frames - self.kernel_width + 1;
            channels = filters;
            shapes.push(LayerShape {
                name: format!("conv{stage}"),
                channels,
                frames,
            });
            frames = pooled_frames(frames, self.pool, self.pool_stride).ok_or_else(|| {
                Error::Config(format!(
                    "input_frames {} is exhausted at pool{stage}: pool size {} needs {} frames, {frames} remain",
                    self.input_frames, self.pool, self.pool
                ))
            })?;
            shapes.push(LayerShape {
                name: format!("pool{stage}"),
                channels,
                frames,
            });
        }
        if self.batchnorm_position == BatchNormPosition::AfterLastConv {
            shapes.push(LayerShape {
                name: "batchnorm".into(),
                channels,
                frames,
            });
        }
        let flat = channels * frames;
        shapes.push(LayerShape {
            name: "flatten".into(),
            channels: flat,
            frames: 1,
        });
        if self.batchnorm_position == BatchNormPosition::BeforeFirstFc {
            shapes.push(LayerShape {
                name: "batchnorm".into(),
                channels: flat,
                frames: 1,
            });
        }
        for (i, &size) in self.fc_sizes.iter().enumerate() {
            shapes.push(LayerShape {
                name: format!("fc{}", i + 1),
                channels: size,
                frames: 1,
            });
        }
        shapes.push(LayerShape {
            name: "output".into(),
            channels: self.num_classes,
            frames: 1,
        });
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_report().map(|_| ())
    }

    fn validate_counts(&self) -> Result<()> {
        if self.profile == Profile::Standard && (self.conv_filters.len() != 4 || self.fc_sizes.len() != 2) {
            return Err(Error::Config(format!(
                "the standard profile has 4 conv stages and 2 hidden dense layers, got {} and {}; use profile = custom",
                self.conv_filters.len(),
                self.fc_sizes.len()
            )));
        }
        if self.conv_filters.is_empty() {
            return Err(Error::Config("at least one conv stage is required".into()));
        }
        if self.conv_filters.iter().chain(&self.fc_sizes).any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.kernel_width == 0 || self.pool == 0 || self.pool_stride == 0 {
            return Err(Error::Config("kernel width, pool and stride must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.input_channels == 0 || self.input_frames == 0 {
            return Err(Error::Config("input shape must be positive".into()));
        }
        Ok(())
    }

    /// Reads keys relative to the `net.` section; missing keys keep defaults.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        cfg.expect_keys(NET_KEYS, "net")?;
        let d = Self::default();
        Ok(Self {
            profile: cfg.get_or("profile", d.profile)?,
            conv_filters: cfg.get_list("conv_filters")?.unwrap_or(d.conv_filters),
            kernel_width: cfg.get_or("kernel_width", d.kernel_width)?,
            pool: cfg.get_or("pool", d.pool)?,
            pool_stride: cfg.get_or("pool_stride", d.pool_stride)?,
            fc_sizes: cfg.get_list("fc_sizes")?.unwrap_or(d.fc_sizes),
            batchnorm_position: cfg.get_or("batchnorm", d.batchnorm_position)?,
            num_classes: cfg.get_or("num_classes", d.num_classes)?,
            input_channels: cfg.get_or("input_channels", d.input_channels)?,
            input_frames: cfg.get_or("input_frames", d.input_frames)?,
        })
    }

    pub fn to_config(&self) -> FlatConfig {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut cfg = FlatConfig::new();
        cfg.set("profile", self.profile);
        cfg.set("conv_filters", join(&self.conv_filters));
        cfg.set("kernel_width", self.kernel_width);
        cfg.set("pool", self.pool);
        cfg.set("pool_stride", self.pool_stride);
        cfg.set("fc_sizes", join(&self.fc_sizes));
        cfg.set("batchnorm", self.batchnorm_position);
        cfg.set("num_classes", self.num_classes);
        cfg.set("input_channels", self.input_channels);
        cfg.set("input_frames", self.input_frames);
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(Error::Config(format!("optimizer {other:?}: expected adam or sgd"))),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Epochs without a validation-loss improvement before stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            early_stop_patience: 10,
        }
    }
}

const TRAIN_KEYS: &[&str] = &["epochs", "batch_size", "learning_rate", "optimizer", "seed", "patience"];

impl TrainConfig {
    pub fn validate(&self, train_size: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > train_size {
            return Err(Error::Config(format!(
                "batch size {} must be between 1 and the training-set size {train_size}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!("learning rate {} is not in (0, 1)", self.learning_rate)));
        }
        Ok(())
    }

    /// Reads keys relative to the `train.` section.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        cfg.expect_keys(TRAIN_KEYS, "train")?;
        let d = Self::default();
        Ok(Self {
            epochs: cfg.get_or("epochs", d.epochs)?,
            batch_size: cfg.get_or("batch_size", d.batch_size)?,
            learning_rate: cfg.get_or("learning_rate", d.learning_rate)?,
            optimizer: cfg.get_or("optimizer", d.optimizer)?,
            seed: cfg.get_or("seed", d.seed)?,
            early_stop_patience: cfg.get_or("patience", d.early_stop_patience)?,
        })
    }

    pub fn to_config(&self) -> FlatConfig {
        let mut cfg = FlatConfig::new();
        cfg.set("epochs", self.epochs);
        cfg.set("batch_size", self.batch_size);
        cfg.set("learning_rate", self.learning_rate);
        cfg.set("optimizer", self.optimizer);
        cfg.set("seed", self.seed);
        cfg.set("patience", self.early_stop_patience);
        cfg
    }
}
