use std::fmt;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{context}: format error: {message}")]
    Format { context: String, message: String },

    #[error("{context}: non-monotonic time at data row {row}")]
    NonMonotonicTime { context: String, row: usize },

    #[error("cannot derive a label from {name:?}: expected task<digits>_trial<digits>.csv")]
    Labeling { name: String },

    #[error("class {class:?} has {count} samples; a stratified split needs at least 3")]
    InsufficientSupport { class: String, count: usize },

    #[error("relabeling error: {0}")]
    Relabel(String),

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("model file format error at byte {offset}{}: {message}", LayerSuffix(*.layer))]
    ModelFormat {
        offset: u64,
        layer: Option<usize>,
        message: String,
    },

    #[error("stream error: {0}")]
    Stream(String),

    #[error("experiment {id}: stage {stage} failed: {source}")]
    Experiment {
        id: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct LayerSuffix(Option<usize>);

impl fmt::Display for LayerSuffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(layer) => write!(f, " (layer {layer})"),
            None => Ok(()),
        }
    }
}

impl Error {
    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Strips experiment annotations and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Experiment { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
