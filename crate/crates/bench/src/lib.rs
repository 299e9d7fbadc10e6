//! Shared fixtures for the criterion benchmarks.

use intent_core::dataset::{pad_traces, standardize_apply, standardize_fit, synth_generate};
use intent_core::model::build_network;
use intent_core::{LabeledDataset, NetworkConfig, NetworkParams, StandardizationStats, SynthSpec};

/// A standardized, block-padded synthetic dataset and its statistics.
pub fn prepared_dataset(classes: usize, trials: usize, channels: usize) -> (LabeledDataset, StandardizationStats) {
    let spec = SynthSpec {
        num_classes: classes,
        trials_per_class: trials,
        channels,
        ..SynthSpec::default()
    };
    let raw = synth_generate(&spec).expect("valid synthetic spec");
    let stats = standardize_fit(&raw).expect("non-empty dataset");
    let data = standardize_apply(&raw, &stats).expect("matching channels");
    (pad_traces(&data, 1000), stats)
}

/// The standard network sized for `data`.
pub fn network_for(data: &LabeledDataset) -> NetworkParams<f32> {
    let cfg = NetworkConfig {
        num_classes: data.num_classes(),
        input_channels: data.channels().expect("non-empty dataset"),
        input_frames: data.max_frames(),
        ..NetworkConfig::default()
    };
    build_network(&cfg, 0).expect("valid network")
}
