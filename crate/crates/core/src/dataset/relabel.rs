//! Class selection, binary relabeling and dataset fusion.

use std::collections::BTreeSet;

use super::{LabeledDataset, Sample};
use crate::{Error, Result};

/// Keeps samples of the listed classes; the vocabulary becomes those classes
/// in the given order.
pub fn select_classes(dataset: &LabeledDataset, classes: &[usize]) -> Result<LabeledDataset> {
    let mut remap = vec![None; dataset.num_classes()];
    for (new, &old) in classes.iter().enumerate() {
        if old >= dataset.num_classes() {
            return Err(Error::Relabel(format!("class index {old} out of range")));
        }
        if remap[old].is_some() {
            return Err(Error::Relabel(format!("class {:?} selected twice", dataset.vocab()[old])));
        }
        remap[old] = Some(new);
    }
    let samples = dataset
        .samples()
        .iter()
        .filter_map(|s| {
            remap[s.label].map(|label| Sample {
                trace: s.trace.clone(),
                label,
            })
        })
        .collect();
    let vocab = classes.iter().map(|&k| dataset.vocab()[k].clone()).collect();
    LabeledDataset::new(samples, vocab)
}

/// Collapses to two classes: the listed classes become label 1, all others 0.
/// Class names record the sources, e.g. `negative(grasp|move)`.
pub fn relabel_binary(dataset: &LabeledDataset, positive: &BTreeSet<usize>) -> Result<LabeledDataset> {
    let k = dataset.num_classes();
    if let Some(&bad) = positive.iter().find(|&&p| p >= k) {
        return Err(Error::Relabel(format!("positive class index {bad} out of range for {k} classes")));
    }
    if positive.is_empty() || positive.len() == k {
        return Err(Error::Relabel(
            "the positive set must be a non-empty proper subset of the classes".into(),
        ));
    }
    let join = |pos: bool| {
        (0..k)
            .filter(|c| positive.contains(c) == pos)
            .map(|c| dataset.vocab()[c].as_str())
            .collect::<Vec<_>>()
            .join("|")
    };
    let vocab = vec![format!("negative({})", join(false)), format!("positive({})", join(true))];
    let samples = dataset
        .samples()
        .iter()
        .map(|s| Sample {
            trace: s.trace.clone(),
            label: positive.contains(&s.label) as usize,
        })
        .collect();
    LabeledDataset::new(samples, vocab)
}

/// Concatenates `b` after `a`. The vocabulary is `a`'s followed by `b`'s
/// classes not already present; every trace is zero-padded to the longest.
pub fn merge_datasets(a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset> {
    if let (Some(na), Some(nb)) = (a.channel_names(), b.channel_names()) {
        if na != nb {
            return Err(Error::Fusion(format!(
                "channel layouts differ ({} vs {} channels)",
                na.len(),
                nb.len()
            )));
        }
    }
    let mut vocab = a.vocab().to_vec();
    let remap: Vec<usize> = b
        .vocab()
        .iter()
        .map(|name| match vocab.iter().position(|v| v == name) {
            Some(i) => i,
            None => {
                vocab.push(name.clone());
                vocab.len() - 1
            }
        })
        .collect();
    let frames = a.max_frames().max(b.max_frames());
    let samples = a
        .samples()
        .iter()
        .map(|s| (s, s.label))
        .chain(b.samples().iter().map(|s| (s, remap[s.label])))
        .map(|(s, label)| Sample {
            trace: s.trace.padded_to(frames),
            label,
        })
        .collect();
    LabeledDataset::new(samples, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{default_channel_names, Trace};

    fn dataset(labels: &[usize], vocab: &[&str], channels: usize, frames: usize) -> LabeledDataset {
        let samples = labels
            .iter()
            .map(|&label| Sample {
                trace: Trace::new(default_channel_names(channels), vec![vec![label as f64; frames]; channels], 100.0)
                    .unwrap(),
                label,
            })
            .collect();
        LabeledDataset::new(samples, vocab.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn six_classes_to_survey_vs_rest() {
        let vocab = ["grasp", "place", "push", "pull", "turn", "survey"];
        let labels: Vec<usize> = (0..6).flat_map(|k| [k; 4]).collect();
        let ds = dataset(&labels, &vocab, 2, 5);
        let bin = relabel_binary(&ds, &BTreeSet::from([5])).unwrap();
        assert_eq!(bin.class_counts(), vec![20, 4]);
        assert_eq!(bin.vocab()[1], "positive(survey)");
        assert_eq!(bin.vocab()[0], "negative(grasp|place|push|pull|turn)");
        assert_eq!(bin.len(), ds.len());
    }

    #[test]
    fn binary_set_with_positive_one_keeps_labels() {
        let ds = dataset(&[0, 1, 1, 0], &["a", "b"], 1, 3);
        assert_eq!(relabel_binary(&ds, &BTreeSet::from([1])).unwrap().labels(), ds.labels());
    }

    #[test]
    fn empty_or_full_positive_set_is_rejected() {
        let ds = dataset(&[0, 1], &["a", "b"], 1, 3);
        assert!(matches!(relabel_binary(&ds, &BTreeSet::new()), Err(Error::Relabel(_))));
        assert!(matches!(relabel_binary(&ds, &BTreeSet::from([0, 1])), Err(Error::Relabel(_))));
        assert!(relabel_binary(&ds, &BTreeSet::from([2])).is_err());
    }

    #[test]
    fn select_compacts_the_vocabulary() {
        let ds = dataset(&[0, 1, 2, 2, 1], &["a", "b", "c"], 1, 3);
        let sel = select_classes(&ds, &[2, 0]).unwrap();
        assert_eq!(sel.vocab(), &["c".to_string(), "a".to_string()]);
        assert_eq!(sel.labels(), vec![1, 0, 0]);
        assert!(select_classes(&ds, &[0, 0]).is_err());
    }

    #[test]
    fn merge_counts_and_vocab() {
        let labels: Vec<usize> = (0..120).map(|i| i % 2).collect();
        let a = dataset(&labels, &["grasp", "survey"], 24, 10);
        let b = dataset(&[0; 24], &["grid"], 24, 17);
        let m = merge_datasets(&a, &b).unwrap();
        assert_eq!(m.len(), 144);
        assert_eq!(m.vocab(), &["grasp".to_string(), "survey".to_string(), "grid".to_string()]);
        assert_eq!(m.class_counts(), vec![60, 60, 24]);
        assert!(m.samples().iter().all(|s| s.trace.frames() == 17));
        assert_eq!(m.samples()[0].trace.valid_frames(), 10);
    }

    #[test]
    fn merge_shared_class_names_reuse_labels() {
        let a = dataset(&[0, 1], &["x", "y"], 1, 3);
        let b = dataset(&[0, 1], &["y", "z"], 1, 3);
        let m = merge_datasets(&a, &b).unwrap();
        assert_eq!(m.labels(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = dataset(&[0, 1], &["x", "y"], 1, 3);
        assert_eq!(merge_datasets(&a, &LabeledDataset::empty(vec![])).unwrap(), a);
    }

    #[test]
    fn merge_channel_mismatch() {
        let a = dataset(&[0], &["x"], 24, 3);
        let b = dataset(&[0], &["y"], 23, 3);
        assert!(matches!(merge_datasets(&a, &b), Err(Error::Fusion(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_count_equals_summed_support(
                labels in proptest::collection::vec(0usize..5, 1..60),
                mask in 1u8..31,
            ) {
                let ds = dataset(&labels, &["a", "b", "c", "d", "e"], 1, 2);
                let positive: BTreeSet<usize> = (0..5).filter(|k| mask & (1 << k) != 0).collect();
                let bin = relabel_binary(&ds, &positive).unwrap();
                let support: usize = positive.iter().map(|&k| ds.class_counts()[k]).sum();
                prop_assert_eq!(bin.class_counts()[1], support);
                prop_assert_eq!(bin.len(), ds.len());
            }
        }
    }
}
