//! Experiment definitions and the split-train-evaluate pipeline.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use super::metrics::{class_metrics, confusion_matrix, ConfusionMatrix, MetricSummary};
use crate::config::FlatConfig;
use crate::dataset::{
    load_dataset_dir, merge_datasets, padded_length, relabel_binary, select_classes,
    standardize_apply, standardize_fit, stratified_split, synth_generate, LabeledDataset, SplitSpec,
    StandardizationStats, SynthSpec, DEFAULT_BLOCK_FRAMES,
};
use crate::model::{argmax, infer_all, to_maps, train, NetworkConfig, NetworkParams, TrainConfig, TrainHistory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Synthetic(SynthSpec),
    /// Directory of `task<K>_trial<M>.csv` files.
    Csv(PathBuf),
}

/// One dataset feeding an experiment, optionally restricted to some classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub select: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Relabel {
    Multiclass,
    /// Listed classes become label 1, the rest label 0.
    Binary { positive: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub seed: u64,
    pub block_frames: usize,
    pub splits: Vec<SplitSpec>,
    /// Fused in order.
    pub sources: Vec<SourceSpec>,
    pub relabel: Relabel,
    pub net: NetworkConfig,
    pub train: TrainConfig,
}

const TOP_KEYS: &[&str] = &["id", "seed", "block_frames", "splits", "relabel", "positive"];
const SOURCE_KEYS: &[&str] = &["kind", "path", "select"];

impl ExperimentSpec {
    /// Parses the flat experiment format:
    ///
    /// ```text
    /// id = E5
    /// seed = 7
    /// splits = 0.8/0.1/0.1, 0.7/0.15/0.15
    /// source.1.kind = synthetic          # or csv with source.1.path
    /// source.1.classes = 6               # any synthetic-spec key
    /// source.1.select = a, b             # optional class filter
    /// relabel = binary                   # or multiclass
    /// positive = b
    /// net.kernel_width = 5
    /// train.epochs = 60
    /// ```
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        let mut top = FlatConfig::new();
        let mut source_ids = BTreeSet::new();
        for (key, value) in cfg.iter() {
            match key.split_once('.') {
                Some(("net" | "train", _)) => {}
                Some(("source", rest)) => {
                    let (n, _) = rest
                        .split_once('.')
                        .ok_or_else(|| Error::Config(format!("malformed source key {key:?}")))?;
                    let n: usize = n
                        .parse()
                        .map_err(|_| Error::Config(format!("source index in {key:?} is not a number")))?;
                    source_ids.insert(n);
                }
                _ => top.set(key, value),
            }
        }
        top.expect_keys(TOP_KEYS, "experiment")?;
        let id: String = top
            .get("id")?
            .ok_or_else(|| Error::Config("experiment needs an id".into()))?;
        let seed: u64 = top.get_or("seed", 0)?;
        let block_frames: usize = top.get_or("block_frames", DEFAULT_BLOCK_FRAMES)?;
        if block_frames == 0 {
            return Err(Error::Config("block_frames must be positive".into()));
        }
        let splits = match top.get_list::<String>("splits")? {
            Some(list) => list
                .iter()
                .map(|s| SplitSpec::parse(s, seed))
                .collect::<Result<Vec<_>>>()?,
            None => SplitSpec::standard_ratios(seed),
        };
        if splits.is_empty() {
            return Err(Error::Config("at least one split ratio is required".into()));
        }
        if source_ids.is_empty() {
            return Err(Error::Config("at least one source.N entry is required".into()));
        }
        let sources = source_ids
            .iter()
            .map(|&n| Self::parse_source(&cfg.section(&format!("source.{n}")), n, seed))
            .collect::<Result<Vec<_>>>()?;
        let relabel = match top.raw("relabel").unwrap_or("multiclass") {
            "multiclass" => {
                if top.raw("positive").is_some() {
                    return Err(Error::Config("positive is only used with relabel = binary".into()));
                }
                Relabel::Multiclass
            }
            "binary" => Relabel::Binary {
                positive: top
                    .get_list("positive")?
                    .ok_or_else(|| Error::Config("relabel = binary needs a positive class list".into()))?,
            },
            other => return Err(Error::Config(format!("relabel {other:?}: expected multiclass or binary"))),
        };
        let net = NetworkConfig::from_config(&cfg.section("net"))?;
        let train_section = cfg.section("train");
        let mut train = TrainConfig::from_config(&train_section)?;
        if train_section.raw("seed").is_none() {
            train.seed = seed;
        }
        Ok(Self {
            id,
            seed,
            block_frames,
            splits,
            sources,
            relabel,
            net,
            train,
        })
    }

    fn parse_source(section: &FlatConfig, n: usize, seed: u64) -> Result<SourceSpec> {
        let ctx = |e: Error| Error::Config(format!("source.{n}: {}", e.root()));
        let select = section.get_list("select").map_err(ctx)?;
        let kind = match section.raw("kind") {
            Some("csv") => {
                section.expect_keys(SOURCE_KEYS, &format!("source.{n}"))?;
                let path: String = section
                    .get("path")?
                    .ok_or_else(|| Error::Config(format!("source.{n}: csv sources need a path")))?;
                SourceKind::Csv(PathBuf::from(path))
            }
            Some("synthetic") => {
                let mut synth = section.clone();
                synth.remove("kind");
                synth.remove("select");
                if synth.raw("seed").is_none() {
                    // distinct sources get distinct templates by default
                    synth.set("seed", seed.wrapping_add(n as u64));
                }
                SourceKind::Synthetic(SynthSpec::from_config(&synth).map_err(ctx)?)
            }
            Some(other) => return Err(Error::Config(format!("source.{n}: unknown kind {other:?}"))),
            None => return Err(Error::Config(format!("source.{n}: missing kind"))),
        };
        Ok(SourceSpec { kind, select })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_config(&FlatConfig::load(path)?)
    }

    /// The effective configuration, defaults filled in.
    pub fn to_config(&self) -> FlatConfig {
        let mut cfg = FlatConfig::new();
        cfg.set("id", &self.id);
        cfg.set("seed", self.seed);
        cfg.set("block_frames", self.block_frames);
        cfg.set(
            "splits",
            self.splits.iter().map(SplitSpec::label).collect::<Vec<_>>().join(", "),
        );
        for (i, source) in self.sources.iter().enumerate() {
            let prefix = format!("source.{}", i + 1);
            let mut section = match &source.kind {
                SourceKind::Synthetic(s) => {
                    let mut c = s.to_config();
                    c.set("kind", "synthetic");
                    c
                }
                SourceKind::Csv(p) => {
                    let mut c = FlatConfig::new();
                    c.set("kind", "csv");
                    c.set("path", p.display());
                    c
                }
            };
            if let Some(select) = &source.select {
                section.set("select", select.join(","));
            }
            cfg.insert_section(&prefix, &section);
        }
        match &self.relabel {
            Relabel::Multiclass => cfg.set("relabel", "multiclass"),
            Relabel::Binary { positive } => {
                cfg.set("relabel", "binary");
                cfg.set("positive", positive.join(","));
            }
        }
        cfg.insert_section("net", &self.net.to_config());
        cfg.insert_section("train", &self.train.to_config());
        cfg
    }
}

/// Result of one split ratio.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub split: SplitSpec,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub history: TrainHistory,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricSummary,
    pub params: NetworkParams<f32>,
    pub stats: StandardizationStats,
    /// Wall-clock training plus evaluation time; not part of rendered reports.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub id: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub input_frames: usize,
    pub config: FlatConfig,
    pub results: Vec<SplitResult>,
}

fn stage<T>(id: &str, name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Experiment {
        id: id.to_string(),
        stage: name,
        source: Box::new(e),
    })
}

fn select_by_name(data: &LabeledDataset, names: &[String]) -> Result<LabeledDataset> {
    let idx = names
        .iter()
        .map(|n| {
            data.class_index(n)
                .ok_or_else(|| Error::Config(format!("unknown class {n:?}; known: {}", data.vocab().join(", "))))
        })
        .collect::<Result<Vec<_>>>()?;
    select_classes(data, &idx)
}

/// Loads, selects and fuses the sources, then applies the relabel rule.
pub fn prepare_dataset(spec: &ExperimentSpec) -> Result<LabeledDataset> {
    let id = spec.id.as_str();
    let mut fused: Option<LabeledDataset> = None;
    for source in &spec.sources {
        let data = stage(
            id,
            "load",
            match &source.kind {
                SourceKind::Synthetic(s) => synth_generate(s),
                SourceKind::Csv(p) => load_dataset_dir(p),
            },
        )?;
        let data = match &source.select {
            Some(names) => stage(id, "select", select_by_name(&data, names))?,
            None => data,
        };
        fused = Some(match fused {
            None => data,
            Some(acc) => stage(id, "fuse", merge_datasets(&acc, &data))?,
        });
    }
    let data = fused.ok_or_else(|| Error::Config(format!("experiment {id} has no sources")))?;
    match &spec.relabel {
        Relabel::Multiclass => Ok(data),
        Relabel::Binary { positive } => stage(id, "relabel", {
            positive
                .iter()
                .map(|n| {
                    data.class_index(n)
                        .ok_or_else(|| Error::Relabel(format!("positive class {n:?} is not in the data")))
                })
                .collect::<Result<BTreeSet<_>>>()
                .and_then(|set| relabel_binary(&data, &set))
        }),
    }
}

/// Runs every split ratio of `spec` on an already prepared dataset.
pub fn run_on_dataset(spec: &ExperimentSpec, data: &LabeledDataset) -> Result<EvaluationReport> {
    let id = spec.id.as_str();
    let channels = data
        .channels()
        .ok_or_else(|| Error::Experiment {
            id: id.to_string(),
            stage: "load",
            source: Box::new(Error::Input("no samples".into())),
        })?;
    let frames = padded_length(data.max_frames(), spec.block_frames);
    let net_cfg = NetworkConfig {
        num_classes: data.num_classes(),
        input_channels: channels,
        input_frames: frames,
        ..spec.net.clone()
    };
    let mut results = Vec::with_capacity(spec.splits.len());
    for split in &spec.splits {
        let started = Instant::now();
        log::info!("{id}: split {}", split.label());
        let parts = stage(id, "split", stratified_split(data, split))?;
        let stats = stage(id, "standardize", standardize_fit(&parts.train))?;
        // every split shares one block-aligned length taken from the whole dataset
        let prep = |d: &LabeledDataset| -> Result<LabeledDataset> {
            Ok(standardize_apply(d, &stats)?.map_traces(|t| t.padded_to(frames)))
        };
        let train_set = stage(id, "standardize", prep(&parts.train))?;
        let val_set = stage(id, "standardize", prep(&parts.val))?;
        let test_set = stage(id, "standardize", prep(&parts.test))?;
        let params = stage(id, "build", NetworkParams::<f32>::build(&net_cfg, spec.seed))?;
        let (params, history) = stage(id, "train", train(&params, &train_set, &val_set, &spec.train))?;
        let (matrix, metrics) = stage(id, "evaluate", evaluate(&params, &test_set))?;
        log::info!(
            "{id}: split {} test macro-F1 {:.4} after {} epochs",
            split.label(),
            metrics.macro_f1,
            history.epochs()
        );
        results.push(SplitResult {
            split: *split,
            train_size: parts.train.len(),
            val_size: parts.val.len(),
            test_size: parts.test.len(),
            history,
            matrix,
            metrics,
            params,
            stats,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(EvaluationReport {
        id: spec.id.clone(),
        seed: spec.seed,
        class_names: data.vocab().to_vec(),
        input_frames: frames,
        config: spec.to_config(),
        results,
    })
}

/// Full pipeline: sources, relabeling, then every split ratio.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<EvaluationReport> {
    let data = prepare_dataset(spec)?;
    run_on_dataset(spec, &data)
}

/// Runs experiments on up to `jobs` threads; results keep the input order.
pub fn run_experiments(specs: &[ExperimentSpec], jobs: usize) -> Result<Vec<Result<EvaluationReport>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| specs.par_iter().map(run_experiment).collect()))
}

/// Confusion matrix and metrics of infer-mode predictions on `test`.
pub fn evaluate(params: &NetworkParams<f32>, test: &LabeledDataset) -> Result<(ConfusionMatrix, MetricSummary)> {
    let maps = to_maps(params, test)?;
    let preds: Vec<usize> = infer_all(params, &maps)?.iter().map(|p| argmax(p)).collect();
    let matrix = confusion_matrix(&test.labels(), &preds, params.num_classes())?;
    let metrics = class_metrics(&matrix);
    Ok((matrix, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentSpec> {
        ExperimentSpec::from_config(&FlatConfig::parse(text).unwrap())
    }

    #[test]
    fn parses_a_binary_fusion_experiment() {
        let spec = parse(
            "id = E8\nseed = 3\nsplits = 0.8/0.1/0.1\nsource.1.kind = synthetic\nsource.1.classes = 3\n\
             source.2.kind = synthetic\nsource.2.class_names = grid,spare\nsource.2.select = grid\n\
             relabel = binary\npositive = grid\nnet.kernel_width = 3\ntrain.epochs = 2\n",
        )
        .unwrap();
        assert_eq!(spec.sources.len(), 2);
        assert_eq!(spec.splits.len(), 1);
        assert_eq!(spec.train.seed, 3);
        assert_eq!(spec.net.kernel_width, 3);
        match &spec.sources[1].kind {
            SourceKind::Synthetic(s) => assert_eq!(s.seed, 5),
            other => panic!("{other:?}"),
        }
        assert_eq!(spec.relabel, Relabel::Binary { positive: vec!["grid".into()] });
        let again = ExperimentSpec::from_config(&spec.to_config()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn default_splits_are_the_three_standard_ratios() {
        let spec = parse("id = x\nsource.1.kind = synthetic\n").unwrap();
        assert_eq!(spec.splits, SplitSpec::standard_ratios(0));
    }

    #[test]
    fn config_errors() {
        assert!(parse("source.1.kind = synthetic\n").is_err());
        assert!(parse("id = x\n").is_err());
        assert!(parse("id = x\nsource.1.kind = synthetic\nbogus = 1\n").is_err());
        assert!(parse("id = x\nsource.1.kind = csv\n").is_err());
        assert!(parse("id = x\nsource.1.kind = synthetic\nrelabel = binary\n").is_err());
        assert!(parse("id = x\nsource.1.kind = synthetic\nsplits = 0.5/0.3/0.3\n").is_err());
        assert!(parse("id = x\nsource.1.kind = synthetic\nnet.bogus = 1\n").is_err());
    }

    #[test]
    fn preparation_selects_fuses_and_relabels() {
        let spec = parse(
            "id = E6\nsource.1.kind = synthetic\nsource.1.classes = 3\nsource.1.trials = 4\n\
             source.1.frames_min = 20\nsource.1.frames_max = 30\nsource.1.channels = 2\n\
             source.1.class_names = grasp,place,survey\nsource.1.select = place,survey\n\
             source.2.kind = synthetic\nsource.2.trials = 5\nsource.2.frames_min = 20\n\
             source.2.frames_max = 40\nsource.2.channels = 2\nsource.2.class_names = grid,spare\n\
             source.2.select = grid\nrelabel = binary\npositive = survey,grid\n",
        )
        .unwrap();
        let data = prepare_dataset(&spec).unwrap();
        assert_eq!(data.len(), 13);
        assert_eq!(data.class_counts(), vec![4, 9]);
        assert_eq!(data.vocab()[1], "positive(survey|grid)");
    }

    #[test]
    fn stage_errors_name_the_experiment_and_stage() {
        let spec = parse("id = E9\nsource.1.kind = csv\nsource.1.path = /nonexistent/dir\n").unwrap();
        match run_experiment(&spec).unwrap_err() {
            Error::Experiment { id, stage, .. } => {
                assert_eq!(id, "E9");
                assert_eq!(stage, "load");
            }
            other => panic!("{other}"),
        }
        let spec = parse("id = E9\nsource.1.kind = synthetic\nrelabel = binary\npositive = nope\n").unwrap();
        assert!(matches!(run_experiment(&spec), Err(Error::Experiment { stage: "relabel", .. })));
    }
}
