use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use intent_core::dataset::{parse_trace_csv, standardize_trace, synth_generate, write_dataset_dir};
use intent_core::evaluation::{prepare_dataset, render_report, run_experiments, run_on_dataset, ReportFormat};
use intent_core::model::{deserialize_params, predict as predict_trace, serialize_params};
use intent_core::online::run_stream;
use intent_core::{Error, ExperimentSpec, FlatConfig, Result, StandardizationStats, SynthSpec, WindowConfig};

use crate::ConfigArgs;

pub const MODEL_FILE: &str = "model.intc";
pub const STATS_FILE: &str = "stats.csv";
pub const CLASSES_FILE: &str = "classes.txt";

fn effective_config(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<FlatConfig> {
    let mut cfg = match file {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::new(),
    };
    for text in overrides {
        let (key, value) = FlatConfig::parse_override(text)?;
        cfg.set(&key, value);
    }
    if let Some(seed) = seed {
        cfg.set("seed", seed);
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn beside(model: &Path, name: &str) -> PathBuf {
    model.with_file_name(name)
}

fn read_class_names(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn class_names_for(model: &Path, explicit: Option<&Path>, classes: usize) -> Result<Vec<String>> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| beside(model, CLASSES_FILE));
    if explicit.is_none() && !path.exists() {
        return Ok((0..classes).map(|k| format!("class{k}")).collect());
    }
    let names = read_class_names(&path)?;
    if names.len() != classes {
        return Err(Error::Config(format!(
            "{} lists {} classes, the model has {classes}",
            path.display(),
            names.len()
        )));
    }
    Ok(names)
}

pub fn generate(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = effective_config(args.config.as_deref(), &args.overrides, args.seed)?;
    let spec = SynthSpec::from_config(&cfg)?;
    if args.print_config {
        print!("{}", spec.to_config().render());
        return Ok(());
    }
    let data = synth_generate(&spec)?;
    fs::create_dir_all(out)?;
    let entries = write_dataset_dir(&data, out)?;
    log::info!("wrote {} traces to {}", entries.len(), out.display());
    Ok(())
}

fn experiment_spec(cfg: &mut FlatConfig, default_id: &str) -> Result<ExperimentSpec> {
    if cfg.raw("id").is_none() {
        cfg.set("id", default_id);
    }
    ExperimentSpec::from_config(cfg)
}

pub fn train(args: &ConfigArgs, out: &Path) -> Result<()> {
    let mut cfg = effective_config(args.config.as_deref(), &args.overrides, args.seed)?;
    let mut spec = experiment_spec(&mut cfg, "train")?;
    spec.splits.truncate(1);
    if args.print_config {
        print!("{}", spec.to_config().render());
        return Ok(());
    }
    let data = prepare_dataset(&spec)?;
    let report = run_on_dataset(&spec, &data)?;
    let result = &report.results[0];
    fs::create_dir_all(out)?;
    serialize_params(&result.params, out.join(MODEL_FILE))?;
    write_file(&out.join(STATS_FILE), result.stats.to_csv().as_bytes())?;
    write_file(&out.join("history.csv"), result.history.to_csv().as_bytes())?;
    write_file(&out.join(CLASSES_FILE), (report.class_names.join("\n") + "\n").as_bytes())?;
    write_file(&out.join("config.cfg"), spec.to_config().render().as_bytes())?;
    write_file(&out.join("report.txt"), render_report(&report, ReportFormat::Text).as_bytes())?;
    log::info!(
        "test macro-F1 {:.4}; model written to {}",
        result.metrics.macro_f1,
        out.join(MODEL_FILE).display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub configs: Vec<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub print_config: bool,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub format: String,
    pub models: bool,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let format: ReportFormat = args.format.parse()?;
    let mut specs = Vec::with_capacity(args.configs.len());
    for path in &args.configs {
        let mut cfg = effective_config(Some(path), &args.overrides, args.seed)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        specs.push(experiment_spec(&mut cfg, &stem)?);
    }
    if args.print_config {
        let rendered: Vec<String> = specs.iter().map(|s| s.to_config().render()).collect();
        print!("{}", rendered.join("\n"));
        return Ok(());
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
    }
    let mut first_error = None;
    for (spec, result) in specs.iter().zip(run_experiments(&specs, args.jobs)?) {
        let report = match result {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                first_error.get_or_insert(e);
                continue;
            }
        };
        let text = render_report(&report, format);
        let Some(out) = &args.out else {
            print!("{text}");
            continue;
        };
        write_file(&out.join(format!("{}.{}", spec.id, format.extension())), text.as_bytes())?;
        if args.models {
            for r in &report.results {
                let stem = format!("{}_{}", spec.id, r.split.label().replace('/', "-"));
                serialize_params(&r.params, out.join(format!("{stem}.intc")))?;
                write_file(&out.join(format!("{stem}.stats.csv")), r.stats.to_csv().as_bytes())?;
            }
        }
        log::info!("{}: report written", spec.id);
    }
    first_error.map_or(Ok(()), Err)
}

fn load_model(model: &Path, stats: Option<&Path>) -> Result<(intent_core::NetworkParams, StandardizationStats)> {
    let params = deserialize_params(model)?;
    let stats_path = stats.map(Path::to_path_buf).unwrap_or_else(|| beside(model, STATS_FILE));
    let stats = StandardizationStats::load(&stats_path)?;
    if stats.channels() != params.input_channels() {
        return Err(Error::Config(format!(
            "{} covers {} channels, the model expects {}",
            stats_path.display(),
            stats.channels(),
            params.input_channels()
        )));
    }
    Ok((params, stats))
}

pub fn predict(model: &Path, stats: Option<&Path>, trace: &Path, classes: Option<&Path>) -> Result<()> {
    let (params, stats) = load_model(model, stats)?;
    let names = class_names_for(model, classes, params.num_classes())?;
    let raw = parse_trace_csv(trace)?;
    if raw.frames() > params.input_frames() {
        return Err(Error::Dimension(format!(
            "{} has {} frames, the model takes at most {}",
            trace.display(),
            raw.frames(),
            params.input_frames()
        )));
    }
    let input = standardize_trace(&raw, &stats)?.padded_to(params.input_frames());
    let (label, probs) = predict_trace(&params, &input)?;
    let probs: Vec<String> = probs.iter().map(f32::to_string).collect();
    println!("{label},{},{}", names[label], probs.join(","));
    Ok(())
}

pub fn stream(
    model: &Path,
    stats: Option<&Path>,
    classes: Option<&Path>,
    window: usize,
    hop: usize,
    listen: Option<&str>,
) -> Result<()> {
    let (params, stats) = load_model(model, stats)?;
    let names = class_names_for(model, classes, params.num_classes())?;
    let cfg = WindowConfig::new(params, stats)?
        .with_window(window, hop)?
        .with_class_names(names)?;
    let summary = match listen {
        None => run_stream(io::stdin().lock(), BufWriter::new(io::stdout().lock()), &cfg)?,
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            log::info!("listening on {}", listener.local_addr()?);
            let (socket, peer) = listener.accept()?;
            log::info!("streaming from {peer}");
            let reader = BufReader::new(socket.try_clone()?);
            let summary = run_stream(reader, BufWriter::new(&socket), &cfg)?;
            (&socket).flush()?;
            summary
        }
    };
    log::info!(
        "{} frames, {} predictions, {} malformed lines",
        summary.frames,
        summary.predictions,
        summary.errors
    );
    Ok(())
}
