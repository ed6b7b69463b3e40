//! Command-line pipeline: ingest, synth, graphs, train, eval, sweep, report.
//!
//! Exit codes: 0 success, 1 validation error (flags or config), 2 runtime
//! error. All randomness flows from the config's master seed through fixed
//! stage labels, and output CSV/JSON files contain no timestamps, so a rerun
//! with the same config and seed reproduces them byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversarial::robustness_sweep;
use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{downsample_benign, dump_graph, graph_stats, GraphSample};
use crate::ingest::{clean_records, parse_flow_csv, write_flow_csv};
use crate::metrics::Metrics;
use crate::model::Model;
use crate::normalize::{fit_normalizer, save_stats_json, vectorize_all};
use crate::pipeline::{repeated_holdout, windows_from_records, LabeledWindow, ModelSpec};
use crate::record::{map_labels, ClassTable, RawFlowRecord};
use crate::schema::FeatureSchema;
use crate::synth::{default_mix, generate_dataset};
use crate::train::TrainHistory;
use crate::util::stage_seed;

#[derive(Parser)]
#[command(
    name = "gnids",
    version,
    about = "Graph-based network intrusion detection: host-connection graphs, a message-passing GNN, flow-level baselines, and robustness sweeps"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set train.epochs=50 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shorthand for --set output_dir=DIR.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean, and label flow CSVs into the canonical intermediate.
    Ingest {
        /// Input CSVs; overrides data.csv_paths.
        #[arg(long, value_name = "FILE")]
        input: Vec<PathBuf>,
    },
    /// Generate the synthetic labeled dataset as a canonical CSV.
    Synth,
    /// Window flows, build host-connection graphs, and emit their stats.
    Graphs {
        /// Flow CSV to read; overrides the configured data source.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Also dump every graph as one JSON object per line.
        #[arg(long)]
        dump: bool,
    },
    /// Train a model and write model, history, and metrics files.
    Train {
        /// gnn | id3 | rf | mlp | all
        #[arg(long, default_value = "gnn")]
        model: String,
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },
    /// Evaluate a saved model on a dataset.
    Eval {
        #[arg(long = "model-file", value_name = "FILE")]
        model_file: PathBuf,
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },
    /// Robustness curves for saved models under both perturbation kinds.
    Sweep {
        /// Repeatable; every listed model is swept over the same grids.
        #[arg(long = "model-file", value_name = "FILE", required = true)]
        model_file: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },
    /// Aggregate existing run outputs into a summary table; recomputes
    /// nothing.
    Report,
}

/// Entry point used by the binary and by tests.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage text; help/version exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output_dir={}", out.display()));
    }
    let config = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match dispatch(&cli.command, &config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

/// Exclusive advisory lock on the output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".gnids-lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Usage(format!(
                "output directory is locked by another run ({} exists)",
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn dispatch(command: &Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Ingest { input } => cmd_ingest(config, input),
        Command::Synth => cmd_synth(config),
        Command::Graphs { data, dump } => cmd_graphs(config, data.as_deref(), *dump),
        Command::Train { model, data } => cmd_train(config, model, data.as_deref()),
        Command::Eval { model_file, data } => cmd_eval(config, model_file, data.as_deref()),
        Command::Sweep { model_file, data } => cmd_sweep(config, model_file, data.as_deref()),
        Command::Report => cmd_report(config),
    }
}

fn write_manifest(config: &RunConfig, command: &str) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "gnids",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": config.seed,
        "config_toml": config.to_toml(),
    });
    let path = config.output_dir.join(format!("manifest_{command}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| Error::io(&path, e))
}

/// Load cleaned, label-mapped records from CSVs, sorted by timestamp.
fn load_csv_records(
    paths: &[PathBuf],
    schema: &FeatureSchema,
    classes: &ClassTable,
) -> Result<(Vec<RawFlowRecord>, Vec<usize>)> {
    let mut all = Vec::new();
    for path in paths {
        let mut records = parse_flow_csv(path, schema)?;
        all.append(&mut records);
    }
    let (cleaned, _) = clean_records(all, schema);
    let (records, labels) = map_labels(cleaned, classes)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .timestamp
            .partial_cmp(&records[b].timestamp)
            .expect("finite timestamps after cleaning")
            .then(a.cmp(&b))
    });
    let records: Vec<RawFlowRecord> = order.iter().map(|&i| records[i].clone()).collect();
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    Ok((records, labels))
}

/// The configured data source as labeled windows.
fn load_windows(
    config: &RunConfig,
    data_override: Option<&Path>,
    schema: &FeatureSchema,
    classes: &ClassTable,
) -> Result<Vec<LabeledWindow>> {
    let (records, labels) = match data_override {
        Some(path) => load_csv_records(&[path.to_path_buf()], schema, classes)?,
        None => match config.data.source {
            DataSource::Csv => load_csv_records(&config.data.csv_paths, schema, classes)?,
            DataSource::Synthetic => {
                let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "synth"));
                let data = generate_dataset(
                    &default_mix(),
                    config.synth.window_count,
                    config.graph.window_size,
                    &mut rng,
                )?;
                let records: Vec<RawFlowRecord> =
                    data.windows.into_iter().flatten().collect();
                map_labels(records, classes)?
            }
        },
    };
    Ok(windows_from_records(records, labels, config.graph.window_size))
}

fn cmd_ingest(config: &RunConfig, input: &[PathBuf]) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let classes = config.class_table();
    let paths: Vec<PathBuf> = if input.is_empty() {
        if config.data.source != DataSource::Csv {
            return Err(Error::Config(vec![
                "ingest needs data.source = \"csv\" or --input files".into(),
            ]));
        }
        config.data.csv_paths.clone()
    } else {
        input.to_vec()
    };

    let mut all = Vec::new();
    for path in &paths {
        let mut records = parse_flow_csv(path, &schema)?;
        println!("parsed {:>8} rows from {}", records.len(), path.display());
        all.append(&mut records);
    }
    let parsed = all.len();
    let (cleaned, report) = clean_records(all, &schema);
    let (mut records, labels) = map_labels(cleaned, &classes)?;
    let filtered = parsed - report.dropped - records.len();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .timestamp
            .partial_cmp(&records[b].timestamp)
            .expect("finite timestamps after cleaning")
            .then(a.cmp(&b))
    });
    let sorted: Vec<RawFlowRecord> = order.iter().map(|&i| records[i].clone()).collect();
    records = sorted;

    let cleaned_path = config.output_dir.join("cleaned.csv");
    write_flow_csv(&cleaned_path, &records, &schema)?;
    let stats = fit_normalizer(&records, &schema)?;
    let stats_path = config.output_dir.join("stats.json");
    save_stats_json(&stats, &stats_path)?;
    write_manifest(config, "ingest")?;

    println!(
        "ingest: {parsed} parsed, {} kept, {} dropped, {} rate values replaced, {filtered} filtered by class",
        records.len(),
        report.dropped,
        report.replaced
    );
    println!("wrote {} and {}", cleaned_path.display(), stats_path.display());
    let _ = labels;
    Ok(())
}

fn cmd_synth(config: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "synth"));
    let data = generate_dataset(
        &default_mix(),
        config.synth.window_count,
        config.graph.window_size,
        &mut rng,
    )?;
    let records = data.all_records();
    let csv_path = config.output_dir.join("synthetic.csv");
    write_flow_csv(&csv_path, &records, &schema)?;
    let inventory_path = config.output_dir.join("inventory.json");
    fs::write(
        &inventory_path,
        serde_json::to_string_pretty(&data.inventory).expect("inventory serializes"),
    )
    .map_err(|e| Error::io(&inventory_path, e))?;
    write_manifest(config, "synth")?;
    println!(
        "synth: {} windows x {} flows -> {}",
        config.synth.window_count,
        config.graph.window_size,
        csv_path.display()
    );
    Ok(())
}

fn cmd_graphs(config: &RunConfig, data: Option<&Path>, dump: bool) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let classes = config.class_table();
    let windows = load_windows(config, data, &schema, &classes)?;
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows to build graphs from"));
    }

    // diagnostic-path normalization: fitted over everything loaded
    let all_records: Vec<RawFlowRecord> = windows
        .iter()
        .flat_map(|w| w.records.iter().cloned())
        .collect();
    let stats = fit_normalizer(&all_records, &schema)?;
    let mut samples = Vec::with_capacity(windows.len());
    for w in &windows {
        let vectors = vectorize_all(&w.records, &stats, &schema)?;
        let graph = crate::graph::build_graph(&w.records, &vectors, &w.labels)?;
        samples.push(GraphSample::new(graph, w.window_id));
    }
    let before = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "downsample"));
    let samples = downsample_benign(samples, config.graph.benign_drop_rate, &mut rng);

    let stats_path = config.output_dir.join("graph_stats.csv");
    let mut out = String::from("window_id,hosts,flows,edges,max_host_degree,components,benign_only\n");
    for s in &samples {
        let gs = graph_stats(&s.graph);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.window_id,
            gs.host_count,
            gs.flow_count,
            gs.edge_count,
            gs.max_host_degree,
            gs.component_count,
            s.benign_only
        ));
    }
    fs::write(&stats_path, out).map_err(|e| Error::io(&stats_path, e))?;

    if dump {
        let dump_path = config.output_dir.join("graphs.jsonl");
        let file = fs::File::create(&dump_path).map_err(|e| Error::io(&dump_path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        for s in &samples {
            let line = serde_json::to_string(&dump_graph(&s.graph)).expect("graph serializes");
            writeln!(writer, "{line}").map_err(|e| Error::io(&dump_path, e))?;
        }
        println!("wrote {}", dump_path.display());
    }
    write_manifest(config, "graphs")?;
    println!(
        "graphs: {} windows -> {} samples after benign downsampling (rate {}), stats in {}",
        before,
        samples.len(),
        config.graph.benign_drop_rate,
        stats_path.display()
    );
    Ok(())
}

fn model_specs(config: &RunConfig, which: &str, class_count: usize, feature_count: usize) -> Result<Vec<ModelSpec>> {
    let gnn = ModelSpec::Gnn(
        config.gnn_config(class_count, feature_count),
        config.train_config(class_count),
    );
    let id3 = ModelSpec::Id3(config.id3);
    let forest = ModelSpec::Forest(config.forest_config());
    let mlp = ModelSpec::Mlp(config.mlp_config());
    Ok(match which {
        "gnn" => vec![gnn],
        "id3" => vec![id3],
        "rf" => vec![forest],
        "mlp" => vec![mlp],
        "all" => vec![gnn, id3, forest, mlp],
        other => {
            return Err(Error::Config(vec![format!(
                "--model {other:?} is not one of gnn | id3 | rf | mlp | all"
            )]))
        }
    })
}

fn cmd_train(config: &RunConfig, which: &str, data: Option<&Path>) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let classes = config.class_table();
    let windows = load_windows(config, data, &schema, &classes)?;
    let specs = model_specs(config, which, classes.class_count(), schema.feature_count())?;

    for spec in &specs {
        let started = std::time::Instant::now();
        let report = repeated_holdout(
            &windows,
            config.train.runs,
            config.train.train_fraction,
            spec,
            &classes,
            &schema,
            config.graph.benign_drop_rate,
            config.seed,
        )?;
        let best = report.best();
        let name = spec.name();
        let model_path = config.output_dir.join(format!("model_{name}.json"));
        best.model.save(&model_path)?;
        if let Some(history) = &best.history {
            write_history_csv(&config.output_dir.join(format!("history_{name}.csv")), history)?;
        }
        let rows: Vec<(String, Metrics)> = report
            .runs
            .iter()
            .map(|r| (r.run.to_string(), r.metrics.clone()))
            .collect();
        write_metrics_csv(
            &config.output_dir.join(format!("metrics_{name}.csv")),
            &rows,
            &classes,
            Some((report.mean_weighted_f1, report.std_weighted_f1)),
        )?;
        eprintln!("trained {name} in {:.1}s", started.elapsed().as_secs_f64());
        println!(
            "{name}: weighted F1 {:.4} (mean over {} run(s), std {:.4}), model at {}",
            report.mean_weighted_f1,
            report.runs.len(),
            report.std_weighted_f1,
            model_path.display()
        );
    }
    write_manifest(config, "train")?;
    Ok(())
}

fn cmd_eval(config: &RunConfig, model_file: &Path, data: Option<&Path>) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let classes = config.class_table();
    let windows = load_windows(config, data, &schema, &classes)?;
    let model = Model::load(model_file)?;
    let (metrics, _) = crate::pipeline::evaluate_model(&model, &windows)?;
    let path = config
        .output_dir
        .join(format!("metrics_eval_{}.csv", model.name));
    write_metrics_csv(&path, &[("0".to_string(), metrics.clone())], &classes, None)?;
    write_manifest(config, "eval")?;
    println!(
        "eval {}: weighted F1 {:.4} over {} windows -> {}",
        model.name,
        metrics.weighted_f1,
        windows.len(),
        path.display()
    );
    Ok(())
}

fn cmd_sweep(config: &RunConfig, model_files: &[PathBuf], data: Option<&Path>) -> Result<()> {
    let _lock = DirLock::acquire(&config.output_dir)?;
    let schema = config.schema()?;
    let classes = config.class_table();
    let windows = load_windows(config, data, &schema, &classes)?;
    let models: Vec<Model> = model_files
        .iter()
        .map(|p| Model::load(p))
        .collect::<Result<_>>()?;
    let refs: Vec<&Model> = models.iter().collect();
    let points = robustness_sweep(
        &refs,
        &windows,
        &config.sweep.packet_size_grid,
        &config.sweep.iat_grid,
        config.perturb_mode(),
        &classes,
        &schema,
    )?;
    let path = config.output_dir.join("curves.csv");
    write_curves_csv(&path, &points, &classes)?;
    write_manifest(config, "sweep")?;
    println!("sweep: {} points -> {}", points.len(), path.display());
    Ok(())
}

fn cmd_report(config: &RunConfig) -> Result<()> {
    let dir = &config.output_dir;
    // collect per-model mean per-class F1 from existing metrics files only
    let mut models: Vec<(String, Vec<(String, f64)>, f64)> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(model) = name
            .strip_prefix("metrics_")
            .and_then(|s| s.strip_suffix(".csv"))
        else {
            continue;
        };
        let model = model.strip_prefix("eval_").unwrap_or(model).to_string();
        let mut reader = csv::Reader::from_path(&path)?;
        let mut per_class: Vec<(String, Vec<f64>)> = Vec::new();
        let mut weighted: Vec<f64> = Vec::new();
        for row in reader.records() {
            let row = row?;
            let run = row.get(0).unwrap_or("");
            let class = row.get(1).unwrap_or("");
            let f1: f64 = row.get(4).unwrap_or("").parse().unwrap_or(f64::NAN);
            if run.parse::<usize>().is_err() {
                continue; // aggregate rows
            }
            if class == "weighted" {
                weighted.push(f1);
            } else {
                match per_class.iter_mut().find(|(c, _)| c == class) {
                    Some((_, v)) => v.push(f1),
                    None => per_class.push((class.to_string(), vec![f1])),
                }
            }
        }
        if weighted.is_empty() {
            continue;
        }
        let class_means: Vec<(String, f64)> = per_class
            .into_iter()
            .map(|(c, v)| (c, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        let weighted_mean = weighted.iter().sum::<f64>() / weighted.len() as f64;
        models.push((model.to_string(), class_means, weighted_mean));
    }
    if models.is_empty() {
        return Err(Error::EmptyInput("no metrics_*.csv files in the output directory"));
    }
    models.sort_by(|a, b| a.0.cmp(&b.0));

    let classes: Vec<String> = models[0].1.iter().map(|(c, _)| c.clone()).collect();
    let mut out = String::from("class");
    for (name, _, _) in &models {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for class in &classes {
        out.push_str(class);
        for (_, per_class, _) in &models {
            let f1 = per_class
                .iter()
                .find(|(c, _)| c == class)
                .map(|(_, f)| *f)
                .unwrap_or(f64::NAN);
            out.push_str(&format!(",{f1}"));
        }
        out.push('\n');
    }
    out.push_str("weighted");
    for (_, _, weighted) in &models {
        out.push_str(&format!(",{weighted}"));
    }
    out.push('\n');

    let path = dir.join("summary.csv");
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    let curves = dir.join("curves.csv");
    if curves.exists() {
        println!("curves at {}", curves.display());
    }
    println!("report: {} models -> {}", models.len(), path.display());
    Ok(())
}

/// One row per (run, class) plus a weighted summary row per run; optional
/// mean/std aggregate rows at the end.
fn write_metrics_csv(
    path: &Path,
    rows: &[(String, Metrics)],
    classes: &ClassTable,
    aggregate: Option<(f64, f64)>,
) -> Result<()> {
    let mut out = String::from("run,class,precision,recall,f1,support\n");
    for (run, metrics) in rows {
        for (c, score) in metrics.per_class.iter().enumerate() {
            out.push_str(&format!(
                "{run},{},{},{},{},{}\n",
                classes.name(c),
                score.precision,
                score.recall,
                score.f1,
                score.support
            ));
        }
        let total: u64 = metrics.per_class.iter().map(|s| s.support).sum();
        out.push_str(&format!(
            "{run},weighted,,,{},{total}\n",
            metrics.weighted_f1
        ));
    }
    if let Some((mean, std)) = aggregate {
        out.push_str(&format!("mean,weighted,,,{mean},\n"));
        out.push_str(&format!("std,weighted,,,{std},\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,val_weighted_f1\n");
    for e in &history.epochs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.train_loss, e.val_loss, e.val_weighted_f1
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_curves_csv(
    path: &Path,
    points: &[crate::adversarial::SweepPoint],
    classes: &ClassTable,
) -> Result<()> {
    let mut out = String::from("model,perturbation_kind,magnitude,weighted_f1");
    for name in classes.class_names() {
        out.push_str(&format!(",f1_{name}"));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}",
            p.model,
            p.kind.name(),
            p.magnitude,
            p.weighted_f1
        ));
        for f1 in &p.per_class_f1 {
            out.push_str(&format!(",{f1}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
