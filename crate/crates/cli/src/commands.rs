use std::fs;
use std::path::{Path, PathBuf};

use fednoniid_core::data::{load_shards, write_shards_annotated};
use fednoniid_core::fedsim::{round_logs_csv, run_federated, RunRecord};
use fednoniid_core::grid::{
    render, run_nei_table, run_nodes_table, run_quality_table, run_rounds_table, write_table, Axis,
    Format, ResultTable,
};
use fednoniid_core::nei::{build_encoder, nei_report, train_autoencoder, Encoder};
use fednoniid_core::partition::{inject_quality, partition};
use fednoniid_core::Dataset;
use serde::Serialize;

use crate::config::RunConfig;
use crate::datasets::{fetch, load_train_test};
use crate::{CliError, Command};

pub const ROUND_LOG_FILE: &str = "round_log.csv";
pub const RUN_RECORD_FILE: &str = "run.json";
pub const NEI_REPORT_FILE: &str = "nei_report.json";

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Fetch(a) => cmd_fetch(&a.load()?),
        Command::Partition(a) => cmd_partition(&a.load()?),
        Command::Nei(a) => cmd_nei(&a.load()?),
        Command::Train(a) => cmd_train(&a.load()?),
        Command::Grid(a) => cmd_grid(&a.load()?, a.format),
        Command::Report(a) => cmd_report(&a.common.load()?, a.input.as_deref(), a.common.format),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::runtime(format!("creating {}: {e}", parent.display())))?;
    }
    fs::write(path, body).map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    write_file(path, &text)
}

pub fn cmd_fetch(cfg: &RunConfig) -> Result<(), CliError> {
    for (path, sha) in fetch(cfg)? {
        println!("{}  sha256 {sha}", path.display());
    }
    Ok(())
}

pub fn cmd_partition(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, _) = load_train_test(cfg)?;
    let spec = cfg.partition_spec();
    println!(
        "partitioning {} {} samples into {} shards ({} shift)",
        train.len(),
        train.name(),
        spec.node_num,
        spec.split_mode.name()
    );
    let mut shards = partition(&train, &spec)?;
    if let Some(q) = cfg.quality_spec() {
        shards = inject_quality(&shards, &train, q, cfg.seed)?;
    }
    let dir = cfg.shards_dir();
    write_shards_annotated(
        &shards,
        &train,
        &dir,
        &spec,
        cfg.quality_spec(),
        Some(cfg.to_value()),
    )?;
    for s in &shards {
        println!("index {} saved", s.node_id);
    }
    println!("saved file succeed !");
    Ok(())
}

fn trained_encoder(cfg: &RunConfig, train: &Dataset) -> Result<Encoder, CliError> {
    let n = cfg.nei.train_samples.min(train.len());
    println!(
        "training encoder on {n} samples for {} epochs",
        cfg.nei.epochs
    );
    let enc = build_encoder(train.dims(), cfg.seed)?;
    Ok(train_autoencoder(
        enc,
        &train.head(n),
        cfg.nei.hyper(),
        cfg.seed,
    )?)
}

pub fn cmd_nei(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, test) = load_train_test(cfg)?;
    let (shards, _) = load_shards(&cfg.shards_dir())?;
    let enc = trained_encoder(cfg, &train)?;
    let mut report = nei_report(&enc, &shards, &test, None)?;
    report.spec = Some(cfg.to_value());
    let path = cfg.out_dir().join(NEI_REPORT_FILE);
    write_json(&path, &report)?;
    for (class, v) in &report.per_class {
        println!("class {class}: NEI {v:.6}");
    }
    println!("aggregate NEI {:.6}", report.aggregate);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, test) = load_train_test(cfg)?;
    let (shards, _) = load_shards(&cfg.shards_dir())?;
    let fed = cfg.fed_config();
    let run = run_federated(&shards, &test, &fed)?;
    for log in &run.logs {
        if let Some(m) = log.metrics {
            println!(
                "round {}: accuracy {:.4} precision {:.4} recall {:.4}",
                log.round, m.accuracy, m.precision, m.recall
            );
        }
    }
    let out = cfg.out_dir();
    write_file(&out.join(ROUND_LOG_FILE), &round_logs_csv(&run.logs))?;
    let record = RunRecord {
        config: fed,
        param_count: run.model.param_count(),
        initial: run.initial,
        logs: run.logs,
        run_config: Some(cfg.to_value()),
    };
    write_json(&out.join(RUN_RECORD_FILE), &record)?;
    println!("wrote {}", out.join(ROUND_LOG_FILE).display());
    Ok(())
}

pub fn cmd_grid(cfg: &RunConfig, format: Format) -> Result<(), CliError> {
    let g = cfg
        .grid
        .as_ref()
        .ok_or_else(|| CliError::usage("config has no grid block"))?;
    let spec = cfg.grid_spec(g);
    let (train, test) = load_train_test(cfg)?;
    let mut table = match spec.axis {
        Axis::Nodes => run_nodes_table(&spec, &train, &test)?,
        Axis::Rounds => run_rounds_table(&spec, &train, &test)?,
        Axis::Quality => run_quality_table(&spec, &train, &test)?,
        Axis::Nei => {
            let enc = trained_encoder(cfg, &train)?;
            run_nei_table(&spec, &enc, &train, &test)?
        }
    };
    table.meta.run_config = Some(cfg.to_value());
    let files = write_table(&table, &cfg.out_dir())?;
    print!("{}", render(&table, format));
    println!("wrote {}", files.csv.display());
    Ok(())
}

fn table_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::data(format!("reading {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            ["nodes_", "rounds_", "quality_", "nei_"]
                .iter()
                .any(|a| stem.starts_with(a))
                && stem != "nei_report"
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_table(path: &Path) -> Result<ResultTable, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: not a result table: {e}", path.display())))
}

pub fn cmd_report(cfg: &RunConfig, input: Option<&Path>, format: Format) -> Result<(), CliError> {
    let files = match input {
        Some(p) => vec![p.to_path_buf()],
        None => table_files(&cfg.out_dir())?,
    };
    if files.is_empty() {
        return Err(CliError::data(format!(
            "no result tables in {}",
            cfg.out_dir().display()
        )));
    }
    for (i, path) in files.iter().enumerate() {
        if i > 0 {
            println!();
        }
        print!("{}", render(&read_table(path)?, format));
    }
    Ok(())
}
