//! Batch command-line front end: `synth`, `train`, `compare` and `ablate`.
//!
//! Every run writes its tables into the output directory together with a
//! JSON manifest. Each table starts with a `# manifest sha256=<hash>` line
//! naming the manifest that produced it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::baselines::{run_comparison, ComparisonRow, Method};
use crate::data::{load_csv, normalize_split, synth_generate, write_csv, Dataset, SynthConfig, Task};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg::{mean, std_dev};
use crate::train::{train_slm, SelectionReport, SplitMetrics, StepLog, TrainConfig};

/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "SLM_OUTPUT_DIR";

/// Train/validation/test fractions used for every dataset.
pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);

#[derive(Debug, Parser)]
#[command(name = "slm", version, about = "Feature selection with sparse learnable masks")]
pub struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = "slm-out")]
    pub out_dir: PathBuf,
    /// Worker threads for seed sweeps (defaults to the available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark as CSV.
    Synth(SynthArgs),
    /// Train SLM and write the selection report.
    Train(TrainArgs),
    /// Compare SLM with the filter baselines at one or more feature counts.
    Compare(CompareArgs),
    /// Run the MI on/off by tempering on/off grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Features per salient block.
    #[arg(long = "L", default_value_t = 10)]
    pub group_size: usize,
    #[arg(long, default_value_t = 500)]
    pub features: usize,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    /// Shuffle columns so salient blocks are not contiguous.
    #[arg(long)]
    pub permute: bool,
}

impl SynthFlags {
    pub fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            group_size: self.group_size,
            n_features: self.features,
            n_samples: self.samples,
            noise_scale: self.noise,
            seed,
            permute_columns: self.permute,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stem for the output files.
    #[arg(long, default_value = "synth")]
    pub name: String,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV dataset with a header row. Synthetic data is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Treat labels as real-valued targets.
    #[arg(long)]
    pub regression: bool,
    #[command(flatten)]
    pub synth: SynthFlags,
}

/// Training flags. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// TOML file with `TrainConfig` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target_features: Option<usize>,
    #[arg(long)]
    pub no_tempering: bool,
    #[arg(long)]
    pub no_mi: bool,
    #[arg(long)]
    pub no_rcs: bool,
    #[arg(long)]
    pub hsic: bool,
    #[arg(long)]
    pub mi_weight: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainFlags {
    /// Overwrites the fields of `cfg` that were given on the command line.
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.target_features {
            cfg.target_features = v;
        }
        if self.no_tempering {
            cfg.tempering = false;
        }
        if self.no_mi {
            cfg.mi_enabled = false;
        }
        if self.no_rcs {
            cfg.rcs_enabled = false;
        }
        if self.hsic {
            cfg.hsic_enabled = true;
        }
        if let Some(v) = self.mi_weight {
            cfg.mi_weight = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden_units = v;
        }
        if let Some(v) = self.layers {
            cfg.n_layers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

/// Parses a TOML training config. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))
}

/// Layers defaults, then the config file contents, then explicit flags.
pub fn layered_config(file: Option<&str>, flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(text) => parse_config(text)?,
        None => TrainConfig::default(),
    };
    flags.apply(&mut cfg);
    Ok(cfg)
}

/// Reads the file named by `--config`, if any, and layers the flags on top.
pub fn resolve_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let text = match &flags.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", p.display()))
        })?),
        None => None,
    };
    layered_config(text.as_deref(), flags)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "train")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Feature counts to compare at.
    #[arg(long = "k", value_delimiter = ',', default_value = "50")]
    pub ks: Vec<usize>,
    /// Methods to run (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Number of consecutive seeds starting at the training seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value = "compare")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value = "ablate")]
    pub name: String,
}

/// Case-insensitive method lookup by display name.
pub fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::all()
        .into_iter()
        .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| {
            let names: Vec<&str> = Method::all().iter().map(Method::name).collect();
            format!("unknown method '{s}' (expected one of {})", names.join(", "))
        })
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub code_version: String,
    pub duration_secs: f64,
}

impl RunManifest {
    /// Hex SHA-256 of the manifest's JSON encoding.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// The manifest file layout: the hash alongside the manifest it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub sha256: String,
    pub manifest: RunManifest,
}

impl ManifestFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// True when the stored hash matches the stored manifest.
    pub fn verify(&self) -> Result<bool> {
        Ok(self.manifest.digest()? == self.sha256)
    }
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub sha256: String,
    pub outputs: Vec<PathBuf>,
    /// Short human-readable summary for stdout.
    pub summary: String,
}

/// Failure reported as one machine-parseable line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn line(&self) -> String {
        format!("error: kind={} message={}", self.kind, one_line(&self.message))
    }

    pub fn exit_code(&self) -> i32 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { kind: e.kind(), message: e.to_string() }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        let rendered = e.render().to_string();
        let parts: Vec<&str> = rendered
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more information"))
            .map(|l| l.strip_prefix("error: ").unwrap_or(l))
            .collect();
        CliError { kind: "usage", message: parts.join("; ") }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses arguments, runs the command and prints the outcome. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::from(e);
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.summary);
            println!("manifest {}", out.manifest_path.display());
            0
        }
        Err(err) => {
            eprintln!("{}", err.line());
            err.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> std::result::Result<RunOutcome, CliError> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError { kind: "usage", message: "--jobs must be positive".into() });
    }
    let out = &cli.out_dir;
    let res = match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Compare(a) => cmd_compare(a, out, jobs),
        Command::Ablate(a) => cmd_ablate(a, out, jobs),
    };
    Ok(res?)
}

/// Collects output files and writes them with the manifest hash stamped in.
struct RunWriter {
    dir: PathBuf,
    files: Vec<(PathBuf, Option<Renderer>)>,
}

type Renderer = Box<dyn Fn(&str) -> String>;

impl RunWriter {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: String, render: impl Fn(&str) -> String + 'static) {
        self.files.push((self.dir.join(name), Some(Box::new(render))));
    }

    /// Lists a file that was already written.
    fn add_written(&mut self, path: PathBuf) {
        self.files.push((path, None));
    }

    fn finish(
        self,
        command: &str,
        name: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<String>,
        started: Instant,
        summary: String,
    ) -> Result<RunOutcome> {
        let manifest_path = self.dir.join(format!("{name}.manifest.json"));
        let outputs: Vec<PathBuf> = self.files.iter().map(|(p, _)| p.clone()).collect();
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seeds,
            inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: started.elapsed().as_secs_f64(),
        };
        let sha256 = manifest.digest()?;
        for (path, render) in &self.files {
            if let Some(render) = render {
                write_atomic(path, render(&sha256).as_bytes())?;
            }
        }
        let file = ManifestFile { sha256: sha256.clone(), manifest };
        write_atomic(&manifest_path, &serde_json::to_vec_pretty(&file)?)?;
        log::info!("wrote {} ({} outputs)", manifest_path.display(), outputs.len());
        Ok(RunOutcome { manifest_path, sha256, outputs, summary })
    }
}

/// Tab-separated table with the manifest comment line on top.
pub fn render_tsv(sha256: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("# manifest sha256={sha256}\n{}\n", header.join("\t"));
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn cmd_synth(a: &SynthArgs, out: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let cfg = a.synth.config(a.seed);
    let ds = synth_generate(&cfg)?;
    let csv_path = out.join(format!("{}.csv", a.name));
    write_csv(&ds, &csv_path)?;
    let summary = format!(
        "synthetic dataset: {} rows, {} features ({} salient) -> {}\n",
        ds.n_samples(),
        ds.n_features(),
        cfg.n_salient(),
        csv_path.display()
    );
    let mut w = RunWriter::new(out);
    w.add_written(csv_path);
    let config = serde_json::to_value(&cfg)?;
    w.finish("synth", &a.name, config, vec![a.seed], vec![], started, summary)
}

/// Loads or generates the dataset for one seed and splits it.
pub fn prepare_dataset(d: &DataArgs, seed: u64) -> Result<Dataset> {
    let raw = match &d.data {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::InvalidInput(format!(
                    "input file {} not found; pass an existing CSV with --data",
                    p.display()
                )));
            }
            let task = if d.regression { Task::Regression } else { Task::Classification };
            load_csv(p, &d.label, task)?
        }
        None => synth_generate(&d.synth.config(seed))?,
    };
    normalize_split(&raw, SPLIT_FRACTIONS, seed)
}

fn data_snapshot(d: &DataArgs) -> serde_json::Value {
    match &d.data {
        Some(p) => json!({
            "csv": p.display().to_string(),
            "label": d.label,
            "regression": d.regression,
            "split": SPLIT_FRACTIONS,
        }),
        None => json!({
            "synthetic": d.synth.config(0),
            "seeded_per_run": true,
            "split": SPLIT_FRACTIONS,
        }),
    }
}

fn inputs_of(d: &DataArgs, t: &TrainFlags) -> Vec<String> {
    d.data.iter().chain(t.config.iter()).map(|p| p.display().to_string()).collect()
}

fn metrics_rows(metrics: &std::collections::BTreeMap<String, SplitMetrics>) -> Vec<Vec<String>> {
    metrics
        .iter()
        .map(|(split, m)| {
            vec![split.clone(), m.n_samples.to_string(), cell(m.accuracy), cell(m.auc), cell(m.mae)]
        })
        .collect()
}

const LOSS_HEADER: [&str; 10] = [
    "step",
    "epoch",
    "target_count",
    "support_size",
    "learning_rate",
    "task_loss",
    "mi_error",
    "r_cs",
    "combined",
    "mi_weight",
];

fn loss_cells(s: &StepLog) -> Vec<String> {
    vec![
        s.step.to_string(),
        s.epoch.to_string(),
        s.target_count.to_string(),
        s.support_size.to_string(),
        s.learning_rate.to_string(),
        s.loss.task_loss.to_string(),
        s.loss.mi_error.to_string(),
        s.loss.r_cs.to_string(),
        s.loss.combined.to_string(),
        s.loss.mi_weight.to_string(),
    ]
}

fn cmd_train(a: &TrainArgs, out: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let cfg = resolve_config(&a.train)?;
    let ds = prepare_dataset(&a.data, cfg.seed)?;
    let report = train_slm(&ds, &cfg)?;
    let names = ds.feature_names.clone();

    let mut w = RunWriter::new(out);
    let metric_rows = metrics_rows(&report.metrics);
    w.add(format!("{}.metrics.tsv", a.name), move |h| {
        render_tsv(h, &["split", "n_samples", "accuracy", "auc", "mae"], &metric_rows)
    });
    let feature_rows = feature_table(&report, &names);
    w.add(format!("{}.features.tsv", a.name), move |h| {
        render_tsv(h, &["rank", "feature", "name", "mask_prob", "selected"], &feature_rows)
    });
    let loss_rows: Vec<Vec<String>> = report.loss_history.iter().map(loss_cells).collect();
    w.add(format!("{}.loss.tsv", a.name), move |h| render_tsv(h, &LOSS_HEADER, &loss_rows));
    let report_json = serde_json::to_string(&report)?;
    w.add(format!("{}.report.json", a.name), move |_| report_json.clone());

    let test = report.test_metrics();
    let summary = format!(
        "selected {} of {} features; test accuracy {} auc {} mae {}\n",
        report.selected.len(),
        ds.n_features(),
        cell(test.accuracy),
        cell(test.auc),
        cell(test.mae)
    );
    let config = json!({ "train": cfg, "data": data_snapshot(&a.data) });
    w.finish("train", &a.name, config, vec![cfg.seed], inputs_of(&a.data, &a.train), started, summary)
}

fn feature_table(report: &SelectionReport, names: &[String]) -> Vec<Vec<String>> {
    report
        .ranking
        .iter()
        .enumerate()
        .map(|(rank, &j)| {
            vec![
                (rank + 1).to_string(),
                j.to_string(),
                names[j].clone(),
                report.mask_probs[j].to_string(),
                report.selected.binary_search(&j).is_ok().to_string(),
            ]
        })
        .collect()
}

/// Runs `f` for every seed on up to `jobs` threads. Results keep seed order.
pub fn sweep<T, F>(seeds: &[u64], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let n = seeds.len();
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let workers: Vec<_> = (0..jobs.clamp(1, n.max(1)))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break done;
                        }
                        done.push((i, f(seeds[i])));
                    }
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("sweep worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every seed ran")).collect()
}

fn seed_list(base: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    Ok((0..count).map(|i| base + i).collect())
}

fn cmd_compare(a: &CompareArgs, out: &Path, jobs: usize) -> Result<RunOutcome> {
    let started = Instant::now();
    let cfg = resolve_config(&a.train)?;
    let methods: Vec<Method> = if a.methods.is_empty() { Method::all().to_vec() } else { a.methods.clone() };
    let seeds = seed_list(cfg.seed, a.seeds)?;
    let per_seed: Vec<Vec<ComparisonRow>> = sweep(&seeds, jobs, |seed| {
        let ds = prepare_dataset(&a.data, seed)?;
        run_comparison(&ds, &a.ks, &methods, &TrainConfig { seed, ..cfg.clone() })
    })?;

    let mut rows = Vec::new();
    for (&seed, seed_rows) in seeds.iter().zip(&per_seed) {
        for r in seed_rows {
            let test = r.test();
            let val = r.metrics.get("val").copied().unwrap_or_default();
            rows.push(vec![
                seed.to_string(),
                r.method.name().to_string(),
                r.k.to_string(),
                r.selected.len().to_string(),
                r.salient_recovered.map_or_else(|| "NA".into(), |c| c.to_string()),
                cell(test.accuracy),
                cell(test.auc),
                cell(test.mae),
                cell(val.accuracy),
                cell(val.mae),
            ]);
        }
    }
    let summary_rows = comparison_summary(&per_seed);
    let mut summary = String::new();
    for r in &summary_rows {
        let _ = writeln!(summary, "{:<12} k={:<5} test={} salient={}", r[0], r[1], r[3], r[5]);
    }

    let mut w = RunWriter::new(out);
    w.add(format!("{}.metrics.tsv", a.name), move |h| {
        render_tsv(
            h,
            &[
                "seed",
                "method",
                "k",
                "n_selected",
                "salient_recovered",
                "test_accuracy",
                "test_auc",
                "test_mae",
                "val_accuracy",
                "val_mae",
            ],
            &rows,
        )
    });
    w.add(format!("{}.summary.tsv", a.name), move |h| {
        render_tsv(
            h,
            &["method", "k", "n_seeds", "mean_test_score", "sd_test_score", "mean_salient_recovered"],
            &summary_rows,
        )
    });
    let config = json!({
        "train": cfg,
        "data": data_snapshot(&a.data),
        "k": a.ks,
        "methods": methods.iter().map(Method::name).collect::<Vec<_>>(),
    });
    w.finish("compare", &a.name, config, seeds, inputs_of(&a.data, &a.train), started, summary)
}

/// Mean and spread of the headline test score per (method, k) across seeds.
fn comparison_summary(per_seed: &[Vec<ComparisonRow>]) -> Vec<Vec<String>> {
    let Some(first) = per_seed.first() else { return Vec::new() };
    (0..first.len())
        .map(|i| {
            let scores: Vec<f64> = per_seed.iter().map(|rs| rs[i].test().headline()).collect();
            let salient: Vec<f64> = per_seed
                .iter()
                .filter_map(|rs| rs[i].salient_recovered.map(|c| c as f64))
                .collect();
            vec![
                first[i].method.name().to_string(),
                first[i].k.to_string(),
                scores.len().to_string(),
                mean(&scores).to_string(),
                std_dev(&scores).to_string(),
                if salient.is_empty() { "NA".into() } else { mean(&salient).to_string() },
            ]
        })
        .collect()
}

const ABLATION_GRID: [(bool, bool); 4] = [(true, true), (false, true), (true, false), (false, false)];

fn cmd_ablate(a: &AblateArgs, out: &Path, jobs: usize) -> Result<RunOutcome> {
    let started = Instant::now();
    let cfg = resolve_config(&a.train)?;
    let seeds = seed_list(cfg.seed, a.seeds)?;
    let per_seed: Vec<Vec<SelectionReport>> = sweep(&seeds, jobs, |seed| {
        let ds = prepare_dataset(&a.data, seed)?;
        ABLATION_GRID
            .iter()
            .map(|&(mi, temp)| {
                train_slm(&ds, &TrainConfig { mi_enabled: mi, tempering: temp, seed, ..cfg.clone() })
            })
            .collect()
    })?;

    let mut score_rows = Vec::new();
    let mut loss_rows = Vec::new();
    for (&seed, reports) in seeds.iter().zip(&per_seed) {
        for (&(mi, temp), r) in ABLATION_GRID.iter().zip(reports) {
            let test = r.test_metrics();
            score_rows.push(vec![
                mi.to_string(),
                temp.to_string(),
                seed.to_string(),
                test.headline().to_string(),
                cell(test.accuracy),
                cell(test.mae),
            ]);
            for s in &r.loss_history {
                let mut row = vec![mi.to_string(), temp.to_string(), seed.to_string()];
                row.extend(loss_cells(s));
                loss_rows.push(row);
            }
        }
    }
    let mut summary = String::new();
    let summary_rows: Vec<Vec<String>> = ABLATION_GRID
        .iter()
        .enumerate()
        .map(|(c, &(mi, temp))| {
            let scores: Vec<f64> = per_seed.iter().map(|rs| rs[c].test_metrics().headline()).collect();
            let (m, sd) = (mean(&scores), std_dev(&scores));
            let _ = writeln!(summary, "mi={mi:<5} tempering={temp:<5} mean={m:.4} sd={sd:.4}");
            vec![mi.to_string(), temp.to_string(), scores.len().to_string(), m.to_string(), sd.to_string()]
        })
        .collect();

    let mut w = RunWriter::new(out);
    w.add(format!("{}.metrics.tsv", a.name), move |h| {
        render_tsv(h, &["mi_enabled", "tempering", "seed", "test_score", "test_accuracy", "test_mae"], &score_rows)
    });
    w.add(format!("{}.summary.tsv", a.name), move |h| {
        render_tsv(h, &["mi_enabled", "tempering", "n_seeds", "mean_test_score", "sd_test_score"], &summary_rows)
    });
    let mut loss_header = vec!["mi_enabled", "tempering", "seed"];
    loss_header.extend(LOSS_HEADER);
    w.add(format!("{}.loss.tsv", a.name), move |h| render_tsv(h, &loss_header, &loss_rows));
    let config = json!({ "train": cfg, "data": data_snapshot(&a.data) });
    w.finish("ablate", &a.name, config, seeds, inputs_of(&a.data, &a.train), started, summary)
}
