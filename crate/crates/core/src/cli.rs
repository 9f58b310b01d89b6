//! The `ggan` command line: `freqs`, `select`, `train`, `eval`, `generate`.
//!
//! Exit codes are a stable contract:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error |
//! | 2 | unreadable or malformed input |
//! | 3 | data mismatch (SNP sets do not line up) |
//! | 4 | invalid configuration |
//! | 5 | numeric failure during training |
//! | 6 | artifact mismatch (checkpoint vs. test data) |
//!
//! Every command writes a run manifest before any other output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError, EvalSet, ReportSizes};
use crate::model::{discriminate, sample_synthetic, synthetic_matrix, ModelError};
use crate::nn::{Mode, NnError};
use crate::snp::{
    afd, allele_frequencies, parse_genotype_matrix, parse_genotype_matrix_auto, select_snps_by_afd,
    select_snps_from_universe, split_train_test, write_genotype_csv, AlleleFrequencyTable, GenotypeMatrix, Label,
    SnpError, SnpSubset, SubsetProvenance,
};
use crate::trainer::{self, TrainConfig, TrainError, TrainState, TrainingData};

/// Environment variable consulted for a seed when no flag gives one.
pub const SEED_ENV: &str = "GGAN_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Artifact(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Config(_) => 4,
            CliError::Numeric(_) => 5,
            CliError::Artifact(_) => 6,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

impl From<SnpError> for CliError {
    fn from(e: SnpError) -> Self {
        let msg = e.to_string();
        match e {
            SnpError::UnknownSnps(_) | SnpError::SnpMismatch(..) | SnpError::NoObservedGenotypes(_) => {
                CliError::Mismatch(msg)
            }
            SnpError::InvalidThreshold(_) | SnpError::InvalidFraction(_) => CliError::Usage(msg),
            _ => CliError::Parse(msg),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::InvalidConfig(_) => CliError::Config(msg),
            TrainError::NonFinite { .. } => CliError::Numeric(msg),
            TrainError::Snp(s) => s.into(),
            TrainError::MissingLabels => CliError::Parse(msg),
            TrainError::EmptyLabeled | TrainError::EmptyUnlabeled => CliError::Mismatch(msg),
            TrainError::Model(ModelError::InvalidSize(_)) => CliError::Config(msg),
            TrainError::Model(_) | TrainError::Nn(_) => CliError::Numeric(msg),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let msg = e.to_string();
        match e {
            EvalError::Snp(s) => s.into(),
            EvalError::SnpCount { .. } => CliError::Artifact(msg),
            EvalError::EmptyTestSet(_) | EvalError::MissingLabels | EvalError::Io(_) => CliError::Parse(msg),
            EvalError::Model(_) | EvalError::Nn(_) => CliError::Numeric(msg),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Parse(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "ggan", version, about = "Semi-supervised GAN for SNP genotype profiles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-SNP allele frequencies of both cohorts and their AFD.
    Freqs(FreqsArgs),
    /// Choose a SNP subset by AFD threshold or explicit list.
    Select(SelectArgs),
    /// Train a model and write checkpoint, history and held-out test sets.
    Train(TrainArgs),
    /// Score a checkpoint with the T1/T2 procedures.
    Eval(EvalArgs),
    /// Sample synthetic genotype profiles from a checkpoint.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct FreqsArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Output of `ggan freqs`.
    #[arg(long)]
    pub freqs: PathBuf,
    /// Keep SNPs whose AFD is strictly below this value.
    #[arg(long, conflicts_with = "list", required_unless_present = "list")]
    pub threshold: Option<f64>,
    /// File with one SNP id per line.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Subset file; a JSON sidecar with provenance is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub labeled: PathBuf,
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub subset: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub labeled_test: PathBuf,
    #[arg(long, required_unless_present = "t2_only")]
    pub unlabeled_test: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Decision log path; defaults to the report path with a `.decisions.csv` suffix.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    /// Run only the gated procedure; the report omits T1.
    #[arg(long)]
    pub t2_only: bool,
    /// Synthetic profiles mixed into T1's realness population
    /// (default: as many as unlabeled test profiles).
    #[arg(long, conflicts_with = "real_only")]
    pub synthetic_count: Option<usize>,
    /// Score the realness head on real profiles only.
    #[arg(long)]
    pub real_only: bool,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Snap values to {0, 0.5, 1} and write genotype tokens.
    #[arg(long)]
    pub quantize: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Provenance of one invocation. Paths are recorded exactly as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub inputs: Vec<String>,
    pub output: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix_secs: u64,
}

impl RunManifest {
    fn new(command: &str, config: Option<&Path>, inputs: &[&Path], output: &Path, seed: Option<u64>) -> Self {
        let shown = |p: &Path| p.display().to_string();
        Self {
            command: command.to_string(),
            config_path: config.map(shown),
            inputs: inputs.iter().map(|p| shown(p)).collect(),
            output: shown(output),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Freqs(a) => cmd_freqs(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Generate(a) => cmd_generate(&a),
    }
}

/// Sibling path with `suffix` appended to the full file name.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Parse(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn read_matrix(path: &Path, labels: Option<bool>) -> Result<GenotypeMatrix> {
    let reader = open(path)?;
    let parsed = match labels {
        Some(has) => parse_genotype_matrix(reader, has),
        None => parse_genotype_matrix_auto(reader),
    };
    parsed.map_err(|e| match CliError::from(e) {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// `freqs` output document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqsReport {
    pub labeled: AlleleFrequencyTable,
    pub unlabeled: AlleleFrequencyTable,
    pub afd: IndexMap<String, f64>,
}

fn cmd_freqs(a: &FreqsArgs) -> Result<()> {
    RunManifest::new("freqs", None, &[&a.labeled, &a.unlabeled], &a.out, None)
        .write(&with_suffix(&a.out, ".manifest.json"))?;
    let labeled = read_matrix(&a.labeled, None)?;
    let unlabeled = read_matrix(&a.unlabeled, None)?;
    let shared: Vec<String> = labeled
        .snp_ids()
        .iter()
        .filter(|id| unlabeled.snp_index(id).is_some())
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(CliError::Mismatch("the two cohorts share no SNP columns".into()));
    }
    let lf = allele_frequencies(&labeled.select_snps(&shared)?)?;
    let uf = allele_frequencies(&unlabeled.select_snps(&shared)?)?;
    let afd = afd(&lf, &uf)?;
    write_json(
        &a.out,
        &FreqsReport {
            labeled: lf,
            unlabeled: uf,
            afd,
        },
    )?;
    println!("{} shared SNPs", shared.len());
    Ok(())
}

fn read_freqs(path: &Path) -> Result<FreqsReport> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    SnpSubset::read_ids(open(path)?).map_err(|e| io_err(path, e))
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    let mut inputs = vec![a.freqs.as_path()];
    inputs.extend(a.list.as_deref());
    RunManifest::new("select", None, &inputs, &a.out, None).write(&with_suffix(&a.out, ".manifest.json"))?;
    let freqs = read_freqs(&a.freqs)?;
    let subset = match (a.threshold, &a.list) {
        (Some(t), None) => select_snps_by_afd(&freqs.afd, t)?,
        (None, Some(list)) => {
            let universe: Vec<String> = freqs.afd.keys().cloned().collect();
            let mut s = select_snps_from_universe(&universe, &read_id_list(list)?)?;
            s.afd_values = Some(s.snp_ids.iter().map(|id| (id.clone(), freqs.afd[id])).collect());
            s
        }
        _ => return Err(CliError::Usage("give exactly one of --threshold and --list".into())),
    };
    if let Some(w) = subset.warning() {
        eprintln!("warning: {w}");
    }
    let mut w = create(&a.out)?;
    subset
        .write_ids(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&a.out, e))?;
    write_json(&with_suffix(&a.out, ".json"), &subset)?;
    println!("{} SNPs selected", subset.len());
    Ok(())
}

/// Reads a subset file, taking provenance from its JSON sidecar when present.
pub fn read_subset(path: &Path) -> Result<SnpSubset> {
    let ids = read_id_list(path)?;
    let sidecar = with_suffix(path, ".json");
    if sidecar.exists() {
        let subset: SnpSubset =
            serde_json::from_reader(open(&sidecar)?).map_err(|e| CliError::Parse(format!("{}: {e}", sidecar.display())))?;
        if subset.snp_ids != ids {
            return Err(CliError::Mismatch(format!(
                "{} disagrees with its sidecar {}",
                path.display(),
                sidecar.display()
            )));
        }
        return Ok(subset);
    }
    let mut subset = select_snps_from_universe(&ids, &ids)?;
    subset.provenance = SubsetProvenance::ExplicitList;
    Ok(subset)
}

fn read_config(path: &Path) -> Result<(TrainConfig, bool)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let has_seed = value.get("seed").is_some();
    let config = serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((config, has_seed))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (mut config, config_has_seed) = read_config(&a.config)?;
    config.seed = match (a.seed, config_has_seed) {
        (Some(s), _) => s,
        (None, true) => config.seed,
        (None, false) => env_seed()?.unwrap_or(config.seed),
    };
    config.validate()?;
    std::fs::create_dir_all(&a.outdir).map_err(|e| io_err(&a.outdir, e))?;
    RunManifest::new(
        "train",
        Some(&a.config),
        &[&a.labeled, &a.unlabeled, &a.subset],
        &a.outdir,
        Some(config.seed),
    )
    .write(&a.outdir.join("manifest.json"))?;

    let labeled = read_matrix(&a.labeled, Some(true))?;
    let unlabeled = read_matrix(&a.unlabeled, None)?;
    let subset = read_subset(&a.subset)?;
    let labeled = labeled.select_snps(&subset.snp_ids)?;
    let unlabeled = unlabeled.select_snps(&subset.snp_ids)?;
    let (labeled_train, labeled_test) = split_train_test(&labeled, config.test_fraction, config.seed)?;
    let (unlabeled_rest, unlabeled_test) =
        split_train_test(&unlabeled, config.test_fraction, config.seed.wrapping_add(1))?;
    let unlabeled_train = if config.holdout_unlabeled { &unlabeled_rest } else { &unlabeled };

    let data = TrainingData::new(&labeled_train, unlabeled_train, &subset, config.missing_policy)?;
    let mut state = TrainState::new(config.clone(), subset)?;
    let history_path = a.outdir.join("history.jsonl");
    let mut history = create(&history_path)?;
    let mut write_err = None;
    let outcome = state.run_epochs(&data, config.epochs, |r| {
        if write_err.is_none() {
            let line = serde_json::to_string(r).expect("epoch record serializes");
            if let Err(e) = writeln!(history, "{line}") {
                write_err = Some(e);
            }
        }
    });
    history.flush().map_err(|e| io_err(&history_path, e))?;
    if let Some(e) = write_err {
        return Err(io_err(&history_path, e));
    }
    outcome?;

    let ckpt = a.outdir.join("checkpoint.bin");
    trainer::save_checkpoint(&state, &ckpt).map_err(|e| CliError::Parse(format!("{}: {e}", ckpt.display())))?;
    for (name, m) in [("labeled_test.csv", &labeled_test), ("unlabeled_test.csv", &unlabeled_test)] {
        let path = a.outdir.join(name);
        let mut w = create(&path)?;
        write_genotype_csv(&mut w, m)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
    }
    let last = state.history.last().expect("at least one epoch");
    println!(
        "epoch {}: L_sup={:.6} L_unsup={:.6} L_gen={:.6}",
        last.epoch, last.l_sup, last.l_unsup, last.l_gen
    );
    Ok(())
}

fn load_state(path: &Path) -> Result<TrainState> {
    trainer::load_checkpoint(path).map_err(|e| match e {
        NnError::Io(io) => io_err(path, io),
        other => CliError::Artifact(format!("{}: {other}", path.display())),
    })
}

/// Restricts a test cohort to the checkpoint's SNPs; the SNP sets must be equal.
fn align_test_set(m: &GenotypeMatrix, subset: &SnpSubset, path: &Path) -> Result<GenotypeMatrix> {
    let mut have: Vec<&String> = m.snp_ids().iter().collect();
    let mut want: Vec<&String> = subset.snp_ids.iter().collect();
    have.sort();
    want.sort();
    if have != want {
        return Err(CliError::Artifact(format!(
            "{} has {} SNPs that do not match the checkpoint's {}-SNP subset",
            path.display(),
            m.n_snps(),
            subset.len()
        )));
    }
    Ok(m.select_snps(&subset.snp_ids)?)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let decisions_path = a
        .decisions
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".decisions.csv"));
    let mut inputs = vec![a.checkpoint.as_path(), a.labeled_test.as_path()];
    inputs.extend(a.unlabeled_test.as_deref().filter(|_| !a.t2_only));
    let flag_seed = match a.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    RunManifest::new("eval", None, &inputs, &a.out, flag_seed).write(&with_suffix(&a.out, ".manifest.json"))?;

    let state = load_state(&a.checkpoint)?;
    let seed = flag_seed.unwrap_or(state.config.seed);
    let policy = state.config.missing_policy;
    let subset = &state.subset;
    let labeled = read_matrix(&a.labeled_test, Some(true))?;
    let labeled = EvalSet::from_matrix(&align_test_set(&labeled, subset, &a.labeled_test)?, subset, policy)?;

    let t2 = eval::t2_evaluate(&state.model, &labeled)?;
    let mut decisions = t2.decisions;
    let mut sizes = ReportSizes {
        labeled_test: labeled.len(),
        unlabeled_test: None,
        synthetic: None,
    };
    let t1 = match (&a.unlabeled_test, a.t2_only) {
        (Some(path), false) => {
            let m = read_matrix(path, None)?;
            let unlabeled = EvalSet::from_matrix(&align_test_set(&m, subset, path)?, subset, policy)?;
            let count = if a.real_only {
                0
            } else {
                a.synthetic_count.unwrap_or(unlabeled.len())
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t1 = eval::t1_evaluate(&state.model, &labeled, &unlabeled, count, state.config.noise, &mut rng)?;
            sizes.unlabeled_test = Some(unlabeled.len());
            sizes.synthetic = Some(count);
            // Labeled rows are already logged from T2.
            decisions.extend(t1.decisions.into_iter().skip(labeled.len()));
            Some(t1.result)
        }
        _ => None,
    };
    let model_id = a.model_id.clone().unwrap_or_else(|| {
        a.checkpoint
            .file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    });
    let report = eval::make_report(model_id, t1, t2.result, sizes, seed, subset.provenance.clone());
    write_json(&a.out, &report)?;
    let mut w = create(&decisions_path)?;
    eval::write_decision_log(&mut w, &decisions)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&decisions_path, e))?;
    if let Some(t1) = report.t1 {
        println!("T1 acc_labeled={:.4} acc_unlabeled={:.4}", t1.acc_labeled, t1.acc_unlabeled);
    }
    let acc2 = report.t2.acc2.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "T2 acc1={:.4} acc2={acc2} passed={}/{}",
        report.t2.acc1, report.t2.n_passed, report.sizes.labeled_test
    );
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let flag_seed = match a.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    RunManifest::new("generate", None, &[&a.checkpoint], &a.out, flag_seed)
        .write(&with_suffix(&a.out, ".manifest.json"))?;
    let state = load_state(&a.checkpoint)?;
    let seed = flag_seed.unwrap_or(state.config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = &state.model;
    let mut profiles = sample_synthetic(model, a.count, state.config.noise, &mut rng)
        .map_err(|e| CliError::Numeric(e.to_string()))?
        .clipped;
    if a.quantize {
        profiles = profiles.map(crate::model::quantize);
    }
    let heads = discriminate(model, &profiles, Mode::Infer).map_err(|e| CliError::Numeric(e.to_string()))?;
    let labels: Vec<Label> = heads
        .label
        .argmax_rows()
        .into_iter()
        .map(|i| Label::from_index(i).expect("two label classes"))
        .collect();
    let mut w = create(&a.out)?;
    let written = if a.quantize {
        let m = synthetic_matrix(&profiles, &state.subset.snp_ids, Some(labels))
            .map_err(|e: ModelError| CliError::Numeric(e.to_string()))?;
        write_genotype_csv(&mut w, &m)
    } else {
        write_continuous_csv(&mut w, &profiles, &state.subset.snp_ids, &labels)
    };
    written.and_then(|_| w.flush()).map_err(|e| io_err(&a.out, e))?;
    println!("{} synthetic profiles written", a.count);
    Ok(())
}

/// Same layout as the genotype CSV but with raw encoded values in [0, 1].
fn write_continuous_csv<W: Write>(
    mut w: W,
    profiles: &crate::nn::Tensor,
    snp_ids: &[String],
    labels: &[Label],
) -> std::io::Result<()> {
    writeln!(w, "sample_id,{},label", snp_ids.join(","))?;
    for (k, label) in labels.iter().enumerate() {
        write!(w, "synthetic_{k}")?;
        for v in profiles.row(k) {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{label}")?;
    }
    Ok(())
}
