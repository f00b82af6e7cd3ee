//! The `bcascade` command-line tool.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
//! 3 training diverged. Results go to stdout; progress and diagnostics go to
//! stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cascade::{build_cascade, train_cascade, Checkpoint};
use crate::checks::{gradcheck_suite, GradCheckCase, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use crate::config::ExperimentConfig;
use crate::data::{
    chestxray14_class_names, class_stats, generate, read_csv_path, read_findings_metadata_path, write_csv_path, Split,
    SynthSpec, DEFAULT_FINDINGS_COLUMN, DEFAULT_ID_COLUMN,
};
use crate::experiments::{XOR_EXPERIMENT, XOR_SPEC};
use crate::metrics::{build_report_with, LevelBreakdown};
use crate::par::Exec;
use crate::sampling::rank_by_difficulty;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bcascade", version, about = "Boosted cascade multi-label classifier")]
pub struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-label dataset and print its class statistics.
    Generate(GenerateArgs),
    /// Train a cascade and write a checkpoint plus per-level training logs.
    Train(TrainArgs),
    /// Evaluate a checkpoint: per-class AUC, macro average and per-level breakdown.
    Eval(EvalArgs),
    /// Check backprop gradients against central differences on random networks.
    Gradcheck(GradcheckArgs),
    /// Print a complete experiment configuration with every default filled in.
    InitConfig(InitConfigArgs),
    /// Print class statistics of a findings metadata CSV.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset recipe (JSON). Defaults to the bundled exclusive-or recipe.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory receiving train.csv and test.csv.
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
    /// Overrides the recipe's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment configuration (JSON). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration leaf, e.g. --set train.epochs=5. Repeatable;
    /// values are parsed as JSON and fall back to plain strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint to evaluate [default: paths.checkpoint from the configuration]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Labelled dataset CSV [default: paths.test_data from the configuration]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for the report files [default: paths.report_dir from the configuration]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random architectures per loss family.
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Perturb the loss gradient fed to backprop; every case should then fail.
    #[arg(long)]
    pub corrupt: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Library defaults.
    Default,
    /// The bundled exclusive-or experiment.
    Xor,
}

#[derive(Debug, Args)]
pub struct InitConfigArgs {
    #[arg(long, value_enum, default_value = "default")]
    pub preset: Preset,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Metadata CSV with an image identifier and a '|'-separated findings column.
    #[arg(long)]
    pub metadata: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a, exec),
        Command::Eval(a) => cmd_eval(&a, exec),
        Command::Gradcheck(a) => cmd_gradcheck(&a, exec),
        Command::InitConfig(a) => cmd_init_config(&a),
        Command::Stats(a) => cmd_stats(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => SynthSpec::from_json(XOR_SPEC)?,
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (train, test) = generate(&spec)?;
    create_dir(&a.out_dir)?;
    let train_path = a.out_dir.join("train.csv");
    let test_path = a.out_dir.join("test.csv");
    write_csv_path(&train, &train_path)?;
    write_csv_path(&test, &test_path)?;
    log::info!(
        "wrote {} ({} rows) and {} ({} rows)",
        train_path.display(),
        train.len(),
        test_path.display(),
        test.len()
    );
    print!("{}", train.stats().render(train.class_names()));
    Ok(EXIT_OK)
}

fn cmd_train(a: &TrainArgs, exec: Exec) -> Result<i32> {
    let cfg = ExperimentConfig::load(a.config.config.as_deref(), &a.config.overrides)?;
    let train = read_csv_path(&cfg.paths.train_data, Split::Train)?;
    if let Some(c) = cfg.model.num_classes.filter(|&c| c != train.num_classes()) {
        return Err(Error::Dimension(format!(
            "configuration expects {c} classes, training data has {}",
            train.num_classes()
        )));
    }
    let m = &cfg.model;
    let mut model = build_cascade(
        train.num_classes(),
        train.feature_dim(),
        m.num_levels,
        m.hidden_dim,
        m.include_base_features,
        m.dropout,
        cfg.train.seed,
    )?;
    let log = train_cascade(&mut model, &train, &cfg.train, exec)?;

    let checkpoint = Checkpoint::new(model, cfg.train.clone(), train.class_names().to_vec());
    write_atomic(&cfg.paths.checkpoint, checkpoint.to_json()?.as_bytes())?;
    create_dir(&cfg.paths.log_dir)?;
    for level in &log.levels {
        let path = cfg.paths.log_dir.join(format!("level_{}.csv", level.level));
        level.write_csv(train.class_names(), create_file(&path)?)?;
        if let Some(rate) = level.decay_rate {
            let ranking = rank_by_difficulty(&log.levels[level.level - 1].per_example_losses, rate)?;
            let path = cfg.paths.log_dir.join(format!("ranking_level_{}.csv", level.level));
            ranking.write_csv(create_file(&path)?)?;
        }
    }
    log::info!("checkpoint written to {}", cfg.paths.checkpoint.display());
    println!("final_train_loss {}", log.final_train_loss());
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs, exec: Exec) -> Result<i32> {
    let cfg = ExperimentConfig::load(a.config.config.as_deref(), &a.config.overrides)?;
    let ck_path = a.checkpoint.clone().unwrap_or(cfg.paths.checkpoint);
    let data_path = a.data.clone().unwrap_or(cfg.paths.test_data);
    let out_dir = a.out_dir.clone().unwrap_or(cfg.paths.report_dir);

    let ck = Checkpoint::from_json(&fs::read_to_string(&ck_path).map_err(|e| Error::io(&ck_path, e))?)?;
    let data = read_csv_path(&data_path, Split::Test)?;
    let model = &ck.model;
    if data.num_classes() != model.num_classes || data.feature_dim() != model.base_feature_dim {
        return Err(Error::Dimension(format!(
            "data has {} classes / {} features, checkpoint expects {} / {}",
            data.num_classes(),
            data.feature_dim(),
            model.num_classes,
            model.base_feature_dim
        )));
    }
    let names = match cfg.eval.class_names {
        Some(n) if n.len() != model.num_classes => {
            return Err(Error::Dimension(format!("{} eval class names for {} classes", n.len(), model.num_classes)));
        }
        Some(n) => n,
        None => ck.class_names.clone(),
    };
    if data.class_names() != ck.class_names.as_slice() {
        log::warn!("data header class names differ from the checkpoint's; reporting with {names:?}");
    }

    let pred = model.predict_with(data.features(), exec)?;
    let report = build_report_with(&pred.ensemble, data.labels(), &names, exec)?;
    let mut rows = Vec::with_capacity(pred.per_level.len() + 1);
    for (l, p) in pred.per_level.iter().enumerate() {
        rows.push((format!("level_{l}"), build_report_with(p, data.labels(), &names, exec)?));
    }
    rows.push(("ensemble".to_string(), report.clone()));
    let breakdown = LevelBreakdown { class_names: names, rows };

    create_dir(&out_dir)?;
    report.write_csv(create_file(&out_dir.join("report.csv"))?)?;
    let text = report.render_text();
    write_atomic(&out_dir.join("report.txt"), text.as_bytes())?;
    write_atomic(&out_dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    breakdown.write_csv(create_file(&out_dir.join("levels.csv"))?)?;
    write_atomic(&out_dir.join("levels.txt"), breakdown.render_text().as_bytes())?;
    print!("{text}");
    log::info!("reports written to {}", out_dir.display());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: &GradcheckArgs, exec: Exec) -> Result<i32> {
    let cases = gradcheck_suite(a.seed, a.draws, a.epsilon, a.tolerance, a.corrupt, exec)?;
    for c in &cases {
        println!("{}", c.summary());
    }
    let failed: Vec<&GradCheckCase> = cases.iter().filter(|c| !c.passed()).collect();
    println!("passed {}/{} (tolerance {:e})", cases.len() - failed.len(), cases.len(), a.tolerance);
    if let Some(worst) = failed.iter().max_by(|x, y| x.report.max_rel_error.total_cmp(&y.report.max_rel_error)) {
        println!(
            "worst: draw {} {} {} analytic {:e} numeric {:e} rel_err {:e}",
            worst.draw,
            worst.family,
            worst.report.worst,
            worst.report.analytic,
            worst.report.numeric,
            worst.report.max_rel_error
        );
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn cmd_init_config(a: &InitConfigArgs) -> Result<i32> {
    let cfg = match a.preset {
        Preset::Default => ExperimentConfig::default(),
        Preset::Xor => ExperimentConfig::from_json(XOR_EXPERIMENT, &[])?,
    };
    let text = cfg.to_json_pretty()? + "\n";
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn cmd_stats(a: &StatsArgs) -> Result<i32> {
    let names = chestxray14_class_names();
    let meta = read_findings_metadata_path(&a.metadata, &names)?;
    log::info!("{} images, columns {DEFAULT_ID_COLUMN:?} / {DEFAULT_FINDINGS_COLUMN:?}", meta.image_ids.len());
    print!("{}", class_stats(&meta.labels).render(&meta.class_names));
    Ok(EXIT_OK)
}
