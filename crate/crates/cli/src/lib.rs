//! The `dyad` command line: data generation, feature export, training, evaluation,
//! reporting, registry listing, self-test and manifest replay.
//!
//! Exit codes: 0 success, 1 domain error (message starts with the error name),
//! 2 usage error.

pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use thiserror::Error;

use dyadnet::data::{parse_dataset, split_dataset, DataError, Dataset, LabelCounts, RelationshipLabel};
use dyadnet::evaluation::{
    confusion, format_predictions, merge_confusion, merge_predictions, parse_predictions,
    prediction_pairs, render, render_accuracy, render_reference, EvalError, LabelSpace, RenderStyle,
};
use dyadnet::features::{experiment_to_vector, FeatureError, Standardizer, FEATURE_NAMES};
use dyadnet::models::{
    build, load_model, parse_sizes, registry, registry_lookup, render_registry, save_model,
    ModelError, NetworkSpec,
};
use dyadnet::numerics::{gradcheck, one_hot, softmax_cross_entropy, Matrix};
use dyadnet::synthgen::{default_profiles, generate, parse_counts, ProfileMode, SynthError};
use dyadnet::training::{
    evaluate, train, TrainConfig, TrainError, DEFAULT_BATCH_SIZE, DEFAULT_L2_LAMBDA,
    DEFAULT_TRAIN_FRACTION,
};

use manifest::RunManifest;

pub const MODEL_FILE: &str = "model.dyad";
pub const REPORT_FILE: &str = "report.tsv";
pub const TRAIN_PREDICTIONS_FILE: &str = "predictions_train.tsv";
pub const TEST_PREDICTIONS_FILE: &str = "predictions_test.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("InvalidManifest: {0}")]
    Manifest(String),
    #[error("SelfTestFailed: {failed} of {total} checks failed")]
    SelfTest { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dyad", version, about = "Relationship classification of walking pedestrian pairs")]
pub struct Cli {
    /// Worker threads for parallel stages (data generation, evaluation); 0 uses all cores.
    /// Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset CSV.
    GenData(GenDataArgs),
    /// Export one averaged 16-feature row per experiment as CSV.
    Features(FeaturesArgs),
    /// Train a registry model or a spec file on a dataset.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Confusion tables and accuracy from a predictions TSV.
    Report(ReportArgs),
    /// Registry commands.
    Models {
        #[command(subcommand)]
        command: ModelsCommand,
    },
    /// Gradient checks and invariant suite.
    Selftest(SelftestArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelsCommand {
    /// Print the architectures of the published models.
    List,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Separable,
    Overlapping,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Experiments per label, e.g. colleagues=267,couple=96,family=218,friendship=286
    #[arg(long)]
    pub counts: String,
    /// Bundled profile set.
    #[arg(long, value_enum, default_value = "separable")]
    pub mode: ModeArg,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file overriding profile values of the selected mode (`version = 1`, one
    /// table per label, any subset of keys).
    #[arg(long)]
    pub profiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Registry model name (see `models list`).
    #[arg(long, required_unless_present = "spec_file", conflicts_with = "spec_file")]
    pub model: Option<String>,
    /// TOML network spec instead of a registry model.
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Seed for the split, initialization, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the spec's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override hidden layer widths, e.g. 64-32.
    #[arg(long)]
    pub hidden: Option<String>,
    /// Override the spec's learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// L2 weight-decay coefficient, used when the spec enables L2.
    #[arg(long, default_value_t = DEFAULT_L2_LAMBDA)]
    pub l2_lambda: f64,
    /// Fraction of experiments in the training split.
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    /// Directory for model, report, predictions and manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Which part of the dataset to evaluate.
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Split seed (must match training to reproduce its split).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training fraction of the split.
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    /// Write predictions TSV here.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Predictions TSV (exp_id, true, pred).
    #[arg(long)]
    pub predictions: PathBuf,
    /// Merge couple, family and friendship into intimate before tabulating.
    #[arg(long)]
    pub merge_binary: bool,
    /// Also print the published reference method's matrix.
    #[arg(long, conflicts_with = "merge_binary")]
    pub compare_reference: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Random configurations per gradient check.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Seed for the random configurations.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest file written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Replace the recorded --out-dir.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replace the recorded --out.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (without the program name), runs, and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let argv = std::iter::once("dyad".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if cli.jobs > 0 {
        // Fails only if the global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match dispatch(cli.command, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, args: &[String]) -> Result<(), CliError> {
    match command {
        Command::GenData(a) => cmd_gen_data(a, args),
        Command::Features(a) => cmd_features(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::Report(a) => cmd_report(a, args),
        Command::Models {
            command: ModelsCommand::List,
        } => {
            log_manifest(&RunManifest::begin("models list", args));
            print!("{}", render_registry());
            Ok(())
        }
        Command::Selftest(a) => cmd_selftest(a, args),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(parse_dataset(&read_text(path)?, &path.display().to_string())?)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.txt");
    PathBuf::from(s)
}

/// Commands without output files only log their manifest.
fn log_manifest(m: &RunManifest) {
    for line in m.render().lines() {
        info!("{line}");
    }
}

fn cmd_gen_data(a: GenDataArgs, args: &[String]) -> Result<(), CliError> {
    let counts = parse_counts(&a.counts)?;
    let mode = match a.mode {
        ModeArg::Separable => ProfileMode::Separable,
        ModeArg::Overlapping => ProfileMode::Overlapping,
    };
    let mut profiles = default_profiles(mode);
    if let Some(p) = &a.profiles {
        profiles = profiles.with_overrides(&read_text(p)?)?;
    }

    let mut m = RunManifest::begin("gen-data", args);
    m.set("mode", format!("{mode:?}").to_lowercase());
    for label in RelationshipLabel::ALL {
        m.set(&format!("count.{label}"), counts.get(label));
    }
    m.set("seed", a.seed);
    m.set("out", a.out.display());
    if let Some(p) = &a.profiles {
        m.set("profiles", p.display());
    }
    m.write(&sidecar(&a.out))?;

    let ds = generate(&profiles, &counts, a.seed)?;
    write_file(&a.out, dyadnet::data::format_dataset(&ds))?;
    println!("wrote {} experiments to {}", ds.len(), a.out.display());
    Ok(())
}

fn cmd_features(a: FeaturesArgs, args: &[String]) -> Result<(), CliError> {
    let ds = read_dataset(&a.data)?;
    let mut m = RunManifest::begin("features", args);
    m.set("data", a.data.display());
    m.set("out", a.out.display());
    m.write(&sidecar(&a.out))?;

    let mut out = FEATURE_NAMES.join(",");
    out.push_str(",label\n");
    for e in ds.experiments() {
        for v in experiment_to_vector(e).0 {
            let _ = write!(out, "{v},");
        }
        out.push_str(e.label.as_str());
        out.push('\n');
    }
    write_file(&a.out, out)?;
    println!("wrote {} feature rows to {}", ds.len(), a.out.display());
    Ok(())
}

/// Applies `--epochs`, `--hidden` and `--learning-rate` and lists what changed.
fn resolve_spec(a: &TrainArgs) -> Result<(NetworkSpec, Vec<(String, String)>), CliError> {
    let mut spec = match (&a.model, &a.spec_file) {
        (Some(name), _) => registry_lookup(name)?,
        (None, Some(path)) => NetworkSpec::from_toml(&read_text(path)?)?,
        (None, None) => unreachable!("clap requires --model or --spec-file"),
    };
    let mut changes = Vec::new();
    if let Some(e) = a.epochs {
        changes.push(("epochs".to_string(), format!("{} -> {e}", spec.epochs)));
        spec.epochs = e;
    }
    if let Some(h) = &a.hidden {
        let sizes = parse_sizes(h)?;
        changes.push(("hidden".to_string(), format!("{} -> {h}", spec.hidden_string())));
        spec.hidden_sizes = sizes;
    }
    if let Some(lr) = a.learning_rate {
        changes.push(("learning_rate".to_string(), format!("{} -> {lr}", spec.learning_rate)));
        spec.learning_rate = lr;
    }
    spec.validate()?;
    Ok((spec, changes))
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<(), CliError> {
    let (spec, changes) = resolve_spec(&a)?;
    let ds = read_dataset(&a.data)?;
    let cfg = TrainConfig {
        seed: a.seed,
        batch_size: a.batch_size,
        l2_lambda: a.l2_lambda,
        train_fraction: a.train_fraction,
    };
    cfg.validate()?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;

    let mut m = RunManifest::begin("train", args);
    m.set("model", &spec.name);
    m.set("spec.hidden", spec.hidden_string());
    m.set("spec.lstm_first", spec.first_hidden_is_lstm);
    m.set("spec.outputs", spec.output_size);
    m.set("spec.l2", spec.l2_enabled);
    m.set("spec.dropout", spec.dropout_rate);
    m.set("spec.learning_rate", spec.learning_rate);
    m.set("spec.epochs", spec.epochs);
    for (k, v) in &changes {
        m.set(&format!("deviation.{k}"), v);
    }
    m.set("seed", cfg.seed);
    m.set("batch_size", cfg.batch_size);
    m.set("l2_lambda", cfg.effective_lambda(&spec));
    m.set("train_fraction", cfg.train_fraction);
    m.set("data", a.data.display());
    m.set("out_dir", a.out_dir.display());
    m.write(&a.out_dir.join(MANIFEST_FILE))?;

    let out = train(&spec, &ds, &cfg)?;
    info!("{} trained in {:.2} s", spec.name, out.report.wall_seconds);
    save_model(&out.network, a.out_dir.join(MODEL_FILE))?;
    write_file(&a.out_dir.join(REPORT_FILE), out.report.to_tsv())?;
    write_file(
        &a.out_dir.join(TRAIN_PREDICTIONS_FILE),
        format_predictions(out.space, &out.train_predictions),
    )?;
    write_file(
        &a.out_dir.join(TEST_PREDICTIONS_FILE),
        format_predictions(out.space, &out.test_predictions),
    )?;
    println!(
        "{}: train accuracy {:.2}% ({} examples), test accuracy {:.2}% ({} examples)",
        spec.name,
        out.report.train_accuracy,
        out.report.train_size,
        out.report.test_accuracy,
        out.report.test_size
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, args: &[String]) -> Result<(), CliError> {
    let net = load_model(&a.model_file)?;
    let ds = read_dataset(&a.data)?;
    let mut m = RunManifest::begin("eval", args);
    m.set("model_file", a.model_file.display());
    m.set("data", a.data.display());
    m.set("split", format!("{:?}", a.split).to_lowercase());
    m.set("seed", a.seed);
    m.set("train_fraction", a.train_fraction);
    match &a.predictions {
        Some(p) => m.write(&sidecar(p))?,
        None => log_manifest(&m),
    }

    let ds = match a.split {
        SplitArg::All => ds,
        SplitArg::Train => split_dataset(&ds, a.train_fraction, a.seed)?.0,
        SplitArg::Test => split_dataset(&ds, a.train_fraction, a.seed)?.1,
    };
    let standardizer = net.standardizer().cloned().unwrap_or_else(|| {
        log::warn!("model file has no standardizer; using raw features");
        Standardizer::identity()
    });
    let (acc, preds) = evaluate(&net, &ds, &standardizer)?;
    let correct = preds.iter().filter(|p| p.truth == p.predicted).count();
    println!("accuracy {acc:.2}% ({correct}/{})", preds.len());
    if let Some(p) = &a.predictions {
        let space = LabelSpace::for_outputs(net.output_size()).unwrap_or(LabelSpace::Four);
        write_file(p, format_predictions(space, &preds))?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, args: &[String]) -> Result<(), CliError> {
    let (space, preds) = parse_predictions(&read_text(&a.predictions)?)?;
    let mut m = RunManifest::begin("report", args);
    m.set("predictions", a.predictions.display());
    m.set("merge_binary", a.merge_binary);
    log_manifest(&m);

    let mut cm = confusion(&prediction_pairs(&preds), space)?;
    if a.merge_binary {
        cm = merge_confusion(&cm)?;
        // The merged tally must agree with tallying merged predictions directly.
        debug_assert_eq!(
            cm,
            confusion(&prediction_pairs(&merge_predictions(&preds)), LabelSpace::Two)?
        );
    }
    println!("Confusion matrix (counts), rows = real value, columns = predicted value");
    print!("{}", render(&cm, RenderStyle::Counts));
    println!();
    println!("Confusion matrix (%), rows = real value, columns = predicted value");
    print!("{}", render(&cm, RenderStyle::Percent));
    println!();
    print!("{}", render_accuracy(&cm));
    if a.compare_reference {
        if space != LabelSpace::Four {
            return Err(EvalError::NotFourClass(space.size()).into());
        }
        println!();
        println!("Reference method, published percentages (%)");
        print!("{}", render_reference());
    }
    Ok(())
}

struct Check {
    name: String,
    passed: bool,
    detail: String,
}

fn invariant_checks(seed: u64) -> Vec<Check> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    for (outputs, name) in [(4, "RN2-1"), (2, "RN2-6")] {
        let mut spec = registry_lookup(name).expect("registry entry");
        spec.hidden_sizes = vec![25, 12];
        let mut net = build(&spec, seed).expect("valid spec");
        let x = Matrix::from_vec(
            64,
            16,
            (0..64 * 16).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .expect("shape");
        let targets: Vec<usize> = (0..64).map(|i| i % outputs).collect();
        let loss = |n: &dyadnet::models::Network| {
            let (z, _) = n
                .forward::<rand_chacha::ChaCha8Rng>(dyadnet::models::Batch::Vectors(&x), None)
                .expect("forward");
            softmax_cross_entropy(&z, &one_hot(&targets, outputs)).expect("loss").0
        };
        let ln_c = (outputs as f64).ln();
        let fresh = loss(&net);
        checks.push(Check {
            name: format!("initial loss {outputs}-class"),
            passed: (fresh - ln_c).abs() <= 0.05 * ln_c,
            detail: format!("{fresh:.6} vs ln {outputs} = {ln_c:.6}"),
        });
        net.zero_output_layer();
        let zero = loss(&net);
        checks.push(Check {
            name: format!("zero output layer loss {outputs}-class"),
            passed: (zero - ln_c).abs() < 1e-9,
            detail: format!("|{zero} - ln {outputs}| = {:.2e}", (zero - ln_c).abs()),
        });
    }

    let all_match = registry().iter().all(|(_, s)| {
        build(s, 0).map(|n| n.param_count()).ok() == Some(s.param_count())
    });
    checks.push(Check {
        name: "registry parameter counts".into(),
        passed: all_match,
        detail: "built networks vs closed-form counts, 11 models".into(),
    });

    let n = 867;
    let n_train = dyadnet::data::train_size(n, 0.9);
    checks.push(Check {
        name: "split sizes".into(),
        passed: (n_train, n - n_train) == (780, 87),
        detail: format!("{n} at 0.9 -> {n_train}/{}", n - n_train),
    });

    let merged = LabelCounts([267, 96, 218, 286]).merged();
    checks.push(Check {
        name: "binary merge counts".into(),
        passed: merged == [267, 600],
        detail: format!("267/96/218/286 -> {}/{}", merged[0], merged[1]),
    });

    let pairs: Vec<(usize, usize)> = (0..500)
        .map(|_| (rng.random_range(0..4), rng.random_range(0..4)))
        .collect();
    let direct: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(t, p)| (usize::from(t != 0), usize::from(p != 0)))
        .collect();
    let commutes = confusion(&pairs, LabelSpace::Four)
        .and_then(|cm| merge_confusion(&cm))
        .ok()
        == confusion(&direct, LabelSpace::Two).ok();
    checks.push(Check {
        name: "merge commutes with direct tally".into(),
        passed: commutes,
        detail: "500 random prediction pairs".into(),
    });
    checks
}

fn cmd_selftest(a: SelftestArgs, args: &[String]) -> Result<(), CliError> {
    let mut m = RunManifest::begin("selftest", args);
    m.set("trials", a.trials);
    m.set("seed", a.seed);
    log_manifest(&m);

    let mut checks: Vec<Check> = gradcheck::run_all(a.trials, a.seed)
        .into_iter()
        .map(|r| Check {
            name: format!("gradient check {}", r.name),
            passed: r.passed(),
            detail: format!(
                "max relative error {:.3e} < {:.0e} over {} values, {} trials",
                r.max_rel_error, r.tolerance, r.checked_values, r.trials
            ),
        })
        .collect();
    checks.extend(invariant_checks(a.seed));
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::SelfTest {
            failed,
            total: checks.len(),
        });
    }
    Ok(())
}

fn replace_flag(args: &mut [String], flag: &str, value: &Path) -> bool {
    let mut found = false;
    for i in 0..args.len() {
        if args[i] == flag && i + 1 < args.len() {
            args[i + 1] = value.display().to_string();
            found = true;
        } else if let Some(rest) = args[i].strip_prefix(flag).and_then(|r| r.strip_prefix('=')) {
            let _ = rest;
            args[i] = format!("{flag}={}", value.display());
            found = true;
        }
    }
    found
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let m = RunManifest::parse(&read_text(&a.manifest)?)?;
    let mut args = m.args();
    if args.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Manifest("a replay manifest cannot be replayed".into()));
    }
    // Overrides are resolved against the caller's directory before switching to the
    // recorded one.
    let here = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
    for (flag, value) in [("--out-dir", &a.out_dir), ("--out", &a.out)] {
        if let Some(v) = value {
            if !replace_flag(&mut args, flag, &here.join(v)) {
                return Err(CliError::Manifest(format!("recorded command has no {flag}")));
            }
        }
    }
    if let Some(cwd) = m.cwd() {
        std::env::set_current_dir(&cwd).map_err(|e| CliError::io(&cwd, e))?;
    }
    let argv = std::iter::once("dyad".to_string()).chain(args.iter().cloned());
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| CliError::Manifest(format!("recorded arguments no longer parse: {e}")))?;
    dispatch(cli.command, &args)
}
