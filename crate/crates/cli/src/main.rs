mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use patchcheck_core::eval::{dedup_against_eval, sweep_csv, Manifest};
use patchcheck_core::invariant::{parse_invariant_file, serialize_point_map, Granularity};
use patchcheck_core::pipeline::{
    absolutize, run_batch, train_from_manifest, tune_on_manifest, Embedder, FeatureSource,
    PipelineConfig,
};
use patchcheck_core::selection::{parse_method_list, select_related_tests, CoverageMap};
use patchcheck_core::syntactic::{
    hashing_embed, EmbeddingStore, PredictorModel, Role, TrainingConfig, DEFAULT_DIM,
    DEFAULT_THRESHOLD,
};

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "patchcheck", version, about = "Assess whether program repair patches overfit")]
struct Cli {
    /// JSON config file; keys mirror the long flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an invariant dump and print it in canonical form
    ParseInvariants {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// List the tests covering any of the given methods
    SelectTests {
        #[arg(long, value_name = "FILE")]
        coverage: PathBuf,
        /// Comma-separated `Class.method(params)` list
        #[arg(long)]
        methods: String,
    },
    /// Write fragment embeddings for every record of a manifest
    Embed {
        #[arg(long, value_enum)]
        mode: EmbedMode,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Existing exchange file (`--mode file`)
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Hashing dimension (`--mode hashing`)
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Train the syntactic model
    Train(TrainArgs),
    /// Set the model threshold from labeled validation records
    TuneThreshold {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Write the tuned model here instead of updating `--model`
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },
    /// Assess every patch of a manifest
    Assess(AssessArgs),
    /// Assess a labeled manifest and report metrics
    Evaluate {
        #[command(flatten)]
        assess: AssessArgs,
        /// Write a threshold sweep CSV
        #[arg(long, value_name = "FILE")]
        sweep: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EmbedMode {
    Hashing,
    File,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GranularityArg {
    Executed,
    Buggy,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Executed => Granularity::Executed,
            GranularityArg::Buggy => Granularity::Buggy,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Write the held-out validation records as a manifest
    #[arg(long, value_name = "FILE")]
    valid_out: Option<PathBuf>,
    /// Drop training records duplicating this manifest's patches
    #[arg(long, value_name = "FILE")]
    dedup_against: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Train on every labeled record
    #[arg(long, conflicts_with_all = ["train_fraction", "valid_out"])]
    no_split: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    granularity: Option<GranularityArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, conflicts_with = "no_syntactic")]
    no_semantic: bool,
    #[arg(long)]
    no_syntactic: bool,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// External SMT solver command, e.g. `z3 -in`
    #[arg(long)]
    solver: Option<String>,
    /// Write the JSON report here
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Print the JSON report instead of the table
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
struct Internal(String);

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        1
    } else if err.downcast_ref::<Internal>().is_some() {
        3
    } else if err.downcast_ref::<patchcheck_core::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
        || err.downcast_ref::<std::io::Error>().is_some()
    {
        2
    } else {
        3
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| Internal(format!("writing {}", path.display())))
}

fn embedder(flag: Option<&PathBuf>, file: &FileConfig) -> Embedder {
    match flag.or(file.embeddings.as_ref()) {
        Some(p) => Embedder::ExternalFile(p.clone()),
        None => Embedder::HashingFallback,
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| anyhow::Error::new(Usage(format!("{e:#}"))))?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::ParseInvariants { file: path, json } => parse_invariants(&path, json),
        Command::SelectTests { coverage, methods } => select_tests(&coverage, &methods),
        Command::Embed {
            mode,
            manifest,
            out,
            input,
            dim,
        } => embed(mode, &manifest, &out, input.as_deref(), dim.or(file.dim)),
        Command::Train(args) => train(args, &file),
        Command::TuneThreshold {
            manifest,
            model,
            out,
            embeddings,
        } => tune(&manifest, &model, out.as_deref(), embedder(embeddings.as_ref(), &file)),
        Command::Assess(args) => assess(args, &file, None, false),
        Command::Evaluate { assess: args, sweep } => assess(args, &file, sweep.as_deref(), true),
    }
}

fn parse_invariants(path: &Path, json: bool) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map = parse_invariant_file(&text)?;
    if json {
        let points: Vec<_> = map
            .iter()
            .map(|(pt, set)| {
                let invariants: Vec<_> = set
                    .iter()
                    .map(|inv| {
                        json!({
                            "text": inv.raw_text,
                            "canonical": inv.canonical().to_string(),
                            "atom": inv.atom,
                        })
                    })
                    .collect();
                json!({"point": pt.to_string(), "invariants": invariants})
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&points)?);
    } else {
        print!("{}", serialize_point_map(&map));
    }
    Ok(())
}

fn select_tests(coverage: &Path, methods: &str) -> Result<()> {
    let coverage = CoverageMap::load(coverage)?;
    let methods = parse_method_list(methods)?;
    for t in select_related_tests(&coverage, &methods)? {
        println!("{t}");
    }
    Ok(())
}

fn embed(mode: EmbedMode, manifest: &Path, out: &Path, input: Option<&Path>, dim: Option<usize>) -> Result<()> {
    let manifest = Manifest::load(manifest)?;
    let mut store = EmbeddingStore::new();
    match mode {
        EmbedMode::Hashing => {
            if input.is_some() {
                bail!(Usage("--input is only used with --mode file".into()));
            }
            let k = dim.unwrap_or(DEFAULT_DIM);
            if k == 0 {
                bail!(Usage("--dim must be positive".into()));
            }
            for r in &manifest.records {
                for role in Role::ALL {
                    let path = manifest.resolve(r.code_paths.get(role));
                    let text = std::fs::read_to_string(&path).map_err(|_| {
                        patchcheck_core::Error::MissingCodeFile {
                            id: r.id.clone(),
                            path,
                        }
                    })?;
                    store.insert(hashing_embed(r.embedding_id(role), &text, k))?;
                }
            }
        }
        EmbedMode::File => {
            let Some(input) = input else {
                bail!(Usage("--mode file needs --input".into()));
            };
            let (source, warnings) = EmbeddingStore::load(input)?;
            print_warnings(&warnings);
            for r in &manifest.records {
                for role in Role::ALL {
                    let id = r.embedding_id(role);
                    let v = source.get(&id).cloned().ok_or_else(|| {
                        patchcheck_core::Error::InvalidEmbedding {
                            reason: format!("not found in {}", input.display()),
                            id,
                        }
                    })?;
                    store.insert(v)?;
                }
            }
        }
    }
    write_output(out, &store.to_jsonl())?;
    eprintln!("wrote {} embeddings to {}", store.len(), out.display());
    Ok(())
}

fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let mut manifest = Manifest::load(&args.manifest)?;
    if let Some(eval_path) = &args.dedup_against {
        let eval = Manifest::load(eval_path)?;
        let outcome = dedup_against_eval(&manifest, &eval)?;
        if !outcome.removed.is_empty() {
            eprintln!("removed {} duplicate(s): {}", outcome.removed.len(), outcome.removed.join(", "));
        }
        manifest.records = outcome.kept;
    }
    let defaults = TrainingConfig::default();
    let config = TrainingConfig {
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        l2_penalty: args.l2.or(file.l2).unwrap_or(defaults.l2_penalty),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
    };
    let fraction = if args.no_split {
        None
    } else {
        Some(args.train_fraction.or(file.train_fraction).unwrap_or(0.9))
    };
    let k = args.dim.or(file.dim).unwrap_or(DEFAULT_DIM);
    let (source, warnings) = FeatureSource::open(&embedder(args.embeddings.as_ref(), file), k)?;
    print_warnings(&warnings);
    let outcome = train_from_manifest(&manifest, &source, &config, fraction)?;
    write_output(&args.out, &outcome.model.to_json())?;
    if let Some(valid_out) = &args.valid_out {
        let base = std::fs::canonicalize(&manifest.base_dir)
            .with_context(|| format!("resolving {}", manifest.base_dir.display()))?;
        let mut records = outcome.validation.clone();
        absolutize(&mut records, &base);
        let valid = Manifest::new(base, records)?;
        write_output(valid_out, &valid.to_json())?;
    }
    println!(
        "trained on {} records (k={}, {} features), {} held out",
        outcome.train_ids.len(),
        outcome.model.k,
        outcome.model.feature_dim(),
        outcome.validation.len()
    );
    Ok(())
}

fn tune(manifest: &Path, model_path: &Path, out: Option<&Path>, embedder: Embedder) -> Result<()> {
    let manifest = Manifest::load(manifest)?;
    let mut model = PredictorModel::load(model_path)?;
    let (source, warnings) = FeatureSource::open(&embedder, model.k)?;
    print_warnings(&warnings);
    let (threshold, scores) = tune_on_manifest(&manifest, &source, &model)?;
    model.threshold = threshold;
    write_output(out.unwrap_or(model_path), &model.to_json())?;
    println!("threshold {threshold} from {} validation scores", scores.len());
    Ok(())
}

fn assess(args: AssessArgs, file: &FileConfig, sweep: Option<&Path>, need_metrics: bool) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let model = args.model.as_deref().map(PredictorModel::load).transpose()?;
    let no_semantic = args.no_semantic || file.no_semantic.unwrap_or(false);
    let no_syntactic = args.no_syntactic || file.no_syntactic.unwrap_or(false);
    if no_semantic && no_syntactic {
        bail!(Usage("--no-semantic and --no-syntactic cannot both be set".into()));
    }
    let threshold = args
        .threshold
        .or(file.threshold)
        .or(model.as_ref().map(|m| m.threshold))
        .unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        bail!(Usage(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let config = PipelineConfig {
        granularity: args.granularity.map(Granularity::from).or(file.granularity).unwrap_or_default(),
        threshold,
        semantic_enabled: !no_semantic,
        syntactic_enabled: !no_syntactic,
        embedder: embedder(args.embeddings.as_ref(), file),
        solver_hook: config::solver_hook(args.solver.as_deref(), file),
        seed: file.seed.unwrap_or(42),
    };
    if config.syntactic_enabled && model.is_none() {
        bail!(Usage("--model is required unless --no-syntactic is set".into()));
    }
    let report = run_batch(&manifest, model.as_ref(), &config)?;
    print_warnings(&report.warnings);
    if need_metrics && report.metrics.is_none() {
        bail!(patchcheck_core::Error::InvalidConfig(
            "evaluate needs labeled records".into()
        ));
    }
    if let Some(path) = &args.report {
        write_output(path, &report.to_json())?;
    }
    if let Some(path) = sweep {
        write_output(path, &sweep_csv(&report.sweep(40)))?;
    }
    if args.json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}
