use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scengen_core::llm::{Gateway, LlmConfig};
use scengen_core::model::serialize_artifact;
use scengen_core::pipeline::{
    build_gateway, evaluate, generalize, load_eval_inputs, open_index, ArtifactTree, Config, EvalMetric, GeneralizeOutcome,
    GeneralizeRequest, OracleChooser, PipelineError, RunManifest, Stage, StageGate, TranscriptSpec,
};
use scengen_core::runner::ProcessRunner;
use scengen_core::tuning::{load_dataset, tune, SplitSpec, TuningConfig, VpMatching};
use scengen_core::ScenarioInstance;

#[derive(Parser, Debug)]
#[command(name = "scengen", version, about = "Generalize a developer test into tests for the scenarios it stands for")]
struct Cli {
    /// Project configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `record:<path>` or `replay:<path>`.
    #[arg(long, global = true)]
    transcript: Option<TranscriptSpec>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Artifact output directory.
    #[arg(long, global = true, default_value = "scengen-out")]
    out: PathBuf,
    /// Parallel stage-3 workers; defaults to the runner slot count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Ask on the terminal which oracle each instance should assert.
    #[arg(long, global = true)]
    interactive_oracles: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and persist the symbol index of the project.
    Index {
        /// Index this directory instead of the configured project root.
        #[arg(long)]
        root: Option<PathBuf>,
        /// Overwrite an existing index.
        #[arg(long)]
        rebuild: bool,
    },
    /// Run stage 1 (masked-oracle exams) only.
    Exam(Target),
    /// Run stages 1 to 3 for one focal method and one test.
    Generalize {
        #[command(flatten)]
        target: Target,
        /// Stop after stage 1 or 2.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
    },
    /// Auto-tune the rule prompt on a dataset of ground-truth templates.
    Tune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = scengen_core::tuning::DEFAULT_EPOCHS)]
        epochs: u32,
        #[arg(long, default_value_t = scengen_core::tuning::DEFAULT_BATCH)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = SplitMode::Random)]
        split: SplitMode,
        /// Held-out project for leave-one-project-out.
        #[arg(long)]
        project: Option<String>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, value_enum, default_value_t = Matching::Offline)]
        matching: Matching,
    },
    /// Score generated tests against ground truth.
    Eval {
        #[arg(long, default_value = "mutation")]
        metric: EvalMetric,
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gen: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct Target {
    /// Focal method: index key or `Class.method`.
    #[arg(long)]
    focal: String,
    /// Initial test: index key or `TestClass.method`.
    #[arg(long)]
    test: String,
    /// Rebuild the index instead of loading the persisted one.
    #[arg(long)]
    rebuild_index: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitMode {
    Random,
    LeaveOneProjectOut,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Matching {
    Offline,
    Judge,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("SCENGEN_LOG").unwrap_or_else(|_| "warn".into()))
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, PipelineError> {
    let path = cli.config.as_ref().ok_or_else(|| PipelineError::Config("this command needs --config".into()))?;
    Config::load(path)
}

fn manifest(cli: &Cli, sub: &str, config: Option<Config>) -> RunManifest {
    RunManifest::new(sub, config, cli.seed, cli.transcript.clone(), &cli.out)
}

fn run(cli: &Cli) -> Result<u8, PipelineError> {
    match &cli.command {
        Command::Index { root, rebuild } => cmd_index(cli, root.as_deref(), *rebuild),
        Command::Exam(target) => cmd_generalize(cli, "exam", target, StageGate::Exam),
        Command::Generalize { target, stage } => {
            let gate = StageGate::try_from(*stage).map_err(PipelineError::Input)?;
            cmd_generalize(cli, "generalize", target, gate)
        }
        Command::Tune { dataset, epochs, batch_size, split, project, test_fraction, matching } => {
            let split = match split {
                SplitMode::Random => SplitSpec::Random { test_fraction: *test_fraction },
                SplitMode::LeaveOneProjectOut => SplitSpec::LeaveOneProjectOut {
                    project: project.clone().ok_or_else(|| PipelineError::Input("--split leave-one-project-out needs --project".into()))?,
                },
            };
            let matching = match matching {
                Matching::Offline => VpMatching::Offline,
                Matching::Judge => VpMatching::Judge,
            };
            let config = TuningConfig { epochs: *epochs, batch_size: *batch_size, seed: cli.seed, split, matching };
            cmd_tune(cli, dataset, config)
        }
        Command::Eval { metric, reports, gt, gen } => cmd_eval(cli, *metric, reports.as_deref(), gt, gen),
    }
}

fn cmd_index(cli: &Cli, root: Option<&Path>, rebuild: bool) -> Result<u8, PipelineError> {
    let (config, root, target) = match (root, &cli.config) {
        (Some(r), _) => (None, r.to_path_buf(), cli.out.join("index.json")),
        (None, Some(_)) => {
            let cfg = load_config(cli)?;
            let root = cfg.project.root.clone();
            let target = cfg.index_path();
            (Some(cfg), root, target)
        }
        (None, None) => return Err(PipelineError::Config("index needs --config or --root".into())),
    };
    let index = if !rebuild && target.exists() {
        scengen_core::SymbolIndex::load(&target)?
    } else {
        let index = scengen_core::index::build_index(&root)?;
        index.save(&target)?;
        index
    };
    let mut m = manifest(cli, "index", config);
    m.args.insert("index".into(), target.display().to_string());
    ArtifactTree::create(&cli.out)?.write_manifest(&m)?;
    use scengen_core::model::SymbolKind;
    println!(
        "indexed {} symbols ({} classes, {} methods) from {} files -> {}",
        index.len(),
        index.count(SymbolKind::Class),
        index.count(SymbolKind::Method),
        index.files().count(),
        target.display()
    );
    for w in index.warnings() {
        eprintln!("warning: {}:{}: {}", w.file, w.line, w.reason);
    }
    Ok(0)
}

fn prompt_oracle(instance: &ScenarioInstance, i: usize) -> Option<usize> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "\ninstance {i}:\n{}", instance.narrative.trim_end());
    for (j, o) in instance.oracles.iter().enumerate() {
        let _ = writeln!(out, "  [{j}] {:?}: {}", o.kind, o.statement);
    }
    let _ = write!(out, "oracle to assert [0]: ");
    let _ = out.flush();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).ok()?;
    match line.trim() {
        "" => None,
        s => match s.parse::<usize>() {
            Ok(n) if n < instance.oracles.len() => Some(n),
            _ => {
                eprintln!("not an option; keeping the primary oracle");
                None
            }
        },
    }
}

fn cmd_generalize(cli: &Cli, sub: &str, target: &Target, gate: StageGate) -> Result<u8, PipelineError> {
    let cfg = load_config(cli)?;
    let mut m = manifest(cli, sub, Some(cfg.clone()));
    m.args.insert("focal".into(), target.focal.clone());
    m.args.insert("test".into(), target.test.clone());
    m.args.insert("stage".into(), (gate as u8).to_string());
    let llm = build_gateway(&cfg.llm, &mut m)?;
    let out = ArtifactTree::create(&cli.out)?;
    out.write_manifest(&m)?;
    let index = open_index(&cfg, target.rebuild_index)?;
    let runner = ProcessRunner::new(cfg.project.clone());
    let workers = cli.workers.unwrap_or_else(|| {
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        cores.min(cfg.project.slots.max(1))
    });
    let req = GeneralizeRequest { focal: target.focal.clone(), test: target.test.clone(), seed: cli.seed, gate, workers };
    let chooser: Option<&OracleChooser> = if cli.interactive_oracles { Some(&prompt_oracle) } else { None };
    let outcome = generalize(&cfg, &index, &runner, &llm, &req, chooser, &out)?;
    report_generalize(&outcome);
    Ok(if outcome.errored() > 0 { 1 } else { 0 })
}

fn report_generalize(o: &GeneralizeOutcome) {
    println!("focal method: {}", o.focal_id);
    println!("initial test: {}", o.test_id);
    if o.stage1_skipped {
        println!("stage 1 skipped: the initial test has no assertions");
    } else {
        println!("stage 1: {}/{} exams passed, {} knowledge items", o.exams_passed, o.exams, o.knowledge);
    }
    if o.gate >= StageGate::Template {
        println!(
            "stage 2: {} variation points ({}), {} instances, {} bundles rejected",
            o.variation_points.len(),
            o.variation_points.join(", "),
            o.instances,
            o.rejected_bundles
        );
    }
    if o.gate >= StageGate::Generate {
        println!("stage 3: {}/{} tests passing", o.passing(), o.tests.len());
        for t in &o.tests {
            match (&t.final_status, &t.error) {
                (Some(s), _) => println!("  {:<60} {:?} after {} attempt(s)", t.name, s, t.iterations),
                (None, Some(e)) => println!("  {:<60} error: {e}", t.name),
                _ => {}
            }
        }
    }
}

fn gateway_for(cli: &Cli, m: &mut RunManifest) -> Result<Gateway, PipelineError> {
    let llm = match &cli.config {
        Some(_) => load_config(cli)?.llm,
        None => LlmConfig::default(),
    };
    build_gateway(&llm, m)
}

fn cmd_tune(cli: &Cli, dataset: &Path, config: TuningConfig) -> Result<u8, PipelineError> {
    let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    let mut m = manifest(cli, "tune", cfg);
    m.args.insert("dataset".into(), dataset.display().to_string());
    m.args.insert("tuning".into(), serde_json::to_string(&config).expect("config serializes"));
    let llm = gateway_for(cli, &mut m)?;
    let out = ArtifactTree::create(&cli.out)?;
    out.write_manifest(&m)?;
    let samples = load_dataset(dataset).map_err(|e| PipelineError::Input(e.to_string()))?;
    let run = tune(&samples, &llm, &config).map_err(|e| PipelineError::from((Stage::Tune, e)))?;
    out.write_json("tuning-run.json", &run)?;
    for c in &run.checkpoints {
        let text = serialize_artifact(&c.prompt).map_err(|e| PipelineError::at(Stage::Tune, e))?;
        out.write_text(&format!("checkpoints/epoch-{}.rules.json", c.epoch), &text)?;
    }
    let selected = serialize_artifact(run.selected_prompt()).map_err(|e| PipelineError::at(Stage::Tune, e))?;
    let path = out.write_text("rules.rules.json", &selected)?;
    println!("train {} / test {} samples, {} rule-update calls", run.train.len(), run.test.len(), run.update_calls);
    println!("{:>5} {:>6} {:>9} {:>7} {:>7}", "epoch", "rules", "precision", "recall", "f1");
    for (i, c) in run.checkpoints.iter().enumerate() {
        let mark = if i == run.selected { " *" } else { "" };
        println!(
            "{:>5} {:>6} {:>9.4} {:>7.4} {:>7.4}{mark}",
            c.epoch,
            c.prompt.rules.len(),
            c.metrics.precision,
            c.metrics.recall,
            c.metrics.f1
        );
    }
    if !run.skipped.is_empty() {
        println!("{} sample runs skipped (see tuning-run.json)", run.skipped.len());
    }
    println!("selected rules -> {}", path.display());
    Ok(0)
}

fn cmd_eval(cli: &Cli, metric: EvalMetric, reports: Option<&Path>, gt: &Path, gen: &Path) -> Result<u8, PipelineError> {
    let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    let mut m = manifest(cli, "eval", cfg);
    m.args.insert("metric".into(), format!("{metric:?}").to_lowercase());
    m.args.insert("gt".into(), gt.display().to_string());
    m.args.insert("gen".into(), gen.display().to_string());
    if let Some(r) = reports {
        m.args.insert("reports".into(), r.display().to_string());
    }
    let llm = match metric {
        EvalMetric::Mutation => None,
        _ => Some(gateway_for(cli, &mut m)?),
    };
    let out = ArtifactTree::create(&cli.out)?;
    out.write_manifest(&m)?;
    let inputs = load_eval_inputs(gt, gen, reports)?;
    if inputs.gt.is_empty() {
        return Err(PipelineError::Input(format!("no ground-truth tests under {}", gt.display())));
    }
    let summary = evaluate(&inputs, metric, llm.as_ref())?;
    for (i, r) in summary.reports.iter().enumerate() {
        out.write_json(&format!("coverage/{i:03}.report.json"), r)?;
    }
    out.write_json("summary.json", &summary.rows)?;
    print!("{}", summary.table());
    Ok(0)
}
