use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use devalign_core::concept::load_norms;
use devalign_core::fluid::{generate_rpm_items, load_analogy_items, load_rpm_items, RenderOptions};
use devalign_core::linguistic::{load_blimp_dir, PhenomenonMap};
use devalign_core::manifest::Manifest;
use devalign_core::numeric::{NumberSet, NumericConfig};
use devalign_core::pipeline::{self, read_scores_csv, write_trajectories, RpmGenerate, RunConfig};
use devalign_core::synth::{synthesize, SynthOptions};
use devalign_core::trajectory::WindowOptions;
use devalign_core::{Suite, TextFormat, TraceSet};
use serde_json::json;

#[derive(Parser)]
#[command(name = "devalign", version, about = "Psychometric and developmental alignment metrics for LM traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate trace files and summarise their checkpoints.
    Ingest {
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// Write the merged, validated trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Number-line effects and number-concept statistics.
    Numeric(RunArgs),
    /// BLiMP minimal-pair accuracy.
    Blimp(RunArgs),
    /// Category typicality.
    Typicality(RunArgs),
    /// Text-rendered progressive matrices.
    Rpm(RunArgs),
    /// Four-term verbal analogies.
    Analogy(RunArgs),
    /// All selected suites plus the combined table and trajectories.
    Report(RunArgs),
    /// Development windows from a scores.csv written by an earlier run.
    Trajectory {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        width: usize,
        #[arg(long, default_value_t = 0.8)]
        gain_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Request manifest for the model adapter.
    Manifest(ManifestArgs),
    /// Write a synthetic fixture bundle and a matching config.toml.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Fewer checkpoints and items.
        #[arg(long)]
        small: bool,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
    #[arg(long)]
    blimp_dir: Option<PathBuf>,
    #[arg(long)]
    norms: Option<PathBuf>,
    #[arg(long)]
    completions: Option<PathBuf>,
    #[arg(long)]
    rpm: Option<PathBuf>,
    /// Generate this many RPM items instead of reading a file.
    #[arg(long)]
    rpm_generate: Option<usize>,
    #[arg(long)]
    analogy: Option<PathBuf>,
    /// Comma-separated suite names (report only).
    #[arg(long, value_delimiter = ',')]
    suites: Vec<String>,
    /// Number set, e.g. `1-9` or `1,2,5,10`.
    #[arg(long)]
    numbers: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    numbers: Option<String>,
    /// Skip number and control-word embeddings.
    #[arg(long)]
    no_numeric: bool,
    #[arg(long)]
    blimp_dir: Option<PathBuf>,
    #[arg(long)]
    norms: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    shots: Vec<u8>,
    #[arg(long)]
    rpm: Option<PathBuf>,
    #[arg(long)]
    rpm_generate: Option<usize>,
    #[arg(long)]
    analogy: Option<PathBuf>,
    /// Layers to request for embeddings; all when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_numbers(text: &str) -> Result<NumberSet> {
    let text = text.trim();
    let numbers: Vec<u32> = if let Some((lo, hi)) = text.split_once('-') {
        let lo: u32 = lo.trim().parse().with_context(|| format!("bad number range {text:?}"))?;
        let hi: u32 = hi.trim().parse().with_context(|| format!("bad number range {text:?}"))?;
        if lo > hi {
            bail!("empty number range {text:?}");
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<u32>().with_context(|| format!("bad number {t:?}")))
            .collect::<Result<_>>()?
    };
    Ok(NumberSet::new(numbers)?)
}

fn build_config(args: &RunArgs, only: Option<Suite>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !args.traces.is_empty() {
        cfg.traces = args.traces.clone();
    }
    macro_rules! over {
        ($field:ident) => {
            if let Some(v) = &args.$field {
                cfg.$field = Some(v.clone());
            }
        };
    }
    over!(blimp_dir);
    over!(norms);
    over!(completions);
    over!(rpm);
    over!(analogy);
    if let Some(count) = args.rpm_generate {
        cfg.rpm = None;
        cfg.rpm_generate = Some(RpmGenerate { count, seed: None });
    }
    if let Some(n) = &args.numbers {
        cfg.numeric = NumericConfig {
            numbers: parse_numbers(n)?,
            ..cfg.numeric
        };
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if !args.suites.is_empty() {
        cfg.suites = args
            .suites
            .iter()
            .map(|s| Suite::parse(s.trim()).with_context(|| format!("unknown suite {s:?}")))
            .collect::<Result<_>>()?;
    }
    if let Some(s) = only {
        cfg.suites = vec![s];
    }
    Ok(cfg)
}

fn run_suites(args: &RunArgs, only: Option<Suite>) -> Result<ExitCode> {
    let cfg = build_config(args, only)?;
    let summary = pipeline::run(&cfg)?;
    let table: Vec<_> = summary
        .table
        .iter()
        .map(|r| json!({"model": r.model_id, "step": r.checkpoint_step, "tokens": r.tokens_seen, "values": r.values}))
        .collect();
    let out = json!({
        "status": if summary.is_complete() { "ok" } else { "incomplete" },
        "out": summary.out,
        "seed": summary.seed,
        "suites": summary.suites,
        "n_scores": summary.scores.len(),
        "incomplete": summary.incomplete,
        "table": table,
    });
    if summary.is_complete() {
        println!("{}", serde_json::to_string_pretty(&out)?);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}", serde_json::to_string_pretty(&json!({ "error": out }))?);
        Ok(ExitCode::from(2))
    }
}

fn ingest(traces: &[PathBuf], out: Option<&Path>) -> Result<ExitCode> {
    let trace = TraceSet::ingest_many(traces)?;
    let checkpoints: Vec<_> = trace
        .checkpoints()
        .into_iter()
        .map(|m| {
            let view = trace.view(&m.model_id, m.checkpoint_step).expect("listed checkpoint");
            json!({
                "model": m.model_id,
                "step": m.checkpoint_step,
                "tokens": m.tokens_seen,
                "layers": view.layers(),
            })
        })
        .collect();
    if let Some(path) = out {
        trace.save(path)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "status": "ok",
            "embeddings": trace.embeddings().len(),
            "logprobs": trace.logprobs().len(),
            "checkpoints": checkpoints,
        }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn trajectory(scores: &Path, out: &Path, opts: WindowOptions, seed: u64) -> Result<ExitCode> {
    let scores = read_scores_csv(scores)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let windows = write_trajectories(out, &scores, &opts, seed)?;
    println!("{}", serde_json::to_string_pretty(&json!({ "status": "ok", "windows": windows }))?);
    Ok(ExitCode::SUCCESS)
}

fn manifest(args: &ManifestArgs) -> Result<ExitCode> {
    let mut m = Manifest::new();
    m.layers = args.layers.clone();
    if !args.no_numeric {
        let numbers = match &args.numbers {
            Some(s) => parse_numbers(s)?,
            None => NumberSet::default(),
        };
        let cfg = NumericConfig::default();
        m.add_numbers(&numbers, &TextFormat::NUMBER_FORMATS, &cfg.control_words);
    }
    if let Some(dir) = &args.blimp_dir {
        m.add_blimp(&load_blimp_dir(dir, &PhenomenonMap::default())?);
    }
    if let Some(p) = &args.norms {
        m.add_typicality(&load_norms(p)?, &args.shots, args.seed)?;
    }
    let rpm = match (&args.rpm, args.rpm_generate) {
        (Some(p), _) => Some(load_rpm_items(p)?),
        (None, Some(n)) => Some(generate_rpm_items(n, args.seed)),
        _ => None,
    };
    if let Some(items) = rpm {
        m.add_rpm(&items, &RenderOptions::default());
    }
    if let Some(p) = &args.analogy {
        m.add_analogies(&load_analogy_items(p)?);
    }
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    m.write_to(BufWriter::new(file))?;
    println!("{}", json!({ "status": "ok", "entries": m.len(), "out": args.out }));
    Ok(ExitCode::SUCCESS)
}

fn synth(out: &Path, seed: u64, small: bool) -> Result<ExitCode> {
    let opts = SynthOptions {
        seed,
        ..if small { SynthOptions::small() } else { SynthOptions::default() }
    };
    let bundle = synthesize(&opts)?;
    let paths = bundle.write_to_dir(out)?;
    let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_path_buf();
    let cfg = RunConfig {
        traces: vec![rel(&paths.trace)],
        blimp_dir: Some(rel(&paths.blimp_dir)),
        norms: Some(rel(&paths.norms)),
        completions: Some(rel(&paths.completions)),
        rpm: Some(rel(&paths.rpm)),
        analogy: Some(rel(&paths.analogy)),
        seed,
        out: PathBuf::from("report"),
        ..RunConfig::default()
    };
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()?).with_context(|| format!("writing {}", cfg_path.display()))?;
    println!(
        "{}",
        json!({
            "status": "ok",
            "config": cfg_path,
            "checkpoints": bundle.trace.checkpoints().len(),
            "records": bundle.trace.len(),
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { traces, out } => ingest(&traces, out.as_deref()),
        Command::Numeric(a) => run_suites(&a, Some(Suite::Numeric)),
        Command::Blimp(a) => run_suites(&a, Some(Suite::Blimp)),
        Command::Typicality(a) => run_suites(&a, Some(Suite::Typicality)),
        Command::Rpm(a) => run_suites(&a, Some(Suite::Rpm)),
        Command::Analogy(a) => run_suites(&a, Some(Suite::Analogy)),
        Command::Report(a) => run_suites(&a, None),
        Command::Trajectory {
            scores,
            out,
            width,
            gain_fraction,
            seed,
        } => trajectory(&scores, &out, WindowOptions { width, gain_fraction }, seed),
        Command::Manifest(a) => manifest(&a),
        Command::Synth { out, seed, small } => synth(&out, seed, small),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let kind = match e.downcast_ref::<devalign_core::Error>() {
                Some(devalign_core::Error::Trace(_)) => "trace",
                Some(devalign_core::Error::Io { .. }) => "io",
                Some(devalign_core::Error::Parse { .. }) => "parse",
                Some(_) => "invalid_input",
                None => "usage",
            };
            let report = json!({ "error": { "kind": kind, "message": e.to_string(), "chain": chain } });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
