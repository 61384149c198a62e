use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use reinet::agents::ActionMode;
use reinet::graph::Topology;
use reinet::runner::summary::{read_summary, write_summary, write_svg, DEFAULT_BIN};
use reinet::runner::{evaluate, read_metrics, resume_training, run_training, summarize, RunConfig};
use reinet::{Error, Result};

#[derive(Parser)]
#[command(name = "reinet", version, about = "Train and inspect networks of cooperating agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Layer a graph file, inserting identity vertices.
    Layer {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a variant over one or more seeds.
    Train(TrainArgs),
    /// Evaluate a checkpoint without learning.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Policy::Greedy)]
        policy: Policy,
    },
    /// Average metrics files over seeds into binned curves with 95% bands.
    Summarize {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BIN)]
        bin: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a summary CSV as an SVG chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Half-open range such as `0..5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint directory instead of starting fresh.
    #[arg(long, conflicts_with_all = ["config", "variant", "env", "seed", "seeds", "steps"])]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Greedy,
    Sample,
    Random,
}

fn parse_range(s: &str) -> Result<Vec<u64>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::Config(format!("seed range {s:?} is not of the form N..M")))?;
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| Error::Config(format!("seed range {s:?}: {e}")));
    let (a, b) = (parse(a)?, parse(b)?);
    if b <= a {
        return Err(Error::Config(format!("seed range {s:?} is empty")));
    }
    Ok((a..b).collect())
}

fn train(args: TrainArgs) -> Result<()> {
    if let Some(ck) = &args.resume {
        let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs/resumed"));
        let result = resume_training(ck, Some(&out))?;
        println!("resumed {} episodes -> {}", result.rows.len(), out.display());
        return Ok(());
    }
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(
            args.variant.as_deref().unwrap_or("ippo"),
            args.env.as_deref().unwrap_or("spread"),
        ),
    };
    if args.config.is_some() {
        if let Some(v) = &args.variant {
            config.variant = reinet::runner::config::VariantChoice::Preset(v.clone());
        }
        if let Some(e) = &args.env {
            config.env.name = e.clone();
        }
    }
    if let Some(s) = args.seed {
        config.training.seeds = vec![s];
    }
    if let Some(r) = &args.seeds {
        config.training.seeds = parse_range(r)?;
    }
    if let Some(n) = args.steps {
        config.training.budget = n;
    }
    if let Some(o) = &args.out {
        config.output.dir = o.clone();
    }
    config.validate()?;
    let out = config.output.dir.clone();
    let result = run_training(&config, Some(&out))?;
    for snap in &result.snapshots {
        let tail: Vec<f64> = snap.rows.iter().rev().take(100).map(|r| r.mean_episode_reward).collect();
        let mean = if tail.is_empty() { f64::NAN } else { tail.iter().sum::<f64>() / tail.len() as f64 };
        println!("seed {}: {} episodes, last-100 mean reward {mean:.3}", snap.seed, snap.rows.len());
    }
    println!("metrics -> {}", out.join("metrics.csv").display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Layer { input, out } => {
            let layered = Topology::load(&input)?.to_layered()?;
            let text = layered.to_json_string();
            match out {
                Some(p) => write_text(&p, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Train(args) => train(args)?,
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            policy,
        } => {
            let mode = match policy {
                Policy::Greedy => ActionMode::Greedy,
                Policy::Sample => ActionMode::Sample,
                Policy::Random => ActionMode::Uniform,
            };
            let r = evaluate(&checkpoint, episodes, seed, mode)?;
            println!("episodes {} mean {:.4} std {:.4}", r.returns.len(), r.mean, r.std);
        }
        Command::Summarize { inputs, bin, out } => {
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(read_metrics(p)?);
            }
            let (summary, warnings) = summarize(&rows, bin)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_summary(&out.join("summary.csv"), &summary)?;
            write_svg(&out.join("summary.svg"), &summary)?;
            println!("{} bins -> {}", summary.len(), out.display());
        }
        Command::Plot { input, out } => {
            let summary = read_summary(&input)?;
            write_svg(&out, &summary)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
