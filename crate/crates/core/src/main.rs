//! Command-line front end: run networks from config files, benchmark the
//! scheduling modes against each other, and generate seeded random weights.
//!
//! Exit codes: 0 success, 1 usage error, 2 config/input error, 3 runtime
//! error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use tilepipe::config::{parse_hw_config, parse_network_cfg, HwConfig, NetworkConfig};
use tilepipe::error::Error;
use tilepipe::pipeline::{Pipeline, RawFrame};
use tilepipe::report::Report;
use tilepipe::scheduler::MappingMode;
use tilepipe::synth::synthetic_frames;
use tilepipe::weights::{generate_params, load_weights, save_weights, NetParams};

#[derive(Parser)]
#[command(
    name = "tilepipe",
    version,
    about = "CNN inference on simulated heterogeneous accelerator clusters with work stealing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream frames through a network and report metrics.
    Run(RunArgs),
    /// Run one model under SF, SC and WS and print a comparison table.
    Bench(BenchArgs),
    /// Generate seeded random weights for a network.
    GenWeights(GenWeightsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Network config file.
    #[arg(long)]
    net: PathBuf,
    /// Hardware config file.
    #[arg(long)]
    hw: PathBuf,
    /// Weights file; omitted = seeded random weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Scheduling mode: sf, sc or ws. Defaults to the hardware config's mode.
    #[arg(long)]
    mode: Option<String>,
    /// Number of frames to process.
    #[arg(long)]
    frames: Option<usize>,
    /// Input source: "synthetic" or a directory of raw byte frames.
    #[arg(long, default_value = "synthetic")]
    input: String,
    /// Pipelined execution (default).
    #[arg(long, conflicts_with = "sequential")]
    pipeline: bool,
    /// Sequential single-thread execution.
    #[arg(long)]
    sequential: bool,
    /// With --sequential: compute CONV layers on the host instead of the
    /// accelerator clusters.
    #[arg(long, requires = "sequential")]
    cpu_only: bool,
    /// Report format: json (default) or csv.
    #[arg(long, default_value = "json")]
    report: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic input and generated weights.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    net: PathBuf,
    /// Hardware config used for the SF and WS rows.
    #[arg(long)]
    hw: PathBuf,
    /// Custom architecture for the SC row; defaults to --hw.
    #[arg(long)]
    sc_hw: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    frames: usize,
    #[arg(long, default_value = "json")]
    report: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct GenWeightsArgs {
    #[arg(long)]
    net: PathBuf,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn config(err: Error) -> Self {
        Failure {
            code: 2,
            message: err.to_string(),
        }
    }

    fn runtime(err: Error) -> Self {
        Failure {
            code: 3,
            message: err.to_string(),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            std::process::exit(1);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::GenWeights(args) => cmd_gen_weights(args),
    };
    match result {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn load_configs(net: &Path, hw: &Path) -> Result<(NetworkConfig, HwConfig), Failure> {
    let net = parse_network_cfg(net).map_err(Failure::config)?;
    let hw = parse_hw_config(hw).map_err(Failure::config)?;
    Ok((net, hw))
}

fn resolve_params(
    weights: Option<&PathBuf>,
    net: &NetworkConfig,
    seed: u64,
) -> Result<NetParams, Failure> {
    match weights {
        Some(path) => load_weights(path, net).map_err(Failure::config),
        None => Ok(generate_params(net, seed)),
    }
}

fn input_frames(
    input: &str,
    frames: Option<usize>,
    net: &NetworkConfig,
    seed: u64,
) -> Result<Vec<RawFrame>, Failure> {
    if input == "synthetic" {
        let count = frames.unwrap_or(16);
        return Ok(synthetic_frames(
            seed,
            count,
            net.input.channels,
            net.input.height,
            net.input.width,
        ));
    }
    let dir = Path::new(input);
    let expected = net.input.channels * net.input.height * net.input.width;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::config(Error::io(dir.display().to_string(), e)))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut result = Vec::new();
    for path in paths {
        let bytes =
            std::fs::read(&path).map_err(|e| Failure::config(Error::io(path.display().to_string(), e)))?;
        if bytes.len() != expected {
            return Err(Failure::config(Error::shape(format!(
                "{}: {} bytes, expected {expected} ({}x{}x{})",
                path.display(),
                bytes.len(),
                net.input.channels,
                net.input.height,
                net.input.width
            ))));
        }
        result.push(RawFrame {
            channels: net.input.channels,
            height: net.input.height,
            width: net.input.width,
            bytes,
        });
        if let Some(limit) = frames {
            if result.len() == limit {
                break;
            }
        }
    }
    if result.is_empty() {
        return Err(Failure::config(Error::shape(format!(
            "no input frames found in {}",
            dir.display()
        ))));
    }
    Ok(result)
}

fn write_report(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::runtime(Error::io(path.display().to_string(), e))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if args.report != "json" && args.report != "csv" {
        return Err(Failure::usage(format!(
            "unknown report format '{}', expected json or csv",
            args.report
        )));
    }
    let (net, hw) = load_configs(&args.net, &args.hw)?;
    let mode = match &args.mode {
        Some(name) => MappingMode::parse(name)
            .ok_or_else(|| Failure::usage(format!("unknown mode '{name}', expected sf, sc or ws")))?,
        None => hw.default_mode,
    };
    let params = resolve_params(args.weights.as_ref(), &net, args.seed)?;
    let frames = input_frames(&args.input, args.frames, &net, args.seed)?;

    let pipeline = Pipeline::build(&net, &hw, mode, &params).map_err(Failure::config)?;
    let (outputs, metrics) = if args.sequential {
        pipeline
            .run_sequential(frames, args.cpu_only)
            .map_err(Failure::runtime)?
    } else {
        pipeline.run_stream(frames).map_err(Failure::runtime)?
    };

    let report = Report::new(mode.name(), args.seed, &metrics, &outputs);
    eprintln!(
        "{} {} frames in {:.1} ms: {:.1} frames/s, mean latency {:.2} ms, utilization [{}]",
        if args.sequential { "sequential" } else { "pipelined" },
        metrics.frames,
        report.wall_ms,
        report.throughput_fps,
        report.latency_ms_mean,
        report
            .per_cluster_utilization
            .iter()
            .map(|u| format!("{:.1}%", u * 100.0))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let text = if args.report == "json" {
        report.to_json()
    } else {
        Report::to_csv(std::slice::from_ref(&report))
    };
    write_report(&text, args.out.as_ref())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.report != "json" && args.report != "csv" {
        return Err(Failure::usage(format!(
            "unknown report format '{}', expected json or csv",
            args.report
        )));
    }
    let (net, hw) = load_configs(&args.net, &args.hw)?;
    let sc_hw = match &args.sc_hw {
        Some(path) => parse_hw_config(path).map_err(Failure::config)?,
        None => hw.clone(),
    };
    let params = resolve_params(args.weights.as_ref(), &net, args.seed)?;
    let frames = synthetic_frames(
        args.seed,
        args.frames,
        net.input.channels,
        net.input.height,
        net.input.width,
    );

    let mut reports = Vec::new();
    for (mode, hw_for_mode) in [
        (MappingMode::Sf, &hw),
        (MappingMode::Sc, &sc_hw),
        (MappingMode::Ws, &hw),
    ] {
        let pipeline =
            Pipeline::build(&net, hw_for_mode, mode, &params).map_err(Failure::config)?;
        let (outputs, metrics) = pipeline
            .run_stream(frames.clone())
            .map_err(Failure::runtime)?;
        reports.push(Report::new(mode.name(), args.seed, &metrics, &outputs));
    }

    println!(
        "{:<5} {:>7} {:>10} {:>9} {:>12} {:>10}  per_cluster_util",
        "mode", "frames", "wall_ms", "fps", "latency_ms", "mean_util"
    );
    for r in &reports {
        let mean_util = if r.per_cluster_utilization.is_empty() {
            0.0
        } else {
            r.per_cluster_utilization.iter().sum::<f64>()
                / r.per_cluster_utilization.len() as f64
        };
        println!(
            "{:<5} {:>7} {:>10.1} {:>9.1} {:>12.2} {:>9.1}%  [{}]",
            r.mode,
            r.frames,
            r.wall_ms,
            r.throughput_fps,
            r.latency_ms_mean,
            mean_util * 100.0,
            r.per_cluster_utilization
                .iter()
                .map(|u| format!("{:.1}%", u * 100.0))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    if let Some(out) = &args.out {
        let text = if args.report == "json" {
            serde_json::to_string_pretty(&reports).expect("reports serialize")
        } else {
            Report::to_csv(&reports)
        };
        write_report(&text, Some(out))?;
    }
    Ok(())
}

fn cmd_gen_weights(args: GenWeightsArgs) -> Result<(), Failure> {
    let net = parse_network_cfg(&args.net).map_err(Failure::config)?;
    let params = generate_params(&net, args.seed);
    save_weights(&args.out, &net, &params).map_err(Failure::runtime)?;
    eprintln!(
        "wrote {} parameters ({} bytes) to {}",
        net.parameter_count(),
        8 + net.parameter_count() * 4,
        args.out.display()
    );
    Ok(())
}
