//! Command line for quantized line spectral estimation: Monte Carlo sweeps,
//! single-shot estimation from a sample file, and CRB curves.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use valse_ep::crb::{crb_freq, crb_freq_trace, fim_quantized, fim_unquantized};
use valse_ep::mmse::Channel;
use valse_ep::quantizer::QuantizerSpec;
use valse_ep::runner::{run, RunConfig};
use valse_ep::signal::GroundTruth;
use valse_ep_cli::experiment::{run_experiment, write_outputs};
use valse_ep_cli::samples::read_samples;
use valse_ep_cli::scenario::{trial_rng, BitDepth, ScenarioConfig};

#[derive(Parser)]
#[command(name = "valse-ep", version, about = "Line spectral estimation from quantized samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario sweep and write CSV metrics.
    Simulate(SimulateArgs),
    /// Estimate frequencies and amplitudes from a sample file.
    Estimate(EstimateArgs),
    /// Emit Cramér-Rao bound curves as CSV.
    Crb(CrbArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for trials.csv, aggregates.csv, metadata.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the trial count from the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample file: one `re,im` pair per line.
    #[arg(long)]
    input: PathBuf,
    /// Bit depth of the quantizer the samples went through, or `inf`.
    #[arg(long, default_value = "inf")]
    bits: BitDepth,
    /// Signal standard deviation the quantizer was built with.
    #[arg(long)]
    sigma_z: Option<f64>,
    /// Known noise variance: fixes sigma2 instead of learning it.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Emit the result as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CrbArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// SNR grid in dB.
    #[arg(long, value_delimiter = ',', required = true)]
    snr_db: Vec<f64>,
    /// Bit depth or `inf`.
    #[arg(long, default_value = "inf")]
    bits: BitDepth,
    /// Fixed true frequencies (defaults to a seeded separated draw).
    #[arg(long, value_delimiter = ',')]
    freqs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Crb(args) => run_crb(args),
    };
    match code {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            // configuration and input-file problems exit with 2
            let text = format!("{e:#}");
            if text.contains("invalid scenario config")
                || text.contains("cannot read")
                || text.contains("expected `re,im`")
                || text.contains("no samples found")
            {
                std::process::exit(2);
            }
            std::process::exit(1);
        }
    }
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read {}", args.config.display()))?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    let started = std::time::Instant::now();
    let (rows, aggregates) = run_experiment(&cfg)?;
    write_outputs(
        &args.out,
        &cfg,
        &rows,
        &aggregates,
        started.elapsed().as_secs_f64(),
    )?;
    for agg in &aggregates {
        println!(
            "{}: P(K=K̂)={:.2} nmse={:.2} dB dnmse={:.2} dB freq_mse={} dB iters(med)={}",
            agg.scenario,
            agg.p_correct,
            agg.nmse_db,
            agg.dnmse_db,
            agg.freq_mse_db
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "n/a".into()),
            agg.median_iterations
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let y = read_samples(&args.input)?;
    let channel = match args.bits {
        BitDepth::Inf => Channel::Identity,
        BitDepth::Finite(b) => {
            let sigma_z = args
                .sigma_z
                .context("--sigma-z is required for a finite bit depth")?;
            Channel::Quantized(QuantizerSpec::build_uniform(b, sigma_z)?)
        }
    };
    let cfg = RunConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        learn_noise: args.sigma2.is_none(),
        sigma2: args.sigma2,
        ..Default::default()
    };
    let (estimate, trace) = run(&y, &channel, &cfg)?;

    if args.json {
        let freqs = estimate.freqs.clone();
        let weights: Vec<[f64; 2]> = estimate.weights.iter().map(|w| [w.re, w.im]).collect();
        let value = serde_json::json!({
            "model_order": estimate.model_order,
            "freqs": freqs,
            "weights": weights,
            "support": estimate.support,
            "iterations": trace.len(),
            "converged": trace.converged,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("model_order: {}", estimate.model_order);
        println!("iterations: {} (converged: {})", trace.len(), trace.converged);
        for (i, (f, w)) in estimate.freqs.iter().zip(&estimate.weights).enumerate() {
            println!(
                "component {i}: freq {f:+.6} rad, weight {:+.6}{:+.6}j (|w| {:.6})",
                w.re,
                w.im,
                w.norm()
            );
        }
    }
    Ok(())
}

fn run_crb(args: CrbArgs) -> Result<()> {
    if args.k == 0 || args.n <= args.k {
        bail!("need 0 < k < n");
    }
    let freqs = match &args.freqs {
        Some(f) => {
            if f.len() != args.k {
                bail!("--freqs must have length k = {}", args.k);
            }
            f.clone()
        }
        None => {
            // seeded separated draw, unit magnitudes
            let cfg = ScenarioConfig {
                n: args.n,
                k: args.k,
                snr_db: vec![0.0],
                bits: vec![BitDepth::Inf],
                trials: 1,
                seed: args.seed,
                algorithms: vec![valse_ep_cli::scenario::Algorithm::ValseEp],
                freqs: None,
                weight_magnitude: valse_ep_cli::scenario::WeightMagnitude::Unit,
                max_iters: 1,
                tol: 1e-6,
            };
            let mut rng = trial_rng(args.seed, 0);
            valse_ep_cli::scenario::draw_truth(&cfg, &mut rng)?.freqs
        }
    };
    let weights = freqs
        .iter()
        .enumerate()
        .map(|(i, _)| num_complex::Complex64::from_polar(1.0, 0.4 * i as f64))
        .collect();
    let truth = GroundTruth::new(freqs, weights)?;
    let signal = valse_ep::signal::synthesize(&truth, args.n)?;
    let spec = match args.bits {
        BitDepth::Inf => None,
        BitDepth::Finite(b) => Some(QuantizerSpec::build_uniform(b, (args.k as f64).sqrt())?),
    };

    let mut w: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(w, "n,k,bits,snr_db,sigma2,crb_freq_trace,crb_freq_trace_db")?;
    for &snr_db in &args.snr_db {
        let sigma2 = signal.energy() / (args.n as f64 * 10f64.powf(snr_db / 10.0));
        let fim = match &spec {
            Some(s) => fim_quantized(&truth, args.n, s, sigma2)?,
            None => fim_unquantized(&truth, args.n, sigma2)?,
        };
        let crb = crb_freq(&fim, args.k)?;
        let trace = crb_freq_trace(&crb);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            args.n,
            args.k,
            args.bits,
            snr_db,
            sigma2,
            trace,
            10.0 * trace.log10()
        )?;
    }
    Ok(())
}
