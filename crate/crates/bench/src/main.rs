use clap::{Args, Parser, Subcommand};
use hmclab::kernel::{run_chain_with, ChainOptions};
use hmclab::target::TargetConfig;
use hmclab::tuning::{best_hmc_params, check_theorem_constraints, mala_params, TheoryParams};
use hmclab::{HmcConfig, HmcError, Result};
use hmclab_bench::experiments::*;
use hmclab_bench::output::{create_parent, csv_err, emit, sidecar_path, write_sidecar};
use hmclab_bench::{ExperimentConfig, ExperimentKind};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "hmclab", version, about = "Metropolized HMC sampling, tuning and scaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file: a target description, or an experiment for `experiment`.
    #[arg(long)]
    config: PathBuf,
    /// CSV output; a JSON sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and write its positions.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        step_size: f64,
        #[arg(long, default_value_t = 1)]
        n_leapfrog: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long)]
        lazy: bool,
        /// Starting position, comma separated; defaults to the origin.
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
    },
    /// Print theory-driven step size and trajectory length as JSON.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        warmness: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        c_prime: f64,
        #[arg(long, default_value_t = 1.0)]
        psi: f64,
        /// Hessian-Lipschitz coefficient, when the target declares none.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        mala: bool,
    },
    /// Partition norms of the third derivative at random points.
    Tensor {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
    },
    /// KL between proposals from nearby starts.
    Overlap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 4)]
        max_leapfrog: usize,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
    },
    /// Moment checks; prints one JSON report per line.
    Lemmas {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        ell: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value_t = 0.1)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 100_000)]
        warmup: usize,
    },
    /// Run the experiment described by the config file.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
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

fn out_path(common: &Common, fallback: Option<&str>) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| fallback.map(PathBuf::from))
        .ok_or_else(|| HmcError::Config("no output path: pass --out".into()))
}

/// Experiment config around a single target file.
fn single_target(common: &Common, kind: ExperimentKind) -> Result<(ExperimentConfig, String)> {
    let text = std::fs::read_to_string(&common.config)?;
    let target = TargetConfig::from_toml_str(&text)?;
    let d = target.build()?.dim();
    let mut cfg = ExperimentConfig::new(kind, vec![d]);
    cfg.target = Some(target);
    cfg.seeds = vec![common.seed.unwrap_or(0)];
    Ok((cfg, text))
}

fn finish<R: Serialize, S: Serialize>(out: &Path, rows: &[R], summary: &S, text: &str, start: Instant) -> Result<()> {
    emit(out, rows, summary, text, start.elapsed())?;
    eprintln!("wrote {} and {}", out.display(), sidecar_path(out).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Sample {
            common,
            step_size,
            n_leapfrog,
            steps,
            thin,
            lazy,
            start: q0,
        } => {
            let text = std::fs::read_to_string(&common.config)?;
            let target = TargetConfig::from_toml_str(&text)?.build()?;
            let hc = HmcConfig::new(step_size, n_leapfrog)
                .with_lazy(lazy)
                .with_seed(common.seed.unwrap_or(0));
            let q0 = q0.unwrap_or_else(|| vec![0.0; target.dim()]);
            let out = out_path(&common, None)?;
            create_parent(&out)?;
            let mut w = csv::Writer::from_path(&out).map_err(csv_err)?;
            let mut header = vec!["step".to_string(), "accepted".into(), "delta_h".into()];
            header.extend((1..=target.dim()).map(|i| format!("q_{i}")));
            w.write_record(&header).map_err(csv_err)?;
            let mut write_err = None;
            let trace = run_chain_with(target.as_ref(), &hc, &q0, steps, ChainOptions { thin: 0, stream: 0 }, |i, q, info| {
                if (i + 1) % thin.max(1) == 0 && write_err.is_none() {
                    let mut rec = vec![(i + 1).to_string(), info.accepted.to_string(), info.delta_h.to_string()];
                    rec.extend(q.iter().map(|x| x.to_string()));
                    write_err = w.write_record(&rec).err();
                }
            })?;
            if let Some(e) = write_err {
                return Err(csv_err(e));
            }
            w.flush()?;
            let summary = SampleSummary {
                config: hc,
                acceptance_rate: trace.acceptance_rate(),
                gradient_evals: trace.gradient_evals,
                divergences: trace.divergences,
            };
            let full = format!("{text}\n{hc:?} steps={steps} thin={thin} start={q0:?}");
            write_sidecar(&out, &summary, &full, start.elapsed())?;
            eprintln!("wrote {} and {}", out.display(), sidecar_path(&out).display());
            Ok(())
        }
        Command::Tune {
            common,
            epsilon,
            warmness,
            c,
            c_prime,
            psi,
            gamma,
            mala,
        } => {
            let text = std::fs::read_to_string(&common.config)?;
            let target = TargetConfig::from_toml_str(&text)?.build()?;
            let gamma = gamma.or(target.hessian_lipschitz()).ok_or_else(|| {
                HmcError::Precondition("the target declares no Hessian-Lipschitz coefficient; pass --gamma".into())
            })?;
            let mut tp = TheoryParams::new(target.smoothness(), gamma, target.dim(), warmness, epsilon);
            tp.c = c;
            tp.c_prime = c_prime;
            tp.psi = psi;
            let tuned = if mala { mala_params(&tp)? } else { best_hmc_params(&tp)? };
            let check = check_theorem_constraints(tuned.step_size, tuned.n_leapfrog, &tp, tuned.ell);
            let json = serde_json::json!({ "theory": tp, "tuned": tuned, "constraints": check });
            let s = serde_json::to_string_pretty(&json).map_err(|e| HmcError::Io(e.to_string()))?;
            match &common.out {
                Some(p) => std::fs::write(p, s + "\n")?,
                None => println!("{s}"),
            }
            Ok(())
        }
        Command::Tensor {
            common,
            points,
            restarts,
        } => {
            let (mut cfg, text) = single_target(&common, ExperimentKind::TensorReport)?;
            cfg.tensor.points = points;
            cfg.tensor.restarts = restarts;
            let rows = run_tensor_report(&cfg)?;
            finish(&out_path(&common, None)?, &rows, &(), &full_text(&text, &cfg), start)
        }
        Command::Overlap {
            common,
            instances,
            max_leapfrog,
            n_mc,
        } => {
            let (mut cfg, text) = single_target(&common, ExperimentKind::OverlapCheck)?;
            cfg.overlap.instances = instances;
            cfg.overlap.max_leapfrog = max_leapfrog;
            cfg.overlap.n_mc = n_mc;
            let rows = run_overlap_check(&cfg)?;
            finish(&out_path(&common, None)?, &rows, &(), &full_text(&text, &cfg), start)
        }
        Command::Lemmas {
            common,
            ell,
            eta,
            t,
            n_mc,
            warmup,
        } => {
            let (mut cfg, text) = single_target(&common, ExperimentKind::LemmaSuite)?;
            cfg.lemmas.ells = ell;
            cfg.lemmas.step_size = eta;
            cfg.lemmas.time = t;
            cfg.lemmas.n_mc = n_mc;
            cfg.lemmas.warmup = warmup;
            let rows = run_lemma_suite(&cfg)?;
            for r in &rows {
                println!("{}", serde_json::to_string(r).map_err(|e| HmcError::Io(e.to_string()))?);
            }
            if let Some(out) = &common.out {
                finish(out, &rows, &(), &full_text(&text, &cfg), start)?;
            }
            Ok(())
        }
        Command::Experiment { common } => {
            let mut cfg = ExperimentConfig::from_path(&common.config)?;
            if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            let out = out_path(&common, cfg.output.take().as_deref())?;
            // the hash covers what was run, not where it was written
            let text = cfg.to_toml_string();
            match cfg.experiment {
                ExperimentKind::AcceptanceScaling => {
                    let (rows, s) = run_acceptance_scaling(&cfg)?;
                    finish(&out, &rows, &s, &text, start)
                }
                ExperimentKind::EnergyScaling => {
                    let (rows, s) = run_energy_scaling(&cfg)?;
                    finish(&out, &rows, &s, &text, start)
                }
                ExperimentKind::MixingEstimate => {
                    let (rows, s) = run_mixing_estimate(&cfg)?;
                    finish(&out, &rows, &s, &text, start)
                }
                ExperimentKind::MalaVsHmc => {
                    let (rows, s) = run_mala_vs_hmc(&cfg)?;
                    finish(&out, &rows, &s, &text, start)
                }
                ExperimentKind::OverlapCheck => finish(&out, &run_overlap_check(&cfg)?, &(), &text, start),
                ExperimentKind::LemmaSuite => finish(&out, &run_lemma_suite(&cfg)?, &(), &text, start),
                ExperimentKind::TensorReport => finish(&out, &run_tensor_report(&cfg)?, &(), &text, start),
            }
        }
    }
}

fn full_text(target_text: &str, cfg: &ExperimentConfig) -> String {
    format!("{target_text}\n{}", cfg.to_toml_string())
}

#[derive(Serialize)]
struct SampleSummary {
    config: HmcConfig,
    acceptance_rate: f64,
    gradient_evals: u64,
    divergences: u64,
}
