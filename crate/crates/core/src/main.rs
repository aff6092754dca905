use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use diagocp::harness::config::ExperimentConfig;
use diagocp::harness::emit::{self, Format};
use diagocp::harness::{ablate_mu, compare, lr_sweep, run_experiment, verify_hutchinson, verify_lemma1, verify_rate};
use diagocp::{Error, Result};

#[derive(Parser)]
#[command(name = "diagocp", version, about = "Diag-OCP optimizer benchmarks")]
struct Cli {
    /// Worker threads for parallel runs (defaults to all cores).
    #[arg(long, global = true, env = "DIAGOCP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Base seed; overrides the config's `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer over all replicate seeds.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Two-stage learning-rate sweep for the configured optimizer.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Clip-floor ablation at a fixed learning rate.
    AblateMu {
        #[command(flatten)]
        common: Common,
    },
    /// Tune every listed optimizer and compare at the selected rates.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Numerical checks of the optimizer's properties.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
}

#[derive(Subcommand)]
enum Check {
    /// Closed-form step against the inner recursion.
    Lemma1 {
        #[command(flatten)]
        common: Common,
    },
    /// Decay of the best squared gradient norm with the horizon.
    Rate {
        #[command(flatten)]
        common: Common,
    },
    /// Hutchinson diagonal estimate on a fixed dense matrix.
    Hutchinson {
        #[command(flatten)]
        common: Common,
    },
}

enum Outcome {
    Done,
    CheckFailed,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn report<T: Serialize>(dir: &Path, name: &str, value: &T, pass: bool) -> Result<Outcome> {
    prepare_out(dir)?;
    emit::write_json(&dir.join(name), value)?;
    println!("{}", serde_json::to_string(value)?);
    Ok(if pass { Outcome::Done } else { Outcome::CheckFailed })
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Run { common, format } => {
            let cfg = load(&common)?;
            let records = run_experiment(&cfg.run_config())?;
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            emit::emit_results(&records, format, &common.out)?;
        }
        Command::Sweep { common } => {
            let cfg = load(&common)?;
            let result = lr_sweep(&cfg.sweep, &cfg.run_config())?;
            let out = &common.out;
            prepare_out(out)?;
            emit::write_bytes(&out.join("sweep.csv"), &emit::sweep_csv(&result.rows)?)?;
            emit::write_bytes(&out.join("heatmap.csv"), &emit::heatmap_csv(&result.rows)?)?;
            emit::write_json(&out.join("sweep.json"), &result)?;
            emit::emit_results(result.selected_records(), Format::Csv, out)?;
        }
        Command::AblateMu { common } => {
            let cfg = load(&common)?;
            let mut base = cfg.run_config();
            if let Some(lr) = cfg.ablation.lr {
                base.optimizer.lr = lr;
            }
            let result = ablate_mu(&cfg.ablation.mu_values, &base)?;
            let out = &common.out;
            prepare_out(out)?;
            emit::write_bytes(&out.join("ablation.csv"), &emit::ablation_csv(&result.rows)?)?;
            emit::write_json(&out.join("ablation.json"), &result.rows)?;
            emit::emit_results(&result.records, Format::Csv, out)?;
        }
        Command::Compare { common } => {
            let cfg = load(&common)?;
            let result = compare(&cfg.compare.optimizers, &cfg.sweep, &cfg.run_config())?;
            let rows: Vec<_> = result.sweeps.iter().flat_map(|s| s.rows.iter().cloned()).collect();
            let out = &common.out;
            prepare_out(out)?;
            emit::write_bytes(&out.join("sweep.csv"), &emit::sweep_csv(&rows)?)?;
            emit::write_bytes(&out.join("heatmap.csv"), &emit::heatmap_csv(&rows)?)?;
            emit::write_json(&out.join("compare.json"), &result.sweeps)?;
            emit::emit_results(&result.selected_records(), Format::Csv, out)?;
        }
        Command::Verify { check } => {
            return match check {
                Check::Lemma1 { common } => {
                    let cfg = load(&common)?;
                    let r = verify_lemma1(cfg.lemma1.trials, cfg.base_seed, cfg.lemma1.boundary_fraction)?;
                    report(&common.out, "lemma1.json", &r, r.pass)
                }
                Check::Rate { common } => {
                    let cfg = load(&common)?;
                    let rate = &cfg.rate;
                    let r = verify_rate(
                        &rate.problem,
                        &rate.optimizer,
                        &rate.t_list,
                        rate.n_seeds,
                        cfg.base_seed,
                        rate.max_decay_ratio,
                    )?;
                    report(&common.out, "rate.json", &r, r.pass)
                }
                Check::Hutchinson { common } => {
                    let cfg = load(&common)?;
                    let r = verify_hutchinson(&cfg.hutchinson, cfg.base_seed)?;
                    report(&common.out, "hutchinson.json", &r, r.pass)
                }
            };
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let built = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        if let Err(e) = built {
            return fail(&Error::InvalidConfig(format!("thread pool: {e}")));
        }
    }
    match execute(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let line = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{line}");
    ExitCode::FAILURE
}
