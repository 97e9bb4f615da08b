//! `fgb estimate | bench | check`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric
//! non-convergence or saturation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use fgb_core::densities::TargetDensity;

use crate::bench::{self, Method};
use crate::check::run_checks;
use crate::config::{RunConfig, Study};
use crate::error::{AppError, AppResult};
use crate::model_io::save_model;
use crate::records::{
    fmt6, write_batch_scatter, write_json, write_reps_table, write_scatter, write_summary_table, BenchRecord,
    EstimateRecord, Provenance, TrainRecord,
};

/// `println!` that ignores a closed stdout (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const CONFIG_HELP: &str = "\
CONFIG FILE (TOML; required keys marked *):
  seed = 0              master seed
  n1 = *, n2 = *        samples drawn from q1 and q2 before splitting
  split = 0.5           training fraction of each sample set
  restarts = 1          training runs per estimate, lowest final objective kept
  swap = false          estimate with q1 and q2 exchanged
  output = \"fgb-out\"    output directory (--out wins)
  [q1], [q2] *          kind = \"gaussian\" (mean, var)
                        kind = \"rings\" (dim, preset = first|second|demo_second,
                                        or mu1, mu2, radius, thickness)
                        kind = \"t_mixture\" (weights, means, scale, nu)
                        augment = 0 extra standard-normal coordinates
  [flow]                layers = 4, hidden = [64, 64], mask = \"halves\"|\"interleaved\"
  [train]               beta1 = 0.05, beta2 = 0.05, eta_phi = 1e-3, eta_r = 1e-2,
                        eps1 = 5e-3, eps2 = 5e-3, max_epochs = 500, minibatch (off),
                        grad_clip = 100, update_order = \"simultaneous\"|\"alternating\"
  [bench]               study = \"repetitions\"|\"fixed_flow\"|\"improvement\",
                        methods = [\"fgb\", \"optimal_identity\", \"geometric\", \"is\", \"ris\"],
                        reps = 100, n_prime = 1000

All reported logarithms are natural unless --log10 is given, which only
changes what is printed.";

#[derive(Debug, Parser)]
#[command(name = "fgb", version, about = "Bridge sampling with f-GAN trained normalizing flows", after_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration file.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for benchmark repetitions; 1 is the reproducibility baseline.
    #[arg(long, global = true, value_name = "N", env = "FGB_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print log ratios in base 10 (files stay in natural log).
    #[arg(long, global = true)]
    pub log10: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a flow, estimate log(Z1/Z2) on held-out samples and write records.
    Estimate,
    /// Run the benchmark study of the configuration.
    Bench,
    /// Run the fast invariant suite.
    Check {
        /// Also validate this saved model file.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
}

fn display_log(x: f64, log10: bool) -> String {
    if log10 {
        format!("{} (log10)", fmt6(Some(x / std::f64::consts::LN_10)))
    } else {
        fmt6(Some(x))
    }
}

fn load_config(cli: &Cli) -> AppResult<RunConfig> {
    let path = cli.config.as_deref().ok_or_else(|| AppError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> AppResult<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| "fgb-out".into());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn estimate(cli: &Cli) -> AppResult<i32> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let (q1, q2) = cfg.targets()?;
    let mut rng = bench::rep_rng(cfg.seed, 0);
    let (n1, n2) = cfg.sizes();
    let s1 = fgb_core::densities::sample(&*q1, &mut rng, n1)?;
    let s2 = fgb_core::densities::sample(&*q2, &mut rng, n2)?;
    let out = bench::run_fgb(&cfg, &*q1, &*q2, &s1, &s2, &mut rng)?;
    let truth = bench::true_log_ratio(&*q1, &*q2).ok().map(|t| cfg.orient(t));

    let record = EstimateRecord {
        provenance: Provenance::new(cfg.hash(), cfg.seed),
        log_r_hat: cfg.orient(out.bridge.log_r_hat),
        log_r_truth: truth,
        re2_estimate: out.bridge.re2_estimate,
        saturated: out.bridge.saturated,
        bridge_converged: out.bridge.converged,
        bridge_iterations: out.bridge.iterations,
        n_train: [out.train1.len(), out.train2.len()],
        n_estimate: [out.estimate1.len(), out.estimate2.len()],
        train: TrainRecord::new(&out.report, |r| cfg.orient(r)),
    };
    write_json(&dir.join("result.json"), &record)?;
    save_model(&out.model, &dir.join("model.txt"))?;
    let (moved, _) = out.model.forward_batch(out.estimate1.as_slice())?;
    write_batch_scatter(&dir.join("scatter_q1.csv"), &out.estimate1)?;
    write_scatter(&dir.join("scatter_transformed_q1.csv"), &moved, q1.dim())?;
    write_batch_scatter(&dir.join("scatter_q2.csv"), &out.estimate2)?;

    say!("log_r_hat   {}", display_log(record.log_r_hat, cli.log10));
    if let Some(t) = truth {
        say!("log_r_true  {}", display_log(t, cli.log10));
    }
    say!("re2         {}", fmt6(record.re2_estimate));
    say!("training    {} epochs, stopped by {}", record.train.epochs_run, record.train.stopped_by);
    say!("records in  {}", dir.display());
    if out.bridge.saturated || !out.bridge.converged {
        eprintln!("warning: estimate {}", if out.bridge.saturated { "saturated" } else { "did not converge" });
        return Ok(2);
    }
    Ok(0)
}

fn print_summary_line(s: &bench::RepetitionSummary) {
    say!(
        "{:<18} mc_mse {} (se {})  mean_re2 {} (se {})  failures {}/{}",
        s.method,
        fmt6(s.mc_mse.map(|m| m.mean)),
        fmt6(s.mc_mse.map(|m| m.se)),
        fmt6(s.mean_re2.map(|m| m.mean)),
        fmt6(s.mean_re2.map(|m| m.se)),
        s.failures,
        s.reps.len()
    );
}

fn bench_cmd(cli: &Cli) -> AppResult<i32> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let provenance = Provenance::new(cfg.hash(), cfg.seed);
    let failures = match cfg.bench.study {
        Study::Repetitions => {
            let methods = cfg.bench.methods.iter().map(|m| Method::from_name(m)).collect::<AppResult<Vec<_>>>()?;
            let summaries = methods
                .iter()
                .map(|m| bench::run_repetitions(&cfg, *m, cfg.bench.reps))
                .collect::<AppResult<Vec<_>>>()?;
            let refs: Vec<_> = summaries.iter().collect();
            write_summary_table(&dir.join("summary.csv"), &refs)?;
            write_reps_table(&dir.join("reps.csv"), &refs)?;
            write_json(&dir.join("bench.json"), &BenchRecord { provenance, study: "repetitions", result: &summaries })?;
            summaries.iter().for_each(print_summary_line);
            summaries.iter().map(|s| s.failures).sum::<usize>()
        }
        Study::FixedFlow => {
            let (trained, study) = bench::run_fixed_flow(&cfg)?;
            let refs = [&study.summary];
            write_summary_table(&dir.join("summary.csv"), &refs)?;
            write_reps_table(&dir.join("reps.csv"), &refs)?;
            save_model(&trained.model, &dir.join("model.txt"))?;
            #[derive(serde::Serialize)]
            struct FixedFlowRecord<'a> {
                n_prime: usize,
                mean_re2: Option<f64>,
                mc_mse: Option<f64>,
                re2_over_mse: Option<f64>,
                train: TrainRecord,
                summary: &'a bench::RepetitionSummary,
            }
            let record = FixedFlowRecord {
                n_prime: study.n_prime,
                mean_re2: study.summary.mean_re2.map(|m| m.mean),
                mc_mse: study.summary.mc_mse.map(|m| m.mean),
                re2_over_mse: study.agreement_ratio(),
                train: TrainRecord::new(&trained.report, |r| cfg.orient(r)),
                summary: &study.summary,
            };
            write_json(&dir.join("bench.json"), &BenchRecord { provenance, study: "fixed_flow", result: &record })?;
            print_summary_line(&study.summary);
            say!("mean_re2 / mc_mse = {}", fmt6(study.agreement_ratio()));
            study.summary.failures
        }
        Study::Improvement => {
            let study = bench::improvement_study(&cfg)?;
            write_json(&dir.join("bench.json"), &BenchRecord { provenance, study: "improvement", result: &study })?;
            say!("trained RE² <= identity RE² in {}/{} repetitions ({} failed)", study.wins, study.reps.len(), study.failures);
            study.failures
        }
    };
    say!("records in {}", dir.display());
    Ok(if failures == 0 { 0 } else { 2 })
}

fn check_cmd(model: Option<&Path>) -> i32 {
    let results = run_checks(model);
    for r in &results {
        say!("{} {:<22} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        0
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> i32 {
    let work = || -> AppResult<i32> {
        match &cli.command {
            Command::Estimate => estimate(cli),
            Command::Bench => bench_cmd(cli),
            Command::Check { model } => Ok(check_cmd(model.as_deref())),
        }
    };
    let result = match cli.threads {
        Some(0) => Err(AppError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AppError::Config(format!("cannot build thread pool: {e}")))
            .and_then(|pool| pool.install(work)),
        None => work(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}
