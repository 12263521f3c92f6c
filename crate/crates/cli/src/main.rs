mod config;
mod failure;
mod output;
mod serve;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use linex_core::bench::{benchmark, explain_all, sweep, Metric, SweepAxis};
use linex_core::oracle_check::run_oracle_check;
use linex_core::{Method, RngSeed};
use serde_json::json;

use config::{ModelSpec, Overrides, RunConfig};
use failure::Failure;
use output::OutDir;

#[derive(Parser)]
#[command(name = "linex", version, about = "Locally invariant explanations for black-box models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Explain every test example with one method.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Explain the test set under several methods and kernel widths and compare them.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<Method>>,
    },
    /// Check the game against its closed-form equilibria.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Vary one of n, k or tau, averaging over the other two.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<Method>>,
        #[arg(long)]
        axis: Option<SweepAxis>,
    },
    #[command(hide = true)]
    ServeBuiltin {
        /// Model spec as JSON, e.g. {"kind":"linear","weights":[1,2]}.
        #[arg(long)]
        model: String,
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn load(common: &Common, methods: Option<Vec<Method>>, axis: Option<SweepAxis>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if methods.as_ref().is_some_and(|m| m.is_empty()) {
        return Err(Failure::config("--method needs at least one method"));
    }
    cfg.apply(&Overrides { seed: common.seed, out: common.out.clone(), workers: common.workers, methods, axis });
    Ok(cfg)
}

fn pool(cfg: &RunConfig) -> Result<Option<rayon::ThreadPool>, Failure> {
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map(Some).map_err(|e| Failure::config(format!("worker pool: {e}")))
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    let start = Instant::now();
    match command {
        Command::Explain { common, method } => {
            let cfg = load(&common, method.map(|m| vec![m]), None)?;
            let setup = setup::prepare(&cfg)?;
            let out = OutDir::create(&cfg.out)?;
            let pool = pool(&cfg)?;
            let exp = &setup.experiment;
            let explanations = explain_all(exp, &cfg.explain, RngSeed(cfg.seed), pool.as_ref())?;
            out.explanations(exp.test.feature_names(), [(None, explanations.as_slice())])?;
            let non_converged = explanations.iter().filter(|e| !e.converged).count();
            let result = json!({
                "method": cfg.explain.method,
                "examples": explanations.len(),
                "non_converged": non_converged,
                "queries": explanations.iter().map(|e| e.attribution.query_count).sum::<u64>(),
                "model_accuracy": setup.accuracy,
            });
            out.report("explain", json!({ "seconds": start.elapsed().as_secs_f64() }), &cfg, result)?;
            println!("explained {} examples with {} ({non_converged} not converged) -> {}", explanations.len(), cfg.explain.method, cfg.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Benchmark { common, method } => {
            let cfg = load(&common, method, None)?;
            let setup = setup::prepare(&cfg)?;
            let out = OutDir::create(&cfg.out)?;
            let pool = pool(&cfg)?;
            let bench = cfg.bench();
            let report = benchmark(&setup.experiment, &bench, pool.as_ref())?;
            out.benchmark_tables(&report, &bench.methods)?;
            out.explanations(setup.experiment.test.feature_names(), report.runs.iter().map(|r| (Some(r.tau), r.explanations.as_slice())))?;
            let runs: Vec<_> = report
                .runs
                .iter()
                .map(|r| {
                    let mut row = serde_json::Map::new();
                    row.insert("method".into(), json!(r.method));
                    row.insert("tau".into(), json!(r.tau));
                    for m in Metric::ALL {
                        if let Some(v) = m.value(&r.metrics) {
                            row.insert(m.to_string(), json!(v));
                        }
                    }
                    row.insert("non_converged".into(), json!(r.non_converged()));
                    row
                })
                .collect();
            let result = json!({
                "model_accuracy": setup.accuracy,
                "runs": runs,
                "summary": report.summary,
                "comparisons": report.comparisons,
            });
            out.report("benchmark", json!({ "seconds": start.elapsed().as_secs_f64() }), &cfg, result)?;
            for s in &report.summary {
                println!("{:6} {:8} {:.4} ± {:.4}", s.method, s.metric, s.mean, s.sem);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, method, axis } => {
            let cfg = load(&common, method, axis)?;
            let setup = setup::prepare(&cfg)?;
            let out = OutDir::create(&cfg.out)?;
            let pool = pool(&cfg)?;
            let rows = sweep(&setup.experiment, &cfg.sweep(), pool.as_ref())?;
            out.sweep_table(&rows)?;
            out.report("sweep", json!({ "seconds": start.elapsed().as_secs_f64() }), &cfg, json!({ "rows": rows.len() }))?;
            println!("{} sweep rows over {} -> {}", rows.len(), cfg.axis, cfg.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { common, dims, trials } => {
            let mut cfg = load(&common, None, None)?;
            if let Some(d) = dims {
                cfg.oracle.d = d;
            }
            if let Some(t) = trials {
                cfg.oracle.trials = t;
            }
            cfg.oracle.validate()?;
            let out = OutDir::create(&cfg.out)?;
            let report = run_oracle_check(&cfg.oracle)?;
            let timing: Vec<_> = report.per_k.iter().map(|r| json!({ "k": r.k, "seconds": r.elapsed.as_secs_f64() })).collect();
            let per_k: Vec<_> = report
                .per_k
                .iter()
                .map(|r| {
                    json!({
                        "k": r.k,
                        "trials": r.trials,
                        "max_deviation": r.max_deviation,
                        "opposite_sign": r.opposite_sign,
                        "same_sign": r.same_sign,
                        "excluded": r.excluded,
                        "non_converged": r.non_converged,
                        "passed": r.passed,
                    })
                })
                .collect();
            let result = json!({ "per_k": per_k, "vacuous": report.vacuous, "passed": report.passed });
            out.report("oracle-check", json!({ "seconds": start.elapsed().as_secs_f64(), "per_k": timing }), &cfg.oracle, result)?;
            for r in &report.per_k {
                println!(
                    "k={} max deviation {:.3e} (opposite-sign {}, same-sign {}, excluded {}, non-converged {}) {}",
                    r.k,
                    r.max_deviation,
                    r.opposite_sign,
                    r.same_sign,
                    r.excluded,
                    r.non_converged,
                    if r.passed { "PASS" } else { "FAIL" }
                );
            }
            if report.vacuous {
                println!("no trials run; pass is vacuous");
            }
            if report.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(Failure::numeric(format!("deviation above tolerance {:e}", cfg.oracle.tolerance)))
            }
        }
        Command::ServeBuiltin { model, dim } => {
            let spec: ModelSpec = serde_json::from_str(&model).map_err(|e| Failure::config(format!("--model: {e}")))?;
            serve::serve(&spec, dim)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
