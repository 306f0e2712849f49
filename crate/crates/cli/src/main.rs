use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sxmc::completion::{complete, CompletionConfig};
use sxmc::experiment::{
    aggregate, generate_dataset, run_scenario, runtime_probe, write_aggregate_csv, write_metrics_csv,
    write_runtime_csv, AggregateRecord, ScenarioSpec,
};
use sxmc::io::{read_bundle, save_matrix, write_bundle};
use sxmc::metrics::{nmse, rnmse};

const EXIT_INVALID: u8 = 1;
const EXIT_TRIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "sxmc", version, about = "Matrix completion on self-expressive fixed-rank manifolds")]
struct Cli {
    /// Worker threads for trial parallelism (default: logical processors).
    #[arg(long, global = true, env = "SXMC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the observation probability.
    Scenario1(SweepArgs),
    /// Sweep the model SNR of the side information.
    Scenario2(SweepArgs),
    /// Sweep the number of subspaces (and with it the rank).
    Scenario3(SweepArgs),
    /// Time both methods per iteration over a scenario sweep.
    Runtime {
        /// scenario1, scenario2 or scenario3.
        scenario: String,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Write the dataset of one trial to a directory.
    Generate {
        scenario: String,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 0)]
        grid_index: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Complete a dataset written by `generate`.
    Complete {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Rank; defaults to the one in the manifest.
        #[arg(long)]
        rank: Option<usize>,
        /// Run the fixed-rank baseline instead.
        #[arg(long)]
        baseline: bool,
        /// TOML file with completion settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the estimate and per-iteration logs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Add GMM impulsive measurement noise.
    #[arg(long)]
    noisy: bool,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Comma-separated sweep values replacing the preset grid.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, conflicts_with = "proposed_only")]
    baseline_only: bool,
    #[arg(long)]
    proposed_only: bool,
    /// TOML file overriding any scenario field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

struct Failure {
    code: u8,
    msg: String,
}

fn invalid(msg: impl ToString) -> Failure {
    Failure {
        code: EXIT_INVALID,
        msg: msg.to_string(),
    }
}

fn resolve(name: &str, args: &SweepArgs) -> Result<ScenarioSpec, Failure> {
    let mut spec = ScenarioSpec::preset(name).ok_or_else(|| invalid(format!("unknown scenario `{name}`")))?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        spec = spec.merge_toml(&text).map_err(invalid)?;
    }
    if args.noisy {
        spec.noisy = true;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.base_seed = s;
    }
    if let Some(g) = &args.grid {
        spec.grid = g.clone();
    }
    if args.baseline_only {
        spec.run_proposed = false;
    }
    if args.proposed_only {
        spec.run_baseline = false;
    }
    spec.validate().map_err(invalid)?;
    Ok(spec)
}

fn stem(spec: &ScenarioSpec) -> String {
    if spec.noisy {
        format!("{}_noisy", spec.id)
    } else {
        spec.id.clone()
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn print_aggregate(rows: &[AggregateRecord]) {
    println!("{:<9} {:>8} {:>6} {:>12} {:>10} {:>12} {:>5}", "method", "value", "trials", "meanNMSE", "stderr", "meanRNMSE", "fail");
    for r in rows {
        println!(
            "{:<9} {:>8} {:>6} {:>12.4e} {:>10.2e} {:>12.4e} {:>5}",
            r.method, r.value, r.trials, r.mean_nmse, r.stderr_nmse, r.mean_rnmse, r.failures
        );
    }
}

fn sweep(name: &str, args: &SweepArgs) -> Result<(), Failure> {
    let spec = resolve(name, args)?;
    if args.print_config {
        print!("{}", spec.to_toml().map_err(invalid)?);
        return Ok(());
    }
    let records = run_scenario(&spec).map_err(invalid)?;
    let rows = aggregate(&records);
    let io = |e: sxmc::Error| invalid(e);
    write_metrics_csv(create(&args.out_dir, &format!("{}_metrics.csv", stem(&spec)))?, &records).map_err(io)?;
    write_aggregate_csv(create(&args.out_dir, &format!("{}_aggregate.csv", stem(&spec)))?, &rows).map_err(io)?;
    print_aggregate(&rows);
    let failures: Vec<_> = records.iter().filter(|r| r.failed()).collect();
    for r in &failures {
        eprintln!(
            "trial failed: {}={} trial {} {}: {}",
            r.sweep,
            r.value,
            r.trial,
            r.method,
            r.error.as_deref().unwrap_or("")
        );
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_TRIAL_FAILURE,
            msg: format!("{} of {} runs failed", failures.len(), records.len()),
        })
    }
}

fn runtime(name: &str, args: &SweepArgs) -> Result<(), Failure> {
    let spec = resolve(name, args)?;
    let rows = runtime_probe(&spec).map_err(invalid)?;
    write_runtime_csv(create(&args.out_dir, &format!("{}_runtime.csv", stem(&spec)))?, &rows).map_err(invalid)?;
    let mean = |f: &dyn Fn(&sxmc::experiment::RuntimeRecord) -> Option<f64>| {
        let xs: Vec<f64> = rows.iter().filter_map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    if let Some(p) = mean(&|r| r.proposed_seconds_per_iter) {
        println!("proposed: {:.3e} s/iter", p);
    }
    if let Some(b) = mean(&|r| r.baseline_seconds_per_iter) {
        println!("baseline: {:.3e} s/iter", b);
    }
    Ok(())
}

fn generate(name: &str, args: &SweepArgs, grid_index: usize, trial: usize) -> Result<(), Failure> {
    let spec = resolve(name, args)?;
    let bundle = generate_dataset(&spec, grid_index, trial).map_err(invalid)?;
    write_bundle(&args.out_dir, &bundle).map_err(invalid)?;
    println!("wrote {} (seed {})", args.out_dir.display(), bundle.manifest.seed);
    Ok(())
}

fn run_complete(
    data: &Path,
    rank: Option<usize>,
    baseline: bool,
    config: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<(), Failure> {
    let bundle = read_bundle(data).map_err(invalid)?;
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            CompletionConfig::from_toml(&text).map_err(invalid)?
        }
        None => CompletionConfig::default(),
    };
    cfg.r = rank.unwrap_or(bundle.manifest.r);
    cfg.baseline |= baseline;
    cfg.seed = bundle.manifest.seed;
    let res = complete(&bundle.observed, &bundle.pattern, &bundle.bprime, &cfg).map_err(|e| Failure {
        code: EXIT_TRIAL_FAILURE,
        msg: e.to_string(),
    })?;
    let xh = res.x_hat.embed();
    let nm = nmse(&bundle.truth.m, &xh).map_err(invalid)?;
    let rn = rnmse(&bundle.truth.m, &xh, &bundle.pattern).map_err(invalid)?;
    println!("{}", res.dimension);
    println!(
        "termination={} outer={} NMSE={nm:e} RNMSE={rn:e}",
        res.termination,
        res.outer_iterations()
    );
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| invalid(e.to_string()))?;
        save_matrix(&dir.join("Xhat.txt"), &xh).map_err(invalid)?;
        fs::write(dir.join("outer.csv"), res.outer_csv()).map_err(|e| invalid(e.to_string()))?;
        for (k, trace) in res.inner.iter().enumerate() {
            fs::write(dir.join(format!("inner_{k}.csv")), trace.to_csv()).map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(c) = &res.c_hat {
            save_matrix(&dir.join("C.txt"), &c.c).map_err(invalid)?;
            fs::write(dir.join("expression.csv"), c.diagnostics_csv()).map_err(|e| invalid(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let outcome = match &cli.command {
        Command::Scenario1(a) => sweep("scenario1", a),
        Command::Scenario2(a) => sweep("scenario2", a),
        Command::Scenario3(a) => sweep("scenario3", a),
        Command::Runtime { scenario, sweep } => runtime(scenario, sweep),
        Command::Generate {
            scenario,
            sweep,
            grid_index,
            trial,
        } => generate(scenario, sweep, *grid_index, *trial),
        Command::Complete {
            data,
            rank,
            baseline,
            config,
            out_dir,
        } => run_complete(data, *rank, *baseline, config.as_deref(), out_dir.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
