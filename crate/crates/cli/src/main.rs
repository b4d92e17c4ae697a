//! Command-line front end: experiment dispatch, dataset export, gradient and
//! estimator verification, and report rendering.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;

use repinfo::config::parse_config;
use repinfo::error::Error;
use repinfo::harness::{
    default_oracle_probe, run_coarse_variant, run_experiment, run_oracle_trials,
    run_pretraining_sweep, run_seed_sweep, ExperimentPlan, RunRecord, TrialKind,
};
use repinfo::nn::{gradient_check, standard_checks};
use repinfo::probe::capture_activations;
use repinfo::report::{
    begin_run, load_run, render_aggregate_curves, render_info_curves, render_scatter,
    summarize_pretrain, summarize_runs, write_run_into, FigureSpec, RunStore,
};
use repinfo::rng::{derive_seed, rng_from_seed, tag};
use repinfo::task::{generate, generate_samples, CBConfig, Dataset};

#[derive(Parser)]
#[command(
    name = "repinfo",
    version,
    about = "Train small dense networks on the checkerboard task and measure\nhow much label information a learned decoder can extract per layer."
)]
struct Cli {
    /// Output root directory (or env REPINFO_OUT; default ./runs)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel jobs (default: machine parallelism)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check analytic gradients against central differences for every layer kind
    Gradcheck {
        /// Finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Initialization seed for the checked networks
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a checkerboard dataset and write it as CSV
    Generate {
        /// Number of classes
        #[arg(long)]
        n: usize,
        /// Number of samples
        #[arg(long)]
        samples: usize,
        /// Gaussian noise on the checkerboard block
        #[arg(long, default_value_t = 0.1)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
        /// Group directions into this many coarse classes (must divide n)
        #[arg(long)]
        coarse_groups: Option<usize>,
        /// Write to this file instead of stdout
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Run a configured experiment; several seeds make it a sweep
    Experiment {
        /// Preset name or path to a JSON config
        #[arg(long)]
        config: String,
        /// Replace the config's seed list with 0..k
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Sweep pretraining lengths and compare final information and accuracy
    PretrainSweep {
        /// Preset name or path to a JSON config
        #[arg(long)]
        config: String,
        /// Comma-separated pretraining epoch counts, e.g. 0,1,2,5,10,20
        #[arg(long, value_delimiter = ',', required = true)]
        epochs_list: Vec<usize>,
        /// Replace the config's seed list with 0..k
        #[arg(long)]
        seeds: Option<usize>,
        /// Keep the config's probe schedule instead of probing endpoints only
        #[arg(long)]
        full_curves: bool,
    },
    /// Train on coarse labels, probing both coarse and fine information
    Coarse {
        /// Preset name or path to a JSON config (label_kind_main must be coarse)
        #[arg(long)]
        config: String,
        /// Replace the config's seed list with 0..k
        #[arg(long)]
        seeds: Option<usize>,
        /// Override the training batch size
        #[arg(long)]
        batch_size: Option<usize>,
        /// Override the training learning rate
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Validate the estimator against exact MI on random discrete joints
    Oracle {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Decoder training samples per trial
        #[arg(long)]
        n_train: Option<usize>,
        /// Held-out samples per trial
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Render figures or a summary table from a saved run directory
    Report {
        /// Path to a run directory
        #[arg(long)]
        run: PathBuf,
        /// svg (figures) or csv (summary table)
        #[arg(long, default_value = "svg")]
        format: String,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Input(_) | Error::Shape(_) | Error::Parse(_) => 1,
        Error::Numerical(_) | Error::State(_) => 2,
        Error::Io { .. } => 3,
    }
}

fn out_root(flag: &Option<PathBuf>, config_dir: Option<&str>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("REPINFO_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = config_dir {
        return PathBuf::from(dir);
    }
    PathBuf::from("./runs")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Gradcheck { step, seed } => cmd_gradcheck(*step, *seed),
        Command::Generate {
            n,
            samples,
            noise_std,
            seed,
            train_fraction,
            coarse_groups,
            file,
        } => cmd_generate(
            *n,
            *samples,
            *noise_std,
            *seed,
            *train_fraction,
            *coarse_groups,
            file,
        ),
        Command::Experiment { config, seeds } => cmd_experiment(cli, config, *seeds),
        Command::PretrainSweep {
            config,
            epochs_list,
            seeds,
            full_curves,
        } => cmd_pretrain_sweep(cli, config, epochs_list, *seeds, *full_curves),
        Command::Coarse {
            config,
            seeds,
            batch_size,
            learning_rate,
        } => cmd_coarse(cli, config, *seeds, *batch_size, *learning_rate),
        Command::Oracle {
            trials,
            seed,
            n_train,
            n_test,
        } => cmd_oracle(*trials, *seed, *n_train, *n_test),
        Command::Report { run, format } => cmd_report(run, format),
    }
}

fn cmd_gradcheck(step: f64, seed: u64) -> Result<u8, Error> {
    let start = std::time::Instant::now();
    let mut all_ok = true;
    let mut worst = 0.0f64;
    for case in standard_checks() {
        let err = gradient_check(&case.spec, seed, step)?;
        let ok = err < case.threshold;
        all_ok &= ok;
        worst = worst.max(err);
        println!(
            "{:<12} max relative error {err:.3e} (threshold {:.0e}) {}",
            case.name,
            case.threshold,
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!(
        "max relative error {worst:.3e} over all cases in {:.2}s",
        start.elapsed().as_secs_f64()
    );
    Ok(if all_ok { 0 } else { 2 })
}

fn cmd_generate(
    n: usize,
    samples: usize,
    noise_std: f64,
    seed: u64,
    train_fraction: f64,
    coarse_groups: Option<usize>,
    file: &Option<PathBuf>,
) -> Result<u8, Error> {
    let config = CBConfig {
        n,
        num_samples: samples,
        noise_std,
        seed,
        train_fraction,
        coarse_groups,
    };
    let dataset: Dataset<f64> = generate(&config)?;
    match file {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            dataset.write_csv(std::io::BufWriter::new(f))?;
            println!("wrote {} samples to {}", samples, path.display());
        }
        None => {
            let stdout = std::io::stdout().lock();
            dataset.write_csv(stdout)?;
        }
    }
    Ok(0)
}

fn apply_seed_override(plan: &mut ExperimentPlan, seeds: Option<usize>) {
    if let Some(k) = seeds {
        plan.seeds = (0..k as u64).collect();
    }
}

/// Save one run into a fresh directory, plan.json first, figures last.
fn persist_run(store: &RunStore, record: &RunRecord) -> Result<PathBuf, Error> {
    let dir = begin_run(store, &record.plan, record.seed)?;
    write_run_into(record, &dir)?;
    if !record.info.is_empty() {
        let svg = render_info_curves(record, &FigureSpec::default())?;
        let path = dir.join("figures").join("info_curves.svg");
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(dir)
}

fn cmd_experiment(cli: &Cli, config: &str, seeds: Option<usize>) -> Result<u8, Error> {
    let (doc, mut plan) = parse_config(config)?;
    apply_seed_override(&mut plan, seeds);
    let root = out_root(&cli.out, doc.output.dir.as_deref());

    if plan.seeds.len() == 1 {
        let store = RunStore::new(&root)?;
        let record = run_experiment(&plan, plan.seeds[0])?;
        let dir = persist_run(&store, &record)?;
        println!("run saved to {}", dir.display());
        let table = summarize_runs(std::slice::from_ref(&record))?;
        print!("{}", table.to_text());
        return Ok(if record.status.is_aborted() { 2 } else { 0 });
    }

    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let store = RunStore::new(root.join(format!("sweep_{stamp}")))?;
    let outcome = run_seed_sweep(&plan)?;
    for record in &outcome.runs {
        let dir = persist_run(&store, record)?;
        println!("seed {} saved to {}", record.seed, dir.display());
    }
    for (seed, reason) in &outcome.aggregate.failures {
        warn!("seed {seed} aborted: {reason}");
    }

    let agg_path = store.root().join("aggregate.json");
    let json = serde_json::to_string_pretty(&outcome.aggregate)
        .map_err(|e| Error::parse(format!("aggregate encode: {e}")))?;
    std::fs::write(&agg_path, json).map_err(|e| Error::io(&agg_path, e))?;
    if !outcome.aggregate.info.is_empty() {
        let svg = render_aggregate_curves(&outcome.aggregate, &plan, &FigureSpec::default())?;
        let path = store.root().join("aggregate_curves.svg");
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    let table = summarize_runs(&outcome.runs)?;
    let csv_path = store.root().join("summary.csv");
    std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    print!("{}", table.to_text());
    println!("sweep saved to {}", store.root().display());

    Ok(if outcome.aggregate.failures.is_empty() {
        0
    } else {
        2
    })
}

fn cmd_pretrain_sweep(
    cli: &Cli,
    config: &str,
    epochs_list: &[usize],
    seeds: Option<usize>,
    full_curves: bool,
) -> Result<u8, Error> {
    let (doc, mut plan) = parse_config(config)?;
    apply_seed_override(&mut plan, seeds);
    if !full_curves {
        // Endpoint measurements only; the sweep re-adds each run's final epoch.
        plan.probe_schedule = Vec::new();
    }
    let root = out_root(&cli.out, doc.output.dir.as_deref());
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let store = RunStore::new(root.join(format!("pretrain_sweep_{stamp}")))?;

    let outcome = run_pretraining_sweep(&plan, epochs_list)?;
    for record in &outcome.runs {
        persist_run(&store, record)?;
    }
    let table = summarize_pretrain(&outcome.points)?;
    let csv_path = store.root().join("pretrain_sweep.csv");
    std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    print!("{}", table.to_text());
    println!("sweep saved to {}", store.root().display());
    Ok(0)
}

fn cmd_coarse(
    cli: &Cli,
    config: &str,
    seeds: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
) -> Result<u8, Error> {
    let (doc, mut plan) = parse_config(config)?;
    apply_seed_override(&mut plan, seeds);
    if let Some(b) = batch_size {
        plan.training.batch_size = b;
    }
    if let Some(lr) = learning_rate {
        plan.training.learning_rate = lr;
    }
    let root = out_root(&cli.out, doc.output.dir.as_deref());
    let store = RunStore::new(&root)?;

    let mut records = Vec::new();
    let mut aborted = false;
    for &seed in &plan.seeds {
        let outcome = run_coarse_variant(&plan, seed)?;
        println!(
            "seed {seed}: fine info peak {:.4} bits, final {:.4} bits, forgetting gap {:.4} bits (batch {}, lr {})",
            outcome.max_fine_iu_bits,
            outcome.final_fine_iu_bits,
            outcome.forgetting_gap_bits,
            plan.training.batch_size,
            plan.training.learning_rate,
        );
        aborted |= outcome.record.status.is_aborted();
        let dir = persist_run(&store, &outcome.record)?;
        println!("seed {seed} saved to {}", dir.display());
        records.push(outcome.record);
    }
    let table = summarize_runs(&records)?;
    print!("{}", table.to_text());
    Ok(if aborted { 2 } else { 0 })
}

fn cmd_oracle(
    trials: usize,
    seed: u64,
    n_train: Option<usize>,
    n_test: Option<usize>,
) -> Result<u8, Error> {
    let (mut probe_config, default_train, default_test) = default_oracle_probe();
    let n_train = n_train.unwrap_or(default_train);
    let n_test = n_test.unwrap_or(default_test);
    probe_config.train_samples = n_train;
    probe_config.test_samples = n_test;

    let reports = run_oracle_trials(trials, seed, &probe_config, n_train, n_test)?;
    let mut all_ok = true;
    for r in &reports {
        let tight = match r.tight_ok {
            Some(true) => " tight=ok",
            Some(false) => " tight=FAIL",
            None => "",
        };
        all_ok &= r.bound_ok && r.tight_ok != Some(false);
        println!(
            "trial {:02} {:<13} exact_mi={:.4} iu_raw={:+.4} bound={}{tight}",
            r.trial,
            r.kind.to_string(),
            r.exact_mi_bits,
            r.iu_raw_bits,
            if r.bound_ok { "ok" } else { "FAIL" },
        );
    }
    let deterministic = reports
        .iter()
        .filter(|r| r.kind == TrialKind::Deterministic)
        .count();
    println!(
        "{}/{} trials satisfied the bound ({deterministic} deterministic trials checked for tightness)",
        reports.iter().filter(|r| r.bound_ok).count(),
        reports.len()
    );
    Ok(if all_ok { 0 } else { 2 })
}

fn cmd_report(run: &Path, format: &str) -> Result<u8, Error> {
    let record = load_run(run)?;
    match format {
        "svg" => {
            if record.info.is_empty() {
                return Err(Error::input(
                    "run has no information estimates to plot; was the probe schedule empty?",
                ));
            }
            let fig_dir = run.join("figures");
            std::fs::create_dir_all(&fig_dir).map_err(|e| Error::io(&fig_dir, e))?;
            let svg = render_info_curves(&record, &FigureSpec::default())?;
            let path = fig_dir.join("info_curves.svg");
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            println!("wrote {}", path.display());

            if let Some((epoch, state)) = record.checkpoints.last() {
                // Re-derive the probe samples this checkpoint was measured
                // on and project its deepest hidden layer.
                let count =
                    600.min(record.plan.probe.train_samples + record.plan.probe.test_samples);
                let mut rng = rng_from_seed(derive_seed(
                    record.seed,
                    &[tag::PROBE_DATA, *epoch as u64],
                ));
                let samples = generate_samples::<f64>(
                    record.plan.task.n,
                    count,
                    record.plan.task.noise_std,
                    record.plan.task.coarse_groups,
                    &mut rng,
                );
                if let Some(&layer) = record.plan.network.probe_points().last() {
                    let acts =
                        capture_activations(state, &samples, &record.plan.task, layer, *epoch)?;
                    let svg = render_scatter(&acts)?;
                    let path = fig_dir.join(format!("scatter_epoch_{epoch:05}.svg"));
                    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
                    println!("wrote {}", path.display());
                }
            } else {
                warn!("no checkpoints in this run; skipping the activation scatter");
            }
            Ok(0)
        }
        "csv" => {
            let table = summarize_runs(std::slice::from_ref(&record))?;
            let path = run.join("summary.csv");
            std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
            print!("{}", table.to_text());
            println!("wrote {}", path.display());
            Ok(0)
        }
        other => Err(Error::input(format!(
            "unknown report format {other:?}; expected svg or csv"
        ))),
    }
}
