#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use rclub::harness::{self, ExperimentConfig, RunOptions};
use rclub::ingest::{self, SvdOptions, DEFAULT_RATING_THRESHOLD};
use rclub::Error;

/// Robust clustering of linear bandits with corrupted users.
#[derive(Parser)]
#[command(name = "rclub", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts, one directory per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (default: config run.out_dir, then $RCLUB_OUT_DIR, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the instance a config describes and save it as JSON.
    GenInstance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Binarize a ratings file and extract rank-d item (and user) features.
    Svd {
        /// user_id,item_id,rating triplets, or a dense matrix with --dense.
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Item feature CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional user feature CSV.
        #[arg(long)]
        user_out: Option<PathBuf>,
        #[arg(long)]
        dense: bool,
        /// Ratings strictly above this become 1.
        #[arg(long, default_value_t = DEFAULT_RATING_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Print the clustering-time diagnostics for a config.
    DiagT0 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failures the user can fix by changing the invocation or its inputs.
fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(Error::InvalidArgument(_) | Error::Config(_) | Error::Parse { .. })
        ) || e.downcast_ref::<UsageError>().is_some()
    })
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    if !path.is_file() {
        return Err(UsageError(format!("config file not found: {}", path.display())).into());
    }
    Ok(ExperimentConfig::load(path)?)
}

fn run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let root = cfg.out_root(out);
    let seeds = seed.map_or_else(|| cfg.run.seeds.clone(), |s| vec![s]);
    for seed in seeds {
        let inst = harness::build_instance(&cfg, seed)?;
        let start = std::time::Instant::now();
        let result = harness::run_on_instance(&cfg, &inst, seed, RunOptions::default())?;
        let diag = harness::diagnostics(&cfg, &inst).map_err(|e| e.to_string());
        let dir = root.join(format!("seed-{seed}"));
        harness::emit_outputs(&result, &cfg, &diag, &dir)
            .with_context(|| format!("writing outputs for seed {seed}"))?;
        for p in &result.policies {
            let auc = p
                .checkpoints
                .last()
                .and_then(|c| c.occud_auc.zip(c.gcud_auc))
                .map(|(o, g)| format!("  occud_auc {o:.3}  gcud_auc {g:.3}"))
                .unwrap_or_default();
            println!(
                "seed {seed}  {:<14} regret {:>12.3}{auc}",
                p.label, p.total_regret
            );
        }
        println!("seed {seed}  outputs in {}", dir.display());
        eprintln!(
            "seed {seed}  wall time {:.2}s",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn svd(
    ratings: &Path,
    rank: usize,
    out: &Path,
    user_out: Option<&Path>,
    dense: bool,
    threshold: f64,
    opts: SvdOptions,
) -> anyhow::Result<()> {
    let matrix = if dense {
        ingest::read_dense_csv(ratings)?
    } else {
        ingest::read_ratings_csv(ratings)?.matrix
    };
    let feedback = ingest::binarize(&matrix, threshold)?;
    let svd = ingest::truncated_svd(feedback.matrix(), rank, &opts)?;
    let items = ingest::scale_rows_to_unit_ball(&svd.item_factors());
    ingest::write_features(out, &items)?;
    if let Some(path) = user_out {
        let users = ingest::scale_rows_to_unit_ball(&svd.user_factors());
        ingest::write_features(path, &users)?;
    }
    println!(
        "{}x{} feedback, rank {rank}, {} iterations, singular values {:?}",
        feedback.n_users(),
        feedback.n_items(),
        svd.iterations,
        svd.singular_values
    );
    Ok(())
}

fn diag_t0(config: &Path, seed: u64) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let inst = harness::build_instance(&cfg, seed)?;
    let d = harness::diagnostics(&cfg, &inst)?;
    println!("lambda_x     {}", d.lambda_x);
    println!("sigma        {}", d.sigma);
    println!("K            {}", d.arms_per_round);
    println!("lambda_tilde {}", d.lambda_tilde);
    match &d.t0 {
        Some(t0) => {
            println!("gamma        {}", t0.params.gamma);
            println!("alpha        {}", t0.params.alpha);
            println!("C            {}", t0.params.corruption);
            println!("delta        {}", t0.params.delta);
            for (i, v) in t0.terms.iter().enumerate() {
                println!("term{}        {v}", i + 1);
            }
            println!("T0           {}", t0.bound);
        }
        None => {
            println!("T0           undefined (needs two or more clusters and a cluster policy)")
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out.as_deref()),
        Command::GenInstance { config, out, seed } => {
            let cfg = load_config(&config)?;
            let inst = harness::build_instance(&cfg, seed)?;
            inst.save(&out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Svd {
            ratings,
            rank,
            out,
            user_out,
            dense,
            threshold,
            seed,
            max_iters,
            tol,
        } => svd(
            &ratings,
            rank,
            &out,
            user_out.as_deref(),
            dense,
            threshold,
            SvdOptions {
                max_iters,
                tol,
                seed,
            },
        ),
        Command::DiagT0 { config, seed } => diag_t0(&config, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}
