use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use hyperspeaker::experiment::{run_experiment, tree_manifest, ExperimentConfig, ExperimentError, ResultRow};
use hyperspeaker::metrics::{
    compute_eer, compute_min_dcf, join_trials, read_scores, read_trials, DcfParams, MetricsError,
};
use hyperspeaker::synthdata::{generate, save_embeddings, DataError, TreeSpec};
use hyperspeaker::trainer::TrainError;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

/// Hyperbolic speaker-embedding losses: experiments, scoring and synthetic data.
#[derive(Debug, Parser)]
#[command(name = "hyperspeaker", version, about)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and evaluate every point of an experiment config.
    ///
    /// Writes results.csv, manifest.cfg and reports/*.csv under the
    /// configured output_dir. Exit codes: 2 invalid config, 3 a point
    /// diverged, 4 I/O failure.
    Run {
        /// Flat `key = value` config file.
        config: PathBuf,
    },
    /// Compute EER and minDCF from a trial list and a score file.
    Score {
        /// Lines of `<0|1> <enroll> <test>`.
        #[arg(long)]
        trials: PathBuf,
        /// Lines of `<enroll> <test> <score>`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        p_target: f64,
        #[arg(long, default_value_t = 1.0)]
        c_miss: f64,
        #[arg(long, default_value_t = 1.0)]
        c_fa: f64,
    },
    /// Generate a synthetic hierarchical dataset.
    ///
    /// Also writes `<output>.manifest` with the tree parameters and seed.
    GenData {
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 8)]
        branching: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        /// Comma separated offset scale per level; defaults to 1.0 then ×0.3 per level.
        #[arg(long, value_delimiter = ',')]
        level_scales: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 50)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn experiment_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Io { .. } | ExperimentError::Data(DataError::Io { .. }) => EXIT_IO,
        ExperimentError::Train(TrainError::Divergence { .. }) => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn print_row(row: &ResultRow) {
    let mut line = format!("loss={} scoring={}", row.point.loss, row.scoring);
    if let (Some(p), Some(v)) = (row.param, row.point.value) {
        line.push_str(&format!(" {p}={v}"));
    }
    line.push_str(&format!(" seed={}", row.point.seed));
    match &row.metrics {
        Ok(m) => println!("{line} final_loss={:.6} EER={:.6} minDCF={:.6}", m.final_loss, m.eer, m.min_dcf),
        Err(msg) => println!("{line} diverged: {msg}"),
    }
}

fn cmd_run(config: PathBuf) -> ExitCode {
    let cfg = match ExperimentConfig::from_file(&config) {
        Ok(c) => c,
        Err(e) => return fail(experiment_code(&e), e),
    };
    match run_experiment(&cfg, print_row) {
        Ok(outcome) => {
            let diverged = outcome.diverged().count();
            println!("wrote {}", cfg.output_dir.join("results.csv").display());
            if diverged > 0 {
                return fail(EXIT_DIVERGED, format!("{diverged} of {} points diverged", outcome.rows.len()));
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(experiment_code(&e), e),
    }
}

fn cmd_score(trials: PathBuf, scores: PathBuf, params: DcfParams<f64>) -> ExitCode {
    let result = (|| {
        params.validate()?;
        let trials = read_trials(&trials)?;
        let table = read_scores(&scores)?;
        let ts = join_trials(&trials, &table)?;
        Ok::<_, MetricsError>((compute_eer(&ts)?, compute_min_dcf(&ts, &params)?))
    })();
    match result {
        Ok((eer, dcf)) => {
            println!(
                "EER={:.6} minDCF={:.6} thr_eer={:.6} thr_dcf={:.6}",
                eer.eer, dcf.min_dcf, eer.threshold, dcf.threshold
            );
            ExitCode::SUCCESS
        }
        Err(e @ MetricsError::Io { .. }) => fail(EXIT_IO, e),
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn cmd_gen_data(spec: TreeSpec, output: PathBuf) -> ExitCode {
    let ds = match generate(&spec) {
        Ok(ds) => ds,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = save_embeddings(&ds, &output) {
        return fail(EXIT_IO, e);
    }
    let mut manifest = output.clone().into_os_string();
    manifest.push(".manifest");
    let manifest = PathBuf::from(manifest);
    if let Err(e) = fs::write(&manifest, tree_manifest(&spec)) {
        return fail(EXIT_IO, format!("{}: {e}", manifest.display()));
    }
    println!("wrote {} rows to {}", ds.len(), output.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Score {
            trials,
            scores,
            p_target,
            c_miss,
            c_fa,
        } => cmd_score(trials, scores, DcfParams { p_target, c_miss, c_fa }),
        Command::GenData {
            depth,
            branching,
            dim,
            level_scales,
            noise_sigma,
            samples_per_class,
            seed,
            output,
        } => {
            let level_scales =
                level_scales.unwrap_or_else(|| (0..depth).map(|l| 0.3f64.powi(l as i32)).collect());
            let spec = TreeSpec {
                depth,
                branching,
                dim,
                level_scales,
                noise_sigma,
                samples_per_class,
                seed,
            };
            if let Err(e) = spec.validate() {
                return fail(EXIT_CONFIG, e);
            }
            cmd_gen_data(spec, output)
        }
    }
}
