use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmc_tumor::config::StudyConfig;
use qmc_tumor::harness::{run_cbc, run_kl, run_single, run_study, with_workers};
use qmc_tumor::{Error, Result};

/// Lattice-rule uncertainty quantification for a tumor growth model.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (key = value lines). Defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides the `output.dir` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the QMC convergence study and the Monte Carlo baseline.
    Study(Common),
    /// Solve once at a given parameter vector.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated parameter values, one per dimension.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Precompute KL bases for the lognormal fields.
    Kl(Common),
    /// Build a lattice generating vector by component-by-component search.
    Cbc {
        /// Number of points, a prime power.
        #[arg(long)]
        n: u64,
        /// Dimension.
        #[arg(long)]
        s: usize,
        /// Product weights decay as j^-decay.
        #[arg(long, default_value_t = 2.0)]
        decay: f64,
        /// Build an embedded rule good for every 2^m with m >= m_min.
        #[arg(long)]
        m_min: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<StudyConfig> {
    let mut overrides = Vec::new();
    for item in &c.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got {item:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = c.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &c.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    match &c.config {
        Some(path) => StudyConfig::load(path, &overrides),
        None => StudyConfig::from_text("", Path::new("."), &overrides),
    }
}

fn parse_y(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad parameter value {t:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Study(common) => {
            let cfg = load_config(&common)?;
            let out = with_workers(common.workers, || run_study(&cfg))??;
            for l in &out.qmc {
                println!(
                    "qmc N={:<6} R={} mean={:.10e} rms={:.3e}",
                    l.n_points, l.n_shifts, l.mean, l.rms_error
                );
            }
            for l in &out.mc {
                println!("mc  N={:<6} mean={:.10e} stderr={:.3e}", l.n_samples, l.mean, l.standard_error);
            }
            println!("qmc slope {:.3}", out.qmc_slope);
            if let Some(s) = out.mc_slope {
                println!("mc slope {s:.3}");
            }
            println!("wrote {}", out.output_dir.display());
        }
        Command::Solve { common, y } => {
            let cfg = load_config(&common)?;
            let y = parse_y(&y)?;
            let out = with_workers(common.workers, || run_single(&cfg, &y))??;
            println!("G = {:?}", out.qoi);
            println!("a priori constant = {:?}", out.apriori_constant);
            println!("min u = {:?}", out.min_value);
            println!("max u = {:?}", out.max_value);
            println!("newton iterations = {}", out.newton_iterations);
            if let Some(p) = out.trajectory_path {
                println!("trajectory {}", p.display());
            }
        }
        Command::Kl(common) => {
            let cfg = load_config(&common)?;
            let out = with_workers(common.workers, || run_kl(&cfg))??;
            println!("orthonormality error {:e}", out.pair.orthonormality_error);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Cbc { n, s, decay, m_min, out } => {
            let res = run_cbc(n, s, decay, m_min, &out)?;
            if let Some(e) = res.wce.last() {
                println!("worst-case error at s = {s}: {e:e}");
            }
            println!("wrote {}", res.vector_path.display());
            println!("wrote {}", res.report_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
