use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kac_core::experiments::{run_experiment, ExperimentKind};
use kac_core::io::{self, ConfigMap};
use kac_core::selftest::run_selftest;
use kac_core::wasserstein::{w2, W2Options};
use kac_core::Error;

#[derive(Parser)]
#[command(name = "kac", version, about = "Kac particle systems for Maxwell molecules and propagation-of-chaos experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle system and record moments and ledger drift.
    Simulate(ExperimentArgs),
    /// E W2²(empirical measure, γ) over a sweep of ensemble sizes.
    ChaosRate(ExperimentArgs),
    /// E W2²(empirical measure, γ) along a long run.
    UniformTime(ExperimentArgs),
    /// Distance between coupled and decoupled nonlinear processes.
    Decoupling(ExperimentArgs),
    /// Distance between shared-noise systems at two cutoffs.
    CutoffBias(ExperimentArgs),
    /// Trajectory distance between particles and nonlinear processes.
    Coupling(ExperimentArgs),
    /// Povzner constants and an empirical fit of the cross-term constant.
    Povzner(ExperimentArgs),
    /// Squared W2 between two snapshot files.
    W2 {
        a: PathBuf,
        b: PathBuf,
        /// Also print the optimal permutation.
        #[arg(long)]
        permutation: bool,
        /// Use the entropic solver above the exact-size cap.
        #[arg(long)]
        approximate: bool,
    },
    /// Closed-form versus oracle checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags mirror the configuration keys and override the config file.
#[derive(Args)]
struct ExperimentArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long = "N", visible_alias = "n")]
    n: Option<String>,
    #[arg(long = "K", visible_alias = "k")]
    k: Option<String>,
    #[arg(long = "L", visible_alias = "l")]
    l: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// Comma-separated observation times.
    #[arg(long)]
    observe: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// stationary-gaussian, empirical, self-consistent:M or bkw.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    refresh: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// gaussian, gaussian-sphere, sphere, two-point, student-t:D or student-t-sphere:D.
    #[arg(long)]
    init: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    k_ref: Option<String>,
    #[arg(long)]
    surrogate_ratio: Option<String>,
    /// Comma-separated even moment orders.
    #[arg(long)]
    moments: Option<String>,
    #[arg(long)]
    theta_min: Option<String>,
    /// Output directory (default: $KAC_OUT_DIR or ./kac-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 16] {
        [
            ("nu", &self.nu),
            ("N", &self.n),
            ("K", &self.k),
            ("L", &self.l),
            ("t_end", &self.t_end),
            ("observe", &self.observe),
            ("replicates", &self.replicates),
            ("reference", &self.reference),
            ("refresh", &self.refresh),
            ("seed", &self.seed),
            ("init", &self.init),
            ("sweep", &self.sweep),
            ("k_ref", &self.k_ref),
            ("surrogate_ratio", &self.surrogate_ratio),
            ("moments", &self.moments),
            ("theta_min", &self.theta_min),
        ]
    }
}

fn run_experiment_command(kind: ExperimentKind, args: &ExperimentArgs) -> kac_core::Result<()> {
    let mut map = match &args.config {
        Some(path) => io::parse_config_map(&std::fs::read_to_string(path)?)?,
        None => ConfigMap::new(),
    };
    if let Some(existing) = map.get("experiment") {
        if existing != kind.label() {
            return Err(Error::Config(format!(
                "config file describes '{existing}' but the '{}' subcommand was used",
                kind.label()
            )));
        }
    }
    map.insert("experiment".into(), kind.label().into());
    for (key, value) in args.overrides() {
        if let Some(v) = value {
            map.insert(key.into(), v.clone());
        }
    }
    let cfg = io::config_from_map(&map)?;
    let out = run_experiment(&cfg)?;
    let dir = args.out.clone().unwrap_or_else(io::default_out_dir);
    let run_id = out.records.first().map(|r| r.run_id.clone()).unwrap_or_else(|| {
        format!("{}-{}", kind.label(), &io::config_hash(&cfg)[..12])
    });
    let path = |ext: &str| dir.join(format!("{run_id}.{ext}"));
    io::save_config(&path("config"), &cfg)?;
    io::save_results(&path("csv"), &out.records)?;
    io::save_json(&path("json"), &out.summary)?;
    println!("{}", path("csv").display());
    println!("{}", path("json").display());
    if let Some(snap) = &out.snapshot {
        io::write_snapshot(&path("snapshot.csv"), snap)?;
        println!("{}", path("snapshot.csv").display());
    }
    Ok(())
}

fn run_w2(a: &Path, b: &Path, permutation: bool, approximate: bool) -> kac_core::Result<()> {
    let sa = io::read_snapshot(a)?;
    let sb = io::read_snapshot(b)?;
    let opts = W2Options { approximate, ..W2Options::default() };
    let res = w2(&sa.velocities, &sb.velocities, &opts)?;
    println!("{}", res.value);
    if permutation {
        let line: Vec<String> = res.permutation.iter().map(|p| p.to_string()).collect();
        println!("{}", line.join(","));
    }
    Ok(())
}

fn run_selftest_command(seed: u64) -> bool {
    let checks = run_selftest(seed);
    let mut ok = true;
    for c in &checks {
        println!("{} {} (worst {:e}, tolerance {:e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst, c.tolerance);
        ok &= c.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_experiment_command(ExperimentKind::Simulate, a),
        Command::ChaosRate(a) => run_experiment_command(ExperimentKind::ChaosRate, a),
        Command::UniformTime(a) => run_experiment_command(ExperimentKind::UniformTime, a),
        Command::Decoupling(a) => run_experiment_command(ExperimentKind::Decoupling, a),
        Command::CutoffBias(a) => run_experiment_command(ExperimentKind::CutoffBias, a),
        Command::Coupling(a) => run_experiment_command(ExperimentKind::Coupling, a),
        Command::Povzner(a) => run_experiment_command(ExperimentKind::Povzner, a),
        Command::W2 { a, b, permutation, approximate } => run_w2(a, b, *permutation, *approximate),
        Command::Selftest { seed } => {
            return if run_selftest_command(*seed) { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
