use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ale_gauge::geometry::ModelKind;
use ale_gauge::pipeline::{run, Command, Config, Report};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ale-gauge", version, about = "Gauge fixing, normal forms and renormalized volume pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Dimension of the model (overrides the config).
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Catalog model: flat, flat_quotient, synthetic_weyl, pulled_back, eguchi_hanson.
    #[arg(long, global = true)]
    model: Option<String>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report.json and the CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tolerance of the pipeline-level checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Invariant suite of the tensor spaces and maps.
    VerifyAlgebra,
    /// Jet normal form at a point.
    NormalForm,
    /// Expansion at infinity: fit, kill order m−1, reduce to Weyl form.
    GaugeInfinity,
    /// Bianchi residual and harmonic-map correction on the exterior grid.
    BianchiSolve,
    /// Renormalized volume with mean-curvature and Ros diagnostics.
    RenormVolume,
    /// Every pipeline in turn.
    All,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::VerifyAlgebra => Command::VerifyAlgebra,
            Sub::NormalForm => Command::NormalForm,
            Sub::GaugeInfinity => Command::GaugeInfinity,
            Sub::BianchiSolve => Command::BianchiSolve,
            Sub::RenormVolume => Command::RenormVolume,
            Sub::All => Command::All,
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("reading {}: {e}", p.display()))?;
            Config::from_json(&text).map_err(|e| e.to_string())?
        }
        None => Config::default(),
    };
    if let Some(m) = cli.m {
        cfg.model.m = m;
    }
    if let Some(k) = &cli.model {
        cfg.model.kind = ModelKind::parse(k).map_err(|e| e.to_string())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        if t.is_nan() || t <= 0.0 {
            return Err(format!("tolerance must be positive, got {t}"));
        }
        cfg.tol = Some(t);
    }
    Ok(cfg)
}

fn write_outputs(dir: &Path, rep: &Report) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), rep.to_json())?;
    fs::write(dir.join("checks.csv"), rep.checks_csv())?;
    for t in &rep.tables {
        fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let rep = match run(cli.command.into(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = &cli.out {
        if let Err(e) = write_outputs(dir, &rep) {
            eprintln!("error: writing {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    println!("{}", rep.to_json());
    for c in rep.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {} (m={}): {:.3e} vs {:.3e} {}", c.name, c.m, c.measured, c.threshold, c.detail);
    }
    if rep.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
