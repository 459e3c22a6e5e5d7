use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use steklov_core::lab::{run, Command, Params};

/// Experiments on the trace-embedding eigenvalue of nearly spherical domains.
#[derive(Parser, Debug)]
#[command(name = "steklov-lab", version)]
struct Cli {
    command: Command,
    /// Dimension (hn-scan: largest dimension scanned)
    #[arg(long)]
    n: Option<usize>,
    /// Prescribed measure ω (default: unit ball)
    #[arg(long)]
    omega: Option<f64>,
    /// Sup-norm size ε of perturbations
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Circle nodes (n = 2) or Gauss–Legendre latitudes (n = 3)
    #[arg(long)]
    resolution: Option<usize>,
    /// Trefftz order M, or the largest degree searched
    #[arg(long)]
    modes: Option<usize>,
    /// Annulus half-width of the penalized functional
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Shape file {n, omega, coefficients: [[degree, index, value], ...]}
    #[arg(long)]
    shape: Option<PathBuf>,
    /// Robin parameter (≤ 0)
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Robin ball radius
    #[arg(long)]
    radius: Option<f64>,
    /// Upper end of the hn-scan interval
    #[arg(long)]
    s_max: Option<f64>,
    /// Points per dimension in hn-scan
    #[arg(long)]
    steps: Option<usize>,
    /// Objective evaluations in search
    #[arg(long)]
    budget: Option<usize>,
    /// Search without projecting onto the constraints
    #[arg(long)]
    no_project: bool,
    /// Let search move degree-1 coefficients
    #[arg(long)]
    allow_degree1: bool,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with defaults for any of the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Cli {
    fn params(&self) -> Params {
        Params {
            n: self.n,
            omega: self.omega,
            eps: self.eps,
            trials: self.trials,
            seed: self.seed,
            resolution: self.resolution,
            modes: self.modes,
            delta: self.delta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            shape: self.shape.clone(),
            alpha: self.alpha,
            radius: self.radius,
            s_max: self.s_max,
            steps: self.steps,
            budget: self.budget,
            no_project: self.no_project.then_some(true),
            allow_degree1: self.allow_degree1.then_some(true),
            out: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| {
        let mut params = cli.params();
        if let Some(path) = &cli.config {
            params = params.over(Params::from_json_file(path)?);
        }
        let spec = params.resolve(cli.command)?;
        let report = run(&spec)?;
        if let Some(out) = &spec.out {
            report.write_csv(out)?;
        }
        Ok::<_, steklov_core::Error>(report)
    })();
    match outcome {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
