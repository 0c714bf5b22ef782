use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use infogeo_cli::commands::{self, RenderInputs};
use infogeo_cli::{CliError, Experiment};
use infogeo_core::likelihood::{Dataset, MleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Draw synthetic data (data.csv)
    Simulate,
    /// Maximum-likelihood fit (mle.json)
    Fit,
    /// Confidence-region contour (region.csv, summary.json)
    Region,
    /// Geodesics from the fit (geodesics.csv)
    Geodesics,
    /// Scalar-curvature grid (curvature.csv)
    Curvature,
    /// Normalised log-likelihood grid (loglik.csv)
    Loglik,
    /// SVG figure of a grid with overlays (figure.svg)
    Render,
}

#[derive(Debug, Parser)]
#[command(name = "infogeo", version, about = "Information geometry of likelihood-based inference")]
struct Args {
    command: Command,
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Observations; defaults to <out>/data.csv
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; defaults to analysis.output_dir, then ./out
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides design.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides analysis.resolution
    #[arg(long)]
    resolution: Option<usize>,
    /// Fit to use; defaults to <out>/mle.json, fitting afresh if absent
    #[arg(long)]
    mle: Option<PathBuf>,
    /// Grid to render; defaults to <out>/loglik.csv
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Contour to overlay; defaults to <out>/region.csv when present
    #[arg(long)]
    region: Option<PathBuf>,
    /// Geodesics to overlay; defaults to <out>/geodesics.csv when present
    #[arg(long)]
    geodesics: Option<PathBuf>,
}

fn existing(explicit: &Option<PathBuf>, fallback: PathBuf) -> Option<PathBuf> {
    explicit.clone().or_else(|| fallback.exists().then_some(fallback))
}

fn run(args: &Args) -> Result<String, CliError> {
    let mut exp = Experiment::load(&args.config)?;
    if let Some(seed) = args.seed {
        exp = exp.with_seed(seed);
    }
    if let Some(res) = args.resolution {
        exp = exp.with_resolution(res)?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| exp.config.analysis.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let data = |exp: &Experiment| -> Result<Dataset, CliError> {
        commands::load_data(exp, &args.data.clone().unwrap_or_else(|| out.join(commands::DATA_FILE)))
    };
    let fit = |exp: &Experiment, data: &Dataset| -> Result<MleResult, CliError> {
        match existing(&args.mle, out.join(commands::MLE_FILE)) {
            Some(path) => commands::load_mle(exp, &path),
            None => commands::fit(exp, data),
        }
    };
    let shown = |p: &Path| p.display().to_string();

    Ok(match args.command {
        Command::Simulate => shown(&commands::cmd_simulate(&exp, &out)?),
        Command::Fit => {
            let d = data(&exp)?;
            let r = commands::cmd_fit(&exp, &d, &out)?;
            format!("{} (log-likelihood {})", r.theta_hat, r.loglik_at_mle)
        }
        Command::Region => {
            let d = data(&exp)?;
            let m = fit(&exp, &d)?;
            let s = commands::cmd_region(&exp, &d, &m, &out)?;
            let kind = if s.open_region { "open" } else { "closed" };
            format!("{kind} region, {} points", s.points)
        }
        Command::Geodesics => {
            let d = data(&exp)?;
            let m = fit(&exp, &d)?;
            let curves = commands::cmd_geodesics(&exp, &m, &out)?;
            let truncated = curves.iter().filter(|c| c.truncated).count();
            format!("{} geodesics, {truncated} truncated", curves.len())
        }
        Command::Curvature => {
            let g = commands::cmd_curvature(&exp, &out)?;
            format!("{} failed cells", g.failures.len())
        }
        Command::Loglik => {
            let d = data(&exp)?;
            let m = fit(&exp, &d)?;
            let g = commands::cmd_loglik(&exp, &d, &m, &out)?;
            format!("{} failed cells", g.failures.len())
        }
        Command::Render => {
            let inputs = RenderInputs {
                grid: args.grid.clone().unwrap_or_else(|| out.join(commands::LOGLIK_FILE)),
                region: existing(&args.region, out.join(commands::REGION_FILE)),
                geodesics: existing(&args.geodesics, out.join(commands::GEODESICS_FILE)),
                mle: existing(&args.mle, out.join(commands::MLE_FILE)),
            };
            shown(&commands::cmd_render(&exp, &inputs, &out)?)
        }
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
