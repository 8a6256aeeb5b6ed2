mod commands;
mod report;
mod svg;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use report::Artifacts;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fracwave", version, about = "Half-wave maximal estimates against fractal measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Output {
    /// Directory for `<command>.csv` and `<command>.json`; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct Range {
    #[arg(long)]
    pub lmin: Option<f64>,
    #[arg(long)]
    pub lmax: Option<f64>,
    #[arg(long = "per-octave")]
    pub per_octave: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TableName {
    Thm11,
    Conjecture,
    Prior,
    S22,
    S2,
    Necessary,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormKind {
    Sphere,
    Strichartz,
    Cone,
    Fractal,
    SphericalMeans,
    MaximalLower,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Extent {
    Band,
    Shell,
}

#[derive(Subcommand)]
enum Command {
    /// Exact exponent tables on a rational grid.
    Exponents {
        #[arg(long, value_enum)]
        table: TableName,
        #[arg(long)]
        d: i64,
        /// Grid step for the table variable.
        #[arg(long, default_value = "1/32")]
        grid: String,
        /// Lebesgue exponent for the necessary-condition table.
        #[arg(long, default_value = "2")]
        q: String,
        #[command(flatten)]
        output: Output,
    },
    /// Band-averaged spherical decay of a measure's Fourier transform.
    Decay {
        #[arg(long)]
        measure: String,
        #[command(flatten)]
        range: Range,
        /// Plain spherical averages instead of band averages.
        #[arg(long)]
        no_band: bool,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Probe-ball lower bound for the alpha-regularity constant.
    Regularity {
        #[arg(long)]
        measure: String,
        /// Defaults to the exponent the construction is designed for.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Operator-norm estimates across scales.
    Norms {
        #[arg(long, value_enum)]
        kind: NormKind,
        #[arg(long)]
        measure: String,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "band")]
        extent: Extent,
        #[arg(long, default_value_t = 6)]
        rounds: usize,
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Sphere/cone equivalence check over dyadic scales.
    Equivalence {
        #[arg(long)]
        measure: String,
        #[arg(long, default_value_t = 64.0)]
        lmin: f64,
        #[arg(long, default_value_t = 2048.0)]
        lmax: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "band")]
        extent: Extent,
        #[command(flatten)]
        output: Output,
    },
    /// Growth-exponent sweep for a counterexample family.
    Counterexample {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value = "1")]
        alpha: String,
        #[arg(long, default_value = "2")]
        q: String,
        #[command(flatten)]
        range: Range,
        /// Inner radius of the annulus (log-divergence only).
        #[arg(long, default_value = "1/4")]
        r: String,
        #[arg(long, default_value_t = 4)]
        kmin: u32,
        #[arg(long, default_value_t = 14)]
        kmax: u32,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Log-log SVG of a CSV in the shared schema.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Only rows with this kind.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value = "scale")]
        x: String,
        #[arg(long, default_value = "value")]
        y: String,
        #[arg(long)]
        title: Option<String>,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FRACWAVE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("FRACWAVE_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(Artifacts, Option<PathBuf>)> {
    configure_threads()?;
    Ok(match cli.command {
        Command::Exponents { table, d, grid, q, output } => (commands::exponents(table, d, &grid, &q)?, output.out),
        Command::Decay {
            measure,
            range,
            no_band,
            svg,
            output,
        } => (commands::decay(&measure, &range, !no_band, svg.as_deref())?, output.out),
        Command::Regularity {
            measure,
            alpha,
            depth,
            output,
        } => (commands::regularity(&measure, alpha, depth)?, output.out),
        Command::Norms {
            kind,
            measure,
            range,
            seed,
            extent,
            rounds,
            restarts,
            svg,
            output,
        } => {
            let opts = commands::NormOptions {
                seed,
                extent,
                rounds,
                restarts,
            };
            (commands::norms(kind, &measure, &range, opts, svg.as_deref())?, output.out)
        }
        Command::Equivalence {
            measure,
            lmin,
            lmax,
            seed,
            extent,
            output,
        } => (commands::equivalence(&measure, lmin, lmax, seed, extent)?, output.out),
        Command::Counterexample {
            family,
            d,
            alpha,
            q,
            range,
            r,
            kmin,
            kmax,
            svg,
            output,
        } => {
            let a = if family == "log-divergence" {
                commands::log_divergence(d, &r, kmin, kmax, svg.as_deref())?
            } else {
                commands::counterexample(&family, d, &alpha, &q, &range, svg.as_deref())?
            };
            (a, output.out)
        }
        Command::Plot {
            csv,
            svg,
            kind,
            x,
            y,
            title,
        } => (commands::plot(&csv, &svg, kind.as_deref(), &x, &y, title.as_deref())?, None),
    })
}

fn emit(art: &Artifacts, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            if let Some(csv) = &art.csv {
                std::fs::write(dir.join(format!("{}.csv", art.command)), csv)?;
            }
            if let Some(json) = &art.json {
                std::fs::write(dir.join(format!("{}.json", art.command)), report::pretty(json))?;
            }
        }
        None => {
            if let Some(csv) = &art.csv {
                print!("{csv}");
            }
            if let Some(json) = &art.json {
                print!("{}", report::pretty(json));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(cli).and_then(|(art, out)| {
        emit(&art, out.as_ref())?;
        Ok(art)
    });
    match result {
        Ok(art) => {
            // wall-clock goes to stderr so the artifacts stay byte-identical
            eprintln!("{} finished in {:.2}s", art.command, start.elapsed().as_secs_f64());
            match art.pass {
                Some(false) => {
                    eprintln!("verdict: FAIL");
                    ExitCode::from(1)
                }
                Some(true) => {
                    eprintln!("verdict: PASS");
                    ExitCode::SUCCESS
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
