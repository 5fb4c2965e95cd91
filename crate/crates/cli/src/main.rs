use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use curvenet::denoise::{denoise_image, DenoiseError, DenoiseOptions};
use curvenet::driver::{run, DriverError, RunConfig};
use curvenet::io;

/// Multiphase image segmentation with evolving curve networks.
///
/// Set CURVENET_LOG (error, warn, info, debug, trace) for progress output.
#[derive(Parser, Debug)]
#[command(name = "curvenet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a segmentation described by a config file.
    Segment {
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override the number of time steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Smooth an image inside each region of a label map.
    Denoise {
        image: PathBuf,
        /// Label map as written by `segment` (labels.pgm).
        labels: PathBuf,
        lambda: f64,
        /// Output image; defaults to <image>_denoised.<ext> next to the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

/// Failure mapped to the documented exit codes.
struct Failure {
    code: u8,
    message: String,
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<DenoiseError> for Failure {
    fn from(e: DenoiseError) -> Self {
        let code = match e {
            DenoiseError::NonPositiveLambda { .. } | DenoiseError::ShapeMismatch { .. } => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn segment(config: &Path, output: Option<PathBuf>, steps: Option<usize>) -> Result<(), Failure> {
    let mut cfg = RunConfig::from_file(config).map_err(DriverError::from)?;
    if output.is_some() {
        cfg.output = output;
    }
    if let Some(m) = steps {
        cfg.steps = m;
    }
    let result = run(cfg)?;
    let s = &result.segmenter;
    let e = s.energy();
    println!(
        "steps {}  curves {}  junctions {}  events {}  energy {:.6} (length {:.6}, external {:.6})  sigma {:.4}",
        s.step,
        s.network.curves.len(),
        s.network.junctions().len(),
        s.events.len(),
        e.total,
        e.length,
        e.external,
        s.sigma
    );
    if s.energy_violations > 0 {
        println!(
            "energy rose on {} step(s) without topology events",
            s.energy_violations
        );
    }
    if let Some(dir) = &s.config.output {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn default_output(image: &Path) -> PathBuf {
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let ext = image
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pnm".into());
    image.with_file_name(format!("{stem}_denoised.{ext}"))
}

fn denoise(
    image: &Path,
    labels: &Path,
    lambda: f64,
    output: Option<PathBuf>,
    tol: f64,
) -> Result<(), Failure> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Failure {
            code: 1,
            message: format!("lambda must be positive, got {lambda}"),
        });
    }
    let img = io::read_image(image)?;
    let map = io::read_labels(labels)?;
    let out = denoise_image(
        &img,
        &map,
        |_| lambda,
        &DenoiseOptions {
            tol,
            ..Default::default()
        },
    )?;
    let path = output.unwrap_or_else(|| default_output(image));
    io::write_image(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CURVENET_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment {
            config,
            output,
            steps,
        } => segment(&config, output, steps),
        Command::Denoise {
            image,
            labels,
            lambda,
            output,
            tol,
        } => denoise(&image, &labels, lambda, output, tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
