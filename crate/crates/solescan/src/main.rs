use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use solescan::commands::{self, Ctx, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "solescan",
    version,
    about = "Partial-scan reconstruction pipeline: virtual scanning, canonicalization, completion, meshing"
)]
struct Cli {
    /// Plain-text key=value configuration file (flags win over it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (defaults to SOLESCAN_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Single-threaded, fixed-order execution for golden tests.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic footoid dataset with an 80/20 split.
    GenDataset {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Virtual-scan a mesh into a bundle (scan.ply, cameras.txt, depth maps).
    Scan {
        #[arg(long)]
        mesh: PathBuf,
        /// Max camera angle from the dorsal axis, degrees.
        #[arg(long)]
        theta_max: Option<f64>,
        /// Apply a random similarity scramble drawn from this seed.
        #[arg(long)]
        scramble_seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align a scan bundle into the template frame.
    Canonicalize {
        #[arg(long)]
        bundle: PathBuf,
        /// Template mesh PLY (defaults to the built-in footoid template).
        #[arg(long)]
        template: Option<PathBuf>,
        /// Landmark file: `label x y z` lines (defaults to the built-ins).
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the completion network on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete a partial (canonicalized) cloud with a trained model.
    Complete {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a watertight mesh from a (completed) cloud.
    Mesh {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chamfer/Hausdorff report between predictions and ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan/canonicalize/complete the test split across viewing angles.
    SweepAngle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated max viewing angles in degrees.
        #[arg(long, default_value = "30,45,60,75,90,120,150,180")]
        angles: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the PCA baseline (built from the dataset's train split) to a target cloud.
    FitBaseline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> solescan::Result<()> {
    let threads = if cli.deterministic {
        Some(1)
    } else {
        cli.threads.or_else(|| {
            std::env::var("SOLESCAN_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .ok();
    }

    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx::new(config, cli.deterministic);

    match cli.command {
        Command::GenDataset { n, seed, out } => commands::gen_dataset(&ctx, n, seed, &out),
        Command::Scan {
            mesh,
            theta_max,
            scramble_seed,
            seed,
            out,
        } => commands::scan(&ctx, &mesh, theta_max, scramble_seed, seed, &out),
        Command::Canonicalize {
            bundle,
            template,
            landmarks,
            out,
        } => {
            commands::canonicalize_cmd(&ctx, &bundle, template.as_deref(), landmarks.as_deref(), &out)
        }
        Command::Train {
            dataset,
            epochs,
            seed,
            out,
        } => commands::train_cmd(&ctx, &dataset, epochs, seed, &out),
        Command::Complete { model, cloud, out } => {
            commands::complete_cmd(&ctx, &model, &cloud, &out)
        }
        Command::Mesh { cloud, out } => commands::mesh_cmd(&ctx, &cloud, &out),
        Command::Eval { pred, gt, out } => commands::eval_cmd(&ctx, &pred, &gt, &out),
        Command::SweepAngle {
            model,
            dataset,
            angles,
            seed,
            out,
        } => {
            let parsed: Vec<f64> = angles
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| solescan::Error::InvalidInput(format!("bad angle '{t}'")))
                })
                .collect::<solescan::Result<_>>()?;
            commands::sweep_angle_cmd(&ctx, &model, &dataset, &parsed, seed, &out)
        }
        Command::FitBaseline {
            dataset,
            target,
            steps,
            seed,
            out,
        } => commands::fit_baseline_cmd(&ctx, &dataset, &target, steps, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
