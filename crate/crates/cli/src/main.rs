use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vanroos::io::{self, RunError, RunOptions};
use vanroos::mesh::{build_dual, load_mesh, MeshError, ObtusePolicy};
use vanroos::selftest::{self, Effort};

/// Batch driver for the 2D drift-diffusion simulator.
///
/// Exit codes: 0 success, 1 I/O or self-test failure, 2 configuration
/// error, 3 mesh error, 4 solver non-convergence, 5 audit violation.
#[derive(Debug, Parser)]
#[command(name = "vanroos2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation described by a TOML configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Solve for steady states (the [sweep] section if present).
        #[arg(long)]
        steady: bool,
        /// Output directory, overriding [output] dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot times, overriding [output] snapshots.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        snapshot: Option<Vec<f64>>,
        #[arg(long, short)]
        verbose: bool,
    },
    /// Validate a mesh file and print its dual-mesh statistics.
    CheckMesh {
        file: PathBuf,
        /// Repair obtuse triangles instead of rejecting them.
        #[arg(long)]
        clamp: bool,
    },
    /// Run the analytic and oracle self tests.
    Selftest {
        /// Use the full case counts.
        #[arg(long)]
        full: bool,
    },
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
}

fn run(config: PathBuf, opts: RunOptions) -> Result<(), RunError> {
    let cfg = io::load_config(&config)?;
    let summary = io::execute(&cfg, &opts)?;
    println!("{} points", summary.points);
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn check_mesh(file: PathBuf, clamp: bool) -> Result<(), MeshError> {
    let text = std::fs::read_to_string(&file)
        .map_err(|e| MeshError::Parse { line: 0, column: 0, message: format!("cannot read {}: {e}", file.display()) })?;
    let mesh = load_mesh(&text)?;
    let policy = if clamp { ObtusePolicy::Clamp } else { ObtusePolicy::Reject };
    let dual = build_dual(&mesh, policy)?;
    let min_cell = dual.cell_volume.iter().copied().fold(f64::INFINITY, f64::min);
    println!("nodes       {}", mesh.node_count());
    println!("triangles   {}", mesh.triangles().len());
    println!("edges       {}", dual.edge_count());
    println!("regions     {}", mesh.region_names().join(", "));
    let ids: Vec<String> = mesh.contact_ids().iter().map(u32::to_string).collect();
    println!("contacts    {}", ids.join(", "));
    println!("area        {:.16e}", mesh.total_area());
    println!("cell sum    {:.16e}", dual.total_volume());
    println!("min cell    {min_cell:.6e}");
    println!("clamped     {}", dual.clamped_edges.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, steady, out, snapshot, verbose } => {
            init_logging(verbose);
            match run(config, RunOptions { steady, out, snapshots: snapshot }) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::CheckMesh { file, clamp } => {
            init_logging(false);
            match check_mesh(file, clamp) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("mesh error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Selftest { full } => {
            init_logging(false);
            let checks = selftest::run_all(if full { Effort::Full } else { Effort::Quick });
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} passed, {failed} failed", checks.len() - failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
