use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cobigicp::se3::{pose_error, RigidTransform};
use cobigicp::solver::SolverConfig;
use cobigicp::surface::estimate_stats;
use cobigicp_bench::config::load_solver_config;
use cobigicp_bench::io::{load_cloud, load_pose, save_pose, save_xyz};
use cobigicp_bench::{
    emit_report, make_synthetic_scene, run_sequence, Algorithm, ExperimentSpec, ReportOptions, Result, SceneKind,
    SceneSpec,
};

#[derive(Parser)]
#[command(name = "cobigicp", version, about = "Robust point-cloud registration and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register SOURCE onto TARGET and print the 12-number row-major transform.
    Register {
        #[arg(long, default_value = "cobig")]
        algo: Algorithm,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Initial guess pose file (identity if omitted).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Solver config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth pose; prints the pose error to stderr.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Run an experiment spec and write CSV reports.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic source/target pair with its ground truth.
    Synth {
        #[arg(long, default_value = "plane_corner")]
        kind: SceneKind,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.005)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn register(
    algo: Algorithm,
    source: &Path,
    target: &Path,
    init: Option<&Path>,
    config: Option<&Path>,
    ground_truth: Option<&Path>,
) -> Result<()> {
    let cfg = match config {
        Some(p) => load_solver_config(p)?,
        None => SolverConfig::default(),
    };
    let initial = match init {
        Some(p) => load_pose(p)?,
        None => RigidTransform::identity(),
    };
    let src = load_cloud(source)?;
    let tgt = load_cloud(target)?;
    for (path, loaded) in [(source, &src), (target, &tgt)] {
        if loaded.dropped > 0 {
            eprintln!("{}: dropped {} invalid point(s)", path.display(), loaded.dropped);
        }
    }
    let src = estimate_stats(&src.cloud, cfg.k_neighbors, cfg.eps_plane)?;
    let tgt = estimate_stats(&tgt.cloud, cfg.k_neighbors, cfg.eps_plane)?;
    let result = algo.run(&src, &tgt, &initial, &cfg)?;
    println!("{}", result.transform);
    eprintln!(
        "iterations: {}  converged: {}  pairs: {}",
        result.iterations, result.converged, result.final_pairs
    );
    if let Some(p) = ground_truth {
        let e = pose_error(&result.transform, &load_pose(p)?);
        eprintln!("e_trans: {:.6} m  e_rot: {:.6} deg", e.e_trans, e.e_rot_degrees());
    }
    Ok(())
}

fn bench(spec_path: &Path, out: &Path) -> Result<()> {
    let spec = ExperimentSpec::load(spec_path)?;
    let results = run_sequence(&spec)?;
    let opts = ReportOptions {
        algorithm: spec.algorithm.to_string(),
        include_timing: spec.report_timing,
    };
    let s = emit_report(&results, out, &opts)?;
    println!(
        "{}: {} pairs  mean e_trans {:.6} m  mean e_rot {:.6} deg  converged {:.1}%",
        opts.algorithm,
        s.pairs,
        s.mean_e_trans,
        s.mean_e_rot.to_degrees(),
        100.0 * s.converged_fraction
    );
    Ok(())
}

fn synth(spec: SceneSpec, out: &Path) -> Result<()> {
    let scene = make_synthetic_scene(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| cobigicp_bench::BenchError::io(out, e))?;
    save_xyz(out.join("source.xyz"), scene.source.points())?;
    save_xyz(out.join("target.xyz"), scene.target.points())?;
    save_pose(out.join("ground_truth.pose"), &scene.ground_truth)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Register {
            algo,
            source,
            target,
            init,
            config,
            ground_truth,
        } => register(
            *algo,
            source,
            target,
            init.as_deref(),
            config.as_deref(),
            ground_truth.as_deref(),
        ),
        Command::Bench { spec, out } => bench(spec, out),
        Command::Synth {
            kind,
            n,
            noise,
            outliers,
            seed,
            out,
        } => synth(SceneSpec::new(*kind, *n, *noise, *outliers, *seed), out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
