//! Experiment specs and the pairwise / sequential registration driver.
//!
//! A spec file uses the same `key = value` format as the solver config and may
//! contain any solver key. Experiment keys:
//!
//! ```text
//! algorithm = cobig            # cobig | cogicp | gicp | p2pt | p2pl
//! dataset_dir = scans/         # consecutive-pair mode; omit for synthetic mode
//! scene = plane_corner         # synthetic: plane_corner | corridor | random_surfaces
//! n_points = 2000
//! noise = 0.005
//! outliers = 0.2
//! gt_rotation_deg = 5
//! gt_translation = 0.1
//! downsample_fraction = 0.1
//! downsample = random          # or voxel (uses voxel_size)
//! voxel_size = 0.05
//! seed = 42
//! perturbation = none          # none | easy | medium | hard
//! max_perturb_translation = 0.1
//! max_perturb_rotation_deg = 5
//! repetitions = 1
//! report_timing = true
//! ```
//!
//! In dataset mode every scan `NAME.{ply,xyz,txt,csv,pts}` needs a sidecar
//! `NAME.pose` holding its world pose. Scan `k+1` is registered onto scan `k`
//! with ground truth `T_k⁻¹ T_{k+1}`. Without a perturbation level the
//! initial guess is the identity; otherwise it is the ground truth perturbed at
//! that level.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use cobigicp::baselines::{register_baseline, BaselineKind};
use cobigicp::se3::{pose_error, RigidTransform};
use cobigicp::solver::{register, RegistrationResult, SolverConfig};
use cobigicp::surface::{estimate_stats, PointCloud};
use rayon::prelude::*;

use crate::config::{apply_solver_entry, parse_entries, parse_value};
use crate::error::{BenchError, Result};
use crate::io::{load_cloud, load_pose};
use crate::report::PairResult;
use crate::sampling::{downsample, perturb_with_bounds, voxel_downsample, PerturbationBounds, PerturbationLevel};
use crate::synth::{make_synthetic_scene, SceneKind, SceneSpec};

pub const SCAN_EXTENSIONS: [&str; 5] = ["ply", "xyz", "txt", "csv", "pts"];
pub const POSE_EXTENSION: &str = "pose";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    CoBigIcp,
    Baseline(BaselineKind),
}

impl Algorithm {
    pub fn run(
        self,
        source: &PointCloud,
        target: &PointCloud,
        initial: &RigidTransform,
        cfg: &SolverConfig,
    ) -> cobigicp::Result<RegistrationResult> {
        match self {
            Algorithm::CoBigIcp => register(source, target, initial, cfg),
            Algorithm::Baseline(kind) => register_baseline(kind, source, target, initial, cfg),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::CoBigIcp => f.write_str("cobig"),
            Algorithm::Baseline(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cobig" | "cobigicp" => Ok(Algorithm::CoBigIcp),
            other => other
                .parse::<BaselineKind>()
                .map(Algorithm::Baseline)
                .map_err(|_| BenchError::InvalidSpec(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dataset(PathBuf),
    /// Scene template; each repetition reseeds it.
    Synthetic(SceneSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Downsampling {
    Random,
    Voxel(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    pub data: DataSource,
    pub downsample_fraction: f64,
    pub downsampling: Downsampling,
    pub rng_seed: u64,
    pub perturbation_level: PerturbationLevel,
    pub perturbation_bounds: PerturbationBounds,
    pub repetitions: usize,
    pub config: SolverConfig,
    pub report_timing: bool,
}

impl ExperimentSpec {
    pub fn synthetic(algorithm: Algorithm, scene: SceneSpec) -> Self {
        Self {
            algorithm,
            rng_seed: scene.seed,
            data: DataSource::Synthetic(scene),
            downsample_fraction: 1.0,
            downsampling: Downsampling::Random,
            perturbation_level: PerturbationLevel::None,
            perturbation_bounds: PerturbationLevel::None.default_bounds(),
            repetitions: 1,
            config: SolverConfig::default(),
            report_timing: true,
        }
    }

    pub fn dataset(algorithm: Algorithm, dir: impl Into<PathBuf>) -> Self {
        Self {
            data: DataSource::Dataset(dir.into()),
            ..Self::synthetic(algorithm, SceneSpec::new(SceneKind::PlaneCorner, 2000, 0.0, 0.0, 0))
        }
    }

    pub fn with_perturbation(mut self, level: PerturbationLevel) -> Self {
        self.perturbation_level = level;
        self.perturbation_bounds = level.default_bounds();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.downsample_fraction > 0.0 && self.downsample_fraction <= 1.0) {
            return Err(BenchError::InvalidSpec(format!(
                "downsample_fraction must lie in (0, 1], got {}",
                self.downsample_fraction
            )));
        }
        if self.repetitions < 1 {
            return Err(BenchError::InvalidSpec("repetitions must be at least 1".into()));
        }
        self.config.validate()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut scene = SceneSpec::new(SceneKind::PlaneCorner, 2000, 0.005, 0.0, 0);
        let mut spec = Self::synthetic(Algorithm::CoBigIcp, scene.clone());
        let mut dataset: Option<PathBuf> = None;
        let mut voxel_size = None;
        let mut voxel = false;
        let mut bounds_t = None;
        let mut bounds_r = None;

        for e in parse_entries(path, text)? {
            match e.key.as_str() {
                "algorithm" | "algo" => spec.algorithm = parse_value(path, &e)?,
                "dataset_dir" => dataset = Some(base.join(&e.value)),
                "scene" | "kind" => scene.kind = parse_value(path, &e)?,
                "n_points" | "n" => scene.n_points = parse_value(path, &e)?,
                "noise" | "noise_sigma" => scene.noise_sigma = parse_value(path, &e)?,
                "outliers" | "outlier_fraction" => scene.outlier_fraction = parse_value(path, &e)?,
                "gt_rotation_deg" => scene.gt_rotation = parse_value::<f64>(path, &e)?.to_radians(),
                "gt_translation" => scene.gt_translation = parse_value(path, &e)?,
                "downsample_fraction" => spec.downsample_fraction = parse_value(path, &e)?,
                "downsample" => match e.value.as_str() {
                    "random" => voxel = false,
                    "voxel" => voxel = true,
                    other => {
                        return Err(BenchError::parse(path, e.line, format!("unknown downsample mode {other:?}")))
                    }
                },
                "voxel_size" => voxel_size = Some(parse_value::<f64>(path, &e)?),
                "seed" | "rng_seed" => spec.rng_seed = parse_value(path, &e)?,
                "perturbation" | "perturbation_level" => spec.perturbation_level = parse_value(path, &e)?,
                "max_perturb_translation" => bounds_t = Some(parse_value::<f64>(path, &e)?),
                "max_perturb_rotation_deg" => bounds_r = Some(parse_value::<f64>(path, &e)?.to_radians()),
                "repetitions" => spec.repetitions = parse_value(path, &e)?,
                "report_timing" => spec.report_timing = parse_value(path, &e)?,
                _ => {
                    if !apply_solver_entry(&mut spec.config, path, &e)? {
                        return Err(BenchError::parse(path, e.line, format!("unknown key {:?}", e.key)));
                    }
                }
            }
        }

        scene.seed = spec.rng_seed;
        spec.data = match dataset {
            Some(d) => DataSource::Dataset(d),
            None => DataSource::Synthetic(scene),
        };
        if voxel {
            let size = voxel_size
                .ok_or_else(|| BenchError::InvalidSpec("downsample = voxel requires voxel_size".into()))?;
            spec.downsampling = Downsampling::Voxel(size);
        }
        let defaults = spec.perturbation_level.default_bounds();
        spec.perturbation_bounds = PerturbationBounds {
            max_translation: bounds_t.unwrap_or(defaults.max_translation),
            max_rotation: bounds_r.unwrap_or(defaults.max_rotation),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// SplitMix64 finalizer used to derive independent sub-seeds.
fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_DOWNSAMPLE: u64 = 1;
const STREAM_PERTURB: u64 = 2;
const STREAM_SCENE: u64 = 3;

struct Job {
    pair_id: String,
    source: usize,
    target: usize,
    ground_truth: RigidTransform,
    initial: RigidTransform,
}

fn prepare(spec: &ExperimentSpec, cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
    let reduced = match spec.downsampling {
        _ if spec.downsample_fraction >= 1.0 && spec.downsampling == Downsampling::Random => cloud.clone(),
        Downsampling::Random => downsample(cloud, spec.downsample_fraction, seed)?,
        Downsampling::Voxel(size) => voxel_downsample(cloud, size)?,
    };
    Ok(estimate_stats(&reduced, spec.config.k_neighbors, spec.config.eps_plane)?)
}

fn initial_guess(spec: &ExperimentSpec, gt: &RigidTransform, seed: u64) -> RigidTransform {
    match spec.perturbation_level {
        PerturbationLevel::None => RigidTransform::identity(),
        _ => perturb_with_bounds(gt, spec.perturbation_bounds, seed),
    }
}

/// Scan files in `dir` sorted by file name, each paired with its pose path.
pub fn list_scans(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut scans: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .map(|x| SCAN_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
                    .unwrap_or(false)
        })
        .collect();
    scans.sort();
    scans
        .into_iter()
        .map(|s| {
            let pose = s.with_extension(POSE_EXTENSION);
            if pose.is_file() {
                Ok((s, pose))
            } else {
                Err(BenchError::MissingGroundTruth(pose))
            }
        })
        .collect()
}

fn build_jobs(spec: &ExperimentSpec) -> Result<(Vec<PointCloud>, Vec<Job>)> {
    let mut clouds = Vec::new();
    let mut jobs = Vec::new();
    match &spec.data {
        DataSource::Dataset(dir) => {
            let scans = list_scans(dir)?;
            if scans.len() < 2 {
                return Err(BenchError::InvalidSpec(format!(
                    "{} holds {} scan(s); at least two are needed",
                    dir.display(),
                    scans.len()
                )));
            }
            let mut poses = Vec::with_capacity(scans.len());
            let mut names = Vec::with_capacity(scans.len());
            for (i, (scan, pose)) in scans.iter().enumerate() {
                let loaded = load_cloud(scan)?;
                clouds.push(prepare(spec, &loaded.cloud, mix_seed(spec.rng_seed, STREAM_DOWNSAMPLE, i as u64))?);
                poses.push(load_pose(pose)?);
                names.push(
                    scan.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| i.to_string()),
                );
            }
            for k in 0..scans.len() - 1 {
                let gt = poses[k].inverse().compose(&poses[k + 1]);
                for rep in 0..spec.repetitions {
                    let seed = mix_seed(spec.rng_seed, STREAM_PERTURB, (k * spec.repetitions + rep) as u64);
                    let mut pair_id = format!("{}->{}", names[k + 1], names[k]);
                    if spec.repetitions > 1 {
                        pair_id.push_str(&format!("#{rep}"));
                    }
                    jobs.push(Job {
                        pair_id,
                        source: k + 1,
                        target: k,
                        ground_truth: gt,
                        initial: initial_guess(spec, &gt, seed),
                    });
                }
            }
        }
        DataSource::Synthetic(template) => {
            for rep in 0..spec.repetitions {
                let mut scene_spec = template.clone();
                scene_spec.seed = mix_seed(spec.rng_seed, STREAM_SCENE, rep as u64);
                let scene = make_synthetic_scene(&scene_spec)?;
                let ds = mix_seed(spec.rng_seed, STREAM_DOWNSAMPLE, rep as u64);
                clouds.push(prepare(spec, &scene.source, ds)?);
                clouds.push(prepare(spec, &scene.target, ds.wrapping_add(1))?);
                let seed = mix_seed(spec.rng_seed, STREAM_PERTURB, rep as u64);
                jobs.push(Job {
                    pair_id: format!("rep_{rep:03}"),
                    source: 2 * rep,
                    target: 2 * rep + 1,
                    ground_truth: scene.ground_truth,
                    initial: initial_guess(spec, &scene.ground_truth, seed),
                });
            }
        }
    }
    Ok((clouds, jobs))
}

/// Registers every job and returns one row per pair, in pair order.
/// A registration that fails is reported with its initial guess and the
/// error message instead of aborting the run.
pub fn run_sequence(spec: &ExperimentSpec) -> Result<Vec<PairResult>> {
    spec.validate()?;
    let (clouds, jobs) = build_jobs(spec)?;
    Ok(jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let outcome = spec
                .algorithm
                .run(&clouds[job.source], &clouds[job.target], &job.initial, &spec.config);
            let wall_time = start.elapsed().as_secs_f64();
            let (estimate, iterations, converged, failure) = match outcome {
                Ok(r) => (r.transform, r.iterations, r.converged, None),
                Err(e) => (job.initial, 0, false, Some(e.to_string())),
            };
            let err = pose_error(&estimate, &job.ground_truth);
            PairResult {
                pair_id: job.pair_id.clone(),
                e_trans: err.e_trans,
                e_rot: err.e_rot,
                wall_time,
                iterations,
                converged,
                failure,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spec() {
        let text = "algorithm = gicp\nscene = corridor\nn_points = 500\nnoise = 0.01\noutliers = 0.1\n\
                    seed = 9\nperturbation = easy\nrepetitions = 4\nmax_iterations = 20\nreport_timing = false\n";
        let spec = ExperimentSpec::parse(Path::new("dir/spec.txt"), text).unwrap();
        assert_eq!(spec.algorithm, Algorithm::Baseline(BaselineKind::Gicp));
        assert_eq!(spec.repetitions, 4);
        assert_eq!(spec.config.max_iterations, 20);
        assert_eq!(spec.perturbation_level, PerturbationLevel::Easy);
        assert_eq!(spec.perturbation_bounds, PerturbationLevel::Easy.default_bounds());
        assert!(!spec.report_timing);
        match spec.data {
            DataSource::Synthetic(s) => {
                assert_eq!(s.kind, SceneKind::Corridor);
                assert_eq!(s.n_points, 500);
                assert_eq!(s.seed, 9);
            }
            _ => panic!("expected synthetic"),
        }
    }

    #[test]
    fn dataset_dir_is_relative_to_spec() {
        let spec = ExperimentSpec::parse(Path::new("/data/exp/spec.txt"), "dataset_dir = scans\n").unwrap();
        assert_eq!(spec.data, DataSource::Dataset(PathBuf::from("/data/exp/scans")));
    }

    #[test]
    fn rejects_invalid_specs() {
        let p = Path::new("s");
        assert!(ExperimentSpec::parse(p, "downsample_fraction = 0\n").is_err());
        assert!(ExperimentSpec::parse(p, "repetitions = 0\n").is_err());
        assert!(ExperimentSpec::parse(p, "downsample = voxel\n").is_err());
        assert!(ExperimentSpec::parse(p, "algorithm = ndt\n").is_err());
        assert!(matches!(ExperimentSpec::parse(p, "\nfoo = 1\n"), Err(BenchError::Parse { line: 2, .. })));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(mix_seed(1, STREAM_PERTURB, 0), mix_seed(1, STREAM_PERTURB, 1));
        assert_ne!(mix_seed(1, STREAM_PERTURB, 0), mix_seed(1, STREAM_SCENE, 0));
        assert_eq!(mix_seed(5, 2, 3), mix_seed(5, 2, 3));
    }
}
