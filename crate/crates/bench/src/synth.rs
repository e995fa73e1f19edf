//! Seeded synthetic scenes with known ground truth.
//!
//! The target is sampled on the scene surfaces. The source is the same sample
//! mapped by `T_gt⁻¹`, perturbed with isotropic Gaussian noise, followed by
//! `⌊outlier_fraction · n⌋` points drawn uniformly from the source bounding box
//! inflated 2x about its center. Registration should recover `T_gt`, i.e.
//! `target ≈ T_gt · source`.

use std::fmt;
use std::str::FromStr;

use cobigicp::se3::RigidTransform;
use cobigicp::surface::PointCloud;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Floor and two walls meeting at the origin, each 2 m x 2 m.
    PlaneCorner,
    /// Floor, ceiling and two walls of a 10 m corridor along x. Translation
    /// along the axis is unobservable.
    Corridor,
    /// Five randomly placed and oriented square patches plus a sphere.
    RandomSurfaces,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::PlaneCorner => "plane_corner",
            SceneKind::Corridor => "corridor",
            SceneKind::RandomSurfaces => "random_surfaces",
        })
    }
}

impl FromStr for SceneKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane_corner" => Ok(SceneKind::PlaneCorner),
            "corridor" => Ok(SceneKind::Corridor),
            "random_surfaces" => Ok(SceneKind::RandomSurfaces),
            other => Err(BenchError::InvalidSpec(format!("unknown scene kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub n_points: usize,
    /// Per-axis standard deviation of the source noise (m).
    pub noise_sigma: f64,
    /// In `[0, 1)`.
    pub outlier_fraction: f64,
    pub seed: u64,
    /// Ground-truth rotation angle (rad) about a random axis.
    pub gt_rotation: f64,
    /// Ground-truth translation length (m) in a random direction.
    pub gt_translation: f64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, n_points: usize, noise_sigma: f64, outlier_fraction: f64, seed: u64) -> Self {
        Self {
            kind,
            n_points,
            noise_sigma,
            outlier_fraction,
            seed,
            gt_rotation: 5f64.to_radians(),
            gt_translation: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps source coordinates into the target frame.
    pub ground_truth: RigidTransform,
    /// Number of trailing source points that are outliers.
    pub outliers: usize,
}

pub fn make_synthetic_scene(spec: &SceneSpec) -> Result<Scene> {
    if !(spec.outlier_fraction >= 0.0 && spec.outlier_fraction < 1.0) {
        return Err(BenchError::InvalidSpec(format!(
            "outlier fraction must lie in [0, 1), got {}",
            spec.outlier_fraction
        )));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(BenchError::InvalidSpec(format!(
            "noise sigma must be non-negative, got {}",
            spec.noise_sigma
        )));
    }
    if spec.n_points == 0 {
        return Err(BenchError::InvalidSpec("scene needs at least one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let ground_truth = RigidTransform::from_axis_angle(
        &(Vector3::from(axis) * spec.gt_rotation),
        Vector3::from(dir) * spec.gt_translation,
    );

    let target = match spec.kind {
        SceneKind::PlaneCorner => plane_corner(&mut rng, spec.n_points),
        SceneKind::Corridor => corridor(&mut rng, spec.n_points),
        SceneKind::RandomSurfaces => random_surfaces(&mut rng, spec.n_points),
    };

    let inverse = ground_truth.inverse();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
    let mut source: Vec<Vector3<f64>> = target
        .iter()
        .map(|a| {
            let n = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            inverse.apply(a) + n
        })
        .collect();

    let outliers = (spec.outlier_fraction * spec.n_points as f64).floor() as usize;
    if outliers > 0 {
        let (lo, hi) = bounds(&source);
        let center = (lo + hi) * 0.5;
        let half = (hi - lo) * 0.5 * 2.0;
        let (lo, hi) = (center - half, center + half);
        for _ in 0..outliers {
            let p = Vector3::from_fn(|i, _| {
                if hi[i] > lo[i] {
                    rng.random_range(lo[i]..hi[i])
                } else {
                    lo[i]
                }
            });
            source.push(p);
        }
    }

    Ok(Scene {
        source: PointCloud::new(source)?,
        target: PointCloud::new(target)?,
        ground_truth,
        outliers,
    })
}

fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    )
}

fn plane_corner(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let u = rng.random_range(0.0..2.0);
            let v = rng.random_range(0.0..2.0);
            match i % 3 {
                0 => Vector3::new(u, v, 0.0),
                1 => Vector3::new(0.0, u, v),
                _ => Vector3::new(u, 0.0, v),
            }
        })
        .collect()
}

fn corridor(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    const LENGTH: f64 = 10.0;
    const WIDTH: f64 = 2.0;
    const HEIGHT: f64 = 2.5;
    (0..n)
        .map(|i| {
            let x = rng.random_range(0.0..LENGTH);
            match i % 4 {
                0 => Vector3::new(x, rng.random_range(0.0..WIDTH), 0.0),
                1 => Vector3::new(x, rng.random_range(0.0..WIDTH), HEIGHT),
                2 => Vector3::new(x, 0.0, rng.random_range(0.0..HEIGHT)),
                _ => Vector3::new(x, WIDTH, rng.random_range(0.0..HEIGHT)),
            }
        })
        .collect()
}

fn random_surfaces(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    const PATCHES: usize = 5;
    const PATCH_SIZE: f64 = 1.5;
    const SPHERE_RADIUS: f64 = 0.7;
    let patches: Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> = (0..PATCHES)
        .map(|_| {
            let center = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let n: [f64; 3] = UnitSphere.sample(&mut *rng);
            let normal = Vector3::from(n);
            let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let u = normal.cross(&helper).normalize();
            let v = normal.cross(&u);
            (center, u, v)
        })
        .collect();
    let sphere_center = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (0..n)
        .map(|i| {
            let slot = i % (PATCHES + 1);
            if slot == PATCHES {
                let d: [f64; 3] = UnitSphere.sample(&mut *rng);
                sphere_center + Vector3::from(d) * SPHERE_RADIUS
            } else {
                let (c, u, v) = &patches[slot];
                let a = rng.random_range(-0.5..0.5) * PATCH_SIZE;
                let b = rng.random_range(-0.5..0.5) * PATCH_SIZE;
                c + u * a + v * b
            }
        })
        .collect()
}
