//! Cloud downsampling and pose perturbation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use cobigicp::se3::{RigidTransform, TangentVector};
use cobigicp::surface::PointCloud;
use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{BenchError, Result};

/// Uniform random subset of `ceil(fraction · N)` points without replacement,
/// kept in their original order.
pub fn downsample(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(BenchError::InvalidSpec(format!(
            "downsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = cloud.len();
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    if keep == n {
        return Ok(PointCloud::new(cloud.points().to_vec())?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, keep).into_vec();
    chosen.sort_unstable();
    let pts = cloud.points();
    Ok(PointCloud::new(chosen.into_iter().map(|i| pts[i]).collect())?)
}

/// One centroid per occupied voxel of edge `voxel_size`, ordered by the
/// first point that fell into each voxel.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) {
        return Err(BenchError::InvalidSpec(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in cloud.points() {
        let key = [
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        ];
        let slot = *slots.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p;
        sums[slot].1 += 1;
    }
    Ok(PointCloud::new(
        sums.into_iter().map(|(s, c)| s / c as f64).collect(),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbationLevel {
    #[default]
    None,
    Easy,
    Medium,
    Hard,
}

/// Largest translation (m) and rotation (rad) drawn for a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBounds {
    pub max_translation: f64,
    pub max_rotation: f64,
}

impl PerturbationLevel {
    pub fn default_bounds(self) -> PerturbationBounds {
        let (t, deg) = match self {
            PerturbationLevel::None => (0.0, 0.0),
            PerturbationLevel::Easy => (0.1, 5.0),
            PerturbationLevel::Medium => (0.5, 20.0),
            PerturbationLevel::Hard => (1.0, 45.0),
        };
        PerturbationBounds {
            max_translation: t,
            max_rotation: f64::to_radians(deg),
        }
    }
}

impl fmt::Display for PerturbationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationLevel::None => "none",
            PerturbationLevel::Easy => "easy",
            PerturbationLevel::Medium => "medium",
            PerturbationLevel::Hard => "hard",
        })
    }
}

impl FromStr for PerturbationLevel {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PerturbationLevel::None),
            "easy" | "easypose" => Ok(PerturbationLevel::Easy),
            "medium" | "midium" | "mediumpose" | "midiumpose" => Ok(PerturbationLevel::Medium),
            "hard" | "hardpose" => Ok(PerturbationLevel::Hard),
            other => Err(BenchError::InvalidSpec(format!("unknown perturbation level {other:?}"))),
        }
    }
}

/// `retract(T_gt, δx)` with `ξ` and `Δt` each pointing in a uniformly random
/// direction with magnitude uniform in `[0, bound]`. The resulting pose error
/// against `T_gt` is exactly `(‖Δt‖, ‖ξ‖)`.
pub fn perturb_with_bounds(ground_truth: &RigidTransform, bounds: PerturbationBounds, seed: u64) -> RigidTransform {
    if bounds.max_translation == 0.0 && bounds.max_rotation == 0.0 {
        return *ground_truth;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let angle = rng.random::<f64>() * bounds.max_rotation;
    let dist = rng.random::<f64>() * bounds.max_translation;
    let dx = TangentVector::new(Vector3::from(axis) * angle, Vector3::from(dir) * dist);
    ground_truth.retract(&dx)
}

pub fn perturb(ground_truth: &RigidTransform, level: PerturbationLevel, seed: u64) -> RigidTransform {
    perturb_with_bounds(ground_truth, level.default_bounds(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cobigicp::se3::pose_error;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn full_fraction_is_identity() {
        let c = cloud(37);
        assert_eq!(downsample(&c, 1.0, 5).unwrap(), c);
    }

    #[test]
    fn ceil_rule_and_order() {
        let c = cloud(100);
        let d = downsample(&c, 0.1, 1).unwrap();
        assert_eq!(d.len(), 10);
        assert!(d.points().windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(downsample(&cloud(101), 0.1, 1).unwrap().len(), 11);
        assert!(downsample(&c, 0.0, 1).is_err());
        assert!(downsample(&c, 1.5, 1).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let c = cloud(500);
        assert_eq!(downsample(&c, 0.3, 9).unwrap(), downsample(&c, 0.3, 9).unwrap());
        assert_ne!(downsample(&c, 0.3, 9).unwrap(), downsample(&c, 0.3, 10).unwrap());
    }

    #[test]
    fn voxel_centroids() {
        let pts = vec![
            Vector3::new(0.1, 0.1, 0.1),
            Vector3::new(0.3, 0.3, 0.3),
            Vector3::new(1.5, 0.0, 0.0),
        ];
        let v = voxel_downsample(&PointCloud::new(pts).unwrap(), 1.0).unwrap();
        assert_eq!(v.len(), 2);
        assert!((v.points()[0] - Vector3::repeat(0.2)).norm() < 1e-12);
    }

    #[test]
    fn perturbation_levels() {
        let gt = RigidTransform::from_axis_angle(&Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, -2.0, 0.5));
        assert_eq!(perturb(&gt, PerturbationLevel::None, 3), gt);
        for level in [PerturbationLevel::Easy, PerturbationLevel::Medium, PerturbationLevel::Hard] {
            let b = level.default_bounds();
            for seed in 0..200 {
                let e = pose_error(&perturb(&gt, level, seed), &gt);
                assert!(e.e_trans <= b.max_translation + 1e-12);
                assert!(e.e_rot <= b.max_rotation + 1e-7);
            }
        }
        assert_eq!(
            perturb(&gt, PerturbationLevel::Hard, 77),
            perturb(&gt, PerturbationLevel::Hard, 77)
        );
    }
}
