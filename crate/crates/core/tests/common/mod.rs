#![allow(dead_code)]

use cobigicp::se3::RigidTransform;
use cobigicp::surface::{estimate_stats, PointCloud, DEFAULT_EPS_PLANE, DEFAULT_K_NEIGHBORS};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

pub struct Scene {
    pub source: PointCloud,
    pub target: PointCloud,
    pub ground_truth: RigidTransform,
}

/// Three orthogonal 2 m planes meeting at the origin. `target ≈ T_gt · source`.
pub fn plane_corner(n: usize, noise: f64, outlier_fraction: f64, seed: u64) -> Scene {
    plane_corner_with(n, noise, outlier_fraction, seed, Outliers::Source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outliers {
    Source,
    Target,
}

pub fn plane_corner_with(n: usize, noise: f64, outlier_fraction: f64, seed: u64, side: Outliers) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let ground_truth = RigidTransform::from_axis_angle(
        &(Vector3::from(axis) * 5f64.to_radians()),
        Vector3::from(dir) * 0.1,
    );
    let mut target: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let u = rng.random_range(0.0..2.0);
            let v = rng.random_range(0.0..2.0);
            match i % 3 {
                0 => Vector3::new(u, v, 0.0),
                1 => Vector3::new(0.0, u, v),
                _ => Vector3::new(u, 0.0, v),
            }
        })
        .collect();
    let inv = ground_truth.inverse();
    let normal = Normal::new(0.0, noise).unwrap();
    let mut source: Vec<Vector3<f64>> = target
        .iter()
        .map(|a| inv.apply(a) + Vector3::from_fn(|_, _| normal.sample(&mut rng)))
        .collect();
    let outliers = (outlier_fraction * n as f64).floor() as usize;
    for _ in 0..outliers {
        let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..3.0));
        match side {
            Outliers::Source => source.push(p),
            Outliers::Target => target.push(p),
        }
    }
    Scene {
        source: with_stats(source),
        target: with_stats(target),
        ground_truth,
    }
}

pub fn with_stats(points: Vec<Vector3<f64>>) -> PointCloud {
    estimate_stats(&PointCloud::new(points).unwrap(), DEFAULT_K_NEIGHBORS, DEFAULT_EPS_PLANE).unwrap()
}
