//! Bidirectional correspondence search.
//!
//! For every target point `a_i` the forward search finds the nearest
//! transformed source point `T b_j`; the backward search then finds the target
//! point nearest to `T b_j`. A pair survives the gate when that round trip lands
//! within `eps_gate` of `a_i`.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use crate::surface::{NeighborIndex, PointCloud};

pub const ADAPTIVE_GATE_FACTOR: f64 = 2.5;
pub const ADAPTIVE_GATE_FLOOR: f64 = 1e-4;

/// How the round-trip gate radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GateMode {
    /// `max(2.5 · median forward distance, 1e-4 m)`, recomputed every call.
    #[default]
    Adaptive,
    /// Fixed radius in meters; `f64::INFINITY` disables gating and `0`
    /// rejects every pair.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardMatch {
    pub target_index: usize,
    pub source_index: usize,
    /// `‖a_i − T b_j‖` in meters.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardMatch {
    pub target_index: usize,
    /// Target point nearest to the matched, transformed source point.
    pub back_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair {
    pub target_index: usize,
    pub source_index: usize,
    pub forward_distance: f64,
    /// `‖a_{C_b(i)} − a_i‖`
    pub gate_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    /// Ordered by target index.
    pub pairs: Vec<CorrespondencePair>,
    pub rejected_count: usize,
    /// Gate radius that produced this set.
    pub gate: f64,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every forward match accepted, without any gating.
    pub fn from_forward(forward: &[ForwardMatch]) -> Self {
        CorrespondenceSet {
            pairs: forward
                .iter()
                .map(|f| CorrespondencePair {
                    target_index: f.target_index,
                    source_index: f.source_index,
                    forward_distance: f.distance,
                    gate_distance: 0.0,
                })
                .collect(),
            rejected_count: 0,
            gate: f64::INFINITY,
        }
    }
}

pub fn transform_points(cloud: &PointCloud, t: &RigidTransform) -> Vec<Vector3<f64>> {
    cloud.map_points(|p| t.apply(p))
}

/// Nearest transformed-source point for every target point. `source_index`
/// must be built over the source points already mapped by the current
/// transform.
pub fn forward_search(target: &PointCloud, source_index: &NeighborIndex) -> Result<Vec<ForwardMatch>> {
    if target.is_empty() || source_index.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(target
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let n = source_index.nearest(a);
            ForwardMatch {
                target_index: i,
                source_index: n.index,
                distance: n.dist_sq.sqrt(),
            }
        })
        .collect())
}

/// Convenience form that transforms `source` by `t` and indexes it.
pub fn forward_search_transformed(
    target: &PointCloud,
    source: &PointCloud,
    t: &RigidTransform,
) -> Result<Vec<ForwardMatch>> {
    if source.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NeighborIndex::build(&transform_points(source, t))?;
    forward_search(target, &index)
}

/// Target point nearest to `T b_{C_f(i)}` for each forward match.
pub fn backward_search(
    target_index: &NeighborIndex,
    source: &PointCloud,
    t: &RigidTransform,
    forward: &[ForwardMatch],
) -> Result<Vec<BackwardMatch>> {
    if target_index.is_empty() || source.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let src = source.points();
    forward
        .par_iter()
        .map(|f| {
            let p = src.get(f.source_index).ok_or_else(|| {
                Error::InvalidArgument(format!("source index {} out of range", f.source_index))
            })?;
            let n = target_index.nearest(&t.apply(p));
            Ok(BackwardMatch {
                target_index: f.target_index,
                back_index: n.index,
            })
        })
        .collect()
}

/// Median forward distance scaled by [`ADAPTIVE_GATE_FACTOR`], floored at
/// [`ADAPTIVE_GATE_FLOOR`].
pub fn adaptive_gate(forward: &[ForwardMatch]) -> f64 {
    let mut d: Vec<f64> = forward.iter().map(|f| f.distance).collect();
    let med = median(&mut d).unwrap_or(0.0);
    (ADAPTIVE_GATE_FACTOR * med).max(ADAPTIVE_GATE_FLOOR)
}

pub fn resolve_gate(mode: GateMode, forward: &[ForwardMatch]) -> f64 {
    match mode {
        GateMode::Adaptive => adaptive_gate(forward),
        GateMode::Fixed(eps) => eps,
    }
}

/// Keeps the pairs whose round trip lands strictly within `eps_gate`.
pub fn bidirectional_filter(
    forward: &[ForwardMatch],
    backward: &[BackwardMatch],
    target: &PointCloud,
    eps_gate: f64,
) -> Result<CorrespondenceSet> {
    if forward.len() != backward.len() {
        return Err(Error::InvalidArgument(format!(
            "{} forward matches but {} backward matches",
            forward.len(),
            backward.len()
        )));
    }
    let a = target.points();
    let mut set = CorrespondenceSet {
        pairs: Vec::with_capacity(forward.len()),
        rejected_count: 0,
        gate: eps_gate,
    };
    for (f, b) in forward.iter().zip(backward) {
        if f.target_index != b.target_index {
            return Err(Error::InvalidArgument(
                "forward and backward matches are not aligned".into(),
            ));
        }
        let gate_distance = (a[b.back_index] - a[f.target_index]).norm();
        if gate_distance < eps_gate {
            set.pairs.push(CorrespondencePair {
                target_index: f.target_index,
                source_index: f.source_index,
                forward_distance: f.distance,
                gate_distance,
            });
        } else {
            set.rejected_count += 1;
        }
    }
    Ok(set)
}

/// Full bidirectional pipeline under transform `t`.
pub fn bidirectional_correspondences(
    target: &PointCloud,
    target_index: &NeighborIndex,
    source: &PointCloud,
    t: &RigidTransform,
    gate: GateMode,
) -> Result<CorrespondenceSet> {
    let forward = forward_search_transformed(target, source, t)?;
    let backward = backward_search(target_index, source, t, &forward)?;
    bidirectional_filter(&forward, &backward, target, resolve_gate(gate, &forward))
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
