//! Simulated sensing: instance segmentation with controllable degradation,
//! noisy 6D pose estimation, candidate ordering and pick-point selection.
//!
//! Ground-truth labels from the renderer feed only the noise models here;
//! everything downstream sees segments, estimates and pick candidates.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{axis_rotation, yaw_rotation, CuboidModel, Face, Pose};
use crate::world::PointCloud;

/// A face counts as top-facing when its normal is this close to world up.
pub const TOP_FACE_TOL_RAD: f64 = 15.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegNoiseConfig {
    /// Boundary pixels peeled off each segment.
    pub erosion_px: u32,
    /// Chance that a pixel bordering another instance is given that label.
    pub label_swap_rate: f64,
    /// Confidence is drawn uniformly from `[1 - spread, 1]`.
    pub confidence_spread: f64,
    pub min_pixels: usize,
    pub min_confidence: f64,
}

impl Default for SegNoiseConfig {
    fn default() -> Self {
        Self {
            erosion_px: 0,
            label_swap_rate: 0.0,
            confidence_spread: 0.0,
            min_pixels: 50,
            min_confidence: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoiseConfig {
    pub translation_sigma_m: f64,
    pub yaw_sigma_rad: f64,
    /// Probability that the estimate shows an adjacent face up.
    pub face_confusion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub point_indices: Vec<usize>,
    pub confidence: f64,
    pub mean_z: f64,
    /// Majority ground-truth label of the member points.
    pub estimated_object: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Mean horizontal position of the member points.
    pub fn centroid_xy(&self, cloud: &PointCloud) -> Vector2<f64> {
        let sum: Vector2<f64> = self.point_indices.iter().map(|i| cloud.points[*i].xy()).sum();
        sum / self.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub translation_sigma: f64,
    pub yaw_sigma: f64,
    pub face_up_confusion: f64,
}

impl PoseEstimate {
    pub fn face_up(&self) -> Face {
        Face::up(&self.pose.orientation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PickCandidate {
    pub object_segment: Segment,
    pub pick_point: Vector3<f64>,
    pub surface_normal: Vector3<f64>,
    pub planar_patch_radius: f64,
    pub score: f64,
    pub face: Face,
}

/// Turns the ground-truth label image into degraded instance segments.
pub fn segment_instances(cloud: &PointCloud, noise: &SegNoiseConfig, seed: u64) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<i32> = (0..cloud.len()).map(|i| cloud.label(i)).collect();
    let pixel_of: HashMap<(u32, u32), usize> =
        cloud.pixels.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let neighbours = |i: usize| {
        let (u, v) = cloud.pixels[i];
        let mut out = [None; 4];
        let cand = [
            (u.wrapping_sub(1), v),
            (u + 1, v),
            (u, v.wrapping_sub(1)),
            (u, v + 1),
        ];
        for (k, p) in cand.iter().enumerate() {
            out[k] = pixel_of.get(p).copied();
        }
        out
    };

    let mut label = truth.clone();
    if noise.label_swap_rate > 0.0 {
        for i in 0..cloud.len() {
            if truth[i] < 0 {
                continue;
            }
            let other = neighbours(i)
                .into_iter()
                .flatten()
                .map(|j| truth[j])
                .find(|l| *l >= 0 && *l != truth[i]);
            if let Some(l) = other {
                if rng.random::<f64>() < noise.label_swap_rate {
                    label[i] = l;
                }
            }
        }
    }
    for _ in 0..noise.erosion_px {
        let before = label.clone();
        for i in 0..cloud.len() {
            if before[i] < 0 {
                continue;
            }
            let interior = neighbours(i)
                .into_iter()
                .all(|n| n.is_some_and(|j| before[j] == before[i]));
            if !interior {
                label[i] = -1;
            }
        }
    }

    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, l) in label.iter().enumerate() {
        if *l >= 0 {
            groups.entry(*l).or_default().push(i);
        }
    }
    let mut out = Vec::new();
    for (_, idx) in groups {
        let confidence = if noise.confidence_spread > 0.0 {
            1.0 - rng.random::<f64>() * noise.confidence_spread
        } else {
            1.0
        };
        if idx.len() < noise.min_pixels || confidence < noise.min_confidence {
            continue;
        }
        let mean_z = idx.iter().map(|i| cloud.points[*i].z).sum::<f64>() / idx.len() as f64;
        let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
        for i in &idx {
            *votes.entry(truth[*i]).or_default() += 1;
        }
        let majority = votes
            .iter()
            .filter(|(l, _)| **l >= 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, _)| *l as usize);
        out.push(Segment {
            point_indices: idx,
            confidence,
            mean_z,
            estimated_object: majority,
        });
    }
    out
}

/// Highest mean Z first; ties go to the larger segment, then the lower id.
pub fn order_candidates(mut segments: Vec<Segment>) -> Vec<Segment> {
    segments.sort_by(|a, b| {
        b.mean_z
            .total_cmp(&a.mean_z)
            .then(b.len().cmp(&a.len()))
            .then(a.estimated_object.unwrap_or(usize::MAX).cmp(&b.estimated_object.unwrap_or(usize::MAX)))
    });
    segments
}

/// Synthesizes an estimate by perturbing the true pose.
pub fn estimate_pose(
    _segment: &Segment,
    _model: &CuboidModel,
    world_truth: &Pose,
    noise: &PoseNoiseConfig,
    seed: u64,
) -> PoseEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pose = *world_truth;
    if noise.translation_sigma_m > 0.0 {
        let n = Normal::new(0.0, noise.translation_sigma_m).expect("finite sigma");
        for a in 0..3 {
            pose.position[a] += n.sample(&mut rng);
        }
    }
    if noise.yaw_sigma_rad > 0.0 {
        let n = Normal::new(0.0, noise.yaw_sigma_rad).expect("finite sigma");
        pose.orientation = yaw_rotation(n.sample(&mut rng)) * pose.orientation;
    }
    if noise.face_confusion > 0.0 && rng.random::<f64>() < noise.face_confusion {
        let axes = [Vector3::x(), -Vector3::x(), Vector3::y(), -Vector3::y()];
        let axis = axes[rng.random_range(0..4)];
        pose.orientation = axis_rotation(&axis, std::f64::consts::FRAC_PI_2) * pose.orientation;
    }
    PoseEstimate {
        pose,
        translation_sigma: noise.translation_sigma_m,
        yaw_sigma: noise.yaw_sigma_rad,
        face_up_confusion: noise.face_confusion,
    }
}

/// Cloud points not in `segment` that rise above `below` (world Z).
fn occluders(cloud: &PointCloud, segment: &Segment, below: f64) -> Vec<Vector2<f64>> {
    let mut member = vec![false; cloud.len()];
    for i in &segment.point_indices {
        member[*i] = true;
    }
    (0..cloud.len())
        .filter(|i| !member[*i] && cloud.points[*i].z > below)
        .map(|i| cloud.points[i].xy())
        .collect()
}

/// Largest clear disc around a point on a face: bounded by the face edges and
/// by occluding points.
fn patch_radius(local: &Vector3<f64>, face: Face, half: &Vector3<f64>, world_xy: &Vector2<f64>, occ: &[Vector2<f64>]) -> f64 {
    let a = face.axis();
    let mut r = f64::INFINITY;
    for k in 0..3 {
        if k != a {
            r = r.min(half[k] - local[k].abs());
        }
    }
    for p in occ {
        r = r.min((p - world_xy).norm());
    }
    r.max(0.0)
}

/// Picks the best-scoring model sample on the estimated top face whose
/// surrounding patch fits the suction cup. `None` when the top face is not
/// level enough or no patch is large enough.
pub fn select_pick_point(
    segment: &Segment,
    estimate: &PoseEstimate,
    model: &CuboidModel,
    cup_radius: f64,
    cloud: &PointCloud,
) -> Option<PickCandidate> {
    let face = estimate.face_up();
    let normal = estimate.pose.orientation * face.normal();
    if normal.z < TOP_FACE_TOL_RAD.cos() {
        return None;
    }
    let half = model.half_extents();
    let top = estimate.pose.transform_point(&(face.normal() * half[face.axis()])).z;
    // points clearly above the face surface block the cup
    let occ = occluders(cloud, segment, top + 0.005);
    let mut best: Option<(f64, f64, Vector3<f64>)> = None;
    for s in model.samples_on_face(face) {
        let w = estimate.pose.transform_point(&s.point);
        let r = patch_radius(&s.point, face, &half, &w.xy(), &occ);
        if r + 1e-12 < cup_radius {
            continue;
        }
        let better = match best {
            None => true,
            Some((score, radius, _)) => {
                s.pick_score < score - 1e-12 || (s.pick_score <= score + 1e-12 && r > radius + 1e-12)
            }
        };
        if better {
            best = Some((s.pick_score, r, w));
        }
    }
    best.map(|(score, r, p)| PickCandidate {
        object_segment: segment.clone(),
        pick_point: p,
        surface_normal: normal,
        planar_patch_radius: r,
        score,
        face,
    })
}
