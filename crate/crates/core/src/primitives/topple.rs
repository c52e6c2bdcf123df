use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{fit_plane, PrimitiveError};
use crate::geom::{Face, Footprint, Pose};
use crate::world::{footprint, toppled_pose, Bin, PointCloud, StablePose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToppleParams {
    /// Free area required around each footprint, as a multiple of its area.
    pub clearance_factor: f64,
    /// Largest RMS deviation of the patch from its fitted plane.
    pub flat_tol_m: f64,
    /// Spacing of candidate placement centers.
    pub grid_pitch_m: f64,
    /// Fewest cloud points that must observe a patch.
    pub min_points: usize,
    /// Largest slope of an acceptable plane.
    pub max_tilt_rad: f64,
}

impl Default for ToppleParams {
    fn default() -> Self {
        Self {
            clearance_factor: 1.2,
            flat_tol_m: 0.003,
            grid_pitch_m: 0.01,
            min_points: 20,
            max_tilt_rad: 5f64.to_radians(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopplePlan {
    /// Where the held object is set down before rolling.
    pub place_pose: Pose,
    pub lateral_direction: Vector2<f64>,
    pub expected_face_up: Face,
}

/// Lateral direction that turns `desired` up: the roll brings up the face
/// that pointed against the motion.
pub fn topple_direction(
    orientation: &UnitQuaternion<f64>,
    desired: Face,
) -> Result<Vector2<f64>, PrimitiveError> {
    let current = Face::up(orientation);
    if !current.is_adjacent(desired) {
        return Err(PrimitiveError::NotAdjacent {
            from: current,
            to: desired,
        });
    }
    let n = orientation * desired.normal();
    Ok(-Vector2::new(n.x, n.y).normalize())
}

/// Margin that grows a footprint's area by `factor`.
fn clearance_margin(fp: &Footprint, factor: f64) -> f64 {
    let (a, b) = (2.0 * fp.half[0], 2.0 * fp.half[1]);
    // (a + 2m)(b + 2m) = factor * a * b
    let s = a + b;
    (-s + (s * s + 4.0 * (factor - 1.0) * a * b).sqrt()) / 4.0
}

/// Finds a flat, empty patch in the observed bin where the held object can
/// be set down and rolled onto `desired`.
///
/// `held` is the estimated pose of the held object and `cloud` the bin
/// observation without it. Candidates lie on a grid over the bin interior;
/// each must keep the placed and the rolled footprints (grown by the
/// clearance factor) inside the walls and over a well-observed flat patch.
/// Among those, the candidate farthest from any obstacle point and wall wins.
pub fn plan_topple(
    cloud: &PointCloud,
    held: &Pose,
    dims: &Vector3<f64>,
    desired: Face,
    bin: &Bin,
    params: &ToppleParams,
) -> Result<TopplePlan, PrimitiveError> {
    if !(params.grid_pitch_m > 0.0) || !(params.clearance_factor >= 1.0) {
        return Err(PrimitiveError::InvalidParameter("bad toppling parameters".into()));
    }
    let stable = StablePose::snap(held, dims);
    let dir = topple_direction(&stable.orientation(), desired)?;
    let (lo, hi) = (bin.interior_min(), bin.interior_max());
    let nx = ((hi.x - lo.x) / params.grid_pitch_m).floor() as usize;
    let ny = ((hi.y - lo.y) / params.grid_pitch_m).floor() as usize;
    let center = bin.pose.position.xy();
    let mut best: Option<(f64, f64, Pose)> = None;
    for i in 0..=nx {
        for j in 0..=ny {
            let c = Vector2::new(
                lo.x + (hi.x - lo.x - nx as f64 * params.grid_pitch_m) / 2.0 + i as f64 * params.grid_pitch_m,
                lo.y + (hi.y - lo.y - ny as f64 * params.grid_pitch_m) / 2.0 + j as f64 * params.grid_pitch_m,
            );
            let placed = StablePose {
                planar_position: c,
                support_height: bin.floor_z(),
                ..stable
            }
            .to_pose(dims);
            let rolled = toppled_pose(&placed, dims, &dir);
            let fps: Vec<Footprint> = [placed, rolled]
                .iter()
                .map(|p| {
                    let fp = footprint(p, dims);
                    fp.expanded(clearance_margin(&fp, params.clearance_factor))
                })
                .collect();
            if fps.iter().any(|fp| bin.wall_excess(fp) > 0.0) {
                continue;
            }
            let patch: Vec<Vector3<f64>> = cloud
                .points
                .iter()
                .filter(|p| fps.iter().any(|fp| fp.contains(&p.xy(), 0.0)))
                .copied()
                .collect();
            if patch.len() < params.min_points {
                continue;
            }
            let Some((coef, rms)) = fit_plane(&patch) else {
                continue;
            };
            if rms > params.flat_tol_m || coef.xy().norm() > params.max_tilt_rad.tan() {
                continue;
            }
            let plane_z = |p: &Vector2<f64>| coef.x * p.x + coef.y * p.y + coef.z;
            let mid = (c + rolled.position.xy()) / 2.0;
            let mut clearance = [mid.x - lo.x, hi.x - mid.x, mid.y - lo.y, hi.y - mid.y]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            for p in &cloud.points {
                if p.z > plane_z(&p.xy()) + params.flat_tol_m {
                    clearance = clearance.min((p.xy() - mid).norm());
                }
            }
            let from_center = (mid - center).norm();
            let better = match best {
                None => true,
                Some((bc, bd, _)) => clearance > bc + 1e-12 || (clearance >= bc - 1e-12 && from_center < bd - 1e-12),
            };
            if better {
                let place = StablePose {
                    planar_position: c,
                    support_height: plane_z(&c),
                    ..stable
                }
                .to_pose(dims);
                best = Some((clearance, from_center, place));
            }
        }
    }
    let (_, _, place_pose) = best.ok_or(PrimitiveError::NoTopplePlane)?;
    Ok(TopplePlan {
        place_pose,
        lateral_direction: dir,
        expected_face_up: desired,
    })
}
