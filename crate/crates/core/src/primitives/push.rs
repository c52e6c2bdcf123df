use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::PrimitiveError;
use crate::geom::{expand_model, CuboidModel, Pose};
use crate::world::Bin;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushParams {
    /// Half of the model enlargement.
    pub eps_m: f64,
    pub step_m: f64,
    pub max_iters: usize,
    pub approach_height_m: f64,
}

impl Default for PushParams {
    fn default() -> Self {
        Self {
            eps_m: 0.01,
            step_m: 0.005,
            max_iters: 200,
            approach_height_m: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushPlan {
    pub pre_push_pose: Pose,
    pub approach_height: f64,
    /// Straight line from the pre-push pose to the target.
    pub push_path: Vec<Pose>,
    pub iterations_used: usize,
    /// Displacement vector computed at each iteration.
    pub displacements: Vec<Vector3<f64>>,
}

/// Indices of `points` inside (or on) the box `model` at `pose`.
pub fn collision_points(points: &[Vector3<f64>], model: &CuboidModel, pose: &Pose) -> Vec<usize> {
    let half = model.half_extents();
    let inv = pose.inverse();
    (0..points.len())
        .filter(|i| {
            let l = inv.transform_point(&points[*i]);
            (0..3).all(|a| l[a].abs() <= half[a])
        })
        .collect()
}

/// Sum of the vectors from each colliding point to the model center.
pub fn displacement(points: &[Vector3<f64>], hits: &[usize], pose: &Pose) -> Vector3<f64> {
    hits.iter()
        .fold(Vector3::zeros(), |acc, i| acc + (pose.position - points[*i]))
}

/// Retreats an enlarged copy of the model from `target` along the summed
/// collision vectors until no cloud point is inside it. The object is later
/// lowered at that pre-push pose and pushed straight back to `target`.
///
/// Motion is restricted to the horizontal part of the displacement. When
/// the collision vectors cancel out, the model escapes away from the
/// nearest wall of `bin` (or along +X without a bin).
pub fn adaptive_push_plan(
    points: &[Vector3<f64>],
    model: &CuboidModel,
    target: &Pose,
    params: &PushParams,
    bin: Option<&Bin>,
) -> Result<PushPlan, PrimitiveError> {
    if !(params.eps_m > 0.0) {
        return Err(PrimitiveError::InvalidParameter("push eps must be > 0".into()));
    }
    if !(params.step_m > 0.0) {
        return Err(PrimitiveError::InvalidParameter("push step must be > 0".into()));
    }
    let enlarged = expand_model(model, params.eps_m)
        .map_err(|e| PrimitiveError::InvalidParameter(e.to_string()))?;
    let mut pose = *target;
    let mut displacements = Vec::new();
    for it in 0..=params.max_iters {
        let hits = collision_points(points, &enlarged, &pose);
        if hits.is_empty() {
            return Ok(PushPlan {
                pre_push_pose: pose,
                approach_height: params.approach_height_m,
                push_path: vec![pose, *target],
                iterations_used: it,
                displacements,
            });
        }
        if it == params.max_iters {
            break;
        }
        let d = displacement(points, &hits, &pose);
        displacements.push(d);
        let planar = Vector2::new(d.x, d.y);
        let dir = if planar.norm() > 1e-12 {
            planar.normalize()
        } else {
            escape_direction(&pose.position.xy(), bin)
        };
        pose.position.x += params.step_m * dir.x;
        pose.position.y += params.step_m * dir.y;
    }
    Err(PrimitiveError::PushDiverged(params.max_iters))
}

fn escape_direction(p: &Vector2<f64>, bin: Option<&Bin>) -> Vector2<f64> {
    let Some(bin) = bin else {
        return Vector2::x();
    };
    let (lo, hi) = (bin.interior_min(), bin.interior_max());
    let gaps = [
        (p.x - lo.x, Vector2::x()),
        (hi.x - p.x, -Vector2::x()),
        (p.y - lo.y, Vector2::y()),
        (hi.y - p.y, -Vector2::y()),
    ];
    gaps.iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|g| g.1)
        .unwrap_or_else(Vector2::x)
}
