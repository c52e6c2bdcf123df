//! Planners for the three robustness primitives: toppling a held object onto
//! a different face, adaptive push-to-place, and fine layout correction.
//!
//! Planners read point clouds and emit plans; only [`correction_loop`] drives
//! a simulation itself.

mod correction;
mod push;
mod topple;

pub use correction::{
    correction_loop, correction_scan, goal_footprint, CorrectionKind, CorrectionOutcome,
    CorrectionTolerances, CorrectiveAction,
};
pub use push::{adaptive_push_plan, collision_points, displacement, PushParams, PushPlan};
pub use topple::{plan_topple, topple_direction, ToppleParams, TopplePlan};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geom::Face;
use crate::world::{Bin, PointCloud};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("no toppling plane")]
    NoTopplePlane,
    #[error("face {to} is not adjacent to {from}")]
    NotAdjacent { from: Face, to: Face },
    #[error("push planning diverged after {0} iterations")]
    PushDiverged(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Points of `cloud` inside the interior of `bin` and at least `above` over
/// its floor, with the walls trimmed off by `wall_margin`.
pub fn points_in_bin(cloud: &PointCloud, bin: &Bin, above: f64, wall_margin: f64) -> PointCloud {
    let top = bin.floor_z() + bin.interior_dims.z;
    cloud.filter(|i| {
        let p = cloud.points[i];
        bin.contains_xy(&p.xy(), -wall_margin) && p.z > bin.floor_z() + above && p.z < top
    })
}

/// Least-squares plane `z = a x + b y + c` and the RMS of its residuals.
pub(crate) fn fit_plane(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, f64)> {
    if points.len() < 3 {
        return None;
    }
    // center for conditioning
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let mut m = nalgebra::Matrix3::zeros();
    let mut r = Vector3::zeros();
    for p in points {
        let q = p - mean;
        let row = Vector3::new(q.x, q.y, 1.0);
        m += row * row.transpose();
        r += row * q.z;
    }
    let sol = m.lu().solve(&r)?;
    let (a, b) = (sol.x, sol.y);
    let c = mean.z - a * mean.x - b * mean.y + sol.z;
    let coef = Vector3::new(a, b, c);
    let rss: f64 = points
        .iter()
        .map(|p| (p.z - (a * p.x + b * p.y + c)).powi(2))
        .sum();
    Some((coef, (rss / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_fit_recovers_coefficients() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (i as f64 * 0.01, j as f64 * 0.01 - 0.5);
                pts.push(Vector3::new(x, y, 0.2 * x - 0.1 * y + 0.03));
            }
        }
        let (c, rms) = fit_plane(&pts).unwrap();
        assert!((c - Vector3::new(0.2, -0.1, 0.03)).norm() < 1e-10);
        assert!(rms < 1e-12);
        assert!(fit_plane(&pts[..2]).is_none());
    }
}
