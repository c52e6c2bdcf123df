use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, yaw_rotation, Face, Pose};

/// A cuboid resting on one full face: which model face points up, its yaw
/// about world Z, where it sits in the plane and the height of its support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StablePose {
    pub face_up: Face,
    pub yaw: f64,
    pub planar_position: Vector2<f64>,
    pub support_height: f64,
}

impl StablePose {
    pub fn orientation(&self) -> UnitQuaternion<f64> {
        yaw_rotation(self.yaw) * self.face_up.base_rotation()
    }

    pub fn to_pose(&self, dims: &Vector3<f64>) -> Pose {
        let up_extent = dims[self.face_up.axis()];
        Pose::new(
            Vector3::new(
                self.planar_position.x,
                self.planar_position.y,
                self.support_height + up_extent / 2.0,
            ),
            self.orientation(),
        )
    }

    /// Exact inverse of [`StablePose::to_pose`]; `None` when no model face is
    /// within `tol` of pointing straight up.
    pub fn from_pose(pose: &Pose, dims: &Vector3<f64>, tol: f64) -> Option<StablePose> {
        let face_up = Face::up(&pose.orientation);
        let up = pose.orientation * face_up.normal();
        if up.z < 1.0 - tol {
            return None;
        }
        Some(Self::with_face(pose, dims, face_up, &pose.orientation))
    }

    /// Nearest stable pose: tips the box onto the face closest to pointing
    /// down with the smallest rotation, keeping the center's planar position.
    pub fn snap(pose: &Pose, dims: &Vector3<f64>) -> StablePose {
        let face_up = Face::up(&pose.orientation);
        let up = pose.orientation * face_up.normal();
        let align = UnitQuaternion::rotation_between(&up, &Vector3::z())
            .unwrap_or_else(UnitQuaternion::identity);
        let rot = align * pose.orientation;
        Self::with_face(pose, dims, face_up, &rot)
    }

    fn with_face(
        pose: &Pose,
        dims: &Vector3<f64>,
        face_up: Face,
        rot: &UnitQuaternion<f64>,
    ) -> StablePose {
        let yaw_part = rot * face_up.base_rotation().inverse();
        let x = yaw_part * Vector3::x();
        StablePose {
            face_up,
            yaw: wrap_angle(x.y.atan2(x.x)),
            planar_position: pose.position.xy(),
            support_height: pose.position.z - dims[face_up.axis()] / 2.0,
        }
    }
}
