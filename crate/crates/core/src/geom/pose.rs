use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform: a position plus a unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    pub fn translated(&self, delta: &Vector3<f64>) -> Pose {
        Pose::new(self.position + delta, self.orientation)
    }

    /// Rotation about a world-frame axis through the pose's own position.
    pub fn rotated_in_place(&self, rotation: &UnitQuaternion<f64>) -> Pose {
        Pose::new(self.position, rotation * self.orientation)
    }

    pub fn planar_position(&self) -> Vector2<f64> {
        self.position.xy()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Rotation about the world vertical axis.
pub fn yaw_rotation(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Drops the vertical component of a world vector.
pub fn project_to_support_plane(v: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v.x, v.y)
}

/// One of the six model-frame faces of a cuboid, named by its outward normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Y")]
    PosY,
    #[serde(rename = "-Y")]
    NegY,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::PosX,
        Face::NegX,
        Face::PosY,
        Face::NegY,
        Face::PosZ,
        Face::NegZ,
    ];

    pub fn axis(self) -> usize {
        match self {
            Face::PosX | Face::NegX => 0,
            Face::PosY | Face::NegY => 1,
            Face::PosZ | Face::NegZ => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Face::PosX | Face::PosY | Face::PosZ => 1.0,
            _ => -1.0,
        }
    }

    pub fn from_axis(axis: usize, positive: bool) -> Face {
        match (axis, positive) {
            (0, true) => Face::PosX,
            (0, false) => Face::NegX,
            (1, true) => Face::PosY,
            (1, false) => Face::NegY,
            (2, true) => Face::PosZ,
            (2, false) => Face::NegZ,
            _ => panic!("axis index out of range: {axis}"),
        }
    }

    pub fn normal(self) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        n[self.axis()] = self.sign();
        n
    }

    pub fn opposite(self) -> Face {
        Face::from_axis(self.axis(), self.sign() < 0.0)
    }

    pub fn is_adjacent(self, other: Face) -> bool {
        self.axis() != other.axis()
    }

    /// The model face whose outward normal is most aligned with `world_dir`
    /// under `orientation`.
    pub fn most_aligned(orientation: &UnitQuaternion<f64>, world_dir: &Vector3<f64>) -> Face {
        let local = orientation.inverse() * world_dir;
        let mut best = 0;
        for i in 1..3 {
            if local[i].abs() > local[best].abs() {
                best = i;
            }
        }
        Face::from_axis(best, local[best] >= 0.0)
    }

    /// The face pointing world-up.
    pub fn up(orientation: &UnitQuaternion<f64>) -> Face {
        Face::most_aligned(orientation, &Vector3::z())
    }

    /// Canonical rotation taking this face's normal onto world +Z, used as the
    /// zero-yaw reference of a stable pose.
    pub fn base_rotation(self) -> UnitQuaternion<f64> {
        let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
        // Columns are the world images of model x, y, z.
        let m = match self {
            Face::PosZ => Matrix3::from_columns(&[x, y, z]),
            Face::NegZ => Matrix3::from_columns(&[x, -y, -z]),
            Face::PosX => Matrix3::from_columns(&[z, y, -x]),
            Face::NegX => Matrix3::from_columns(&[-z, y, x]),
            Face::PosY => Matrix3::from_columns(&[x, z, -y]),
            Face::NegY => Matrix3::from_columns(&[x, -z, y]),
        };
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Face::PosX => "+X",
            Face::NegX => "-X",
            Face::PosY => "+Y",
            Face::NegY => "-Y",
            Face::PosZ => "+Z",
            Face::NegZ => "-Z",
        };
        f.write_str(s)
    }
}

impl FromStr for Face {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+X" | "X" => Ok(Face::PosX),
            "-X" => Ok(Face::NegX),
            "+Y" | "Y" => Ok(Face::PosY),
            "-Y" => Ok(Face::NegY),
            "+Z" | "Z" => Ok(Face::PosZ),
            "-Z" => Ok(Face::NegZ),
            other => Err(format!("unknown face `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn inverse_composes_to_identity() {
        let p = Pose::new(
            Vector3::new(0.3, -0.2, 0.1),
            UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0),
        );
        let id = p.inverse().compose(&p);
        assert!(id.position.norm() < 1e-12);
        assert!(id.orientation.angle() < 1e-9);
    }

    #[test]
    fn base_rotation_maps_face_to_up() {
        for face in Face::ALL {
            let r = face.base_rotation();
            let up = r * face.normal();
            assert!((up - Vector3::z()).norm() < 1e-12, "{face}");
            assert_eq!(Face::up(&r), face);
            assert!((r.into_inner().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacency() {
        assert!(Face::PosZ.is_adjacent(Face::NegX));
        assert!(!Face::PosZ.is_adjacent(Face::NegZ));
        assert!(!Face::PosY.is_adjacent(Face::PosY));
        assert_eq!(Face::NegY.opposite(), Face::PosY);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-FRAC_PI_2) + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn project_drops_vertical() {
        let v = project_to_support_plane(&Vector3::new(0.2, 0.0, 0.98));
        assert_eq!(v, Vector2::new(0.2, 0.0));
        assert_eq!(project_to_support_plane(&Vector3::z()), Vector2::zeros());
    }

    #[test]
    fn face_round_trip_text() {
        for face in Face::ALL {
            assert_eq!(face.to_string().parse::<Face>().unwrap(), face);
        }
    }
}
