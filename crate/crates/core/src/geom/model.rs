use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Face, GeomError};

/// Two extents closer than this are treated as equal when building the
/// symmetry group.
pub const DIM_EQUALITY_TOL: f64 = 1e-6;

/// Target pitch of the per-face sample grid.
pub const SAMPLE_PITCH: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    /// Model-frame point on the box boundary.
    pub point: Vector3<f64>,
    /// Distance from the point to the model center; lower is a steadier pick.
    pub pick_score: f64,
}

/// A uniform cuboid: full extents, boundary samples and its rotation symmetries.
#[derive(Clone, Debug, PartialEq)]
pub struct CuboidModel {
    dims: Vector3<f64>,
    samples: Vec<SurfaceSample>,
    symmetry_group: Vec<UnitQuaternion<f64>>,
}

impl CuboidModel {
    pub fn new(dims: Vector3<f64>) -> Result<Self, GeomError> {
        if !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(GeomError::NonPositiveDims(dims.x, dims.y, dims.z));
        }
        Ok(Self {
            dims,
            samples: sample_surface(&dims),
            symmetry_group: symmetry_group(&dims),
        })
    }

    pub fn dims(&self) -> Vector3<f64> {
        self.dims
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        self.dims / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    pub fn samples(&self) -> &[SurfaceSample] {
        &self.samples
    }

    pub fn symmetry_group(&self) -> &[UnitQuaternion<f64>] {
        &self.symmetry_group
    }

    /// Extent of the box measured along the normal of `face`.
    pub fn extent_along(&self, face: Face) -> f64 {
        self.dims[face.axis()]
    }

    /// Area of `face`.
    pub fn face_area(&self, face: Face) -> f64 {
        let a = face.axis();
        self.dims[(a + 1) % 3] * self.dims[(a + 2) % 3]
    }

    /// Samples lying on `face` (edges and corners are shared between faces).
    pub fn samples_on_face(&self, face: Face) -> impl Iterator<Item = &SurfaceSample> {
        let axis = face.axis();
        let target = face.sign() * self.dims[axis] / 2.0;
        self.samples
            .iter()
            .filter(move |s| (s.point[axis] - target).abs() < 1e-9)
    }

    /// Model axis of smallest extent; resting on the faces normal to it is the
    /// most stable placement.
    pub fn thinnest_axis(&self) -> usize {
        let mut best = 2;
        for i in (0..2).rev() {
            if self.dims[i] < self.dims[best] - DIM_EQUALITY_TOL {
                best = i;
            }
        }
        best
    }

    /// True when resting with `face` up puts the box on one of its largest faces.
    pub fn is_placement_face(&self, face: Face) -> bool {
        self.dims[face.axis()] <= self.dims[self.thinnest_axis()] + DIM_EQUALITY_TOL
    }

    pub fn contains_local(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let h = self.half_extents();
        (0..3).all(|i| p[i].abs() <= h[i] + tol)
    }
}

/// Grows every extent by `2 * eps`, i.e. `eps` on each side.
pub fn expand_model(model: &CuboidModel, eps: f64) -> Result<CuboidModel, GeomError> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(GeomError::NegativeExpansion(eps));
    }
    CuboidModel::new(model.dims + Vector3::repeat(2.0 * eps))
}

fn sample_surface(dims: &Vector3<f64>) -> Vec<SurfaceSample> {
    let h = dims / 2.0;
    let mut points: Vec<Vector3<f64>> = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                points.push(Vector3::new(sx * h.x, sy * h.y, sz * h.z));
            }
        }
    }
    for face in Face::ALL {
        let mut c = Vector3::zeros();
        c[face.axis()] = face.sign() * h[face.axis()];
        points.push(c);
    }
    for face in Face::ALL {
        let a = face.axis();
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        let nu = grid_count(dims[u]);
        let nv = grid_count(dims[v]);
        for i in 0..nu {
            for j in 0..nv {
                let mut p = Vector3::zeros();
                p[a] = face.sign() * h[a];
                // integer numerators keep the grid exactly mirror-symmetric
                p[u] = h[u] * ((2 * i) as f64 - (nu - 1) as f64) / (nu - 1) as f64;
                p[v] = h[v] * ((2 * j) as f64 - (nv - 1) as f64) / (nv - 1) as f64;
                points.push(p);
            }
        }
    }
    let mut out: Vec<SurfaceSample> = Vec::with_capacity(points.len());
    for p in points {
        if out.iter().any(|s| (s.point - p).norm() < 1e-12) {
            continue;
        }
        out.push(SurfaceSample {
            point: p,
            pick_score: p.norm(),
        });
    }
    out
}

fn grid_count(extent: f64) -> usize {
    ((extent / SAMPLE_PITCH).round() as usize + 1).max(2)
}

/// All proper rotations that permute the box axes (with signs) and map the box
/// onto itself.
fn symmetry_group(dims: &Vector3<f64>) -> Vec<UnitQuaternion<f64>> {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut group = Vec::new();
    for perm in PERMS {
        for signs in 0..8u8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = if signs & (1 << row) != 0 { -1.0 } else { 1.0 };
            }
            if m.determinant() < 0.0 {
                continue;
            }
            // m maps axis `col` onto axis `row`, so those extents must agree.
            let maps_onto_self = perm
                .iter()
                .enumerate()
                .all(|(row, &col)| (dims[row] - dims[col]).abs() <= DIM_EQUALITY_TOL);
            if maps_onto_self {
                group.push(UnitQuaternion::from_rotation_matrix(
                    &Rotation3::from_matrix_unchecked(m),
                ));
            }
        }
    }
    // identity first keeps iteration order stable and readable
    group.sort_by(|a, b| a.angle().partial_cmp(&b.angle()).unwrap());
    group
}
