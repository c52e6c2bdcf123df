use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeomError, Pose};

/// Axis-aligned box given by its min/max corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Vector3<f64>, dims: Vector3<f64>) -> Self {
        Self::new(center - dims / 2.0, center + dims / 2.0)
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Oriented box: a pose for its center plus half extents along its local axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obb {
    pub pose: Pose,
    pub half: Vector3<f64>,
}

impl Obb {
    pub fn new(pose: Pose, half: Vector3<f64>) -> Self {
        Self { pose, half }
    }

    pub fn expanded(&self, margin: f64) -> Obb {
        Obb::new(self.pose, self.half + Vector3::repeat(margin))
    }

    pub fn contains_point(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let local = self.pose.inverse_transform_point(p);
        (0..3).all(|i| local[i].abs() <= self.half[i] + tol)
    }

    pub fn axes(&self) -> [Vector3<f64>; 3] {
        let r = self.pose.rotation_matrix();
        [
            r.column(0).into_owned(),
            r.column(1).into_owned(),
            r.column(2).into_owned(),
        ]
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (k, c) in out.iter_mut().enumerate() {
            let local = Vector3::new(
                if k & 1 == 0 { -self.half.x } else { self.half.x },
                if k & 2 == 0 { -self.half.y } else { self.half.y },
                if k & 4 == 0 { -self.half.z } else { self.half.z },
            );
            *c = self.pose.transform_point(&local);
        }
        out
    }

    /// World-space vertical extent of the box.
    pub fn z_range(&self) -> (f64, f64) {
        let axes = self.axes();
        let r: f64 = (0..3).map(|i| axes[i].z.abs() * self.half[i]).sum();
        (self.pose.position.z - r, self.pose.position.z + r)
    }

    /// Entry distance and outward world normal of the first hit of the ray
    /// `origin + t * dir`, `t >= 0`. Rays starting inside report no hit.
    pub fn ray_intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let o = self.pose.inverse_transform_point(origin);
        let d = self.pose.orientation.inverse() * dir;
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        let mut enter_axis = 0;
        let mut enter_sign = 0.0;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if o[i].abs() > self.half[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let mut t0 = (-self.half[i] - o[i]) * inv;
            let mut t1 = (self.half[i] - o[i]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            if t0 > t_enter {
                t_enter = t0;
                enter_axis = i;
                // the face first crossed has its normal against the ray
                enter_sign = -d[i].signum();
            }
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return None;
            }
        }
        if t_enter < 0.0 || !t_enter.is_finite() {
            return None;
        }
        let mut n = Vector3::zeros();
        n[enter_axis] = enter_sign;
        Some((t_enter, self.pose.orientation * n))
    }

    /// Separating-axis test over the 15 candidate axes. Touching boxes (overlap
    /// within `tol`) count as separated.
    pub fn overlaps(&self, other: &Obb, tol: f64) -> bool {
        let a = self.axes();
        let b = other.axes();
        let t = other.pose.position - self.pose.position;
        let mut candidates: Vec<Vector3<f64>> = Vec::with_capacity(15);
        candidates.extend_from_slice(&a);
        candidates.extend_from_slice(&b);
        for ai in &a {
            for bj in &b {
                let c = ai.cross(bj);
                if c.norm() > 1e-9 {
                    candidates.push(c.normalize());
                }
            }
        }
        for axis in candidates {
            let ra: f64 = (0..3).map(|i| (a[i].dot(&axis)).abs() * self.half[i]).sum();
            let rb: f64 = (0..3).map(|i| (b[i].dot(&axis)).abs() * other.half[i]).sum();
            if t.dot(&axis).abs() >= ra + rb - tol {
                return false;
            }
        }
        true
    }
}

/// Oriented rectangle in the support plane: the footprint of a resting box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub center: Vector2<f64>,
    /// Unit in-plane axes.
    pub axes: [Vector2<f64>; 2],
    pub half: [f64; 2],
}

impl Footprint {
    pub fn new(center: Vector2<f64>, axes: [Vector2<f64>; 2], half: [f64; 2]) -> Self {
        Self { center, axes, half }
    }

    pub fn axis_aligned(center: Vector2<f64>, half: [f64; 2]) -> Self {
        Self::new(center, [Vector2::x(), Vector2::y()], half)
    }

    pub fn expanded(&self, margin: f64) -> Footprint {
        Footprint::new(self.center, self.axes, [self.half[0] + margin, self.half[1] + margin])
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half[0] * self.half[1]
    }

    pub fn contains(&self, p: &Vector2<f64>, tol: f64) -> bool {
        let d = p - self.center;
        (0..2).all(|i| d.dot(&self.axes[i]).abs() <= self.half[i] + tol)
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let u = self.axes[0] * self.half[0];
        let v = self.axes[1] * self.half[1];
        [
            self.center - u - v,
            self.center + u - v,
            self.center + u + v,
            self.center - u + v,
        ]
    }

    /// Half-width of the footprint's projection onto unit `dir`.
    pub fn radius_along(&self, dir: &Vector2<f64>) -> f64 {
        (0..2).map(|i| self.axes[i].dot(dir).abs() * self.half[i]).sum()
    }

    /// Minimal translation to apply to `self` so it no longer overlaps
    /// `other`, or `None` if the overlap depth is at most `tol`.
    pub fn penetration(&self, other: &Footprint, tol: f64) -> Option<Vector2<f64>> {
        let d = self.center - other.center;
        let mut best: Option<(f64, Vector2<f64>)> = None;
        for axis in self.axes.iter().chain(other.axes.iter()) {
            let overlap = self.radius_along(axis) + other.radius_along(axis) - d.dot(axis).abs();
            if overlap <= tol {
                return None;
            }
            if best.map_or(true, |(o, _)| overlap < o - 1e-15) {
                let sign = if d.dot(axis) >= 0.0 { 1.0 } else { -1.0 };
                best = Some((overlap, axis * sign));
            }
        }
        best.map(|(o, n)| n * o)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let rx = self.radius_along(&Vector2::x());
        let ry = self.radius_along(&Vector2::y());
        let r = Vector2::new(rx, ry);
        (self.center - r, self.center + r)
    }
}

/// Convex polygon in the support plane, counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vector2<f64>>,
}

impl ConvexPolygon {
    pub fn new(mut vertices: Vec<Vector2<f64>>) -> Result<Self, GeomError> {
        if vertices.len() < 3 {
            return Err(GeomError::DegeneratePolygon);
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(GeomError::DegeneratePolygon);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(&(b - a), &(c - b)) < -1e-12 {
                return Err(GeomError::NonConvexPolygon);
            }
        }
        Ok(Self { vertices })
    }

    pub fn rectangle(min: Vector2<f64>, max: Vector2<f64>) -> Result<Self, GeomError> {
        Self::new(vec![
            min,
            Vector2::new(max.x, min.y),
            max,
            Vector2::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inclusive of the boundary.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.edges().all(|(a, b)| cross(&(b - a), &(p - a)) >= -1e-12)
    }

    /// Closest boundary point to `p`.
    pub fn closest_boundary_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d = (p - q).norm();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Zero inside or on the boundary, else the distance to the polygon.
    pub fn exterior_distance(&self, p: &Vector2<f64>) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            (p - self.closest_boundary_point(p)).norm()
        }
    }
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn signed_area(v: &[Vector2<f64>]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(&v[i], &v[(i + 1) % n])).sum::<f64>() / 2.0
}

/// A cloud point whose support-plane projection falls outside a footprint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pivot {
    pub point: Vector3<f64>,
    pub exterior_distance: f64,
    /// Nearest footprint point to the projection.
    pub closest: Vector2<f64>,
}

/// Points projecting strictly outside `footprint`, farthest first.
pub fn footprint_pivots(points: &[Vector3<f64>], footprint: &ConvexPolygon) -> Vec<Pivot> {
    let mut out: Vec<Pivot> = points
        .iter()
        .filter_map(|p| {
            let q = super::project_to_support_plane(p);
            if footprint.contains(&q) {
                return None;
            }
            let closest = footprint.closest_boundary_point(&q);
            Some(Pivot {
                point: *p,
                exterior_distance: (q - closest).norm(),
                closest,
            })
        })
        .collect();
    // stable: equal distances keep input order
    out.sort_by(|a, b| b.exterior_distance.partial_cmp(&a.exterior_distance).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::yaw_rotation;

    #[test]
    fn ray_hits_top_face_from_above() {
        let b = Obb::new(Pose::from_translation(0.0, 0.0, 0.015), Vector3::new(0.045, 0.03, 0.015));
        let (t, n) = b
            .ray_intersect(&Vector3::new(0.01, 0.0, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((t - 0.97).abs() < 1e-12);
        assert!((n - Vector3::z()).norm() < 1e-12);
        assert!(b
            .ray_intersect(&Vector3::new(0.1, 0.0, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .is_none());
    }

    #[test]
    fn ray_side_normal() {
        let b = Obb::new(Pose::identity(), Vector3::repeat(0.5));
        let (t, n) = b
            .ray_intersect(&Vector3::new(-2.0, 0.1, 0.0), &Vector3::x())
            .unwrap();
        assert!((t - 1.5).abs() < 1e-12);
        assert!((n + Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn sat_touching_is_separated() {
        let a = Obb::new(Pose::identity(), Vector3::repeat(0.5));
        let b = Obb::new(Pose::from_translation(1.0, 0.0, 0.0), Vector3::repeat(0.5));
        assert!(!a.overlaps(&b, 1e-9));
        let c = Obb::new(Pose::from_translation(0.99, 0.0, 0.0), Vector3::repeat(0.5));
        assert!(a.overlaps(&c, 1e-9));
        // rotated 45 degrees, corner pokes in
        let d = Obb::new(
            Pose::new(Vector3::new(1.2, 0.0, 0.0), yaw_rotation(std::f64::consts::FRAC_PI_4)),
            Vector3::repeat(0.5),
        );
        assert!(a.overlaps(&d, 1e-9));
    }

    #[test]
    fn footprint_mtv() {
        let a = Footprint::axis_aligned(Vector2::new(0.0, 0.0), [0.5, 0.5]);
        let b = Footprint::axis_aligned(Vector2::new(0.9, 0.2), [0.5, 0.5]);
        let mtv = b.penetration(&a, 1e-12).unwrap();
        assert!((mtv - Vector2::new(0.1, 0.0)).norm() < 1e-12);
        let c = Footprint::axis_aligned(Vector2::new(1.0, 0.0), [0.5, 0.5]);
        assert!(c.penetration(&a, 1e-12).is_none());
    }

    #[test]
    fn polygon_distances() {
        let poly = ConvexPolygon::rectangle(Vector2::new(0.0, 0.0), Vector2::new(0.27, 0.18)).unwrap();
        assert_eq!(poly.exterior_distance(&Vector2::new(0.1, 0.1)), 0.0);
        assert_eq!(poly.exterior_distance(&Vector2::new(0.27, 0.1)), 0.0);
        assert!((poly.exterior_distance(&Vector2::new(0.275, 0.1)) - 0.005).abs() < 1e-12);
        let cw = ConvexPolygon::new(vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.contains(&Vector2::new(0.5, 0.5)));
        assert!(ConvexPolygon::new(vec![Vector2::zeros(), Vector2::x(), Vector2::x() * 2.0]).is_err());
    }

    #[test]
    fn pivots_sorted_farthest_first() {
        let poly = ConvexPolygon::rectangle(Vector2::new(0.0, 0.0), Vector2::new(1.0, 1.0)).unwrap();
        let pts = vec![
            Vector3::new(0.5, 0.5, 0.1),
            Vector3::new(1.005, 0.5, 0.1),
            Vector3::new(-0.2, 0.5, 0.1),
        ];
        let piv = footprint_pivots(&pts, &poly);
        assert_eq!(piv.len(), 2);
        assert!((piv[0].exterior_distance - 0.2).abs() < 1e-12);
        assert!((piv[1].exterior_distance - 0.005).abs() < 1e-12);
        assert!(footprint_pivots(&pts[..1], &poly).is_empty());
    }
}
