use std::io::{self, Write};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ObjectStatus, WorldError, WorldState};
use crate::geom::Pose;

/// Label of points on the bins (floor and walls).
pub const BACKGROUND_LABEL: i32 = -1;

/// Pinhole depth camera. The camera frame looks along +Z with +X right and
/// +Y down in the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub pose: Pose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub depth_noise_sigma: f64,
}

impl CameraModel {
    /// Straight-down camera `height` above `target`.
    pub fn looking_down(target: &Vector3<f64>, height: f64, depth_noise_sigma: f64) -> Self {
        let orientation = nalgebra::UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        Self {
            pose: Pose::new(target + Vector3::new(0.0, 0.0, height), orientation),
            fx: 480.0,
            fy: 480.0,
            cx: 120.0,
            cy: 90.0,
            width: 240,
            height: 180,
            depth_noise_sigma,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| *v > 0.0);
        if !positive {
            return Err(WorldError::InvalidConfig("camera intrinsics must be positive".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(WorldError::InvalidConfig("camera resolution must be at least 32x32".into()));
        }
        if !(self.depth_noise_sigma >= 0.0) {
            return Err(WorldError::InvalidConfig("depth noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Unit ray direction in world coordinates through pixel center (u, v).
    pub fn ray(&self, u: u32, v: u32) -> Vector3<f64> {
        let d = Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        self.pose.transform_vector(&d).normalize()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// Ground-truth object id per point, [`BACKGROUND_LABEL`] for bins.
    pub labels: Option<Vec<i32>>,
    /// Image coordinates of each point.
    pub pixels: Vec<(u32, u32)>,
    pub width: u32,
    pub height: u32,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points satisfying `keep`, with everything else carried along.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|i| keep(*i)).collect();
        PointCloud {
            points: idx.iter().map(|i| self.points[*i]).collect(),
            normals: idx.iter().map(|i| self.normals[*i]).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|i| l[*i]).collect()),
            pixels: idx.iter().map(|i| self.pixels[*i]).collect(),
            width: self.width,
            height: self.height,
        }
    }

    pub fn label(&self, i: usize) -> i32 {
        self.labels.as_ref().map_or(BACKGROUND_LABEL, |l| l[i])
    }
}

/// Ray casts every pixel against the resting objects and both bins. Depth
/// noise is applied along the ray.
pub fn render_point_cloud(world: &WorldState, camera: &CameraModel, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (camera.depth_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, camera.depth_noise_sigma).expect("finite sigma"));
    let mut boxes: Vec<(crate::geom::Obb, i32)> = world
        .objects
        .iter()
        .filter(|o| o.status != ObjectStatus::Held)
        .map(|o| (world.obb(o.id), o.id as i32))
        .collect();
    for bin in [world.source(), world.goal()] {
        boxes.extend(bin.parts().into_iter().map(|p| (p, BACKGROUND_LABEL)));
    }
    let origin = camera.pose.position;
    let mut cloud = PointCloud {
        labels: Some(Vec::new()),
        width: camera.width,
        height: camera.height,
        ..Default::default()
    };
    for v in 0..camera.height {
        for u in 0..camera.width {
            let dir = camera.ray(u, v);
            let mut best: Option<(f64, Vector3<f64>, i32)> = None;
            for (b, label) in &boxes {
                if let Some((t, n)) = b.ray_intersect(&origin, &dir) {
                    if t > 0.0 && best.map_or(true, |(bt, _, _)| t < bt) {
                        best = Some((t, n, *label));
                    }
                }
            }
            if let Some((t, n, label)) = best {
                let t = match &noise {
                    Some(d) => t + d.sample(&mut rng),
                    None => t,
                };
                cloud.points.push(origin + dir * t);
                cloud.normals.push(n);
                cloud.labels.as_mut().unwrap().push(label);
                cloud.pixels.push((u, v));
            }
        }
    }
    cloud
}

/// ASCII PLY with `x y z nx ny nz label`.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut out: W) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(out, "property float {p}")?;
    }
    writeln!(out, "property int label")?;
    writeln!(out, "end_header")?;
    for i in 0..cloud.len() {
        let (p, n) = (cloud.points[i], cloud.normals[i]);
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            p.x as f32, p.y as f32, p.z as f32, n.x as f32, n.y as f32, n.z as f32,
            cloud.label(i)
        )?;
    }
    Ok(())
}
