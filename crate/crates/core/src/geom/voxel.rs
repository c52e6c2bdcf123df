use nalgebra::Vector3;

use super::{Aabb, CuboidModel, GeomError, Pose};

/// Dense boolean occupancy over an axis-aligned block of cubic voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub counts: [usize; 3],
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// Voxelizes `volume`; an extent that is a whole multiple of `resolution`
    /// (within 1e-6 voxels) gets exactly that many voxels, otherwise it is
    /// rounded up.
    pub fn covering(volume: &Aabb, resolution: f64) -> Result<Self, GeomError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GeomError::NonPositiveResolution(resolution));
        }
        let e = volume.extents();
        let mut counts = [0usize; 3];
        for i in 0..3 {
            let n = e[i] / resolution;
            let c = if (n - n.round()).abs() < 1e-6 { n.round() } else { n.ceil() };
            counts[i] = (c as usize).max(1);
        }
        Ok(Self {
            origin: volume.min,
            resolution,
            counts,
            occupancy: vec![false; counts[0] * counts[1] * counts[2]],
        })
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.counts[1] + j) * self.counts[0] + i
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    /// Marks every voxel whose center lies inside the box `dims` at `pose`.
    pub fn mark_box(&mut self, dims: &Vector3<f64>, pose: &Pose) {
        let half = dims / 2.0;
        let inv = pose.inverse();
        for k in 0..self.counts[2] {
            for j in 0..self.counts[1] {
                for i in 0..self.counts[0] {
                    let idx = self.index(i, j, k);
                    if self.occupancy[idx] {
                        continue;
                    }
                    let local = inv.transform_point(&self.voxel_center(i, j, k));
                    if (0..3).all(|a| local[a].abs() <= half[a] + 1e-12) {
                        self.occupancy[idx] = true;
                    }
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }

    pub fn unoccupied_fraction(&self) -> f64 {
        1.0 - self.occupied_count() as f64 / self.len() as f64
    }
}

/// Share of `target_volume` voxels whose centers lie inside none of the
/// occupier boxes.
pub fn voxel_unoccupied_fraction(
    target_volume: &Aabb,
    occupiers: &[(&CuboidModel, Pose)],
    resolution: f64,
) -> Result<f64, GeomError> {
    let mut grid = VoxelGrid::covering(target_volume, resolution)?;
    for (model, pose) in occupiers {
        grid.mark_box(&model.dims(), pose);
    }
    Ok(grid.unoccupied_fraction())
}
