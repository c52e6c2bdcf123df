//! The two-bin quasi-static world.
//!
//! A [`WorldState`] owns every object pose, the held-object grasp and the
//! seeded generator that drives drop scatter. All actions are deterministic
//! given the state, so equal seeds and equal action sequences produce
//! bit-identical snapshots.

mod actions;
mod physics;
mod pile;
mod render;
mod stable;

pub use actions::{
    parse_action_log, replay, write_action_log, ActionLog, ReplayError, Simulation, WorldAction,
    WorldSnapshot, ACTION_LOG_FORMAT, SNAPSHOT_FORMAT, SNAPSHOT_VERSION,
};
pub use physics::{bottom_z, footprint, top_z, toppled_pose};
pub use pile::generate_pile;
pub use render::{render_point_cloud, write_ply, CameraModel, PointCloud, BACKGROUND_LABEL};
pub use stable::StablePose;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Footprint, Obb, Pose};

/// Overlaps up to this depth count as contact, not interpenetration.
pub const CONTACT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinId {
    Source,
    Goal,
}

/// An open-top container; `pose` is the center of its interior floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub pose: Pose,
    pub interior_dims: Vector3<f64>,
    /// How far a wall may deflect when pushed against.
    pub wall_compliance: f64,
    pub wall_thickness: f64,
}

impl Bin {
    pub fn new(floor_center: Vector3<f64>, interior_dims: Vector3<f64>) -> Self {
        Self {
            pose: Pose::new(floor_center, Default::default()),
            interior_dims,
            wall_compliance: 0.002,
            wall_thickness: 0.01,
        }
    }

    pub fn floor_z(&self) -> f64 {
        self.pose.position.z
    }

    pub fn interior_min(&self) -> Vector2<f64> {
        self.pose.position.xy() - self.interior_dims.xy() / 2.0
    }

    pub fn interior_max(&self) -> Vector2<f64> {
        self.pose.position.xy() + self.interior_dims.xy() / 2.0
    }

    pub fn interior(&self) -> Aabb {
        let c = self.pose.position + Vector3::new(0.0, 0.0, self.interior_dims.z / 2.0);
        Aabb::from_center(c, self.interior_dims)
    }

    pub fn interior_volume(&self) -> f64 {
        self.interior_dims.x * self.interior_dims.y * self.interior_dims.z
    }

    pub fn contains_xy(&self, p: &Vector2<f64>, margin: f64) -> bool {
        let (lo, hi) = (self.interior_min(), self.interior_max());
        p.x >= lo.x - margin && p.x <= hi.x + margin && p.y >= lo.y - margin && p.y <= hi.y + margin
    }

    /// How far `fp` reaches past the interior walls (0 when inside).
    pub fn wall_excess(&self, fp: &Footprint) -> f64 {
        let (lo, hi) = fp.bounds();
        let (ilo, ihi) = (self.interior_min(), self.interior_max());
        [ilo.x - lo.x, ilo.y - lo.y, hi.x - ihi.x, hi.y - ihi.y]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Smallest planar shift that brings `fp` inside the interior walls.
    pub fn wall_correction(&self, fp: &Footprint) -> Vector2<f64> {
        let (lo, hi) = fp.bounds();
        let (ilo, ihi) = (self.interior_min(), self.interior_max());
        let mut shift = Vector2::zeros();
        for i in 0..2 {
            if lo[i] < ilo[i] {
                shift[i] = ilo[i] - lo[i];
            } else if hi[i] > ihi[i] {
                shift[i] = ihi[i] - hi[i];
            }
        }
        shift
    }

    /// Floor slab and the four walls, as boxes for ray casting.
    pub fn parts(&self) -> Vec<Obb> {
        let c = self.pose.position;
        let d = self.interior_dims;
        let t = self.wall_thickness;
        let h = d.z;
        let mut parts = vec![Obb::new(
            Pose::from_translation(c.x, c.y, c.z - t / 2.0),
            Vector3::new(d.x / 2.0 + t, d.y / 2.0 + t, t / 2.0),
        )];
        for sx in [-1.0, 1.0] {
            parts.push(Obb::new(
                Pose::from_translation(c.x + sx * (d.x / 2.0 + t / 2.0), c.y, c.z + h / 2.0),
                Vector3::new(t / 2.0, d.y / 2.0 + t, h / 2.0),
            ));
        }
        for sy in [-1.0, 1.0] {
            parts.push(Obb::new(
                Pose::from_translation(c.x, c.y + sy * (d.y / 2.0 + t / 2.0), c.z + h / 2.0),
                Vector3::new(d.x / 2.0, t / 2.0, h / 2.0),
            ));
        }
        parts
    }

    pub fn validate(&self, name: &str) -> Result<(), WorldError> {
        if !self.interior_dims.iter().all(|d| *d > 0.0) || self.wall_thickness <= 0.0 {
            return Err(WorldError::InvalidConfig(format!("{name} bin dimensions must be positive")));
        }
        if self.wall_compliance < 0.0 {
            return Err(WorldError::InvalidConfig(format!("{name} bin wall compliance must be >= 0")));
        }
        if self.pose.orientation.angle() > 1e-9 {
            return Err(WorldError::InvalidConfig(format!("{name} bin must be axis-aligned")));
        }
        Ok(())
    }
}

/// Annulus around the robot base where top-down picks are kinematically easy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachableRegion {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub center: Vector2<f64>,
}

impl Default for ReachableRegion {
    fn default() -> Self {
        Self {
            inner_radius: 0.40,
            outer_radius: 0.70,
            center: Vector2::zeros(),
        }
    }
}

impl ReachableRegion {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let r = (p - self.center).norm();
        r >= self.inner_radius && r <= self.outer_radius
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.inner_radius > 0.0 && self.inner_radius < self.outer_radius {
            Ok(())
        } else {
            Err(WorldError::InvalidConfig(
                "reachable region needs 0 < inner radius < outer radius".into(),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Drop scatter sigma per meter of drop height.
    pub k_drop: f64,
    /// Largest allowed angle between the approach and straight down.
    pub grasp_alignment_rad: f64,
    /// Clearance the descending suction tool needs around its axis.
    pub descent_margin: f64,
    /// Longest single increment of a push.
    pub push_step: f64,
    /// Rejection-sampling attempts per object when generating a pile.
    pub pile_attempts: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            k_drop: 0.15,
            grasp_alignment_rad: 15f64.to_radians(),
            descent_margin: 0.002,
            push_step: 0.001,
            pile_attempts: 2000,
        }
    }
}

/// Fixed geometry of a scene: bins, reach and physics knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldLayout {
    pub source: Bin,
    pub goal: Bin,
    pub reachable: ReachableRegion,
    pub config: WorldConfig,
}

impl WorldLayout {
    pub fn validate(&self) -> Result<(), WorldError> {
        self.source.validate("source")?;
        self.goal.validate("goal")?;
        self.reachable.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectStatus {
    Resting,
    Held,
    Transferred,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: usize,
    /// World pose; while held this is the pose at the moment of the pick.
    pub pose: Pose,
    pub status: ObjectStatus,
}

/// End-effector mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Transit,
    Transfer,
}

/// Rigid suction attachment of the held object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub object: usize,
    /// Object pose in the end-effector frame.
    pub object_in_ee: Pose,
    /// Contact point in the object's model frame.
    pub contact_local: Vector3<f64>,
    /// End-effector pose at the moment of the pick.
    pub ee_at_pick: Pose,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown object id {0}")]
    UnknownObject(usize),
    #[error("already holding object {0}")]
    AlreadyHolding(usize),
    #[error("nothing is held")]
    NotHolding,
    #[error("object {0} is not resting")]
    NotResting(usize),
    #[error("pick infeasible: {0}")]
    PickInfeasible(PickRejection),
    #[error("push line is unreachable")]
    UnreachablePush,
    #[error("invalid push: {0}")]
    InvalidPush(String),
    #[error("insufficient clearance to topple object {0}")]
    InsufficientClearance(usize),
    #[error("bin overfull: {n} objects need {needed:.6} m^3 but only {available:.6} m^3 is allowed")]
    Overfull {
        n: usize,
        needed: f64,
        available: f64,
    },
    #[error("pile generation failed to place object {0} after {1} attempts")]
    PileGenerationFailed(usize, usize),
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PickRejection {
    #[error("approach is not within the top-down alignment threshold")]
    Misaligned,
    #[error("pick point is outside the reachable region")]
    OutOfReach,
    #[error("pick point does not lie on the object's top face")]
    MissedObject,
    #[error("descent is obstructed by another object")]
    Obstructed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: WorldConfig,
    pub object_dims: Vector3<f64>,
    pub bins: (Bin, Bin),
    pub reachable: ReachableRegion,
    pub objects: Vec<ObjectState>,
    pub held: Option<Grasp>,
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    /// An empty world with no objects.
    pub fn empty(layout: &WorldLayout, object_dims: Vector3<f64>, seed: u64) -> Self {
        Self {
            config: layout.config,
            object_dims,
            bins: (layout.source, layout.goal),
            reachable: layout.reachable,
            objects: Vec::new(),
            held: None,
            mode: Mode::Transit,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn bin(&self, id: BinId) -> &Bin {
        match id {
            BinId::Source => &self.bins.0,
            BinId::Goal => &self.bins.1,
        }
    }

    pub fn source(&self) -> &Bin {
        &self.bins.0
    }

    pub fn goal(&self) -> &Bin {
        &self.bins.1
    }

    pub fn object(&self, id: usize) -> Result<&ObjectState, WorldError> {
        self.objects.get(id).ok_or(WorldError::UnknownObject(id))
    }

    pub fn held_id(&self) -> Option<usize> {
        self.held.map(|g| g.object)
    }

    /// Bin whose interior (plus wall thickness) contains `p`.
    pub fn bin_at(&self, p: &Vector2<f64>) -> Option<BinId> {
        [BinId::Source, BinId::Goal]
            .into_iter()
            .find(|b| self.bin(*b).contains_xy(p, self.bin(*b).wall_thickness))
    }

    /// Bin containing `p`, or the one whose interior center is nearest.
    pub fn nearest_bin(&self, p: &Vector2<f64>) -> BinId {
        self.bin_at(p).unwrap_or_else(|| {
            let ds = (self.source().pose.position.xy() - p).norm();
            let dg = (self.goal().pose.position.xy() - p).norm();
            if ds <= dg {
                BinId::Source
            } else {
                BinId::Goal
            }
        })
    }

    pub fn obb(&self, id: usize) -> Obb {
        Obb::new(self.objects[id].pose, self.object_dims / 2.0)
    }

    /// Objects physically present in a bin (not held).
    pub fn objects_in(&self, bin: BinId) -> impl Iterator<Item = &ObjectState> {
        self.objects.iter().filter(move |o| {
            o.status != ObjectStatus::Held && self.bin_at(&o.pose.position.xy()) == Some(bin)
        })
    }

    pub fn transferred_poses(&self) -> Vec<Pose> {
        self.objects
            .iter()
            .filter(|o| o.status == ObjectStatus::Transferred)
            .map(|o| o.pose)
            .collect()
    }

    /// Stable-pose view of a resting object.
    pub fn stable_pose(&self, id: usize) -> Option<StablePose> {
        StablePose::from_pose(&self.objects[id].pose, &self.object_dims, 1e-9)
    }

    /// Topmost non-held object under the vertical line through `p`.
    pub fn first_hit_from_above(&self, p: &Vector2<f64>) -> Option<usize> {
        let origin = Vector3::new(p.x, p.y, 100.0);
        let down = -Vector3::z();
        let mut best: Option<(f64, usize)> = None;
        for o in &self.objects {
            if o.status == ObjectStatus::Held {
                continue;
            }
            if let Some((t, _)) = self.obb(o.id).ray_intersect(&origin, &down) {
                if best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, o.id));
                }
            }
        }
        best.map(|(_, id)| id)
    }

    /// Object in `bin` whose top footprint contains `p` (topmost first),
    /// falling back to the object with the nearest footprint within `reach`.
    pub fn object_near(&self, bin: BinId, p: &Vector2<f64>, reach: f64) -> Option<usize> {
        let mut best: Option<(f64, f64, usize)> = None;
        for o in self.objects_in(bin) {
            let fp = physics::footprint(&o.pose, &self.object_dims);
            let gap = fp_distance(&fp, p);
            if gap > reach {
                continue;
            }
            let top = physics::top_z(&o.pose, &self.object_dims);
            // smaller gap first, then higher top
            let key = (gap, -top, o.id);
            if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        }
        best.map(|b| b.2)
    }

    /// Snapshot text: versioned JSON with a fixed field order.
    pub fn snapshot(&self) -> String {
        WorldSnapshot::of(self).to_text()
    }
}

fn fp_distance(fp: &Footprint, p: &Vector2<f64>) -> f64 {
    let d = p - fp.center;
    let mut out = 0.0f64;
    for i in 0..2 {
        let e = d.dot(&fp.axes[i]).abs() - fp.half[i];
        if e > 0.0 {
            out += e * e;
        }
    }
    out.sqrt()
}
