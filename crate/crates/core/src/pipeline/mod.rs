//! The sense, pick, topple, transfer and correct loop, with the five
//! ablation variants and batch aggregation.

mod episode;

pub use episode::{run_episode, run_episode_traced, EpisodeTrace};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{wrap_angle, Aabb, Arrangement, CuboidModel, Face, GeomError, Pose};
use crate::perception::{PoseNoiseConfig, SegNoiseConfig};
use crate::primitives::{CorrectionTolerances, PushParams, ToppleParams};
use crate::world::{footprint, Bin, CameraModel, StablePose, WorldError, WorldLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    V1,
    V2,
    V3,
    V4,
    V5,
}

/// Which parts of the pipeline a variant runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantFlags {
    pub correction: bool,
    pub push_to_place: bool,
    pub toppling: bool,
    pub pose_estimation: bool,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::V1, Variant::V2, Variant::V3, Variant::V4, Variant::V5];

    pub fn flags(self) -> VariantFlags {
        let full = VariantFlags {
            correction: true,
            push_to_place: true,
            toppling: true,
            pose_estimation: true,
        };
        let v2 = VariantFlags {
            correction: false,
            ..full
        };
        match self {
            Variant::V1 => full,
            Variant::V2 => v2,
            Variant::V3 => VariantFlags {
                push_to_place: false,
                ..v2
            },
            Variant::V4 => VariantFlags {
                toppling: false,
                ..v2
            },
            Variant::V5 => VariantFlags {
                correction: false,
                push_to_place: false,
                toppling: false,
                pose_estimation: false,
            },
        }
    }

    pub fn index(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V{}", self.index())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V1" => Ok(Variant::V1),
            "V2" => Ok(Variant::V2),
            "V3" => Ok(Variant::V3),
            "V4" => Ok(Variant::V4),
            "V5" => Ok(Variant::V5),
            other => Err(format!("unknown variant {other:?} (expected V1..V5)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub layers: usize,
}

impl GridSpec {
    pub fn count(&self) -> usize {
        self.rows * self.cols * self.layers
    }
}

/// Intrinsics and mounting height shared by the two bin cameras.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub height_m: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            height_m: 0.75,
            fx: 480.0,
            fy: 480.0,
            cx: 120.0,
            cy: 90.0,
            width: 240,
            height: 180,
        }
    }
}

impl CameraSpec {
    /// Camera straight above the interior floor center of `bin`.
    pub fn over(&self, bin: &Bin, depth_noise_sigma: f64) -> CameraModel {
        CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            ..CameraModel::looking_down(&bin.pose.position, self.height_m, depth_noise_sigma)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub segmentation: SegNoiseConfig,
    pub pose: PoseNoiseConfig,
    pub depth_sigma: f64,
}

impl NoiseConfig {
    /// Sensor and estimator degradation of the reference setup.
    pub fn reference() -> Self {
        Self {
            segmentation: SegNoiseConfig {
                erosion_px: 1,
                label_swap_rate: 0.02,
                confidence_spread: 0.2,
                ..Default::default()
            },
            pose: PoseNoiseConfig {
                translation_sigma_m: 0.003,
                yaw_sigma_rad: 2f64.to_radians(),
                face_confusion: 0.1,
            },
            depth_sigma: 0.002,
        }
    }

    pub fn none() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub object_dims: Vector3<f64>,
    pub layout: WorldLayout,
    pub camera: CameraSpec,
    pub grid: GridSpec,
    /// Faces allowed to point up in the initial pile (all when `None`).
    pub pile_faces: Option<Vec<Face>>,
    pub noise: NoiseConfig,
    pub epsilon: f64,
    pub cup_radius: f64,
    /// Height above the target from which dropping variants release.
    pub drop_height: f64,
    pub correction_timeout: usize,
    pub voxel_resolution: f64,
    /// Episode action budget per object.
    pub max_actions_per_object: usize,
    pub push: PushParams,
    pub topple: ToppleParams,
    pub correction: CorrectionTolerances,
}

impl Default for PipelineConfig {
    /// Nine 9 x 6 x 3 cm bars, 3 x 3 grid, reference noise, full pipeline.
    fn default() -> Self {
        let bin = |y: f64| Bin::new(Vector3::new(0.0, y, 0.0), Vector3::new(0.30, 0.22, 0.15));
        Self {
            variant: Variant::V1,
            object_dims: Vector3::new(0.09, 0.06, 0.03),
            layout: WorldLayout {
                source: bin(-0.55),
                goal: bin(0.55),
                reachable: Default::default(),
                config: Default::default(),
            },
            camera: CameraSpec::default(),
            grid: GridSpec {
                rows: 3,
                cols: 3,
                layers: 1,
            },
            pile_faces: None,
            noise: NoiseConfig::reference(),
            epsilon: 0.01,
            cup_radius: 0.01,
            drop_height: 0.05,
            correction_timeout: 30,
            voxel_resolution: 0.005,
            max_actions_per_object: 50,
            push: PushParams::default(),
            topple: ToppleParams::default(),
            correction: CorrectionTolerances::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn model(&self) -> Result<CuboidModel, PipelineError> {
        Ok(CuboidModel::new(self.object_dims)?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.layout.validate()?;
        let model = self.model()?;
        let checks = [
            (self.epsilon > 0.0, "epsilon must be > 0"),
            (self.cup_radius > 0.0, "cup radius must be > 0"),
            (self.drop_height >= 0.0, "drop height must be >= 0"),
            (self.voxel_resolution > 0.0, "voxel resolution must be > 0"),
            (self.grid.count() > 0, "grid must hold at least one object"),
            (self.max_actions_per_object > 0, "action budget must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(PipelineError::InvalidConfig(msg.into()));
            }
        }
        self.camera.over(&self.layout.source, self.noise.depth_sigma).validate()?;
        goal_arrangement(&self.layout.goal, &model, &self.grid, self.epsilon)?;
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("{0}")]
    Geom(#[from] GeomError),
    #[error("{0}")]
    World(#[from] WorldError),
    #[error("grid {rows}x{cols}x{layers} does not fit the goal bin interior")]
    GridTooLarge {
        rows: usize,
        cols: usize,
        layers: usize,
    },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

/// Orientation placing the thinnest model axis vertical and the longest
/// remaining one along world X.
fn packing_orientation(model: &CuboidModel) -> StablePose {
    let dims = model.dims();
    let face = Face::from_axis(model.thinnest_axis(), true);
    let mut s = StablePose {
        face_up: face,
        yaw: 0.0,
        planar_position: Vector2::zeros(),
        support_height: 0.0,
    };
    let fp = footprint(&s.to_pose(&dims), &dims);
    let along_x = fp.radius_along(&Vector2::x());
    let along_y = fp.radius_along(&Vector2::y());
    if along_x + 1e-12 < along_y {
        s.yaw = wrap_angle(std::f64::consts::FRAC_PI_2);
    }
    s
}

/// Goal grid centered in `bin`: row-major from -X/-Y, bottom layer first,
/// every object on its largest face with its long side along X.
pub fn goal_arrangement(
    bin: &Bin,
    model: &CuboidModel,
    grid: &GridSpec,
    epsilon: f64,
) -> Result<Arrangement, PipelineError> {
    let base = packing_orientation(model);
    let dims = model.dims();
    let fp = footprint(&base.to_pose(&dims), &dims);
    let (ex, ey) = (2.0 * fp.radius_along(&Vector2::x()), 2.0 * fp.radius_along(&Vector2::y()));
    let h = dims[base.face_up.axis()];
    let (w, d, t) = (grid.cols as f64 * ex, grid.rows as f64 * ey, grid.layers as f64 * h);
    let inner = bin.interior_dims;
    if w > inner.x + 1e-9 || d > inner.y + 1e-9 || t > inner.z + 1e-9 {
        return Err(PipelineError::GridTooLarge {
            rows: grid.rows,
            cols: grid.cols,
            layers: grid.layers,
        });
    }
    let c = bin.pose.position;
    let mut targets = Vec::with_capacity(grid.count());
    for k in 0..grid.layers {
        for r in 0..grid.rows {
            for col in 0..grid.cols {
                let s = StablePose {
                    planar_position: Vector2::new(
                        c.x - w / 2.0 + ex * (col as f64 + 0.5),
                        c.y - d / 2.0 + ey * (r as f64 + 0.5),
                    ),
                    support_height: c.z + h * k as f64,
                    ..base
                };
                targets.push(s.to_pose(&dims));
            }
        }
    }
    Ok(Arrangement::unlabeled(targets, epsilon))
}

/// The ideal packed volume of the grid.
pub fn target_volume(bin: &Bin, model: &CuboidModel, grid: &GridSpec) -> Aabb {
    let base = packing_orientation(model);
    let dims = model.dims();
    let fp = footprint(&base.to_pose(&dims), &dims);
    let ext = Vector3::new(
        grid.cols as f64 * 2.0 * fp.radius_along(&Vector2::x()),
        grid.rows as f64 * 2.0 * fp.radius_along(&Vector2::y()),
        grid.layers as f64 * dims[base.face_up.axis()],
    );
    let c = bin.pose.position + Vector3::new(0.0, 0.0, ext.z / 2.0);
    Aabb::from_center(c, ext)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub variant: Variant,
    pub seed: u64,
    /// Objects resting in the goal bin at the end.
    pub transfers_succeeded: usize,
    /// Objects carried to the goal bin.
    pub transfers_attempted: usize,
    pub pick_attempts: usize,
    pub topple_count: usize,
    /// Held objects thrown back onto the pile.
    pub drop_back_count: usize,
    pub correction_count: usize,
    pub correction_timed_out: bool,
    /// Corrections the final validation scan still asks for.
    pub final_defects: usize,
    pub unoccupied_fraction: f64,
    pub goal_satisfied: bool,
    pub failure_reason: Option<String>,
    pub action_count: usize,
    pub wall_time: f64,
}

impl EpisodeReport {
    pub fn picks_per_transfer(&self) -> f64 {
        if self.transfers_attempted == 0 {
            f64::NAN
        } else {
            self.pick_attempts as f64 / self.transfers_attempted as f64
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, sd }
    }
}

/// Metric names in summary order, each with its extractor.
pub const METRICS: [(&str, fn(&EpisodeReport, usize) -> f64); 12] = [
    ("success_fraction", |r, n| r.transfers_succeeded as f64 / n as f64),
    ("transfers_succeeded", |r, _| r.transfers_succeeded as f64),
    ("transfers_attempted", |r, _| r.transfers_attempted as f64),
    ("unoccupied_fraction", |r, _| r.unoccupied_fraction),
    ("goal_satisfied", |r, _| r.goal_satisfied as u8 as f64),
    ("pick_attempts", |r, _| r.pick_attempts as f64),
    ("picks_per_transfer", |r, _| r.picks_per_transfer()),
    ("topple_count", |r, _| r.topple_count as f64),
    ("drop_back_count", |r, _| r.drop_back_count as f64),
    ("correction_count", |r, _| r.correction_count as f64),
    ("final_defects", |r, _| r.final_defects as f64),
    ("action_count", |r, _| r.action_count as f64),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub variant: Variant,
    pub episodes: usize,
    pub stats: Vec<(&'static str, Stat)>,
}

impl Aggregate {
    pub fn of(variant: Variant, reports: &[EpisodeReport], n_objects: usize) -> Aggregate {
        let stats = METRICS
            .iter()
            .map(|(name, f)| {
                let v: Vec<f64> = reports.iter().map(|r| f(r, n_objects)).collect();
                (*name, Stat::of(&v))
            })
            .collect();
        Aggregate {
            variant,
            episodes: reports.len(),
            stats,
        }
    }

    pub fn get(&self, name: &str) -> Stat {
        self.stats
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| *s)
            .unwrap_or(Stat {
                mean: f64::NAN,
                sd: f64::NAN,
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub reports: Vec<EpisodeReport>,
    pub aggregate: Aggregate,
}

/// Runs one episode per seed in parallel; reports come back in seed order.
pub fn run_batch(config: &PipelineConfig, seeds: &[u64]) -> BatchResult {
    let reports: Vec<EpisodeReport> = seeds.par_iter().map(|s| run_episode(config, *s)).collect();
    let aggregate = Aggregate::of(config.variant, &reports, config.grid.count());
    BatchResult { reports, aggregate }
}

/// splitmix64 finalizer; used to derive independent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the initial pile; shared by all variants so they face the same
/// scene.
pub fn pile_seed(seed: u64) -> u64 {
    mix64(seed)
}

/// Seed of the sensing and estimation noise stream of one episode. Also
/// shared by the variants: two variants draw identical noise until their
/// actions first differ.
pub fn noise_seed(seed: u64) -> u64 {
    mix64(mix64(seed) ^ 0xD6E8_FEB8_6659_FD93)
}

/// Yaw change about the vertical that best aligns `from` with `to`, folded
/// into (-pi/2, pi/2] using the half-turn symmetry of every cuboid.
pub(crate) fn alignment_yaw(from: &Pose, to: &Pose, dims: &Vector3<f64>) -> f64 {
    let a = StablePose::snap(from, dims).yaw;
    let b = StablePose::snap(to, dims).yaw;
    let mut d = wrap_angle(b - a);
    if d > std::f64::consts::FRAC_PI_2 {
        d -= std::f64::consts::PI;
    } else if d <= -std::f64::consts::FRAC_PI_2 {
        d += std::f64::consts::PI;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CuboidModel {
        CuboidModel::new(Vector3::new(0.09, 0.06, 0.03)).unwrap()
    }

    #[test]
    fn flags_follow_variants() {
        let f = |v: Variant| v.flags();
        assert!(f(Variant::V1).correction && f(Variant::V1).push_to_place && f(Variant::V1).toppling);
        assert!(!f(Variant::V2).correction && f(Variant::V2).push_to_place);
        assert!(!f(Variant::V3).push_to_place && f(Variant::V3).toppling);
        assert!(f(Variant::V4).push_to_place && !f(Variant::V4).toppling);
        let v5 = f(Variant::V5);
        assert!(!v5.pose_estimation && !v5.toppling && !v5.push_to_place && !v5.correction);
        assert_eq!("v3".parse::<Variant>().unwrap(), Variant::V3);
        assert_eq!(Variant::V4.to_string(), "V4");
    }

    #[test]
    fn reference_grid() {
        let cfg = PipelineConfig::default();
        let grid = goal_arrangement(&cfg.layout.goal, &model(), &cfg.grid, 0.01).unwrap();
        assert_eq!(grid.targets.len(), 9);
        for t in &grid.targets {
            // thinnest extent vertical, resting on the floor
            assert!((t.position.z - 0.015).abs() < 1e-12);
            assert_eq!(Face::up(&t.orientation).axis(), 2);
        }
        // neighbours touch without overlapping
        assert!((grid.targets[1].position.x - grid.targets[0].position.x - 0.09).abs() < 1e-12);
        assert!((grid.targets[3].position.y - grid.targets[0].position.y - 0.06).abs() < 1e-12);
        assert!(grid.is_well_posed());
    }

    #[test]
    fn single_cell_is_centered() {
        let cfg = PipelineConfig::default();
        let g = GridSpec {
            rows: 1,
            cols: 1,
            layers: 1,
        };
        let a = goal_arrangement(&cfg.layout.goal, &model(), &g, 0.01).unwrap();
        assert!((a.targets[0].position.xy() - cfg.layout.goal.pose.position.xy()).norm() < 1e-12);
    }

    #[test]
    fn layers_stack_by_height() {
        let cfg = PipelineConfig::default();
        let g = GridSpec {
            rows: 3,
            cols: 3,
            layers: 2,
        };
        let a = goal_arrangement(&cfg.layout.goal, &model(), &g, 0.01).unwrap();
        assert_eq!(a.targets.len(), 18);
        for i in 0..9 {
            assert!((a.targets[i + 9].position.z - a.targets[i].position.z - 0.03).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let cfg = PipelineConfig::default();
        let g = GridSpec {
            rows: 4,
            cols: 4,
            layers: 1,
        };
        assert!(matches!(
            goal_arrangement(&cfg.layout.goal, &model(), &g, 0.01),
            Err(PipelineError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).sd, 0.0);
    }

    #[test]
    fn alignment_folds_half_turns() {
        let dims = model().dims();
        let at = |yaw: f64| {
            StablePose {
                face_up: Face::PosZ,
                yaw,
                planar_position: Vector2::zeros(),
                support_height: 0.0,
            }
            .to_pose(&dims)
        };
        assert!((alignment_yaw(&at(3.0), &at(0.0), &dims) - (std::f64::consts::PI - 3.0)).abs() < 1e-12);
        assert!((alignment_yaw(&at(0.2), &at(0.0), &dims) + 0.2).abs() < 1e-12);
    }
}
