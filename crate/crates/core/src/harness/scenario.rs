use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Face, Pose};
use crate::perception::{PoseNoiseConfig, SegNoiseConfig};
use crate::pipeline::{CameraSpec, GridSpec, NoiseConfig, PipelineConfig, Variant};
use crate::primitives::{CorrectionTolerances, PushParams, ToppleParams};
use crate::world::{Bin, ReachableRegion, WorldConfig, WorldLayout};

pub const SCENARIO_VERSION: u32 = 1;

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("default_soap", include_str!("../../scenarios/default_soap.scenario")),
    ("adversarial_soap", include_str!("../../scenarios/adversarial_soap.scenario")),
    ("two_layer_soap", include_str!("../../scenarios/two_layer_soap.scenario")),
];

/// Key suffixes that mark a physical unit.
const UNIT_SUFFIXES: [&str; 4] = ["_m", "_rad", "_px", "_per_m"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {message}")]
    Missing { path: PathBuf, message: String },
    #[error("scenario syntax error: {0}")]
    Syntax(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{field}` lacks a unit suffix; write `{suggestion}`")]
    UnitSuffix { field: String, suggestion: String },
    #[error("invalid value for `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("unsupported scenario format_version {found} (expected {SCENARIO_VERSION})")]
    Version { found: u32 },
}

fn schema(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

/// Inclusive seed range written `a..b`, or a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn iter(&self) -> RangeInclusive<u64> {
        self.first..=self.last
    }

    pub fn to_vec(&self) -> Vec<u64> {
        self.iter().collect()
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad seed {t:?} in range {s:?}"))
        };
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if first > last {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok(SeedRange { first, last })
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeedRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSection {
    pub dims_m: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSection {
    /// Center of the interior floor.
    pub floor_center_m: [f64; 3],
    pub interior_dims_m: [f64; 3],
    pub wall_compliance_m: f64,
    pub wall_thickness_m: f64,
}

impl BinSection {
    fn of(bin: &Bin) -> Self {
        Self {
            floor_center_m: bin.pose.position.into(),
            interior_dims_m: bin.interior_dims.into(),
            wall_compliance_m: bin.wall_compliance,
            wall_thickness_m: bin.wall_thickness,
        }
    }

    fn to_bin(&self, name: &str) -> Result<Bin, ScenarioError> {
        for (k, d) in self.interior_dims_m.iter().enumerate() {
            if !(*d > 0.0) {
                return Err(schema(&format!("{name}.interior_dims_m[{k}]"), "must be > 0"));
            }
        }
        if !(self.wall_compliance_m >= 0.0) {
            return Err(schema(&format!("{name}.wall_compliance_m"), "must be >= 0"));
        }
        if !(self.wall_thickness_m > 0.0) {
            return Err(schema(&format!("{name}.wall_thickness_m"), "must be > 0"));
        }
        Ok(Bin {
            pose: Pose::new(Vector3::from(self.floor_center_m), Default::default()),
            interior_dims: Vector3::from(self.interior_dims_m),
            wall_compliance: self.wall_compliance_m,
            wall_thickness: self.wall_thickness_m,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSection {
    pub inner_radius_m: f64,
    pub outer_radius_m: f64,
    pub center_m: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    pub height_m: f64,
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PileSection {
    /// Faces allowed to land up; every face when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub depth_sigma_m: f64,
    #[serde(default)]
    pub segmentation: SegNoiseConfig,
    #[serde(default)]
    pub pose: PoseNoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    /// Planar scatter sigma of a drop divided by its height.
    pub drop_scatter_per_m: f64,
    pub grasp_alignment_rad: f64,
    pub descent_margin_m: f64,
    pub push_step_m: f64,
    pub pile_attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub epsilon_m: f64,
    pub cup_radius_m: f64,
    pub drop_height_m: f64,
    pub correction_timeout: usize,
    pub voxel_resolution_m: f64,
    pub max_actions_per_object: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub variants: Vec<Variant>,
    pub seeds: SeedRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Parsed `.scenario` file (TOML). Every section except `format_version`
/// falls back to the reference setup when omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    #[serde(default = "d_name")]
    pub name: String,
    #[serde(default = "d_object")]
    pub object: ObjectSection,
    #[serde(default = "d_source")]
    pub source_bin: BinSection,
    #[serde(default = "d_goal")]
    pub goal_bin: BinSection,
    #[serde(default = "d_reach")]
    pub reachable: ReachSection,
    #[serde(default = "d_camera")]
    pub camera: CameraSection,
    #[serde(default = "d_grid")]
    pub grid: GridSpec,
    #[serde(default = "d_pile")]
    pub pile: PileSection,
    #[serde(default = "d_noise")]
    pub noise: NoiseSection,
    #[serde(default = "d_physics")]
    pub physics: PhysicsSection,
    #[serde(default = "d_pipeline")]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub push: PushParams,
    #[serde(default)]
    pub topple: ToppleParams,
    #[serde(default)]
    pub correction: CorrectionTolerances,
    #[serde(default = "d_run")]
    pub run: RunSection,
}

fn d_name() -> String {
    "unnamed".into()
}
fn d_object() -> ObjectSection {
    ScenarioFile::default().object
}
fn d_source() -> BinSection {
    ScenarioFile::default().source_bin
}
fn d_goal() -> BinSection {
    ScenarioFile::default().goal_bin
}
fn d_reach() -> ReachSection {
    ScenarioFile::default().reachable
}
fn d_camera() -> CameraSection {
    ScenarioFile::default().camera
}
fn d_grid() -> GridSpec {
    ScenarioFile::default().grid
}
fn d_pile() -> PileSection {
    PileSection { faces: None }
}
fn d_noise() -> NoiseSection {
    ScenarioFile::default().noise
}
fn d_physics() -> PhysicsSection {
    ScenarioFile::default().physics
}
fn d_pipeline() -> PipelineSection {
    ScenarioFile::default().pipeline
}
fn d_run() -> RunSection {
    ScenarioFile::default().run
}

impl Default for ScenarioFile {
    /// The reference setup of [`PipelineConfig::default`], all variants,
    /// seeds 0..9.
    fn default() -> Self {
        let cfg = PipelineConfig::default();
        let l = &cfg.layout;
        let c = &cfg.camera;
        Self {
            format_version: SCENARIO_VERSION,
            name: "default_soap".into(),
            object: ObjectSection {
                dims_m: cfg.object_dims.into(),
            },
            source_bin: BinSection::of(&l.source),
            goal_bin: BinSection::of(&l.goal),
            reachable: ReachSection {
                inner_radius_m: l.reachable.inner_radius,
                outer_radius_m: l.reachable.outer_radius,
                center_m: l.reachable.center.into(),
            },
            camera: CameraSection {
                height_m: c.height_m,
                fx_px: c.fx,
                fy_px: c.fy,
                cx_px: c.cx,
                cy_px: c.cy,
                width_px: c.width,
                height_px: c.height,
            },
            grid: cfg.grid,
            pile: PileSection { faces: None },
            noise: NoiseSection {
                depth_sigma_m: cfg.noise.depth_sigma,
                segmentation: cfg.noise.segmentation,
                pose: cfg.noise.pose,
            },
            physics: PhysicsSection {
                drop_scatter_per_m: l.config.k_drop,
                grasp_alignment_rad: l.config.grasp_alignment_rad,
                descent_margin_m: l.config.descent_margin,
                push_step_m: l.config.push_step,
                pile_attempts: l.config.pile_attempts,
            },
            pipeline: PipelineSection {
                epsilon_m: cfg.epsilon,
                cup_radius_m: cfg.cup_radius,
                drop_height_m: cfg.drop_height,
                correction_timeout: cfg.correction_timeout,
                voxel_resolution_m: cfg.voxel_resolution,
                max_actions_per_object: cfg.max_actions_per_object,
            },
            push: cfg.push,
            topple: cfg.topple,
            correction: cfg.correction,
            run: RunSection {
                variants: Variant::ALL.to_vec(),
                seeds: SeedRange { first: 0, last: 9 },
                output_dir: None,
            },
        }
    }
}

/// Every key a scenario may contain, as a TOML tree.
fn reference_keys() -> toml::Table {
    let mut full = ScenarioFile::default();
    full.pile.faces = Some(vec!["+Z".into()]);
    full.correction.normal_gain_m = Some(0.0);
    full.run.output_dir = Some(PathBuf::from("out"));
    toml::Table::try_from(&full).expect("scenario serializes")
}

/// Rejects keys that are not part of the schema, pointing out ones that only
/// lack a unit suffix.
fn check_keys(table: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<(), ScenarioError> {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match reference.get(key) {
            Some(toml::Value::Table(r)) => {
                if let toml::Value::Table(t) = value {
                    check_keys(t, r, &path)?;
                }
            }
            Some(_) => {}
            None => {
                if let Some(s) = UNIT_SUFFIXES
                    .iter()
                    .map(|s| format!("{key}{s}"))
                    .find(|k| reference.contains_key(k))
                {
                    let suggestion = if prefix.is_empty() { s } else { format!("{prefix}.{s}") };
                    return Err(ScenarioError::UnitSuffix {
                        field: path,
                        suggestion,
                    });
                }
                return Err(ScenarioError::UnknownField(path));
            }
        }
    }
    Ok(())
}

/// Overlays `user` on `base`; nested tables merge key by key, anything else
/// is replaced.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ScenarioFile {
    pub fn parse_str(text: &str) -> Result<Self, ScenarioError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
        if let Some(v) = table.get("format_version").and_then(|v| v.as_integer()) {
            if v != SCENARIO_VERSION as i64 {
                return Err(ScenarioError::Version {
                    found: v.clamp(0, u32::MAX as i64) as u32,
                });
            }
        }
        if !table.contains_key("format_version") {
            return Err(schema("format_version", "missing"));
        }
        check_keys(&table, &reference_keys(), "")?;
        let mut merged = toml::Table::try_from(ScenarioFile::default()).expect("scenario serializes");
        merged.remove("name");
        merge(&mut merged, table);
        let file: ScenarioFile = merged.try_into().map_err(|e: toml::de::Error| {
            // prefer the positioned message when the file alone shows the problem
            match toml::from_str::<ScenarioFile>(text) {
                Err(direct) if !direct.to_string().contains("missing field") => ScenarioError::Syntax(direct.to_string()),
                _ => ScenarioError::Syntax(e.to_string()),
            }
        })?;
        file.to_config()?;
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Pipeline configuration for the first listed variant; use
    /// [`PipelineConfig::with_variant`] for the others.
    pub fn to_config(&self) -> Result<PipelineConfig, ScenarioError> {
        let dims = Vector3::from(self.object.dims_m);
        for k in 0..3 {
            if !(dims[k] > 0.0) {
                return Err(schema(&format!("object.dims_m[{k}]"), "must be > 0"));
            }
        }
        let source = self.source_bin.to_bin("source_bin")?;
        let goal = self.goal_bin.to_bin("goal_bin")?;
        let r = &self.reachable;
        if !(r.inner_radius_m > 0.0 && r.inner_radius_m < r.outer_radius_m) {
            return Err(schema("reachable.inner_radius_m", "need 0 < inner_radius_m < outer_radius_m"));
        }
        let c = &self.camera;
        if !(c.height_m > 0.0) {
            return Err(schema("camera.height_m", "must be > 0"));
        }
        for (name, v) in [("fx_px", c.fx_px), ("fy_px", c.fy_px), ("cx_px", c.cx_px), ("cy_px", c.cy_px)] {
            if !(v > 0.0) {
                return Err(schema(&format!("camera.{name}"), "must be > 0"));
            }
        }
        if c.width_px < 32 || c.height_px < 32 {
            return Err(schema("camera.width_px", "resolution must be at least 32x32"));
        }
        let g = &self.grid;
        if g.rows == 0 || g.cols == 0 || g.layers == 0 {
            return Err(schema("grid", "rows, cols and layers must be >= 1"));
        }
        let pile_faces = match &self.pile.faces {
            None => None,
            Some(list) => {
                if list.is_empty() {
                    return Err(schema("pile.faces", "must list at least one face"));
                }
                let faces = list
                    .iter()
                    .map(|f| f.parse::<Face>().map_err(|e| schema("pile.faces", e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(faces)
            }
        };
        let n = &self.noise;
        if !(n.depth_sigma_m >= 0.0) {
            return Err(schema("noise.depth_sigma_m", "must be >= 0"));
        }
        let s = &n.segmentation;
        if !(0.0..=1.0).contains(&s.label_swap_rate) {
            return Err(schema("noise.segmentation.label_swap_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&s.confidence_spread) {
            return Err(schema("noise.segmentation.confidence_spread", "must lie in [0, 1]"));
        }
        let p = &n.pose;
        if !(p.translation_sigma_m >= 0.0) {
            return Err(schema("noise.pose.translation_sigma_m", "must be >= 0"));
        }
        if !(p.yaw_sigma_rad >= 0.0) {
            return Err(schema("noise.pose.yaw_sigma_rad", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&p.face_confusion) {
            return Err(schema("noise.pose.face_confusion", "must lie in [0, 1]"));
        }
        let ph = &self.physics;
        let physics_checks = [
            (ph.drop_scatter_per_m >= 0.0, "physics.drop_scatter_per_m", "must be >= 0"),
            (
                ph.grasp_alignment_rad > 0.0 && ph.grasp_alignment_rad < std::f64::consts::FRAC_PI_2,
                "physics.grasp_alignment_rad",
                "must lie in (0, pi/2)",
            ),
            (ph.descent_margin_m >= 0.0, "physics.descent_margin_m", "must be >= 0"),
            (ph.push_step_m > 0.0, "physics.push_step_m", "must be > 0"),
            (ph.pile_attempts > 0, "physics.pile_attempts", "must be >= 1"),
        ];
        for (ok, field, msg) in physics_checks {
            if !ok {
                return Err(schema(field, msg));
            }
        }
        let pl = &self.pipeline;
        let pipeline_checks = [
            (pl.epsilon_m > 0.0, "pipeline.epsilon_m", "must be > 0"),
            (pl.cup_radius_m > 0.0, "pipeline.cup_radius_m", "must be > 0"),
            (pl.drop_height_m >= 0.0, "pipeline.drop_height_m", "must be >= 0"),
            (pl.voxel_resolution_m > 0.0, "pipeline.voxel_resolution_m", "must be > 0"),
            (pl.max_actions_per_object > 0, "pipeline.max_actions_per_object", "must be >= 1"),
            (self.push.eps_m > 0.0, "push.eps_m", "must be > 0"),
            (self.push.step_m > 0.0, "push.step_m", "must be > 0"),
            (self.topple.clearance_factor >= 1.0, "topple.clearance_factor", "must be >= 1"),
            (self.topple.grid_pitch_m > 0.0, "topple.grid_pitch_m", "must be > 0"),
            (self.topple.flat_tol_m > 0.0, "topple.flat_tol_m", "must be > 0"),
            (self.correction.footprint_tol_m >= 0.0, "correction.footprint_tol_m", "must be >= 0"),
            (self.correction.max_correction_m > 0.0, "correction.max_correction_m", "must be > 0"),
            (!self.run.variants.is_empty(), "run.variants", "must list at least one variant"),
        ];
        for (ok, field, msg) in pipeline_checks {
            if !ok {
                return Err(schema(field, msg));
            }
        }
        let cfg = PipelineConfig {
            variant: self.run.variants[0],
            object_dims: dims,
            layout: WorldLayout {
                source,
                goal,
                reachable: ReachableRegion {
                    inner_radius: r.inner_radius_m,
                    outer_radius: r.outer_radius_m,
                    center: Vector2::from(r.center_m),
                },
                config: WorldConfig {
                    k_drop: ph.drop_scatter_per_m,
                    grasp_alignment_rad: ph.grasp_alignment_rad,
                    descent_margin: ph.descent_margin_m,
                    push_step: ph.push_step_m,
                    pile_attempts: ph.pile_attempts,
                },
            },
            camera: CameraSpec {
                height_m: c.height_m,
                fx: c.fx_px,
                fy: c.fy_px,
                cx: c.cx_px,
                cy: c.cy_px,
                width: c.width_px,
                height: c.height_px,
            },
            grid: *g,
            pile_faces,
            noise: NoiseConfig {
                segmentation: n.segmentation,
                pose: n.pose,
                depth_sigma: n.depth_sigma_m,
            },
            epsilon: pl.epsilon_m,
            cup_radius: pl.cup_radius_m,
            drop_height: pl.drop_height_m,
            correction_timeout: pl.correction_timeout,
            voxel_resolution: pl.voxel_resolution_m,
            max_actions_per_object: pl.max_actions_per_object,
            push: self.push,
            topple: self.topple,
            correction: self.correction,
        };
        cfg.validate().map_err(|e| schema("scenario", e.to_string()))?;
        Ok(cfg)
    }
}

/// Loads a scenario from `spec`: a file path, or the name of a bundled
/// scenario when no such file exists.
pub fn parse_scenario(spec: &Path) -> Result<ScenarioFile, ScenarioError> {
    match std::fs::read_to_string(spec) {
        Ok(text) => ScenarioFile::parse_str(&text),
        Err(e) => {
            let name = spec.to_string_lossy();
            let name = name.strip_suffix(".scenario").unwrap_or(&name);
            match BUNDLED.iter().find(|(n, _)| *n == name) {
                Some((_, text)) => ScenarioFile::parse_str(text),
                None => Err(ScenarioError::Missing {
                    path: spec.to_path_buf(),
                    message: e.to_string(),
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_default_is_reference_setup() {
        let s = parse_scenario(Path::new("default_soap")).unwrap();
        let cfg = s.to_config().unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.grid.count(), 9);
        assert_eq!(s.run.seeds.to_vec(), (0..=9).collect::<Vec<_>>());
    }

    #[test]
    fn every_bundled_scenario_parses() {
        for (name, _) in BUNDLED {
            parse_scenario(Path::new(name)).unwrap();
        }
        let adv = parse_scenario(Path::new("adversarial_soap")).unwrap().to_config().unwrap();
        assert!(adv.pile_faces.unwrap().iter().all(|f| f.axis() != 2));
        let two = parse_scenario(Path::new("two_layer_soap")).unwrap().to_config().unwrap();
        assert_eq!(two.grid.count(), 18);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = ScenarioFile::parse_str("format_version = 1\n").unwrap();
        assert_eq!(s.to_config().unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_sections_keep_reference_values() {
        let s = ScenarioFile::parse_str("format_version = 1\n[grid]\nrows = 2\n[noise.pose]\nface_confusion = 0.0\n").unwrap();
        let d = ScenarioFile::default();
        assert_eq!((s.grid.rows, s.grid.cols, s.grid.layers), (2, d.grid.cols, d.grid.layers));
        assert_eq!(s.noise.pose.face_confusion, 0.0);
        assert_eq!(s.noise.pose.translation_sigma_m, d.noise.pose.translation_sigma_m);
        assert_eq!(s.name, "unnamed");
        assert!(ScenarioFile::parse_str("[grid]\nrows = 2\n").is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let s = ScenarioFile::default();
        assert_eq!(ScenarioFile::parse_str(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let r = ScenarioFile::parse_str("format_version = 1\nfrob = 3\n");
        assert_eq!(r, Err(ScenarioError::UnknownField("frob".into())));
        let r = ScenarioFile::parse_str("format_version = 1\n[grid]\nrows = 3\ncols = 3\nlayers = 1\nfrob = 1\n");
        assert_eq!(r, Err(ScenarioError::UnknownField("grid.frob".into())));
    }

    #[test]
    fn missing_unit_suffix_is_named() {
        let r = ScenarioFile::parse_str("format_version = 1\n[pipeline]\nepsilon = 0.01\n");
        assert_eq!(
            r,
            Err(ScenarioError::UnitSuffix {
                field: "pipeline.epsilon".into(),
                suggestion: "pipeline.epsilon_m".into(),
            })
        );
    }

    #[test]
    fn negative_bin_dimension_names_field() {
        let mut s = ScenarioFile::default();
        s.goal_bin.interior_dims_m[1] = -0.2;
        match ScenarioFile::parse_str(&s.to_toml()) {
            Err(ScenarioError::Schema { field, .. }) => assert_eq!(field, "goal_bin.interior_dims_m[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_is_checked() {
        assert_eq!(
            ScenarioFile::parse_str("format_version = 7\n"),
            Err(ScenarioError::Version { found: 7 })
        );
        assert!(matches!(
            ScenarioFile::parse_str("name = \"x\"\n"),
            Err(ScenarioError::Schema { field, .. }) if field == "format_version"
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match ScenarioFile::parse_str("format_version = 1\n[grid\n") {
            Err(ScenarioError::Syntax(m)) => assert!(m.contains("line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            parse_scenario(Path::new("/nonexistent/x.scenario")),
            Err(ScenarioError::Missing { .. })
        ));
    }

    #[test]
    fn physical_keys_carry_units() {
        // dimensionless or count-valued keys
        let unitless = [
            "format_version", "name", "rows", "cols", "layers", "faces", "label_swap_rate",
            "confidence_spread", "min_pixels", "min_confidence", "face_confusion", "pile_attempts",
            "correction_timeout", "max_actions_per_object", "max_iters", "clearance_factor",
            "min_points", "min_region_points", "variants", "seeds", "output_dir",
        ];
        fn walk(t: &toml::Table, unitless: &[&str], bad: &mut Vec<String>) {
            for (k, v) in t {
                match v {
                    toml::Value::Table(inner) => walk(inner, unitless, bad),
                    _ if unitless.contains(&k.as_str()) => {}
                    _ if UNIT_SUFFIXES.iter().any(|s| k.ends_with(s)) => {}
                    _ => bad.push(k.clone()),
                }
            }
        }
        let mut bad = Vec::new();
        walk(&reference_keys(), &unitless, &mut bad);
        assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn seed_ranges() {
        assert_eq!("0..9".parse::<SeedRange>().unwrap().to_vec().len(), 10);
        assert_eq!("3".parse::<SeedRange>().unwrap().to_vec(), vec![3]);
        assert_eq!("2..=4".parse::<SeedRange>().unwrap().to_vec(), vec![2, 3, 4]);
        assert!("5..1".parse::<SeedRange>().is_err());
        assert!("a..b".parse::<SeedRange>().is_err());
    }
}
