use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BinId, WorldError, WorldState};
use crate::geom::Pose;

pub const SNAPSHOT_FORMAT: &str = "packsim-snapshot";
pub const ACTION_LOG_FORMAT: &str = "packsim-actions";
pub const SNAPSHOT_VERSION: u32 = 1;

/// One world-changing (or, for `Sense`, world-observing) step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum WorldAction {
    Sense {
        bin: BinId,
        seed: u64,
    },
    Pick {
        object: usize,
        point: Vector3<f64>,
    },
    Release {
        pose: Pose,
        height: f64,
    },
    Push {
        object: usize,
        direction: Vector2<f64>,
        distance: f64,
    },
    Topple {
        object: usize,
        place: Vector2<f64>,
        lateral: Vector2<f64>,
    },
    Throw,
}

impl WorldState {
    pub fn apply(&mut self, action: &WorldAction) -> Result<(), WorldError> {
        match action {
            WorldAction::Sense { .. } => Ok(()),
            WorldAction::Pick { object, point } => self.apply_pick(*object, point),
            WorldAction::Release { pose, height } => self.apply_release(pose, *height),
            WorldAction::Push {
                object,
                direction,
                distance,
            } => self.apply_push(*object, direction, *distance).map(|_| ()),
            WorldAction::Topple {
                object,
                place,
                lateral,
            } => self.apply_topple(*object, place, lateral),
            WorldAction::Throw => self.apply_throw(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSnapshot {
    pub format: String,
    pub version: u32,
    pub world: WorldState,
}

impl WorldSnapshot {
    pub fn of(world: &WorldState) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            world: world.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let snap: WorldSnapshot =
            serde_json::from_str(text).map_err(|e| ReplayError::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(ReplayError::Version {
                found: format!("{} v{}", snap.format, snap.version),
                expected: format!("{SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION}"),
            });
        }
        Ok(snap)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogHeader {
    format: String,
    version: u32,
}

pub type ActionLog = Vec<WorldAction>;

/// JSON lines: a header, then one action per line.
pub fn write_action_log(log: &[WorldAction]) -> String {
    let header = LogHeader {
        format: ACTION_LOG_FORMAT.into(),
        version: SNAPSHOT_VERSION,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for a in log {
        out.push_str(&serde_json::to_string(a).expect("action serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_action_log(text: &str) -> Result<ActionLog, ReplayError> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => serde_json::from_str::<LogHeader>(l).map_err(|e| ReplayError::Parse {
            line: 1,
            message: e.to_string(),
        })?,
        None => {
            return Err(ReplayError::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.format != ACTION_LOG_FORMAT || header.version != SNAPSHOT_VERSION {
        return Err(ReplayError::Version {
            found: format!("{} v{}", header.format, header.version),
            expected: format!("{ACTION_LOG_FORMAT} v{SNAPSHOT_VERSION}"),
        });
    }
    let mut log = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let a = serde_json::from_str(l).map_err(|e| ReplayError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        log.push(a);
    }
    Ok(log)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("version mismatch: found {found}, expected {expected}")]
    Version { found: String, expected: String },
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error("action {index} failed on replay: {source}")]
    Action { index: usize, source: WorldError },
}

/// Replays `log` on top of `snapshot` text and returns the final world.
pub fn replay(snapshot: &str, log: &[WorldAction]) -> Result<WorldState, ReplayError> {
    let mut world = WorldSnapshot::parse(snapshot)?.world;
    for (index, a) in log.iter().enumerate() {
        world
            .apply(a)
            .map_err(|source| ReplayError::Action { index, source })?;
    }
    Ok(world)
}

/// A world plus the record of everything successfully done to it.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub world: WorldState,
    pub initial_snapshot: String,
    pub log: ActionLog,
}

impl Simulation {
    pub fn new(world: WorldState) -> Self {
        Self {
            initial_snapshot: world.snapshot(),
            world,
            log: Vec::new(),
        }
    }

    /// Applies `action`; failed actions leave the world untouched and are not
    /// logged.
    pub fn act(&mut self, action: WorldAction) -> Result<(), WorldError> {
        self.world.apply(&action)?;
        self.log.push(action);
        Ok(())
    }

    /// Like [`Simulation::act`] for pushes, returning the distance travelled.
    pub fn push(&mut self, object: usize, direction: Vector2<f64>, distance: f64) -> Result<f64, WorldError> {
        let d = self.world.apply_push(object, &direction, distance)?;
        self.log.push(WorldAction::Push {
            object,
            direction,
            distance,
        });
        Ok(d)
    }

    pub fn sense(&mut self, bin: BinId, seed: u64) {
        self.log.push(WorldAction::Sense { bin, seed });
    }

    pub fn sense_count(&self) -> usize {
        self.log
            .iter()
            .filter(|a| matches!(a, WorldAction::Sense { .. }))
            .count()
    }
}
