use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::physics::{bottom_z, footprint, landing_face};
use super::{BinId, ObjectState, ObjectStatus, StablePose, WorldError, WorldLayout, WorldState};
use crate::geom::{CuboidModel, Face, Pose};

/// Largest share of the source bin volume a pile may fill.
pub const MAX_FILL: f64 = 0.8;

/// Drops `n` objects one at a time into the source bin at random stable
/// poses. `faces` restricts which model face may end up pointing up (all six
/// when `None`). Each candidate lands on whatever is under its center and is
/// rejected if it cannot settle without interpenetration or leaves the walls.
pub fn generate_pile(
    seed: u64,
    n: usize,
    model: &CuboidModel,
    layout: &WorldLayout,
    faces: Option<&[Face]>,
) -> Result<WorldState, WorldError> {
    layout.validate()?;
    let needed = n as f64 * model.volume();
    let available = MAX_FILL * layout.source.interior_volume();
    if needed > available {
        return Err(WorldError::Overfull {
            n,
            needed,
            available,
        });
    }
    let faces: &[Face] = match faces {
        Some(f) if !f.is_empty() => f,
        Some(_) => return Err(WorldError::InvalidConfig("empty face list".into())),
        None => &Face::ALL,
    };
    let dims = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the world's own generator is independent of the placement stream
    let mut world = WorldState::empty(layout, dims, rng.random());
    let bin = layout.source;
    let ceiling = bin.floor_z() + bin.interior_dims.z;
    for id in 0..n {
        let mut placed = false;
        for _ in 0..layout.config.pile_attempts {
            let face = landing_face(&mut rng, faces, &dims);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let probe = StablePose {
                face_up: face,
                yaw,
                planar_position: Vector2::zeros(),
                support_height: 0.0,
            };
            let fp = footprint(&probe.to_pose(&dims), &dims);
            let (lo, hi) = fp.bounds();
            let (min, max) = (bin.interior_min() - lo, bin.interior_max() - hi);
            if min.x >= max.x || min.y >= max.y {
                continue;
            }
            let xy = Vector2::new(rng.random_range(min.x..max.x), rng.random_range(min.y..max.y));
            let stable = StablePose {
                planar_position: xy,
                support_height: ceiling + 1.0,
                ..probe
            };
            world.objects.push(ObjectState {
                id,
                pose: stable.to_pose(&dims),
                status: ObjectStatus::Resting,
            });
            world.settle(id, BinId::Source);
            let pose: Pose = world.objects[id].pose;
            let inside = bin.wall_excess(&footprint(&pose, &dims)) <= 1e-9;
            let moved = (pose.position.xy() - xy).norm() > 1e-12;
            let clear = (0..id).all(|o| world.penetration(id, o).is_none());
            // a pile rests below the rim and objects land where they were aimed
            if inside && clear && !moved && bottom_z(&pose, &dims) < ceiling {
                placed = true;
                break;
            }
            world.objects.pop();
        }
        if !placed {
            return Err(WorldError::PileGenerationFailed(id, layout.config.pile_attempts));
        }
    }
    Ok(world)
}
