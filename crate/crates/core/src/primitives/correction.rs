use std::collections::BTreeSet;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::points_in_bin;
use crate::geom::{footprint_pivots, Arrangement, ConvexPolygon, CuboidModel};
use crate::world::{footprint, render_point_cloud, BinId, CameraModel, PointCloud, Simulation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionTolerances {
    /// Largest accepted tilt of a top surface.
    pub normal_tol_rad: f64,
    /// Largest accepted protrusion past the goal footprint.
    pub footprint_tol_m: f64,
    /// Push distance per radian of tilt; half the object height when unset.
    pub normal_gain_m: Option<f64>,
    pub max_correction_m: f64,
    /// Fewest top-surface points a region needs to be judged.
    pub min_region_points: usize,
}

impl Default for CorrectionTolerances {
    fn default() -> Self {
        Self {
            normal_tol_rad: 5f64.to_radians(),
            footprint_tol_m: 0.003,
            normal_gain_m: None,
            max_correction_m: 0.03,
            min_region_points: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionKind {
    NormalPush,
    FootprintPull,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectiveAction {
    pub kind: CorrectionKind,
    /// Indices into the scanned cloud.
    pub object_region: Vec<usize>,
    pub direction: Vector2<f64>,
    pub distance: f64,
    /// Where on the object the correction applies.
    pub anchor: Vector2<f64>,
}

/// Outline of the packed goal: the bounding rectangle of every target
/// footprint.
pub fn goal_footprint(goal: &Arrangement, model: &CuboidModel) -> Option<ConvexPolygon> {
    let dims = model.dims();
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for t in &goal.targets {
        for c in footprint(t, &dims).corners() {
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
    }
    ConvexPolygon::rectangle(lo, hi).ok()
}

fn nearest_target(goal: &Arrangement, p: &Vector2<f64>) -> usize {
    (0..goal.targets.len())
        .min_by(|a, b| {
            let da = (goal.targets[*a].position.xy() - p).norm();
            let db = (goal.targets[*b].position.xy() - p).norm();
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

/// Inspects a cloud of placed-object points and lists the corrections it
/// calls for, most urgent first: pushes for tilted top surfaces, then pulls
/// for objects sticking out of the goal outline.
pub fn correction_scan(
    cloud: &PointCloud,
    goal: &Arrangement,
    model: &CuboidModel,
    tol: &CorrectionTolerances,
) -> Vec<CorrectiveAction> {
    let mut out = Vec::new();
    if goal.targets.is_empty() || cloud.is_empty() {
        return out;
    }
    let gain = tol.normal_gain_m.unwrap_or(0.5 * model.dims()[model.thinnest_axis()]);

    // top surfaces grouped by the target they sit over
    let mut regions: Vec<Vec<usize>> = vec![Vec::new(); goal.targets.len()];
    for i in 0..cloud.len() {
        if cloud.normals[i].z > 0.5 {
            regions[nearest_target(goal, &cloud.points[i].xy())].push(i);
        }
    }
    for region in regions {
        if region.len() < tol.min_region_points {
            continue;
        }
        let n = region
            .iter()
            .fold(Vector3::zeros(), |acc: Vector3<f64>, i| acc + cloud.normals[*i])
            .normalize();
        let tilt = n.z.clamp(-1.0, 1.0).acos();
        let planar = n.xy();
        if tilt <= tol.normal_tol_rad || planar.norm() < 1e-12 {
            continue;
        }
        let distance = (gain * planar.norm().min(1.0).asin()).min(tol.max_correction_m);
        if distance <= 0.0 {
            continue;
        }
        let anchor = region.iter().map(|i| cloud.points[*i].xy()).sum::<Vector2<f64>>() / region.len() as f64;
        out.push(CorrectiveAction {
            kind: CorrectionKind::NormalPush,
            object_region: region,
            direction: planar.normalize(),
            distance,
            anchor,
        });
    }

    let Some(outline) = goal_footprint(goal, model) else {
        return out;
    };
    // upward-facing points only; bin walls and object sides are vertical
    let tops: Vec<Vector3<f64>> = (0..cloud.len())
        .filter(|i| cloud.normals[*i].z > 0.5)
        .map(|i| cloud.points[i])
        .collect();
    let pivots = footprint_pivots(&tops, &outline);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); goal.targets.len()];
    for (k, p) in pivots.iter().enumerate() {
        if p.exterior_distance > tol.footprint_tol_m {
            groups[nearest_target(goal, &p.point.xy())].push(k);
        }
    }
    let mut pulls = Vec::new();
    for g in groups.into_iter().filter(|g| !g.is_empty()) {
        // pivots come sorted farthest first
        let worst = &pivots[g[0]];
        let dir = worst.closest - worst.point.xy();
        if dir.norm() < 1e-12 {
            continue;
        }
        let region = g
            .iter()
            .map(|k| {
                let p = pivots[*k].point;
                cloud.points.iter().position(|q| *q == p).unwrap_or(usize::MAX)
            })
            .collect();
        pulls.push(CorrectiveAction {
            kind: CorrectionKind::FootprintPull,
            object_region: region,
            direction: dir.normalize(),
            distance: worst.exterior_distance.min(tol.max_correction_m),
            anchor: worst.point.xy(),
        });
    }
    pulls.sort_by(|a, b| b.distance.total_cmp(&a.distance));
    out.extend(pulls);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CorrectionOutcome {
    pub actions: usize,
    pub timed_out: bool,
    /// Scans that found an action but no object to apply it to.
    pub unmatched: usize,
    /// Stopped with defects left, every remaining one on an object whose
    /// last push did not help.
    pub stalled: bool,
}

/// Total correction distance a scan asks for.
fn misalignment(actions: &[CorrectiveAction]) -> f64 {
    actions.iter().map(|a| a.distance).sum()
}

/// Observes the goal bin, applies the first corrective action as a push and
/// repeats until a scan comes back clean or `timeout` actions were spent.
///
/// A push that does not reduce the total observed misalignment (typically
/// because it shoves a neighbour out on the far side) marks its object as
/// stuck; stuck objects are not pushed again.
pub fn correction_loop(
    sim: &mut Simulation,
    camera: &CameraModel,
    goal: &Arrangement,
    model: &CuboidModel,
    tol: &CorrectionTolerances,
    timeout: usize,
    seed: u64,
) -> CorrectionOutcome {
    let mut outcome = CorrectionOutcome::default();
    let above = 0.5 * model.dims()[model.thinnest_axis()];
    let mut stuck = BTreeSet::new();
    let mut last: Option<(usize, f64)> = None;
    for round in 0.. {
        let render_seed = seed.wrapping_add(round);
        sim.sense(BinId::Goal, render_seed);
        let cloud = render_point_cloud(&sim.world, camera, render_seed);
        let placed = points_in_bin(&cloud, sim.world.goal(), above, 0.001);
        let actions = correction_scan(&placed, goal, model, tol);
        if actions.is_empty() {
            break;
        }
        let score = misalignment(&actions);
        if let Some((id, before)) = last.take() {
            if score > before - 1e-4 {
                stuck.insert(id);
            }
        }
        if outcome.actions + outcome.unmatched >= timeout {
            outcome.timed_out = true;
            break;
        }
        let next = actions.iter().find_map(|a| {
            let id = sim.world.object_near(BinId::Goal, &a.anchor, 0.01);
            match id {
                Some(id) if stuck.contains(&id) => None,
                _ => Some((a, id)),
            }
        });
        let Some((action, id)) = next else {
            outcome.stalled = true;
            break;
        };
        let Some(id) = id else {
            outcome.unmatched += 1;
            continue;
        };
        if sim.push(id, action.direction, action.distance).is_ok() {
            outcome.actions += 1;
            last = Some((id, score));
        } else {
            outcome.unmatched += 1;
            stuck.insert(id);
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Face, Pose};
    use crate::world::{Bin, ObjectState, ObjectStatus, StablePose, WorldLayout, WorldState};

    fn model() -> CuboidModel {
        CuboidModel::new(Vector3::new(0.09, 0.06, 0.03)).unwrap()
    }

    fn grid() -> Arrangement {
        let mut t = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                t.push(Pose::from_translation(-0.09 + 0.09 * c as f64, 0.49 + 0.06 * r as f64, 0.015));
            }
        }
        Arrangement::unlabeled(t, 0.01)
    }

    fn synthetic(poses: &[Pose], tilt: Option<(usize, Vector3<f64>)>) -> PointCloud {
        let mut cloud = PointCloud::default();
        for (k, p) in poses.iter().enumerate() {
            for i in 0..9 {
                for j in 0..6 {
                    let local = Vector3::new(-0.04 + 0.01 * i as f64, -0.025 + 0.01 * j as f64, 0.015);
                    cloud.points.push(p.transform_point(&local));
                    let n = match tilt {
                        Some((t, n)) if t == k => n,
                        _ => Vector3::z(),
                    };
                    cloud.normals.push(n);
                    cloud.pixels.push((0, 0));
                }
            }
        }
        cloud
    }

    #[test]
    fn perfect_grid_needs_nothing() {
        let g = grid();
        let c = synthetic(&g.targets, None);
        assert!(correction_scan(&c, &g, &model(), &Default::default()).is_empty());
    }

    #[test]
    fn tilted_top_gets_normal_push() {
        let g = grid();
        let n = Vector3::new(0.2, 0.0, 0.98);
        let c = synthetic(&g.targets, Some((4, n)));
        let acts = correction_scan(&c, &g, &model(), &Default::default());
        assert_eq!(acts[0].kind, CorrectionKind::NormalPush);
        assert!((acts[0].direction - Vector2::new(1.0, 0.0)).norm() < 1e-12);
        let np = n.normalize();
        let expect = 0.015 * (np.xy().norm()).asin();
        assert!((acts[0].distance - expect).abs() < 1e-12);
        assert!((0.2f64.asin() * 0.015 - expect).abs() < 1e-4);
    }

    #[test]
    fn protruding_object_gets_pulled() {
        let g = grid();
        let mut poses = g.targets.clone();
        // left column object pushed 8 mm out past the left edge
        poses[3].position.x -= 0.008;
        let mut c = synthetic(&poses, None);
        // an outer edge point right on the shifted face
        c.points.push(poses[3].transform_point(&Vector3::new(-0.045, 0.0, 0.015)));
        c.normals.push(Vector3::z());
        c.pixels.push((0, 0));
        let acts = correction_scan(&c, &g, &model(), &Default::default());
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, CorrectionKind::FootprintPull);
        assert!((acts[0].distance - 0.008).abs() < 1e-12);
        assert!((acts[0].direction - Vector2::new(1.0, 0.0)).norm() < 1e-12);
    }

    fn goal_world(offset: f64) -> (Simulation, CameraModel) {
        let layout = WorldLayout {
            source: Bin::new(Vector3::new(0.0, -0.55, 0.0), Vector3::new(0.30, 0.22, 0.15)),
            goal: Bin::new(Vector3::new(0.0, 0.55, 0.0), Vector3::new(0.30, 0.22, 0.15)),
            reachable: Default::default(),
            config: Default::default(),
        };
        let mut w = WorldState::empty(&layout, model().dims(), 0);
        for (id, t) in grid().targets.iter().enumerate() {
            let mut s = StablePose {
                face_up: Face::PosZ,
                yaw: 0.0,
                planar_position: t.position.xy(),
                support_height: 0.0,
            };
            if id == 3 {
                s.planar_position.x -= offset;
            }
            w.objects.push(ObjectState {
                id,
                pose: s.to_pose(&model().dims()),
                status: ObjectStatus::Transferred,
            });
        }
        let cam = CameraModel::looking_down(&w.goal().pose.position, 0.75, 0.0);
        (Simulation::new(w), cam)
    }

    #[test]
    fn aligned_goal_takes_no_action() {
        let (mut sim, cam) = goal_world(0.0);
        let out = correction_loop(&mut sim, &cam, &grid(), &model(), &Default::default(), 10, 0);
        assert_eq!(out.actions, 0);
        assert!(!out.timed_out);
    }

    #[test]
    fn single_offset_needs_one_pull() {
        let (mut sim, cam) = goal_world(0.008);
        let out = correction_loop(&mut sim, &cam, &grid(), &model(), &Default::default(), 10, 0);
        assert_eq!(out.actions, 1);
        assert!(!out.timed_out);
        let x = sim.world.objects[3].pose.position.x;
        assert!((x + 0.09).abs() < 0.003, "{x}");
    }

    #[test]
    fn impossible_tolerance_times_out() {
        let (mut sim, mut cam) = goal_world(0.008);
        cam.depth_noise_sigma = 0.002;
        let tol = CorrectionTolerances {
            footprint_tol_m: 0.0,
            ..Default::default()
        };
        let out = correction_loop(&mut sim, &cam, &grid(), &model(), &tol, 5, 0);
        assert!(out.timed_out);
        assert_eq!(out.actions + out.unmatched, 5);
    }
}
