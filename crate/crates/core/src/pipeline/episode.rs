use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    alignment_yaw, goal_arrangement, noise_seed, pile_seed, target_volume, EpisodeReport,
    PipelineConfig, PipelineError, VariantFlags,
};
use crate::geom::{
    satisfies_goal, voxel_unoccupied_fraction, yaw_rotation, Arrangement, CuboidModel, Face, Pose,
};
use crate::perception::{
    estimate_pose, order_candidates, segment_instances, select_pick_point, PickCandidate,
    PoseEstimate, Segment,
};
use crate::primitives::{
    adaptive_push_plan, correction_loop, correction_scan, plan_topple, points_in_bin,
};
use crate::world::{
    generate_pile, render_point_cloud, BinId, CameraModel, ObjectStatus, PointCloud, Simulation,
    StablePose, WorldAction,
};

/// Failed picks of one object tolerated before it is skipped until the next
/// successful pick.
const MAX_PICK_FAILURES: usize = 5;

/// Consecutive observations without any pick candidate before the episode
/// is declared stuck.
const MAX_EMPTY_OBSERVATIONS: usize = 3;

/// The simulation left behind by an episode, for replay and inspection.
#[derive(Clone, Debug)]
pub struct EpisodeTrace {
    pub report: EpisodeReport,
    pub simulation: Simulation,
    pub goal: Arrangement,
}

/// Runs one episode; configuration errors are reported as a failed episode.
pub fn run_episode(config: &PipelineConfig, seed: u64) -> EpisodeReport {
    match run_episode_traced(config, seed) {
        Ok(t) => t.report,
        Err(e) => EpisodeReport {
            variant: config.variant,
            seed,
            transfers_succeeded: 0,
            transfers_attempted: 0,
            pick_attempts: 0,
            topple_count: 0,
            drop_back_count: 0,
            correction_count: 0,
            correction_timed_out: false,
            final_defects: 0,
            unoccupied_fraction: 1.0,
            goal_satisfied: false,
            failure_reason: Some(e.to_string()),
            action_count: 0,
            wall_time: 0.0,
        },
    }
}

pub fn run_episode_traced(config: &PipelineConfig, seed: u64) -> Result<EpisodeTrace, PipelineError> {
    let start = Instant::now();
    config.validate()?;
    let model = config.model()?;
    let goal = goal_arrangement(&config.layout.goal, &model, &config.grid, config.epsilon)?;
    let world = generate_pile(
        pile_seed(seed),
        goal.targets.len(),
        &model,
        &config.layout,
        config.pile_faces.as_deref(),
    )?;
    let mut ep = Episode {
        cfg: config,
        flags: config.variant.flags(),
        model,
        goal,
        sim: Simulation::new(world),
        rng: ChaCha8Rng::seed_from_u64(noise_seed(seed)),
        source_cam: config.camera.over(&config.layout.source, config.noise.depth_sigma),
        goal_cam: config.camera.over(&config.layout.goal, config.noise.depth_sigma),
        failures: BTreeMap::new(),
        report: EpisodeReport {
            variant: config.variant,
            seed,
            transfers_succeeded: 0,
            transfers_attempted: 0,
            pick_attempts: 0,
            topple_count: 0,
            drop_back_count: 0,
            correction_count: 0,
            correction_timed_out: false,
            final_defects: 0,
            unoccupied_fraction: 1.0,
            goal_satisfied: false,
            failure_reason: None,
            action_count: 0,
            wall_time: 0.0,
        },
    };
    ep.run()?;
    ep.report.wall_time = start.elapsed().as_secs_f64();
    Ok(EpisodeTrace {
        report: ep.report,
        simulation: ep.sim,
        goal: ep.goal,
    })
}

struct Episode<'a> {
    cfg: &'a PipelineConfig,
    flags: VariantFlags,
    model: CuboidModel,
    goal: Arrangement,
    sim: Simulation,
    rng: ChaCha8Rng,
    source_cam: CameraModel,
    goal_cam: CameraModel,
    /// Failed picks per object since the last successful pick.
    failures: BTreeMap<usize, usize>,
    report: EpisodeReport,
}

/// What the robot decided to pick and what it believes about it.
struct Choice {
    candidate: PickCandidate,
    estimate: Option<PoseEstimate>,
}

impl Episode<'_> {
    fn seed(&mut self) -> u64 {
        self.rng.random()
    }

    fn observe(&mut self, bin: BinId) -> PointCloud {
        let seed = self.seed();
        self.sim.sense(bin, seed);
        let cam = match bin {
            BinId::Source => &self.source_cam,
            BinId::Goal => &self.goal_cam,
        };
        render_point_cloud(&self.sim.world, cam, seed)
    }

    fn fail(&mut self, reason: &str) {
        self.report.failure_reason = Some(reason.to_string());
    }

    fn run(&mut self) -> Result<(), PipelineError> {
        let n = self.goal.targets.len();
        let budget = self.cfg.max_actions_per_object * n;
        let mut next = 0;
        let mut empty = 0;
        while next < n {
            if self.sim.log.len() >= budget {
                self.fail("action budget exhausted");
                break;
            }
            let cloud = self.observe(BinId::Source);
            let seg_seed = self.seed();
            let segments = order_candidates(segment_instances(&cloud, &self.cfg.noise.segmentation, seg_seed));
            if segments.is_empty() {
                self.fail("no objects detected");
                break;
            }
            let Some(choice) = self.choose(&segments, &cloud) else {
                empty += 1;
                if empty >= MAX_EMPTY_OBSERVATIONS {
                    self.fail("no feasible pick");
                    break;
                }
                continue;
            };
            empty = 0;
            self.report.pick_attempts += 1;
            let point = choice.candidate.pick_point;
            let picked = self
                .sim
                .world
                .first_hit_from_above(&point.xy())
                .filter(|id| self.sim.act(WorldAction::Pick { object: *id, point }).is_ok());
            let Some(id) = picked else {
                if let Some(o) = choice.candidate.object_segment.estimated_object {
                    *self.failures.entry(o).or_default() += 1;
                }
                continue;
            };
            self.failures.clear();

            let in_hand = if self.flags.pose_estimation {
                let truth = self.sim.world.objects[id].pose;
                let seed = self.seed();
                Some(estimate_pose(
                    &choice.candidate.object_segment,
                    &self.model,
                    &truth,
                    &self.cfg.noise.pose,
                    seed,
                ))
            } else {
                None
            };
            if let Some(est) = &in_hand {
                if !self.model.is_placement_face(est.face_up()) {
                    if self.flags.toppling {
                        self.topple(id, est)?;
                    } else {
                        self.throw()?;
                    }
                    continue;
                }
            }
            self.transfer(id, next, in_hand.as_ref().or(choice.estimate.as_ref()))?;
            self.report.transfers_attempted += 1;
            next += 1;
        }

        if self.flags.correction && self.report.transfers_attempted > 0 {
            let seed = self.seed();
            let out = correction_loop(
                &mut self.sim,
                &self.goal_cam,
                &self.goal,
                &self.model,
                &self.cfg.correction,
                self.cfg.correction_timeout,
                seed,
            );
            self.report.correction_count = out.actions;
            self.report.correction_timed_out = out.timed_out;
        }

        // validation scan
        let cloud = self.observe(BinId::Goal);
        let placed = points_in_bin(&cloud, &self.cfg.layout.goal, self.half_thin(), 0.001);
        self.report.final_defects = correction_scan(&placed, &self.goal, &self.model, &self.cfg.correction).len();
        self.finish_metrics()
    }

    fn half_thin(&self) -> f64 {
        0.5 * self.model.dims()[self.model.thinnest_axis()]
    }

    /// Next pick: segments in confidence order, preferring ones estimated to
    /// lie on a placement face.
    fn choose(&mut self, segments: &[Segment], cloud: &PointCloud) -> Option<Choice> {
        let mut fallback = None;
        for seg in segments {
            let Some(obj) = seg.estimated_object else {
                continue;
            };
            if self.failures.get(&obj).copied().unwrap_or(0) >= MAX_PICK_FAILURES {
                continue;
            }
            if !self.flags.pose_estimation {
                return Some(Choice {
                    candidate: centroid_pick(seg, cloud)?,
                    estimate: None,
                });
            }
            let truth = self.sim.world.objects[obj].pose;
            let seed = self.seed();
            let est = estimate_pose(seg, &self.model, &truth, &self.cfg.noise.pose, seed);
            let Some(candidate) = select_pick_point(seg, &est, &self.model, self.cfg.cup_radius, cloud) else {
                continue;
            };
            let choice = Choice {
                candidate,
                estimate: Some(est),
            };
            if self.model.is_placement_face(est.face_up()) {
                return Some(choice);
            }
            if self.flags.toppling && fallback.is_none() {
                fallback = Some(choice);
            }
        }
        fallback
    }

    fn throw(&mut self) -> Result<(), PipelineError> {
        self.sim.act(WorldAction::Throw)?;
        self.report.drop_back_count += 1;
        Ok(())
    }

    /// Rolls the held object onto a placement face in the source bin, or
    /// throws it back when no spot is found.
    fn topple(&mut self, id: usize, est: &PoseEstimate) -> Result<(), PipelineError> {
        let from = est.face_up();
        let mut desired: Vec<Face> = Face::ALL
            .into_iter()
            .filter(|f| f.is_adjacent(from) && self.model.is_placement_face(*f))
            .collect();
        desired.sort_by_key(|f| *f != Face::PosZ);
        let cloud = self.observe(BinId::Source);
        let floor = points_in_bin(&cloud, &self.cfg.layout.source, -0.005, 0.001);
        let dims = self.model.dims();
        let ee_pick = self.sim.world.held.ok_or(crate::world::WorldError::NotHolding)?.ee_at_pick;
        for face in desired {
            let Ok(plan) = plan_topple(&floor, &est.pose, &dims, face, &self.cfg.layout.source, &self.cfg.topple)
            else {
                continue;
            };
            // shift the hand by the planned object motion; the true object
            // follows with whatever offset the estimate missed
            let ee = Pose::new(
                ee_pick.position + (plan.place_pose.position - est.pose.position),
                ee_pick.orientation,
            );
            let place = self.sim.world.held_pose_at(&ee)?.position.xy();
            let action = WorldAction::Topple {
                object: id,
                place,
                lateral: plan.lateral_direction,
            };
            if self.sim.act(action).is_ok() {
                self.report.topple_count += 1;
                return Ok(());
            }
        }
        self.throw()
    }

    /// Carries the held object to target `k` and lets go, by push-to-place or
    /// by dropping.
    fn transfer(&mut self, id: usize, k: usize, est: Option<&PoseEstimate>) -> Result<(), PipelineError> {
        let target = self.goal.targets[k];
        let dims = self.model.dims();
        let ee_pick = self.sim.world.held.ok_or(crate::world::WorldError::NotHolding)?.ee_at_pick;
        let target_bottom = StablePose::snap(&target, &dims).support_height;

        let mut desired = target;
        let mut pushed = false;
        if self.flags.push_to_place {
            let cloud = self.observe(BinId::Goal);
            let above = target_bottom - self.cfg.layout.goal.floor_z() + self.half_thin();
            let obstacles = points_in_bin(&cloud, &self.cfg.layout.goal, above, 0.001);
            if let Ok(plan) = adaptive_push_plan(
                &obstacles.points,
                &self.model,
                &target,
                &self.cfg.push,
                Some(&self.cfg.layout.goal),
            ) {
                desired = plan.pre_push_pose;
                pushed = true;
            }
        }

        let ee = match est {
            Some(est) if self.flags.pose_estimation => {
                let r = yaw_rotation(alignment_yaw(&est.pose, &desired, &dims));
                let offset = est.pose.position - ee_pick.position;
                Pose::new(desired.position - r * offset, r * ee_pick.orientation)
            }
            // no estimate: put the grasp point over the target center
            _ => Pose::new(
                desired.position + Vector3::new(0.0, 0.0, 0.5 * dims[self.model.thinnest_axis()]),
                ee_pick.orientation,
            ),
        };
        let held = self.sim.world.held_pose_at(&ee)?;
        // lower until the object meets the support under the target
        let stable = StablePose {
            support_height: target_bottom,
            ..StablePose::snap(&held, &dims)
        };
        let pose = stable.to_pose(&dims);
        let height = if pushed { 0.0 } else { self.cfg.drop_height };
        self.sim.act(WorldAction::Release { pose, height })?;

        if pushed {
            let d = target.position.xy() - desired.position.xy();
            if d.norm() > 1e-9 {
                // a blocked push leaves the object where it is
                let _ = self.sim.push(id, d.normalize(), d.norm());
            }
        }
        Ok(())
    }

    fn finish_metrics(&mut self) -> Result<(), PipelineError> {
        let world = &self.sim.world;
        let placed = world.transferred_poses();
        self.report.transfers_succeeded = world
            .objects
            .iter()
            .filter(|o| o.status == ObjectStatus::Transferred)
            .count();
        self.report.goal_satisfied = satisfies_goal(&self.goal, &self.model, &placed);
        let volume = target_volume(&self.cfg.layout.goal, &self.model, &self.cfg.grid);
        let occupiers: Vec<(&CuboidModel, Pose)> = placed.iter().map(|p| (&self.model, *p)).collect();
        self.report.unoccupied_fraction =
            voxel_unoccupied_fraction(&volume, &occupiers, self.cfg.voxel_resolution)?;
        self.report.action_count = self.sim.log.len();
        Ok(())
    }
}

/// Pick at the segment point nearest its centroid, straight down.
fn centroid_pick(seg: &Segment, cloud: &PointCloud) -> Option<PickCandidate> {
    let c = seg.centroid_xy(cloud);
    let i = *seg
        .point_indices
        .iter()
        .min_by(|a, b| (cloud.points[**a].xy() - c).norm().total_cmp(&(cloud.points[**b].xy() - c).norm()))?;
    let p = cloud.points[i];
    let face = Face::PosZ;
    Some(PickCandidate {
        object_segment: seg.clone(),
        pick_point: p,
        surface_normal: cloud.normals[i],
        planar_patch_radius: 0.0,
        score: (p.xy() - c).norm(),
        face,
    })
}
