use nalgebra::{UnitQuaternion, Vector2, Vector3};
use proptest::prelude::*;

use packsim::geom::{
    expand_model, pose_distance_symmetric, voxel_unoccupied_fraction, Aabb, CuboidModel, Face, Pose,
};
use packsim::harness::{read_csv, write_csv};
use packsim::perception::{estimate_pose, segment_instances, select_pick_point, PoseNoiseConfig, SegNoiseConfig};
use packsim::pipeline::{run_episode, EpisodeReport, NoiseConfig, PipelineConfig, Variant};
use packsim::primitives::{adaptive_push_plan, collision_points, plan_topple, PushParams, ToppleParams};
use packsim::world::{
    generate_pile, render_point_cloud, BinId, ObjectStatus, StablePose, WorldAction, WorldState,
};

fn soap() -> CuboidModel {
    CuboidModel::new(Vector3::new(0.09, 0.06, 0.03)).unwrap()
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-0.5f64..0.5),
        prop::array::uniform3(-3.2f64..3.2),
    )
        .prop_map(|(t, r)| {
            Pose::new(
                Vector3::from(t),
                UnitQuaternion::from_euler_angles(r[0], r[1], r[2]),
            )
        })
}

fn arb_model() -> impl Strategy<Value = CuboidModel> {
    prop_oneof![
        Just(Vector3::new(0.09, 0.06, 0.03)),
        Just(Vector3::new(0.05, 0.05, 0.02)),
        Just(Vector3::new(0.04, 0.04, 0.04)),
        prop::array::uniform3(0.01f64..0.2).prop_map(Vector3::from),
    ]
    .prop_map(|d| CuboidModel::new(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_pseudo_metric(m in arb_model(), p in arb_pose(), q in arb_pose()) {
        prop_assert!(pose_distance_symmetric(&m, &p, &p).abs() < 1e-12);
        let a = pose_distance_symmetric(&m, &p, &q);
        let b = pose_distance_symmetric(&m, &q, &p);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn symmetric_poses_are_at_distance_zero(m in arb_model(), p in arb_pose()) {
        for s in m.symmetry_group() {
            let q = Pose::new(p.position, p.orientation * s);
            prop_assert!(pose_distance_symmetric(&m, &p, &q) < 1e-9);
        }
    }

    #[test]
    fn expansion_is_additive(m in arb_model(), a in 0.0f64..0.05, b in 0.0f64..0.05) {
        let twice = expand_model(&expand_model(&m, a).unwrap(), b).unwrap();
        let once = expand_model(&m, a + b).unwrap();
        prop_assert!((twice.dims() - once.dims()).amax() < 1e-12);
    }

    #[test]
    fn unoccupied_fraction_never_grows_with_occupiers(
        centers in prop::collection::vec((-0.06f64..0.06, -0.06f64..0.06, 0.0f64..0.03, -1.6f64..1.6), 1..6),
    ) {
        let m = soap();
        let target = Aabb::new(Vector3::new(-0.1, -0.1, 0.0), Vector3::new(0.1, 0.1, 0.03));
        let poses: Vec<Pose> = centers
            .iter()
            .map(|(x, y, z, yaw)| Pose::new(Vector3::new(*x, *y, *z), UnitQuaternion::from_euler_angles(0.0, 0.0, *yaw)))
            .collect();
        let mut last = 1.0;
        for k in 0..=poses.len() {
            let occ: Vec<(&CuboidModel, Pose)> = poses[..k].iter().map(|p| (&m, *p)).collect();
            let f = voxel_unoccupied_fraction(&target, &occ, 0.005).unwrap();
            prop_assert!(f <= last);
            last = f;
        }
    }
}

/// Random world action drawn against the current state so that many of
/// them are accepted.
fn random_action(w: &WorldState, r: &[f64; 5]) -> WorldAction {
    let src = w.source();
    let goal = w.goal();
    let lerp = |lo: f64, hi: f64, t: f64| lo + (hi - lo) * t;
    match (r[0] * 5.0) as usize {
        0 | 1 if w.held_id().is_none() => {
            let xy = Vector2::new(
                lerp(src.interior_min().x, src.interior_max().x, r[1]),
                lerp(src.interior_min().y, src.interior_max().y, r[2]),
            );
            match w.first_hit_from_above(&xy) {
                Some(id) => {
                    let p = w.objects[id].pose;
                    let top = packsim::world::top_z(&p, &w.object_dims);
                    WorldAction::Pick {
                        object: id,
                        point: Vector3::new(p.position.x, p.position.y, top),
                    }
                }
                None => WorldAction::Throw,
            }
        }
        0 | 1 | 2 if w.held_id().is_some() => {
            if r[3] < 0.5 {
                let xy = Vector2::new(
                    lerp(goal.interior_min().x + 0.05, goal.interior_max().x - 0.05, r[1]),
                    lerp(goal.interior_min().y + 0.05, goal.interior_max().y - 0.05, r[2]),
                );
                let s = StablePose {
                    face_up: Face::PosZ,
                    yaw: r[4] * 3.0,
                    planar_position: xy,
                    support_height: goal.floor_z(),
                };
                WorldAction::Release {
                    pose: s.to_pose(&w.object_dims),
                    height: 0.05 * r[4],
                }
            } else {
                let id = w.held_id().unwrap();
                let at = w.objects[id].pose.position.xy();
                let a = r[2] * std::f64::consts::TAU;
                WorldAction::Topple {
                    object: id,
                    place: at,
                    lateral: Vector2::new(a.cos(), a.sin()),
                }
            }
        }
        3 => {
            let id = ((r[1] * w.objects.len() as f64) as usize).min(w.objects.len() - 1);
            let a = r[2] * std::f64::consts::TAU;
            WorldAction::Push {
                object: id,
                direction: Vector2::new(a.cos(), a.sin()),
                distance: 0.04 * r[3],
            }
        }
        _ => WorldAction::Throw,
    }
}

fn check_world(w: &WorldState, n: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(w.objects.len(), n);
    let margin = 0.1;
    for o in &w.objects {
        if o.status == ObjectStatus::Held {
            prop_assert_eq!(w.held_id(), Some(o.id));
            continue;
        }
        let inside = [BinId::Source, BinId::Goal].iter().any(|b| {
            let bin = w.bin(*b);
            let p = o.pose.position;
            bin.contains_xy(&p.xy(), margin) && p.z >= bin.floor_z() - 1e-9 && p.z <= bin.floor_z() + 0.5
        });
        prop_assert!(inside, "object {} left both bins: {:?}", o.id, o.pose.position);
        let s = StablePose::from_pose(&o.pose, &w.object_dims, 1e-9);
        prop_assert!(s.is_some(), "object {} is not resting on a face", o.id);
        let back = s.unwrap().to_pose(&w.object_dims);
        prop_assert!((back.position - o.pose.position).norm() < 1e-9);
        prop_assert!(back.orientation.angle_to(&o.pose.orientation) < 1e-9);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn world_actions_conserve_objects_and_stay_stable(
        seed in 0u64..1000,
        draws in prop::collection::vec(prop::array::uniform5(0.0f64..1.0), 1..40),
    ) {
        let cfg = PipelineConfig::default();
        let model = soap();
        let n = 9;
        let mut w = generate_pile(seed, n, &model, &cfg.layout, None).unwrap();
        let mut replayed = w.clone();
        check_world(&w, n)?;
        let mut log = Vec::new();
        for r in &draws {
            let a = random_action(&w, r);
            let before = w.clone();
            if w.apply(&a).is_err() {
                prop_assert_eq!(&w, &before, "rejected action changed the world");
            }
            log.push(a);
            check_world(&w, n)?;
        }
        for a in &log {
            let _ = replayed.apply(a);
        }
        prop_assert_eq!(replayed.snapshot(), w.snapshot());
    }

    #[test]
    fn zero_push_is_identity(seed in 0u64..1000, id in 0usize..9, angle in 0.0f64..6.3) {
        let cfg = PipelineConfig::default();
        let mut w = generate_pile(seed, 9, &soap(), &cfg.layout, None).unwrap();
        let before = w.clone();
        let _ = w.apply_push(id, &Vector2::new(angle.cos(), angle.sin()), 0.0);
        prop_assert_eq!(w, before);
    }

    #[test]
    fn perception_is_deterministic_per_seed(seed in 0u64..1000, sense in any::<u64>()) {
        let cfg = PipelineConfig::default();
        let model = soap();
        let w = generate_pile(seed, 9, &model, &cfg.layout, None).unwrap();
        let cam = cfg.camera.over(&cfg.layout.source, cfg.noise.depth_sigma);
        let c1 = render_point_cloud(&w, &cam, sense);
        let c2 = render_point_cloud(&w, &cam, sense);
        prop_assert_eq!(&c1, &c2);
        let s1 = segment_instances(&c1, &cfg.noise.segmentation, sense);
        let s2 = segment_instances(&c2, &cfg.noise.segmentation, sense);
        prop_assert_eq!(&s1, &s2);
        for s in &s1 {
            let Some(obj) = s.estimated_object else { continue };
            let truth = w.objects[obj].pose;
            let e1 = estimate_pose(s, &model, &truth, &cfg.noise.pose, sense);
            let e2 = estimate_pose(s, &model, &truth, &cfg.noise.pose, sense);
            prop_assert_eq!(&e1, &e2);
            prop_assert_eq!(
                select_pick_point(s, &e1, &model, cfg.cup_radius, &c1),
                select_pick_point(s, &e2, &model, cfg.cup_radius, &c2)
            );
        }
    }

    #[test]
    fn isolated_top_exposed_object_is_pickable(
        x in -0.08f64..0.08,
        y in -0.05f64..0.05,
        yaw in -3.1f64..3.1,
        face in prop::sample::select(Face::ALL.to_vec()),
    ) {
        let cfg = PipelineConfig::default();
        let model = soap();
        let mut w = WorldState::empty(&cfg.layout, model.dims(), 0);
        let bin = cfg.layout.source;
        let s = StablePose {
            face_up: face,
            yaw,
            planar_position: Vector2::new(bin.pose.position.x + x, bin.pose.position.y + y),
            support_height: bin.floor_z(),
        };
        w.objects.push(packsim::world::ObjectState { id: 0, pose: s.to_pose(&model.dims()), status: ObjectStatus::Resting });
        let cam = cfg.camera.over(&bin, 0.0);
        let cloud = render_point_cloud(&w, &cam, 1);
        let segs = segment_instances(&cloud, &SegNoiseConfig::default(), 1);
        prop_assert_eq!(segs.len(), 1);
        let est = estimate_pose(&segs[0], &model, &w.objects[0].pose, &PoseNoiseConfig::default(), 1);
        // the cup fits every face of the soap bar
        let pick = select_pick_point(&segs[0], &est, &model, cfg.cup_radius, &cloud);
        prop_assert!(pick.is_some());
        let pick = pick.unwrap();
        prop_assert!(w.is_pick_feasible(0, &pick.pick_point, &-Vector3::z()).unwrap());
    }

    #[test]
    fn push_plan_clears_the_cloud(
        pts in prop::collection::vec(prop::array::uniform3(-0.08f64..0.08), 0..300),
    ) {
        let model = soap();
        let target = Pose::from_translation(0.0, 0.0, 0.015);
        let points: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p[0], p[1], 0.03 + 0.5 * p[2])).collect();
        let params = PushParams::default();
        if let Ok(plan) = adaptive_push_plan(&points, &model, &target, &params, None) {
            let grown = expand_model(&model, params.eps_m).unwrap();
            prop_assert!(collision_points(&points, &grown, &plan.pre_push_pose).is_empty());
            let again = adaptive_push_plan(&points, &model, &target, &params, None).unwrap();
            prop_assert_eq!(plan, again);
        }
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((0usize..5, any::<u64>(), 0usize..20, 0.0f64..1.0, any::<bool>(), 0usize..3), 1..8),
    ) {
        let reports: Vec<EpisodeReport> = rows
            .iter()
            .map(|(v, seed, n, u, ok, fail)| EpisodeReport {
                variant: Variant::ALL[*v],
                seed: *seed,
                transfers_succeeded: *n,
                transfers_attempted: n + 1,
                pick_attempts: 2 * n,
                topple_count: n / 2,
                drop_back_count: n / 3,
                correction_count: n / 4,
                correction_timed_out: !ok,
                final_defects: *fail,
                unoccupied_fraction: *u,
                goal_satisfied: *ok,
                failure_reason: match fail {
                    0 => None,
                    1 => Some("no feasible pick".into()),
                    _ => Some("a \"quoted\", reason".into()),
                },
                action_count: 3 * n,
                wall_time: 0.0,
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(&reports, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.len(), reports.len());
        for (r, b) in reports.iter().zip(&back) {
            let shown: f64 = packsim::harness::fmt_float(r.unoccupied_fraction).parse().unwrap();
            prop_assert_eq!(b.unoccupied_fraction, shown);
            prop_assert_eq!(b.seed, r.seed);
            prop_assert_eq!(b.transfers_attempted, r.transfers_attempted);
            prop_assert_eq!(b.failure_reason.clone(), r.failure_reason.clone().unwrap_or_default());
            let mut again = Vec::new();
            write_csv(&[b.to_report()], &mut again).unwrap();
            let mut once = Vec::new();
            write_csv(std::slice::from_ref(r), &mut once).unwrap();
            prop_assert_eq!(again, once);
        }
    }
}

#[test]
fn topple_plan_reaches_every_adjacent_face() {
    let cfg = PipelineConfig::default();
    let model = soap();
    let dims = model.dims();
    let bin = cfg.layout.source;
    let params = ToppleParams::default();
    for face in Face::ALL {
        for quadrant in 0..4 {
            for desired in Face::ALL.into_iter().filter(|f| f.is_adjacent(face)) {
                let yaw = quadrant as f64 * std::f64::consts::FRAC_PI_2 + 0.2;
                let mut w = WorldState::empty(&cfg.layout, dims, 0);
                let s = StablePose {
                    face_up: face,
                    yaw,
                    planar_position: bin.pose.position.xy(),
                    support_height: bin.floor_z(),
                };
                w.objects.push(packsim::world::ObjectState { id: 0, pose: s.to_pose(&dims), status: ObjectStatus::Resting });
                let p = w.objects[0].pose;
                let top = Vector3::new(p.position.x, p.position.y, packsim::world::top_z(&p, &dims));
                w.apply_pick(0, &top).unwrap();
                let cam = cfg.camera.over(&bin, 0.0);
                let cloud = render_point_cloud(&w, &cam, 0);
                let plan = plan_topple(&cloud, &p, &dims, desired, &bin, &params)
                    .unwrap_or_else(|e| panic!("{face:?} q{quadrant} -> {desired:?}: {e}"));
                let place = plan.place_pose.position.xy();
                w.apply_topple(0, &place, &plan.lateral_direction)
                    .unwrap_or_else(|e| panic!("{face:?} q{quadrant} -> {desired:?}: {e}"));
                assert_eq!(w.stable_pose(0).unwrap().face_up, desired, "{face:?} q{quadrant}");
            }
        }
    }
}

#[test]
fn episodes_stop_within_the_action_budget() {
    let base = PipelineConfig {
        noise: NoiseConfig::reference(),
        ..PipelineConfig::default()
    };
    for v in Variant::ALL {
        for seed in [3, 11] {
            let cfg = base.with_variant(v);
            let r = run_episode(&cfg, seed);
            assert!(r.action_count <= cfg.max_actions_per_object * cfg.grid.count() + cfg.correction_timeout + 4, "{v} {seed}: {}", r.action_count);
            assert!(r.correction_count <= cfg.correction_timeout);
        }
    }
}
