mod common;

use std::fs;

use trackcue::geometry::Vec3;
use trackcue::metrics::{gt_dynamic_mask, GT_DYNAMIC_THRESHOLD};
use trackcue::sim::suite::{self, default_camera_rig, CAR};
use trackcue::sim::{
    ego_flow, generate_scene, gt_flow, residual_flow, standard_suite, suite_scene, BoxConfig, EgoMotion,
    LidarModel, Motion, ObjectConfig, SceneBundle, SceneConfig,
};
use trackcue::Error;

fn static_scene(speed: f64) -> SceneConfig {
    let mut c = common::random_scene(5);
    c.objects.clear();
    c.ego = EgoMotion::ConstantTwist {
        start: [0.0, 0.0, 0.0],
        speed,
        yaw_rate: 0.0,
    };
    c
}

fn with_box(velocity: [f64; 2], ego_speed: f64) -> SceneConfig {
    let mut c = static_scene(ego_speed);
    c.objects = vec![ObjectConfig {
        name: "box".into(),
        size: CAR,
        motion: Motion::ConstantVelocity {
            start: [15.0, 2.0, 0.3],
            velocity,
            yaw_rate: 0.0,
        },
    }];
    c
}

#[test]
fn static_world_flow_is_ego_flow() {
    for speed in [0.0, 7.0] {
        let b = generate_scene(&static_scene(speed), 1).unwrap();
        for t in 0..b.frame_count() - 1 {
            let (f, e, r) = (gt_flow(&b, t).unwrap(), ego_flow(&b, t).unwrap(), residual_flow(&b, t).unwrap());
            assert!(r.iter().all(|d| *d == Vec3::zeros()));
            for (a, b) in f.iter().zip(&e) {
                assert!((a - b).amax() < 1e-12);
            }
            if speed == 0.0 {
                assert!(e.iter().all(|d| d.amax() < 1e-12));
            }
        }
        assert!(b.gt_masks.iter().flatten().all(|m| !m));
    }
}

#[test]
fn constant_velocity_box_residual_matches_displacement() {
    // 20 m/s at 10 Hz is 2 m per frame
    let b = generate_scene(&with_box([20.0, 0.0], 0.0), 2).unwrap();
    let id = b.world().bodies.iter().find(|x| x.name == "box").unwrap().id;
    let mut seen = 0;
    for t in 0..b.frame_count() - 1 {
        let r = residual_flow(&b, t).unwrap();
        for (i, bid) in b.frames[t].body_ids.iter().enumerate() {
            if *bid == id {
                assert!((r[i].norm() - 2.0).abs() < 1e-9);
                seen += 1;
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn moving_box_under_moving_ego_residual_is_rotated_displacement() {
    let mut cfg = with_box([3.0, -4.0], 6.0);
    cfg.ego = EgoMotion::ConstantTwist {
        start: [0.0, 0.0, 0.2],
        speed: 6.0,
        yaw_rate: 0.3,
    };
    let b = generate_scene(&cfg, 3).unwrap();
    let id = b.world().bodies.iter().find(|x| x.name == "box").unwrap().id;
    let world_step = Vec3::new(3.0 * cfg.frame_dt, -4.0 * cfg.frame_dt, 0.0);
    for t in 0..b.frame_count() - 1 {
        let expect = b.poses[t + 1].rotation().transpose() * world_step;
        let r = residual_flow(&b, t).unwrap();
        for (i, bid) in b.frames[t].body_ids.iter().enumerate() {
            if *bid == id {
                assert!((r[i] - expect).amax() < 1e-9);
            }
        }
    }
}

#[test]
fn gt_mask_agrees_with_flow_threshold() {
    for cfg in standard_suite().iter().skip(1).take(3) {
        let b = generate_scene(cfg, cfg.seed).unwrap();
        for t in 0..b.frame_count() - 1 {
            let m = gt_dynamic_mask(&gt_flow(&b, t).unwrap(), &ego_flow(&b, t).unwrap(), GT_DYNAMIC_THRESHOLD).unwrap();
            assert_eq!(m, b.gt_masks[t], "{} frame {t}", cfg.name);
        }
    }
}

fn assert_points_visible(b: &SceneBundle) {
    for t in 0..b.frame_count() {
        let origin = *b.poses[t].translation();
        let geom = b.world().at_frame(t as f64);
        for (w, id) in b.world_points(t).iter().zip(&b.frames[t].body_ids) {
            let delta = w - origin;
            let dist = delta.norm();
            let hit = geom.cast(&origin, &(delta / dist), 1e-6, dist * 1.01).expect("point is on a surface");
            assert_eq!(hit.body, *id);
            assert!((hit.t - dist).abs() < 1e-6 * dist.max(1.0), "occluded point at frame {t}");
        }
    }
}

#[test]
fn every_point_is_first_hit_from_sensor() {
    assert_points_visible(&generate_scene(&suite::dense_multi(), 6).unwrap());
    assert_points_visible(&generate_scene(&common::random_scene(9), 9).unwrap());
}

#[test]
fn same_seed_same_bytes_and_round_trip() {
    let cfg = common::random_scene(42);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate_scene(&cfg, 42).unwrap().write_dir(&a).unwrap();
    generate_scene(&cfg, 42).unwrap().write_dir(&b).unwrap();
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?}");
    }
    let original = generate_scene(&cfg, 42).unwrap();
    let back = SceneBundle::read_dir(&a).unwrap();
    assert_eq!(back.frames, original.frames);
    assert_eq!(back.poses, original.poses);
    assert_eq!(back.gt_masks, original.gt_masks);
    assert_eq!(back.cameras, original.cameras);
    // the reloaded bundle reproduces the same derived flow
    assert_eq!(gt_flow(&back, 1).unwrap(), gt_flow(&original, 1).unwrap());

    let other = generate_scene(&cfg, 43).unwrap();
    assert_ne!(other.frames, original.frames);
}

#[test]
fn tampered_bundle_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    generate_scene(&common::random_scene(1), 1).unwrap().write_dir(dir.path()).unwrap();
    let f = dir.path().join("frame_0001.pts");
    let mut text = fs::read_to_string(&f).unwrap();
    text.push_str("1 2 3 0\n");
    fs::write(&f, text).unwrap();
    assert!(matches!(SceneBundle::read_dir(dir.path()), Err(Error::Format(_))));
    assert!(matches!(SceneBundle::read_dir(&dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn invalid_configs_and_frames() {
    let mut c = common::random_scene(1);
    c.static_boxes.push(BoxConfig {
        center: [5.0, 0.0, 1.0],
        size: [0.0, 1.0, 1.0],
        yaw: 0.0,
    });
    assert!(matches!(generate_scene(&c, 1), Err(Error::Degenerate(_))));
    let mut c = common::random_scene(1);
    c.frame_count = 1;
    assert!(generate_scene(&c, 1).is_err());
    let b = generate_scene(&common::random_scene(1), 1).unwrap();
    let last = b.frame_count() - 1;
    assert!(matches!(gt_flow(&b, last), Err(Error::OutOfRange { .. })));
    assert!(ego_flow(&b, last + 5).is_err());
}

#[test]
fn standard_suite_shape() {
    let names: Vec<String> = standard_suite().into_iter().map(|c| c.name).collect();
    assert_eq!(
        names,
        ["all_static", "fast_car", "crossing_pedestrians", "large_truck", "stopped_vehicle", "dense_multi"]
    );
    assert!(suite_scene("nope").is_none());
    for c in standard_suite() {
        assert!(matches!(c.lidar, LidarModel::Spherical { .. }));
        assert_eq!(c.cameras, default_camera_rig());
    }
}

/// Ground-truth dynamic ratios of the frozen suite. A change here means the
/// benchmark itself changed.
#[test]
fn frozen_suite_ground_truth() {
    let expected = [
        ("all_static", 0.0, 1942),
        ("fast_car", 0.036754, 1949),
        ("crossing_pedestrians", 0.008045, 1949),
        ("large_truck", 0.192190, 1974),
        ("stopped_vehicle", 0.002488, 1946),
        ("dense_multi", 0.042105, 1955),
    ];
    for (name, ratio, max_pts) in expected {
        let c = suite_scene(name).unwrap();
        let b = generate_scene(&c, c.seed).unwrap();
        let got = b.gt_dynamic_ratio();
        assert!((got - ratio).abs() < 1e-6, "{name}: ratio {got:.5}");
        assert_eq!(b.frame_sizes().into_iter().max().unwrap(), max_pts, "{name}");
    }
}
