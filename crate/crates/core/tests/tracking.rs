mod common;

use proptest::prelude::*;

use trackcue::geometry::{CameraModel, Vec3};
use trackcue::motion::{compute_votes, rigid_trajectory, select_moving, CompensationParams, MotionVote};
use trackcue::sim::suite::{mounted_camera, CAR};
use trackcue::sim::{generate_scene, EgoMotion, Motion, ObjectConfig, SceneBundle};
use trackcue::tracking::{
    load_trajectories, noisy_oracle_track, oracle_track, save_trajectories, select_queries, split_into_clips, Clip,
    FileTracker, NoiseParams, PointTracker, Query, TrackedTrajectory,
};
use trackcue::Error;

fn forward_camera() -> CameraModel {
    mounted_camera(0.0, Vec3::zeros(), 640, 480, 400.0)
}

/// Static ego, one car at x = 15 driving sideways at `vy` m/s, seen by a
/// forward camera.
fn lateral_scene(vy: f64) -> SceneBundle {
    let mut c = common::random_scene(11);
    c.static_boxes.clear();
    c.ego = EgoMotion::ConstantTwist {
        start: [0.0, 0.0, 0.0],
        speed: 0.0,
        yaw_rate: 0.0,
    };
    c.frame_count = 6;
    c.objects = vec![ObjectConfig {
        name: "car".into(),
        size: CAR,
        motion: Motion::ConstantVelocity {
            start: [15.0, 1.0, 0.0],
            velocity: [0.0, vy],
            yaw_rate: 0.0,
        },
    }];
    c.cameras = vec![forward_camera()];
    generate_scene(&c, 11).unwrap()
}

fn car_queries(b: &SceneBundle, cam: &CameraModel) -> Vec<Query> {
    let mask: Vec<bool> = b.frames[0].body_ids.iter().map(|id| !b.is_static_body(*id)).collect();
    select_queries(&b.frames[0].points, &mask, cam, 0, 0, usize::MAX).unwrap()
}

fn clip_of(b: &SceneBundle) -> Clip {
    Clip {
        start: 0,
        len: b.frame_count(),
    }
}

#[test]
fn static_points_follow_rigid_trajectory() {
    for seed in [1, 2, 3] {
        let mut c = common::random_scene(seed);
        c.objects.clear();
        c.frame_count = 5;
        let b = generate_scene(&c, seed).unwrap();
        for (cam_id, cam) in b.cameras.iter().enumerate() {
            let clip = clip_of(&b);
            let all = vec![true; b.frames[0].len()];
            let queries = select_queries(&b.frames[0].points, &all, cam, cam_id, 0, usize::MAX).unwrap();
            assert!(!queries.is_empty());
            let tracked = oracle_track(&b, &queries, &clip, cam).unwrap();
            let mut compared = 0;
            for (q, tr) in queries.iter().zip(&tracked) {
                let p = b.frames[0].points[q.point_index];
                let dense = common::dense_rigid(&p, &b.poses, cam);
                for j in 0..clip.len {
                    if let (true, Some(d)) = (tr.visibility[j], dense[j]) {
                        let e = (tr.positions[j][0] - d[0]).hypot(tr.positions[j][1] - d[1]);
                        assert!(e < 1e-6, "seed {seed} query {} frame {j}: {e}", q.query_id);
                        compared += 1;
                    }
                }
            }
            assert!(compared > queries.len());
        }
    }
}

#[test]
fn sideways_car_drifts_monotonically() {
    let b = lateral_scene(5.0);
    let cam = forward_camera();
    let queries = car_queries(&b, &cam);
    assert!(queries.len() > 20);
    let tracked = oracle_track(&b, &queries, &clip_of(&b), &cam).unwrap();
    let params = CompensationParams::default();
    for (q, tr) in queries.iter().zip(&tracked) {
        // moving toward +y is moving left in the image
        for j in 1..tr.len() {
            if tr.visibility[j] && tr.visibility[j - 1] {
                assert!(tr.positions[j][0] < tr.positions[j - 1][0]);
            }
        }
        let rigid = rigid_trajectory(q.query_id, &b.frames[0].points[q.point_index], &b.poses, &cam);
        let vote = compute_votes(tr, &rigid, &params).unwrap();
        let r: Vec<f64> = vote
            .residuals
            .iter()
            .zip(&vote.joint_visibility)
            .filter(|(_, v)| **v)
            .map(|(r, _)| *r)
            .collect();
        assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
    }
}

#[test]
fn point_leaving_the_image_turns_invisible() {
    // 50 m/s sideways leaves the 77° field of view within a few frames
    let b = lateral_scene(50.0);
    let cam = forward_camera();
    let queries = car_queries(&b, &cam);
    let tracked = oracle_track(&b, &queries, &clip_of(&b), &cam).unwrap();
    let mut left = 0;
    for tr in &tracked {
        assert!(tr.visibility[0]);
        if let Some(k) = tr.visibility.iter().position(|v| !v) {
            assert!(tr.visibility[k..].iter().all(|v| !v), "{:?}", tr.visibility);
            left += 1;
        }
    }
    assert_eq!(left, tracked.len());
}

#[test]
fn zero_noise_is_the_oracle_and_noise_is_seeded() {
    let b = lateral_scene(5.0);
    let cam = forward_camera();
    let queries = car_queries(&b, &cam);
    let clip = clip_of(&b);
    let oracle = oracle_track(&b, &queries, &clip, &cam).unwrap();
    let silent = NoiseParams {
        sigma_px: 0.0,
        dropout_rate: 0.0,
        seed: 9,
    };
    assert_eq!(noisy_oracle_track(&b, &queries, &clip, &cam, &silent).unwrap(), oracle);

    let loud = NoiseParams {
        sigma_px: 2.0,
        dropout_rate: 0.3,
        seed: 9,
    };
    let a = noisy_oracle_track(&b, &queries, &clip, &cam, &loud).unwrap();
    assert_eq!(a, noisy_oracle_track(&b, &queries, &clip, &cam, &loud).unwrap());
    // order of queries does not change any trajectory
    let rev: Vec<Query> = queries.iter().rev().cloned().collect();
    let mut r = noisy_oracle_track(&b, &rev, &clip, &cam, &loud).unwrap();
    r.reverse();
    assert_eq!(a, r);
    for (n, o) in a.iter().zip(&oracle) {
        assert_eq!(n.positions[0], o.positions[0]);
        assert_eq!(n.visibility[0], o.visibility[0]);
        // dropout only hides frames
        assert!(n.visibility.iter().zip(&o.visibility).all(|(n, o)| !n || *o));
    }
    assert!(a.iter().any(|t| t.positions[1] != oracle[t.query_id].positions[1]));

    let bad = NoiseParams {
        sigma_px: -1.0,
        dropout_rate: 0.0,
        seed: 0,
    };
    assert!(matches!(noisy_oracle_track(&b, &queries, &clip, &cam, &bad), Err(Error::Config(_))));
}

#[test]
fn trajectory_file_round_trip_and_file_tracker() {
    let b = lateral_scene(5.0);
    let cam = forward_camera();
    let queries = car_queries(&b, &cam);
    let clip = clip_of(&b);
    let noise = NoiseParams {
        sigma_px: 1.3,
        dropout_rate: 0.2,
        seed: 4,
    };
    let tracked = noisy_oracle_track(&b, &queries, &clip, &cam, &noise).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tracks.jsonl");
    save_trajectories(&path, &tracked).unwrap();
    assert_eq!(load_trajectories(&path).unwrap(), tracked);

    let ft = FileTracker::load(&path).unwrap();
    assert_eq!(ft.track(&b, &queries, &clip, &cam).unwrap(), tracked);
    let short = Clip { start: 0, len: 3 };
    assert!(matches!(ft.track(&b, &queries, &short, &cam), Err(Error::Format(_))));
    let mut extra = queries[0].clone();
    extra.query_id = 100_000;
    assert!(matches!(ft.track(&b, &[extra], &clip, &cam), Err(Error::Format(_))));

    let broken = dir.path().join("broken.jsonl");
    let bad = TrackedTrajectory {
        visibility: vec![true],
        ..tracked[0].clone()
    };
    std::fs::write(&broken, serde_json::to_string(&bad).unwrap() + "\n").unwrap();
    assert!(matches!(load_trajectories(&broken), Err(Error::Format(_))));
    std::fs::write(&broken, "{not json\n").unwrap();
    assert!(matches!(load_trajectories(&broken), Err(Error::Format(_))));
}

#[test]
fn clip_split_shapes() {
    let c = split_into_clips(36, 6, 6).unwrap();
    assert_eq!(c.len(), 6);
    assert_eq!(c[5], Clip { start: 30, len: 6 });
    let c = split_into_clips(36, 6, 3).unwrap();
    assert_eq!(c.len(), 11);
    assert!(split_into_clips(5, 6, 6).unwrap().is_empty());
    assert!(split_into_clips(10, 1, 1).is_err());
    assert!(split_into_clips(10, 4, 0).is_err());
}

fn vote_with(votes: usize) -> MotionVote {
    MotionVote {
        query_id: 0,
        residuals: vec![],
        joint_visibility: vec![],
        votes,
    }
}

#[test]
fn group_gate_needs_n_point_movers() {
    let p = CompensationParams {
        tau_dyn: 5.0,
        n_move: 2,
        n_point: 3,
    };
    let v: Vec<MotionVote> = [0, 2, 5, 1, 2].into_iter().map(vote_with).collect();
    assert_eq!(select_moving(&v, &p), vec![1, 2, 4]);
    assert!(select_moving(&v[..3], &p).is_empty());
}

fn arb_track(len: usize) -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<bool>, Vec<bool>)> {
    let pos = || prop::collection::vec(prop::array::uniform2(-500.0..1500.0f64), len);
    let vis = || prop::collection::vec(any::<bool>(), len);
    (pos(), pos(), vis(), vis())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn votes_ignore_common_offset_and_count_joint_frames(
        (a, b, va, vb) in arb_track(8),
        off in prop::array::uniform2(-50.0..50.0f64),
        tau in 0.5..20.0f64,
    ) {
        let params = CompensationParams { tau_dyn: tau, n_move: 2, n_point: 1 };
        let tracked = |pos: &[[f64; 2]]| TrackedTrajectory {
            query_id: 0, camera_id: 0, clip_start: 0, positions: pos.to_vec(), visibility: va.clone(),
        };
        let rigid = |pos: &[[f64; 2]]| trackcue::motion::RigidTrajectory {
            query_id: 0, positions: pos.to_vec(), visibility: vb.clone(),
        };
        let shift = |p: &[[f64; 2]]| -> Vec<[f64; 2]> { p.iter().map(|x| [x[0] + off[0], x[1] + off[1]]).collect() };
        let v0 = compute_votes(&tracked(&a), &rigid(&b), &params).unwrap();
        let v1 = compute_votes(&tracked(&shift(&a)), &rigid(&shift(&b)), &params).unwrap();
        for (r0, r1) in v0.residuals.iter().zip(&v1.residuals) {
            prop_assert!((r0 - r1).abs() < 1e-9);
        }
        let joint = va.iter().zip(&vb).filter(|(x, y)| **x && **y).count();
        prop_assert!(v0.votes <= joint);
        let expect = (0..8).filter(|&j| va[j] && vb[j] && (a[j][0] - b[j][0]).hypot(a[j][1] - b[j][1]) > tau).count();
        prop_assert_eq!(v0.votes, expect);
    }
}
