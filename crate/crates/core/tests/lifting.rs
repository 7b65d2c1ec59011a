mod common;

use proptest::prelude::*;

use trackcue::geometry::{project_valid, Vec3};
use trackcue::lifting::{
    build_frame_index, cue_flags, lift_cues, refine_labels, CueHit, InitRule, LiftMode, LiftParams,
};
use trackcue::labels::Provenance;
use trackcue::pipeline::{run_pipeline, PipelineConfig};
use trackcue::sim::suite::{default_camera_rig, large_truck};
use trackcue::sim::generate_scene;
use trackcue::tracking::TrackedTrajectory;

/// LiDAR-frame points spread in front of the left camera of the default rig.
fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((2.0..30.0f64, -1.0..1.0f64, -1.5..1.5f64), 1..150).prop_map(|v| {
        let (s, c) = 40f64.to_radians().sin_cos();
        v.into_iter()
            .map(|(r, lat, z)| Vec3::new(r * c - lat * r * s, r * s + lat * r * c, z))
            .collect()
    })
}

fn tracks(frames: usize) -> impl Strategy<Value = Vec<TrackedTrajectory>> {
    prop::collection::vec(
        prop::collection::vec((0.0..640.0f64, 0.0..480.0f64, prop::bool::weighted(0.8)), frames),
        1..12,
    )
    .prop_map(move |ts| {
        ts.into_iter()
            .enumerate()
            .map(|(i, fr)| TrackedTrajectory {
                query_id: i,
                camera_id: 0,
                clip_start: 0,
                positions: fr.iter().map(|(u, v, _)| [*u, *v]).collect(),
                visibility: fr.iter().map(|(_, _, vis)| *vis).collect(),
            })
            .collect()
    })
}

fn params() -> impl Strategy<Value = LiftParams> {
    (prop::bool::ANY, 0.5..40.0f64, 0.05..2.0f64, 1usize..8).prop_map(|(pixel, px, m, k)| LiftParams {
        mode: if pixel { LiftMode::Pixel } else { LiftMode::Metric },
        tau_lift_px: px,
        tau_lift_m: m,
        top_k: k,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn indexed_lifting_matches_linear_scan(
        frames in prop::collection::vec(cloud(), 3),
        trs in tracks(3),
        p in params(),
    ) {
        let cam = &default_camera_rig()[0];
        let indices: Vec<_> = frames.iter().enumerate().map(|(t, pts)| build_frame_index(t, 0, pts, cam)).collect();
        let refs: Vec<&TrackedTrajectory> = trs.iter().collect();
        let hits = lift_cues(&refs, &indices, cam, &p).unwrap();
        let got: std::collections::BTreeSet<_> = hits.iter().map(|h| (h.frame, h.point_index, h.trajectory_id)).collect();
        prop_assert_eq!(got.len(), hits.len());
        prop_assert_eq!(got, common::brute_force_lift(&refs, &frames, cam, &p));
        prop_assert!(hits.windows(2).all(|w| (w[0].frame, w[0].point_index) <= (w[1].frame, w[1].point_index)));
    }
}

fn hit(frame: usize, point_index: usize) -> CueHit {
    CueHit {
        point_index,
        frame,
        trajectory_id: 0,
        distance_px: 0.0,
        camera_id: 0,
        clip_start: 0,
    }
}

#[test]
fn refine_rules() {
    let raycast = vec![vec![true, false, true], vec![true, true, false], vec![false, true, false]];
    let cues = cue_flags(&[3, 3, 3], &[hit(0, 1), hit(1, 2), hit(2, 0)]).unwrap();
    let covered = [true, true, false];

    let fresh = refine_labels(&raycast, &cues, &covered, InitRule::Fresh).unwrap();
    assert_eq!(fresh.masks(), vec![vec![false, true, false], vec![false, false, true], raycast[2].clone()]);
    assert_eq!(fresh.frames[0].provenance[1], Provenance::Lifted);
    assert_eq!(fresh.frames[0].provenance[0], Provenance::Raycast);
    assert!(fresh.frames[2].provenance.iter().all(|p| *p == Provenance::Raycast));

    let union = refine_labels(&raycast, &cues, &covered, InitRule::Union).unwrap();
    assert_eq!(union.masks(), vec![vec![true, true, true], vec![true, true, true], raycast[2].clone()]);

    assert!(cue_flags(&[3], &[hit(0, 3)]).is_err());
    assert!(cue_flags(&[3], &[hit(1, 0)]).is_err());
    assert!(refine_labels(&raycast, &cues[..2], &covered, InitRule::Fresh).is_err());
}

fn truck_recovery(top_k: usize) -> (usize, usize, f64, f64) {
    let c = large_truck();
    let b = generate_scene(&c, c.seed).unwrap();
    let mut config = PipelineConfig::default();
    config.lift.top_k = top_k;
    let run = run_pipeline(&b, &config).unwrap();
    let raycast = run.raycast.masks();
    let refined = run.trackcue.labels.masks();
    let mut recovered = 0;
    let mut missed = 0;
    for t in 0..b.frame_count() {
        for i in 0..b.gt_masks[t].len() {
            let seen = b.cameras.iter().any(|cam| project_valid(&b.frames[t].points[i], cam).is_some());
            if seen && b.gt_masks[t][i] && !raycast[t][i] {
                missed += 1;
                if refined[t][i] {
                    recovered += 1;
                }
            }
        }
    }
    let precision = |stage: &str| run.report.stage(stage).unwrap().metrics.as_ref().unwrap().precision;
    (recovered, missed, precision("raycast"), precision("trackcue"))
}

/// The truck's broad side sits in the same voxels frame after frame, so the
/// raycast labeller misses much of it; pixels near the moving flank tracks
/// pick those points up. More neighbors per track reach further in.
#[test]
fn truck_interior_is_recovered() {
    let (rec4, missed, rc_p, tc_p) = truck_recovery(4);
    assert!(missed > 1000, "raycast misses {missed} visible truck points");
    assert!(rec4 * 20 > missed, "recovered {rec4} of {missed}");
    assert!(tc_p > 0.9 && tc_p > rc_p, "precision {rc_p:.3} -> {tc_p:.3}");
    let (rec16, _, _, _) = truck_recovery(16);
    assert!(rec16 > 2 * rec4, "top_k 16 recovers {rec16}, top_k 4 {rec4}");
}
