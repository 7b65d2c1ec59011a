//! Independent reference implementations used to check the fast paths.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{Matrix3x4, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trackcue::geometry::{project_valid, CameraModel, SE3Pose, Vec3};
use trackcue::lifting::LiftParams;
use trackcue::raycast::{GridSpec, VoxelIndex};
use trackcue::sim::suite::{default_camera_rig, PEDESTRIAN};
use trackcue::sim::{
    BoxConfig, EgoMotion, GroundConfig, LidarModel, Motion, ObjectConfig, SceneConfig,
};
use trackcue::tracking::TrackedTrajectory;

/// `(frame, point_index, trajectory_id)` triples flagged by a linear scan
/// over every projected point of the frame.
pub fn brute_force_lift(
    moving: &[&TrackedTrajectory],
    frames: &[Vec<Vec3>],
    cam: &CameraModel,
    params: &LiftParams,
) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for tr in moving {
        for (j, (pos, vis)) in tr.positions.iter().zip(&tr.visibility).enumerate() {
            if !vis {
                continue;
            }
            let k = tr.clip_start + j;
            let mut cands: Vec<(f64, usize, f64)> = frames[k]
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    project_valid(p, cam).map(|ip| {
                        let (du, dv) = (ip.u - pos[0], ip.v - pos[1]);
                        (du * du + dv * dv, i, ip.depth)
                    })
                })
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (d2, i, depth) in cands.into_iter().take(params.top_k) {
                if d2.sqrt() < params.threshold_px(cam, depth) {
                    out.insert((k, i, tr.query_id));
                }
            }
        }
    }
    out
}

fn voxel_bounds(v: &VoxelIndex, grid: &GridSpec) -> ([f64; 3], [f64; 3]) {
    let lo: [f64; 3] = std::array::from_fn(|a| grid.origin[a] + v[a] as f64 * grid.voxel_size);
    let hi: [f64; 3] = std::array::from_fn(|a| lo[a] + grid.voxel_size);
    (lo, hi)
}

/// Parameter interval `[s0, s1]` of `o + s·d, s ∈ [0, 1]` inside the voxel.
fn clip_segment(o: &Vec3, d: &Vec3, v: &VoxelIndex, grid: &GridSpec) -> Option<(f64, f64)> {
    let (lo, hi) = voxel_bounds(v, grid);
    let (mut s0, mut s1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
        } else {
            let (t0, t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            s0 = s0.max(t0.min(t1));
            s1 = s1.min(t0.max(t1));
        }
    }
    (s0 <= s1 + 1e-9).then_some((s0, s1))
}

/// Checks a traversal against dense sampling of the segment:
/// every sampled voxel (other than the endpoint's) must be listed, and every
/// listed voxel the samples missed must hold less than one sample spacing of
/// the segment.
pub fn check_traversal(
    origin: &Vec3,
    endpoint: &Vec3,
    grid: &GridSpec,
    walked: &[VoxelIndex],
    samples: usize,
) -> Result<(), String> {
    let d = endpoint - origin;
    let end_voxel = grid.voxel_of(endpoint);
    let listed: BTreeSet<VoxelIndex> = walked.iter().copied().collect();
    if listed.len() != walked.len() {
        return Err("traversal repeats a voxel".into());
    }
    if listed.contains(&end_voxel) {
        return Err("traversal includes the endpoint voxel".into());
    }
    for w in walked.windows(2) {
        let steps: i32 = (0..3).map(|a| (w[0][a] - w[1][a]).abs()).sum();
        if steps != 1 {
            return Err(format!("non-adjacent step {:?} -> {:?}", w[0], w[1]));
        }
    }
    let mut sampled = BTreeSet::new();
    for i in 0..samples {
        let s = (i as f64 + 0.5) / samples as f64;
        let v = grid.voxel_of(&(origin + d * s));
        if v != end_voxel {
            sampled.insert(v);
        }
    }
    if let Some(v) = sampled.difference(&listed).next() {
        return Err(format!("sampled voxel {v:?} missing from traversal"));
    }
    for v in listed.difference(&sampled) {
        match clip_segment(origin, &d, v, grid) {
            None => return Err(format!("listed voxel {v:?} does not touch the segment")),
            Some((s0, s1)) if s1 - s0 > 1.0 / samples as f64 + 1e-9 => {
                return Err(format!("listed voxel {v:?} holds {:.2e} of the segment but no sample", s1 - s0))
            }
            _ => {}
        }
    }
    Ok(())
}

/// `π(K·T·G_k⁻¹·G_t·p)` with dense 4×4 matrices and a general inverse.
pub fn dense_rigid(p: &Vec3, poses: &[SE3Pose], cam: &CameraModel) -> Vec<Option<[f64; 2]>> {
    let h = |g: &SE3Pose| -> Matrix4<f64> { Matrix4::from_row_slice(&g.to_row_major()) };
    let k = Matrix3x4::new(cam.fx, 0.0, cam.cx, 0.0, 0.0, cam.fy, cam.cy, 0.0, 0.0, 0.0, 1.0, 0.0);
    let t = h(&cam.extrinsic);
    let g_t = h(&poses[0]);
    let ph = Vector4::new(p.x, p.y, p.z, 1.0);
    poses
        .iter()
        .map(|g| {
            let inv = h(g).try_inverse().expect("pose is invertible");
            let x = k * t * inv * g_t * ph;
            (x.z > cam.d_min).then(|| [x.x / x.z, x.y / x.z])
        })
        .collect()
}

/// `min_j ‖a_i − b_j‖ > tau` by exhaustive search.
pub fn brute_force_nnd(a: &[Vec3], b: &[Vec3], tau: f64) -> Vec<bool> {
    a.iter()
        .map(|p| {
            let best = b
                .iter()
                .map(|q| {
                    let d = p - q;
                    d.x * d.x + d.y * d.y + d.z * d.z
                })
                .fold(f64::INFINITY, f64::min);
            best.sqrt() > tau
        })
        .collect()
}

/// A small random scene: random ego twist, a few static boxes and moving
/// objects (some turning), uniform surface sampling.
pub fn random_scene(seed: u64) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let static_boxes = (0..3)
        .map(|_| BoxConfig {
            center: [r(5.0, 30.0), r(-10.0, 10.0), 1.0],
            size: [r(0.5, 4.0), r(0.5, 4.0), 2.0],
            yaw: r(-3.0, 3.0),
        })
        .collect();
    let objects = (0..3)
        .map(|i| ObjectConfig {
            name: format!("obj_{i}"),
            size: if i == 0 { PEDESTRIAN } else { [r(1.0, 5.0), r(1.0, 2.5), r(1.0, 3.0)] },
            motion: Motion::ConstantVelocity {
                start: [r(5.0, 30.0), r(-10.0, 10.0), r(-3.0, 3.0)],
                velocity: [r(-10.0, 10.0), r(-10.0, 10.0)],
                yaw_rate: r(-0.5, 0.5),
            },
        })
        .collect();
    SceneConfig {
        name: format!("random_{seed}"),
        frame_count: 4,
        frame_dt: 0.1,
        seed,
        ego: EgoMotion::ConstantTwist {
            start: [r(-2.0, 2.0), r(-2.0, 2.0), r(-0.3, 0.3)],
            speed: r(0.0, 15.0),
            yaw_rate: r(-0.4, 0.4),
        },
        sensor_height: 1.8,
        ground: Some(GroundConfig {
            x_min: -10.0,
            x_max: 40.0,
            y_min: -15.0,
            y_max: 15.0,
        }),
        static_boxes,
        objects,
        lidar: LidarModel::Uniform {
            density: 2.0,
            max_range: 40.0,
        },
        cameras: default_camera_rig(),
    }
}
