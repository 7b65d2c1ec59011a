use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{SE3Pose, Vec3};
use crate::metrics::{FlowField, GT_DYNAMIC_THRESHOLD};
use crate::textfmt::round_sig9;

use super::bundle::{PointFrame, SceneBundle};
use super::config::{LidarModel, SceneConfig};
use super::world::{FrameGeometry, Shape, World};

/// Relative tolerance used when deciding whether a sampled surface point is
/// the first hit from the sensor.
const VISIBILITY_EPS: f64 = 1e-6;

/// Generates a scene. Identical `(config, seed)` pairs give identical
/// bundles, down to the bytes of their serialized form.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<SceneBundle> {
    let mut config = config.clone();
    config.seed = seed;
    config.validate()?;
    let world = World::from_config(&config);
    let poses = (0..config.frame_count)
        .map(|t| ego_pose(&config, t))
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(config.frame_count);
    for (t, pose) in poses.iter().enumerate() {
        // one stream per frame keeps frames independent of each other's draws
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let geom = world.at_frame(t as f64);
        let frame = match &config.lidar {
            LidarModel::Spherical { .. } => scan_spherical(&config.lidar, &geom, pose, &mut rng),
            LidarModel::Uniform { density, max_range } => {
                scan_uniform(&world, &geom, pose, *density, *max_range, t, &mut rng)
            }
        };
        frames.push(frame);
    }

    let cameras = config.cameras.clone();
    let mut bundle = SceneBundle::assemble(config, world, frames, poses, cameras, Vec::new());
    let masks = (0..bundle.frame_count())
        .map(|t| {
            residual_motion(&bundle, t)
                .iter()
                .map(|d| d.norm() > GT_DYNAMIC_THRESHOLD)
                .collect()
        })
        .collect();
    bundle.gt_masks = masks;
    Ok(bundle)
}

pub fn ego_pose(config: &SceneConfig, t: usize) -> Result<SE3Pose> {
    let [x, y, yaw] = config.ego.planar_at(t, config.frame_dt)?;
    Ok(SE3Pose::from_yaw(yaw, Vec3::new(x, y, config.sensor_height)))
}

fn scan_spherical(
    lidar: &LidarModel,
    geom: &FrameGeometry<'_>,
    pose: &SE3Pose,
    rng: &mut ChaCha8Rng,
) -> PointFrame {
    let LidarModel::Spherical {
        beams,
        elevation_min_deg,
        elevation_max_deg,
        azimuth_min_deg,
        azimuth_max_deg,
        azimuth_steps,
        max_range,
    } = *lidar
    else {
        unreachable!("spherical scan with non-spherical model")
    };
    let az_step = (azimuth_max_deg - azimuth_min_deg) / azimuth_steps as f64;
    let phase: f64 = rng.random_range(0.0..1.0) * az_step;
    let origin = *pose.translation();
    let inv = pose.inverse();
    let mut frame = PointFrame::default();
    for b in 0..beams {
        let el = if beams == 1 {
            elevation_min_deg
        } else {
            elevation_min_deg + (elevation_max_deg - elevation_min_deg) * b as f64 / (beams - 1) as f64
        }
        .to_radians();
        for a in 0..azimuth_steps {
            let az = (azimuth_min_deg + phase + a as f64 * az_step).to_radians();
            let local = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir = pose.rotate(&local);
            if let Some(hit) = geom.cast(&origin, &dir, 1e-6, max_range) {
                let world = origin + dir * hit.t;
                frame.push(round_point(&inv.transform(&world)), hit.body);
            }
        }
    }
    frame
}

fn round_point(p: &Vec3) -> Vec3 {
    p.map(round_sig9)
}

/// Samples every surface uniformly, keeping samples in range and visible
/// from the sensor origin.
fn scan_uniform(
    world: &World,
    geom: &FrameGeometry<'_>,
    pose: &SE3Pose,
    density: f64,
    max_range: f64,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> PointFrame {
    let origin = *pose.translation();
    let inv = pose.inverse();
    let mut frame = PointFrame::default();
    for body in &world.bodies {
        let bp = body.pose_at(t as f64, world.frame_dt);
        let samples: Vec<Vec3> = match &body.shape {
            Shape::Ground(g) => {
                let x0 = g.x_min.max(origin.x - max_range);
                let x1 = g.x_max.min(origin.x + max_range);
                let y0 = g.y_min.max(origin.y - max_range);
                let y1 = g.y_max.min(origin.y + max_range);
                if x1 <= x0 || y1 <= y0 {
                    continue;
                }
                let n = ((x1 - x0) * (y1 - y0) * density).round() as usize;
                (0..n)
                    .map(|_| Vec3::new(rng.random_range(x0..x1), rng.random_range(y0..y1), 0.0))
                    .collect()
            }
            Shape::Box { half } => {
                let mut out = Vec::new();
                for axis in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                        let area = 4.0 * half[u] * half[v];
                        let n = (area * density).round() as usize;
                        for _ in 0..n {
                            let mut p = Vec3::zeros();
                            p[axis] = sign * half[axis];
                            p[u] = rng.random_range(-half[u]..half[u]);
                            p[v] = rng.random_range(-half[v]..half[v]);
                            out.push(bp.transform(&p));
                        }
                    }
                }
                out
            }
        };
        for w in samples {
            let delta = w - origin;
            let dist = delta.norm();
            if dist <= 1e-6 || dist > max_range {
                continue;
            }
            let dir = delta / dist;
            match geom.cast(&origin, &dir, 1e-6, max_range) {
                Some(hit) if hit.body == body.id && (hit.t - dist).abs() <= VISIBILITY_EPS * dist.max(1.0) => {
                    frame.push(round_point(&inv.transform(&w)), body.id);
                }
                _ => {}
            }
        }
    }
    frame
}

fn check_flow_frame(bundle: &SceneBundle, t: usize) -> Result<()> {
    if t + 1 >= bundle.frame_count() {
        return Err(Error::OutOfRange {
            what: "flow frame",
            index: t,
            len: bundle.frame_count().saturating_sub(1),
        });
    }
    Ok(())
}

/// World displacement of every point of frame `t` over one frame interval,
/// from its body's motion. Defined for every frame, including the last.
fn residual_motion(bundle: &SceneBundle, t: usize) -> Vec<Vec3> {
    let frame = &bundle.frames[t];
    let pose = &bundle.poses[t];
    let motions: Vec<(u32, SE3Pose)> = bundle
        .world()
        .bodies
        .iter()
        .map(|b| (b.id, bundle.world().body_motion(b.id, t as f64, t as f64 + 1.0)))
        .collect();
    frame
        .points
        .iter()
        .zip(&frame.body_ids)
        .map(|(p, id)| {
            let m = motions.iter().find(|(bid, _)| bid == id).map(|(_, m)| m);
            match m {
                Some(m) if *m != SE3Pose::identity() => {
                    let w = pose.transform(p);
                    m.transform(&w) - w
                }
                _ => Vec3::zeros(),
            }
        })
        .collect()
}

/// Full scene flow of frame `t`: where each point is at `t+1`, in the
/// `t+1` sensor frame, minus where it is at `t`.
pub fn gt_flow(bundle: &SceneBundle, t: usize) -> Result<FlowField> {
    check_flow_frame(bundle, t)?;
    let frame = &bundle.frames[t];
    let g_t = &bundle.poses[t];
    let g_next_inv = bundle.poses[t + 1].inverse();
    let world = bundle.world();
    Ok(frame
        .points
        .iter()
        .zip(&frame.body_ids)
        .map(|(p, id)| {
            let w = g_t.transform(p);
            let moved = world.body_motion(*id, t as f64, t as f64 + 1.0).transform(&w);
            g_next_inv.transform(&moved) - p
        })
        .collect())
}

/// Flow a point would have if it were static: `G_{t+1}⁻¹·G_t·p − p`.
pub fn ego_flow(bundle: &SceneBundle, t: usize) -> Result<FlowField> {
    check_flow_frame(bundle, t)?;
    let g_t = &bundle.poses[t];
    let g_next_inv = bundle.poses[t + 1].inverse();
    Ok(bundle.frames[t]
        .points
        .iter()
        .map(|p| g_next_inv.transform(&g_t.transform(p)) - p)
        .collect())
}

/// Object-induced flow, the body's world displacement rotated into the
/// `t+1` sensor frame.
pub fn residual_flow(bundle: &SceneBundle, t: usize) -> Result<FlowField> {
    check_flow_frame(bundle, t)?;
    let g_next_inv = bundle.poses[t + 1].inverse();
    Ok(residual_motion(bundle, t)
        .iter()
        .map(|d| g_next_inv.rotate(d))
        .collect())
}
