//! Tracking queries, clips, and point trackers.
//!
//! Trackers are interchangeable behind [`PointTracker`]: the simulator-backed
//! oracle, the oracle with injected pixel noise and visibility dropout, and
//! trajectories computed elsewhere and loaded from a JSON-lines file.
//! Pixel coordinates are always in the camera's native resolution.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_valid, CameraModel, ImagePoint, Vec3};
use crate::sim::SceneBundle;

pub const DEFAULT_MAX_QUERIES: usize = 2048;

/// A window of consecutive frames `start .. start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clip {
    pub start: usize,
    pub len: usize,
}

impl Clip {
    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.frames().contains(&frame)
    }
}

/// Clips of `clip_length` frames every `stride` frames. A trailing partial
/// clip is dropped.
pub fn split_into_clips(frame_count: usize, clip_length: usize, stride: usize) -> Result<Vec<Clip>> {
    if clip_length < 2 {
        return Err(Error::Config(format!("clip length {clip_length} must be at least 2")));
    }
    if stride == 0 {
        return Err(Error::Config("clip stride must be positive".into()));
    }
    let mut clips = Vec::new();
    let mut start = 0;
    while start + clip_length <= frame_count {
        clips.push(Clip {
            start,
            len: clip_length,
        });
        start += stride;
    }
    Ok(clips)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: usize,
    pub point_index: usize,
    pub pixel: ImagePoint,
    pub camera_id: usize,
    pub clip_start: usize,
}

/// Projects every dynamic point, keeps the ones inside the image, and caps
/// the count at `max_queries` by striding over point-index order.
pub fn select_queries(
    points: &[Vec3],
    mask: &[bool],
    cam: &CameraModel,
    camera_id: usize,
    clip_start: usize,
    max_queries: usize,
) -> Result<Vec<Query>> {
    if points.len() != mask.len() {
        return Err(Error::LengthMismatch {
            what: "points vs raycast mask",
            left: points.len(),
            right: mask.len(),
        });
    }
    let valid: Vec<(usize, ImagePoint)> = points
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, m))| **m)
        .filter_map(|(i, (p, _))| project_valid(p, cam).map(|ip| (i, ip)))
        .collect();
    let n = valid.len();
    let picked: Vec<(usize, ImagePoint)> = if n > max_queries {
        (0..max_queries).map(|i| valid[i * n / max_queries]).collect()
    } else {
        valid
    };
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(query_id, (point_index, pixel))| Query {
            query_id,
            point_index,
            pixel,
            camera_id,
            clip_start,
        })
        .collect())
}

/// One tracked query over a clip: `positions[j]` is frame `clip_start + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedTrajectory {
    pub query_id: usize,
    pub camera_id: usize,
    pub clip_start: usize,
    pub positions: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
}

impl TrackedTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.visibility.len() {
            return Err(Error::Format(format!(
                "trajectory {} (camera {}, clip {}): {} positions but {} visibility flags",
                self.query_id,
                self.camera_id,
                self.clip_start,
                self.positions.len(),
                self.visibility.len()
            )));
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("trajectory {}: non-finite position", self.query_id)));
        }
        Ok(())
    }
}

/// Exact reprojection of each query's point carried by its true body
/// motion, with visibility from the image constraints and the simulator's
/// occlusion test.
pub fn oracle_track(
    scene: &SceneBundle,
    queries: &[Query],
    clip: &Clip,
    cam: &CameraModel,
) -> Result<Vec<TrackedTrajectory>> {
    queries.iter().map(|q| oracle_one(scene, q, clip, cam)).collect()
}

fn oracle_one(scene: &SceneBundle, q: &Query, clip: &Clip, cam: &CameraModel) -> Result<TrackedTrajectory> {
    if q.clip_start != clip.start {
        return Err(Error::Invariant(format!(
            "query {} belongs to clip {} not {}",
            q.query_id, q.clip_start, clip.start
        )));
    }
    let mut positions = Vec::with_capacity(clip.len);
    let mut visibility = Vec::with_capacity(clip.len);
    let mut last = [q.pixel.u, q.pixel.v];
    for k in clip.frames() {
        let (ip, mut vis) = scene.oracle_observation(clip.start, q.point_index, k, cam)?;
        let mut pos = match ip {
            Some(ip) if ip.u.is_finite() && ip.v.is_finite() => [ip.u, ip.v],
            // behind the camera plane: hold the last position, invisible
            _ => {
                vis = false;
                last
            }
        };
        if k == clip.start {
            pos = [q.pixel.u, q.pixel.v];
        }
        last = pos;
        positions.push(pos);
        visibility.push(vis);
    }
    Ok(TrackedTrajectory {
        query_id: q.query_id,
        camera_id: q.camera_id,
        clip_start: q.clip_start,
        positions,
        visibility,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma_px: f64,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px.is_finite() && self.sigma_px >= 0.0) {
            return Err(Error::Config(format!("tracker noise sigma {} must be >= 0", self.sigma_px)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0,1)", self.dropout_rate)));
        }
        Ok(())
    }
}

fn trajectory_seed(seed: u64, clip_start: usize, camera_id: usize, query_id: usize) -> u64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for x in [clip_start as u64, camera_id as u64, query_id as u64] {
        h = (h ^ x).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 31;
    }
    h
}

/// Oracle trajectories with i.i.d. Gaussian pixel noise and per-frame
/// visibility dropout on every frame after the query frame. Each trajectory
/// draws from its own seeded stream, so results do not depend on ordering.
pub fn noisy_oracle_track(
    scene: &SceneBundle,
    queries: &[Query],
    clip: &Clip,
    cam: &CameraModel,
    noise: &NoiseParams,
) -> Result<Vec<TrackedTrajectory>> {
    noise.validate()?;
    let mut out = oracle_track(scene, queries, clip, cam)?;
    for tr in &mut out {
        perturb(tr, noise);
    }
    Ok(out)
}

/// Applies tracker noise in place; frame 0 of the trajectory is untouched.
pub fn perturb(tr: &mut TrackedTrajectory, noise: &NoiseParams) {
    if noise.sigma_px == 0.0 && noise.dropout_rate == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(noise.seed, tr.clip_start, tr.camera_id, tr.query_id));
    let normal = Normal::new(0.0, noise.sigma_px.max(f64::MIN_POSITIVE)).expect("sigma is finite");
    for j in 1..tr.positions.len() {
        let du = normal.sample(&mut rng);
        let dv = normal.sample(&mut rng);
        let drop = rng.random::<f64>() < noise.dropout_rate;
        if noise.sigma_px > 0.0 {
            tr.positions[j][0] += du;
            tr.positions[j][1] += dv;
        }
        if drop {
            tr.visibility[j] = false;
        }
    }
}

pub fn save_trajectories(path: &Path, trajectories: &[TrackedTrajectory]) -> Result<()> {
    let mut buf = Vec::new();
    for t in trajectories {
        serde_json::to_writer(&mut buf, t)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_trajectories(path: &Path) -> Result<Vec<TrackedTrajectory>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrackedTrajectory = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

/// Where trajectories come from.
pub trait PointTracker: Sync {
    fn track(
        &self,
        scene: &SceneBundle,
        queries: &[Query],
        clip: &Clip,
        cam: &CameraModel,
    ) -> Result<Vec<TrackedTrajectory>>;
}

pub struct OracleTracker;

impl PointTracker for OracleTracker {
    fn track(&self, scene: &SceneBundle, queries: &[Query], clip: &Clip, cam: &CameraModel) -> Result<Vec<TrackedTrajectory>> {
        oracle_track(scene, queries, clip, cam)
    }
}

pub struct NoisyOracleTracker(pub NoiseParams);

impl PointTracker for NoisyOracleTracker {
    fn track(&self, scene: &SceneBundle, queries: &[Query], clip: &Clip, cam: &CameraModel) -> Result<Vec<TrackedTrajectory>> {
        noisy_oracle_track(scene, queries, clip, cam, &self.0)
    }
}

/// Serves trajectories loaded from an interchange file, keyed by
/// `(camera_id, clip_start, query_id)`.
pub struct FileTracker {
    by_key: HashMap<(usize, usize, usize), TrackedTrajectory>,
}

impl FileTracker {
    pub fn new(trajectories: Vec<TrackedTrajectory>) -> Self {
        Self {
            by_key: trajectories
                .into_iter()
                .map(|t| ((t.camera_id, t.clip_start, t.query_id), t))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(load_trajectories(path)?))
    }
}

impl PointTracker for FileTracker {
    fn track(&self, _scene: &SceneBundle, queries: &[Query], clip: &Clip, _cam: &CameraModel) -> Result<Vec<TrackedTrajectory>> {
        queries
            .iter()
            .map(|q| {
                let t = self
                    .by_key
                    .get(&(q.camera_id, q.clip_start, q.query_id))
                    .ok_or_else(|| {
                        Error::Format(format!(
                            "trajectory file has no entry for camera {} clip {} query {}",
                            q.camera_id, q.clip_start, q.query_id
                        ))
                    })?;
                if t.len() != clip.len {
                    return Err(Error::Format(format!(
                        "trajectory {} has {} frames, clip has {}",
                        q.query_id,
                        t.len(),
                        clip.len
                    )));
                }
                Ok(t.clone())
            })
            .collect()
    }
}
