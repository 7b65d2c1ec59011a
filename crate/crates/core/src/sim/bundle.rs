//! Scene bundles and their on-disk directory layout:
//!
//! ```text
//! meta.json          name, seed, full config, per-file sha256
//! poses.json         one 16-float row-major matrix per frame
//! cameras.json       camera records
//! frame_%04d.pts     "x y z body_id" per point, sensor frame
//! gt_flow_%04d.txt   "fx fy fz" per point, frames 0..N-2
//! gt_mask_%04d.txt   0/1 per point, every frame
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{project_camera_point, CameraModel, SE3Pose, Vec3};
use crate::textfmt::sig9;

use super::config::SceneConfig;
use super::generate::gt_flow;
use super::world::World;

/// Depth tolerance of the camera occlusion test (meters).
pub const OCCLUSION_TOLERANCE: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointFrame {
    /// Sensor-frame coordinates.
    pub points: Vec<Vec3>,
    pub body_ids: Vec<u32>,
}

impl PointFrame {
    pub fn push(&mut self, p: Vec3, body: u32) {
        self.points.push(p);
        self.body_ids.push(body);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub config: SceneConfig,
    pub frames: Vec<PointFrame>,
    /// Global ego poses `G_t` (sensor → world).
    pub poses: Vec<SE3Pose>,
    pub cameras: Vec<CameraModel>,
    pub gt_masks: Vec<Vec<bool>>,
    world: World,
}

impl SceneBundle {
    pub(crate) fn assemble(
        config: SceneConfig,
        world: World,
        frames: Vec<PointFrame>,
        poses: Vec<SE3Pose>,
        cameras: Vec<CameraModel>,
        gt_masks: Vec<Vec<bool>>,
    ) -> Self {
        Self {
            config,
            frames,
            poses,
            cameras,
            gt_masks,
            world,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn frame_sizes(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.len()).collect()
    }

    /// Frame `t` points in world coordinates.
    pub fn world_points(&self, t: usize) -> Vec<Vec3> {
        let g = &self.poses[t];
        self.frames[t].points.iter().map(|p| g.transform(p)).collect()
    }

    pub fn is_static_body(&self, id: u32) -> bool {
        self.world.body(id).is_none_or(|b| b.is_static())
    }

    /// Where point `index` of frame `from` is at frame `to`, in the `to`
    /// sensor frame, following its true body motion.
    pub fn carry_point(&self, from: usize, index: usize, to: usize) -> Result<Vec3> {
        let frame = self.frames.get(from).ok_or(Error::OutOfRange {
            what: "frame",
            index: from,
            len: self.frames.len(),
        })?;
        let p = frame.points.get(index).ok_or(Error::OutOfRange {
            what: "point",
            index,
            len: frame.len(),
        })?;
        if to >= self.frames.len() {
            return Err(Error::OutOfRange {
                what: "frame",
                index: to,
                len: self.frames.len(),
            });
        }
        let body = frame.body_ids[index];
        let rel = if self.is_static_body(body) {
            self.poses[to].inverse().compose(&self.poses[from])
        } else {
            let m = self.world.body_motion(body, from as f64, to as f64);
            self.poses[to].inverse().compose(&m).compose(&self.poses[from])
        };
        Ok(rel.transform(p))
    }

    /// Z-buffer style test: is a camera-frame point at frame `t` hidden
    /// behind another surface by more than [`OCCLUSION_TOLERANCE`] of depth?
    pub fn camera_occluded(&self, t: usize, cam: &CameraModel, p_cam: &Vec3) -> bool {
        let lidar_to_world = &self.poses[t];
        let cam_to_world = lidar_to_world.compose(&cam.extrinsic.inverse());
        let center = *cam_to_world.translation();
        let target = cam_to_world.transform(p_cam);
        let delta = target - center;
        let dist = delta.norm();
        if dist <= 0.0 {
            return false;
        }
        let dir = delta / dist;
        let geom = self.world.at_frame(t as f64);
        match geom.cast(&center, &dir, 1e-6, dist) {
            Some(hit) => {
                let hit_depth = cam_to_world
                    .inverse()
                    .transform(&(center + dir * hit.t))
                    .z;
                hit_depth < p_cam.z - OCCLUSION_TOLERANCE
            }
            None => false,
        }
    }

    /// Ground-truth pixel position and visibility of a point carried to
    /// frame `to` (used by the oracle tracker).
    pub fn oracle_observation(
        &self,
        from: usize,
        index: usize,
        to: usize,
        cam: &CameraModel,
    ) -> Result<(Option<crate::geometry::ImagePoint>, bool)> {
        let p = self.carry_point(from, index, to)?;
        let pc = cam.extrinsic.transform(&p);
        let ip = project_camera_point(&pc, cam).ok();
        let visible = match &ip {
            Some(ip) => crate::geometry::check_constraints(ip, cam) && !self.camera_occluded(to, cam, &pc),
            None => false,
        };
        Ok((ip, visible))
    }

    /// Fraction of points that are dynamic in the ground truth.
    pub fn gt_dynamic_ratio(&self) -> f64 {
        let (dyn_, total) = self.gt_masks.iter().fold((0usize, 0usize), |(d, n), m| {
            (d + m.iter().filter(|b| **b).count(), n + m.len())
        });
        if total == 0 {
            0.0
        } else {
            dyn_ as f64 / total as f64
        }
    }

    /// Writes the bundle directory. Output bytes depend only on the bundle.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: BTreeMap<String, String> = BTreeMap::new();
        for (t, frame) in self.frames.iter().enumerate() {
            let mut s = String::with_capacity(frame.len() * 40);
            for (p, id) in frame.points.iter().zip(&frame.body_ids) {
                let _ = writeln!(s, "{} {} {} {}", sig9(p.x), sig9(p.y), sig9(p.z), id);
            }
            files.insert(format!("frame_{t:04}.pts"), s);
            let mask: String = self.gt_masks[t]
                .iter()
                .map(|b| if *b { "1\n" } else { "0\n" })
                .collect();
            files.insert(format!("gt_mask_{t:04}.txt"), mask);
            if t + 1 < self.frame_count() {
                let flow = gt_flow(self, t)?;
                let mut s = String::with_capacity(flow.len() * 36);
                for f in &flow {
                    let _ = writeln!(s, "{} {} {}", sig9(f.x), sig9(f.y), sig9(f.z));
                }
                files.insert(format!("gt_flow_{t:04}.txt"), s);
            }
        }
        let poses: Vec<Vec<f64>> = self.poses.iter().map(|p| p.to_row_major().to_vec()).collect();
        files.insert("poses.json".into(), serde_json::to_string_pretty(&poses)? + "\n");
        files.insert("cameras.json".into(), serde_json::to_string_pretty(&self.cameras)? + "\n");

        let hashes: BTreeMap<String, String> = files
            .iter()
            .map(|(name, body)| (name.clone(), sha256_hex(body.as_bytes())))
            .collect();
        let meta = Meta {
            name: self.config.name.clone(),
            seed: self.config.seed,
            frame_count: self.frame_count(),
            config: self.config.clone(),
            hashes,
        };
        files.insert("meta.json".into(), serde_json::to_string_pretty(&meta)? + "\n");
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads a bundle directory, verifying file hashes against `meta.json`.
    pub fn read_dir(dir: &Path) -> Result<SceneBundle> {
        let meta_text = read_text(&dir.join("meta.json"))?;
        let meta: Meta = serde_json::from_str(&meta_text)?;
        meta.config.validate()?;
        let n = meta.frame_count;
        let checked = |name: &str| -> Result<String> {
            let text = read_text(&dir.join(name))?;
            if let Some(expect) = meta.hashes.get(name) {
                if *expect != sha256_hex(text.as_bytes()) {
                    return Err(Error::Format(format!("{name}: hash mismatch with meta.json")));
                }
            }
            Ok(text)
        };
        let poses_raw: Vec<Vec<f64>> = serde_json::from_str(&checked("poses.json")?)?;
        let poses = poses_raw
            .iter()
            .map(|m| SE3Pose::from_row_major(m))
            .collect::<Result<Vec<_>>>()?;
        let cameras: Vec<CameraModel> = serde_json::from_str(&checked("cameras.json")?)?;
        if poses.len() != n {
            return Err(Error::Format(format!("{} poses for {n} frames", poses.len())));
        }
        let mut frames = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for t in 0..n {
            let name = format!("frame_{t:04}.pts");
            let text = checked(&name)?;
            let mut frame = PointFrame::default();
            for (ln, line) in text.lines().enumerate() {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(Error::Format(format!("{name}:{}: expected 'x y z body_id'", ln + 1)));
                }
                let num = |s: &str| -> Result<f64> {
                    s.parse::<f64>()
                        .map_err(|e| Error::Format(format!("{name}:{}: {e}", ln + 1)))
                };
                let id = f[3]
                    .parse::<u32>()
                    .map_err(|e| Error::Format(format!("{name}:{}: {e}", ln + 1)))?;
                frame.push(Vec3::new(num(f[0])?, num(f[1])?, num(f[2])?), id);
            }
            let mask_name = format!("gt_mask_{t:04}.txt");
            let mask = parse_bits(&checked(&mask_name)?, &mask_name)?;
            if mask.len() != frame.len() {
                return Err(Error::Format(format!(
                    "{mask_name}: {} entries for {} points",
                    mask.len(),
                    frame.len()
                )));
            }
            frames.push(frame);
            masks.push(mask);
        }
        let world = World::from_config(&meta.config);
        Ok(SceneBundle::assemble(meta.config, world, frames, poses, cameras, masks))
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    name: String,
    seed: u64,
    frame_count: usize,
    config: SceneConfig,
    hashes: BTreeMap<String, String>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_bits(text: &str, name: &str) -> Result<Vec<bool>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Format(format!("{name}:{}: expected 0/1, got {other:?}", i + 1))),
        })
        .collect()
}
