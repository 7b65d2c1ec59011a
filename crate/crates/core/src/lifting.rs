//! Lifting image-space motion cues back onto LiDAR points.
//!
//! Each visible position of a moving trajectory is matched against the
//! `top_k` nearest projected points of that frame; neighbors closer than
//! the lifting threshold are flagged dynamic.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_valid, CameraModel, Vec3};
use crate::labels::{FrameLabels, LabelSet, Provenance};
use crate::spatial::{KdTree, Neighbor};
use crate::tracking::TrackedTrajectory;

/// Projected, constraint-valid points of one frame seen by one camera.
#[derive(Clone, Debug)]
pub struct FrameProjectionIndex {
    pub frame: usize,
    pub camera_id: usize,
    /// `(point_index, [u, v], depth)` in ascending point index order.
    pub entries: Vec<(usize, [f64; 2], f64)>,
    depth_by_point: HashMap<usize, f64>,
    tree: KdTree<2>,
}

impl FrameProjectionIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `k` nearest projected points, ordered by distance then point
    /// index.
    pub fn knn(&self, pixel: &[f64; 2], k: usize) -> Vec<Neighbor> {
        self.tree.knn(pixel, k)
    }

    pub fn depth(&self, point_index: usize) -> Option<f64> {
        self.depth_by_point.get(&point_index).copied()
    }
}

pub fn build_frame_index(frame: usize, camera_id: usize, points: &[Vec3], cam: &CameraModel) -> FrameProjectionIndex {
    let entries: Vec<(usize, [f64; 2], f64)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| project_valid(p, cam).map(|ip| (i, [ip.u, ip.v], ip.depth)))
        .collect();
    let tree = KdTree::with_ids(entries.iter().map(|(i, px, _)| (*px, *i)).collect());
    let depth_by_point = entries.iter().map(|(i, _, d)| (*i, *d)).collect();
    FrameProjectionIndex {
        frame,
        camera_id,
        entries,
        depth_by_point,
        tree,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMode {
    /// Fixed pixel radius.
    Pixel,
    /// Metric radius seen at each neighbor's depth: `fx · tau_lift_m / depth`.
    #[default]
    Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftParams {
    pub mode: LiftMode,
    pub tau_lift_px: f64,
    pub tau_lift_m: f64,
    pub top_k: usize,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self {
            mode: LiftMode::Metric,
            tau_lift_px: 8.0,
            tau_lift_m: 0.4,
            top_k: 4,
        }
    }
}

impl LiftParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.tau_lift_px) || !pos(self.tau_lift_m) {
            return Err(Error::Config("lifting thresholds must be positive".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Pixel distance a neighbor at `depth` must stay strictly below.
    #[inline]
    pub fn threshold_px(&self, cam: &CameraModel, depth: f64) -> f64 {
        match self.mode {
            LiftMode::Pixel => self.tau_lift_px,
            LiftMode::Metric => cam.fx * self.tau_lift_m / depth,
        }
    }
}

/// One lifted cue: trajectory `trajectory_id` flagged point `point_index`
/// of frame `frame`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueHit {
    pub point_index: usize,
    pub frame: usize,
    pub trajectory_id: usize,
    pub distance_px: f64,
    pub camera_id: usize,
    pub clip_start: usize,
}

impl CueHit {
    fn key(&self) -> (usize, usize, usize, usize, usize) {
        (self.frame, self.point_index, self.camera_id, self.clip_start, self.trajectory_id)
    }
}

/// Sorts hits into the canonical order used for logs and merging.
pub fn canonicalize(hits: &mut [CueHit]) {
    hits.sort_by_key(|h| h.key());
}

/// Lifts moving trajectories of one camera onto the points of the frames
/// they span. `indices` must cover every frame of every trajectory.
pub fn lift_cues(
    moving: &[&TrackedTrajectory],
    indices: &[FrameProjectionIndex],
    cam: &CameraModel,
    params: &LiftParams,
) -> Result<Vec<CueHit>> {
    let by_frame: HashMap<usize, &FrameProjectionIndex> = indices.iter().map(|ix| (ix.frame, ix)).collect();
    let mut hits = Vec::new();
    for tr in moving {
        for (j, (pos, vis)) in tr.positions.iter().zip(&tr.visibility).enumerate() {
            if !vis {
                continue;
            }
            let frame = tr.clip_start + j;
            let index = by_frame.get(&frame).ok_or_else(|| {
                Error::Config(format!("no projection index for frame {frame} camera {}", tr.camera_id))
            })?;
            for nb in index.knn(pos, params.top_k) {
                let depth = index.depth(nb.id).expect("neighbor ids come from the index");
                let d = nb.dist2.sqrt();
                if d < params.threshold_px(cam, depth) {
                    hits.push(CueHit {
                        point_index: nb.id,
                        frame,
                        trajectory_id: tr.query_id,
                        distance_px: d,
                        camera_id: tr.camera_id,
                        clip_start: tr.clip_start,
                    });
                }
            }
        }
    }
    canonicalize(&mut hits);
    Ok(hits)
}

/// Per-frame cue flags `e` from a set of hits.
pub fn cue_flags(frame_sizes: &[usize], hits: &[CueHit]) -> Result<Vec<Vec<bool>>> {
    let mut flags: Vec<Vec<bool>> = frame_sizes.iter().map(|n| vec![false; *n]).collect();
    for h in hits {
        let frame = flags.get_mut(h.frame).ok_or(Error::OutOfRange {
            what: "cue frame",
            index: h.frame,
            len: frame_sizes.len(),
        })?;
        let len = frame.len();
        *frame.get_mut(h.point_index).ok_or(Error::OutOfRange {
            what: "cue point",
            index: h.point_index,
            len,
        })? = true;
    }
    Ok(flags)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// Start all-static; only lifted cues make a point dynamic.
    #[default]
    Fresh,
    /// Start from the raycast labels and add lifted cues.
    Union,
}

/// Final labels from raycast masks and cue flags. Frames outside every
/// clip (`covered[t] == false`) keep their raycast labels.
pub fn refine_labels(
    raycast: &[Vec<bool>],
    cues: &[Vec<bool>],
    covered: &[bool],
    init: InitRule,
) -> Result<LabelSet> {
    if raycast.len() != cues.len() || raycast.len() != covered.len() {
        return Err(Error::LengthMismatch {
            what: "raycast vs cue frames",
            left: raycast.len(),
            right: cues.len(),
        });
    }
    let frames = raycast
        .iter()
        .zip(cues)
        .zip(covered)
        .enumerate()
        .map(|(t, ((rc, e), cov))| {
            if rc.len() != e.len() {
                return Err(Error::LengthMismatch {
                    what: "raycast mask vs cue flags",
                    left: rc.len(),
                    right: e.len(),
                });
            }
            if !cov {
                return Ok(FrameLabels {
                    frame: t,
                    dynamic: rc.clone(),
                    provenance: vec![Provenance::Raycast; rc.len()],
                    cue: e.clone(),
                });
            }
            let dynamic: Vec<bool> = match init {
                InitRule::Fresh => e.clone(),
                InitRule::Union => rc.iter().zip(e).map(|(a, b)| *a || *b).collect(),
            };
            let provenance = e
                .iter()
                .map(|c| if *c { Provenance::Lifted } else { Provenance::Raycast })
                .collect();
            Ok(FrameLabels {
                frame: t,
                dynamic,
                provenance,
                cue: e.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSet {
        source: "trackcue".into(),
        params_hash: None,
        frames,
    })
}

/// JSON-lines cue log, one hit per line in canonical order.
pub fn write_cue_log(path: &Path, hits: &[CueHit]) -> Result<()> {
    let mut sorted = hits.to_vec();
    canonicalize(&mut sorted);
    let mut buf = Vec::new();
    for h in &sorted {
        serde_json::to_writer(&mut buf, h)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
