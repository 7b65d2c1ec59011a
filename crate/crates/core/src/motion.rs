//! Ego-motion compensation in the image: rigid trajectories, residuals
//! against tracked trajectories, and temporal voting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_constraints, project_camera_point, CameraModel, SE3Pose, Vec3};
use crate::tracking::TrackedTrajectory;

/// Pixel path a point would trace if it were static.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTrajectory {
    pub query_id: usize,
    pub positions: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
}

/// `poses[j]` is the ego pose of frame `t + j`; `p` is in the frame-`t`
/// LiDAR frame.
pub fn rigid_trajectory(query_id: usize, p: &Vec3, poses: &[SE3Pose], cam: &CameraModel) -> RigidTrajectory {
    let mut positions = Vec::with_capacity(poses.len());
    let mut visibility = Vec::with_capacity(poses.len());
    let mut last = [0.0; 2];
    for (j, g_k) in poses.iter().enumerate() {
        let pk = if j == 0 {
            *p
        } else {
            g_k.inverse().compose(&poses[0]).transform(p)
        };
        let (pos, vis) = match project_camera_point(&cam.extrinsic.transform(&pk), cam) {
            Ok(ip) if ip.u.is_finite() && ip.v.is_finite() => ([ip.u, ip.v], check_constraints(&ip, cam)),
            _ => (last, false),
        };
        last = pos;
        positions.push(pos);
        visibility.push(vis);
    }
    RigidTrajectory {
        query_id,
        positions,
        visibility,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompensationParams {
    /// Residual above which a frame votes "moving" (pixels).
    pub tau_dyn: f64,
    /// Votes needed for a trajectory to count as moving.
    pub n_move: usize,
    /// Moving trajectories needed before a (clip, camera) group is kept.
    pub n_point: usize,
}

impl Default for CompensationParams {
    fn default() -> Self {
        Self {
            tau_dyn: 5.0,
            n_move: 2,
            n_point: 10,
        }
    }
}

impl CompensationParams {
    pub fn validate(&self, clip_length: usize) -> Result<()> {
        if !(self.tau_dyn.is_finite() && self.tau_dyn > 0.0) {
            return Err(Error::Config(format!("tau_dyn {} must be positive", self.tau_dyn)));
        }
        if self.n_move < 1 || self.n_move > clip_length {
            return Err(Error::Config(format!(
                "n_move {} must lie in 1..={clip_length}",
                self.n_move
            )));
        }
        if self.n_point < 1 {
            return Err(Error::Config("n_point must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionVote {
    pub query_id: usize,
    pub residuals: Vec<f64>,
    pub joint_visibility: Vec<bool>,
    #[serde(rename = "V")]
    pub votes: usize,
}

pub fn compute_votes(
    tracked: &TrackedTrajectory,
    rigid: &RigidTrajectory,
    params: &CompensationParams,
) -> Result<MotionVote> {
    if tracked.len() != rigid.positions.len() {
        return Err(Error::LengthMismatch {
            what: "tracked vs rigid trajectory",
            left: tracked.len(),
            right: rigid.positions.len(),
        });
    }
    let residuals: Vec<f64> = tracked
        .positions
        .iter()
        .zip(&rigid.positions)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .collect();
    let joint_visibility: Vec<bool> = tracked
        .visibility
        .iter()
        .zip(&rigid.visibility)
        .map(|(a, b)| *a && *b)
        .collect();
    let votes = residuals
        .iter()
        .zip(&joint_visibility)
        .filter(|(r, j)| **j && **r > params.tau_dyn)
        .count();
    Ok(MotionVote {
        query_id: tracked.query_id,
        residuals,
        joint_visibility,
        votes,
    })
}

/// Positions (into `votes`) of moving trajectories, or nothing if fewer
/// than `n_point` qualify.
pub fn select_moving(votes: &[MotionVote], params: &CompensationParams) -> Vec<usize> {
    let moving: Vec<usize> = votes
        .iter()
        .enumerate()
        .filter(|(_, v)| v.votes >= params.n_move)
        .map(|(i, _)| i)
        .collect();
    if moving.len() >= params.n_point {
        moving
    } else {
        Vec::new()
    }
}

pub fn write_vote_dump(path: &Path, votes: &[MotionVote]) -> Result<()> {
    let mut buf = Vec::new();
    for v in votes {
        serde_json::to_writer(&mut buf, v)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
