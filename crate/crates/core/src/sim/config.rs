use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, SE3Pose, Vec3};

/// Everything needed to regenerate a scene bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub frame_count: usize,
    /// Seconds between frames.
    pub frame_dt: f64,
    pub seed: u64,
    pub ego: EgoMotion,
    /// LiDAR mounting height above the ground plane (meters).
    pub sensor_height: f64,
    pub ground: Option<GroundConfig>,
    #[serde(default)]
    pub static_boxes: Vec<BoxConfig>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    pub lidar: LidarModel,
    pub cameras: Vec<CameraModel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Static oriented box, `size` is full extent (length, width, height).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

/// A rigid box resting on the ground that moves according to `motion`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub name: String,
    pub size: [f64; 3],
    pub motion: Motion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Planar constant velocity (m/s) and yaw rate (rad/s) from `start = [x, y, yaw]`.
    ConstantVelocity {
        start: [f64; 3],
        velocity: [f64; 2],
        #[serde(default)]
        yaw_rate: f64,
    },
    /// Piecewise-linear planar motion through `[x, y, yaw]` keyframes; held
    /// constant outside the keyframe range.
    Keyframes(Vec<Keyframe>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoMotion {
    /// Constant speed (m/s) along the heading with constant yaw rate (rad/s).
    ConstantTwist {
        start: [f64; 3],
        speed: f64,
        #[serde(default)]
        yaw_rate: f64,
    },
    /// One `[x, y, yaw]` per frame.
    Waypoints(Vec<[f64; 3]>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LidarModel {
    /// Rotating multi-beam sensor: `beams` elevations evenly spaced in
    /// `[elevation_min_deg, elevation_max_deg]`, `azimuth_steps` columns over
    /// the azimuth range, with a seeded per-frame azimuth phase.
    Spherical {
        beams: usize,
        elevation_min_deg: f64,
        elevation_max_deg: f64,
        azimuth_min_deg: f64,
        azimuth_max_deg: f64,
        azimuth_steps: usize,
        max_range: f64,
    },
    /// Uniform random sampling of visible surfaces at `density` points/m².
    Uniform { density: f64, max_range: f64 },
}

impl LidarModel {
    pub fn max_range(&self) -> f64 {
        match self {
            LidarModel::Spherical { max_range, .. } | LidarModel::Uniform { max_range, .. } => {
                *max_range
            }
        }
    }
}

impl Motion {
    /// World pose of the body at a (possibly fractional) frame time.
    pub fn pose_at(&self, frame: f64, frame_dt: f64, size: &[f64; 3]) -> SE3Pose {
        let (x, y, yaw) = match self {
            Motion::ConstantVelocity {
                start,
                velocity,
                yaw_rate,
            } => {
                let s = frame * frame_dt;
                (start[0] + velocity[0] * s, start[1] + velocity[1] * s, start[2] + yaw_rate * s)
            }
            Motion::Keyframes(keys) => interpolate(keys, frame),
        };
        SE3Pose::from_yaw(yaw, Vec3::new(x, y, size[2] / 2.0))
    }

    pub fn is_static(&self) -> bool {
        match self {
            Motion::ConstantVelocity {
                velocity, yaw_rate, ..
            } => velocity[0] == 0.0 && velocity[1] == 0.0 && *yaw_rate == 0.0,
            Motion::Keyframes(keys) => keys
                .windows(2)
                .all(|w| w[0].x == w[1].x && w[0].y == w[1].y && w[0].yaw == w[1].yaw),
        }
    }
}

fn interpolate(keys: &[Keyframe], frame: f64) -> (f64, f64, f64) {
    let first = &keys[0];
    if frame <= first.frame {
        return (first.x, first.y, first.yaw);
    }
    for w in keys.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if frame <= b.frame {
            let s = (frame - a.frame) / (b.frame - a.frame);
            return (
                a.x + s * (b.x - a.x),
                a.y + s * (b.y - a.y),
                a.yaw + s * (b.yaw - a.yaw),
            );
        }
    }
    let last = keys.last().unwrap();
    (last.x, last.y, last.yaw)
}

impl EgoMotion {
    /// Planar `(x, y, yaw)` of the ego vehicle at integer frame `t`.
    pub fn planar_at(&self, t: usize, frame_dt: f64) -> Result<[f64; 3]> {
        match self {
            EgoMotion::ConstantTwist {
                start,
                speed,
                yaw_rate,
            } => {
                let s = t as f64 * frame_dt;
                let yaw = start[2] + yaw_rate * s;
                let (x, y) = if *yaw_rate == 0.0 {
                    (start[0] + speed * s * start[2].cos(), start[1] + speed * s * start[2].sin())
                } else {
                    let r = speed / yaw_rate;
                    (
                        start[0] + r * (yaw.sin() - start[2].sin()),
                        start[1] - r * (yaw.cos() - start[2].cos()),
                    )
                };
                Ok([x, y, yaw])
            }
            EgoMotion::Waypoints(w) => w.get(t).copied().ok_or(Error::OutOfRange {
                what: "ego waypoint",
                index: t,
                len: w.len(),
            }),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 2 {
            return Err(Error::Config("scene needs at least 2 frames".into()));
        }
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(Error::Config("frame_dt must be positive".into()));
        }
        if !(self.sensor_height.is_finite() && self.sensor_height > 0.0) {
            return Err(Error::Config("sensor_height must be positive".into()));
        }
        if let EgoMotion::Waypoints(w) = &self.ego {
            if w.len() < self.frame_count {
                return Err(Error::Config(format!(
                    "{} ego waypoints for {} frames",
                    w.len(),
                    self.frame_count
                )));
            }
        }
        if let Some(g) = &self.ground {
            if !(g.x_max > g.x_min && g.y_max > g.y_min) {
                return Err(Error::Degenerate("ground rectangle has zero area".into()));
            }
        }
        for b in &self.static_boxes {
            check_size(&b.size, "static box")?;
        }
        for o in &self.objects {
            check_size(&o.size, &o.name)?;
            match &o.motion {
                Motion::Keyframes(k) => {
                    if k.is_empty() {
                        return Err(Error::Config(format!("object {} has no keyframes", o.name)));
                    }
                    if k.windows(2).any(|w| w[1].frame <= w[0].frame) {
                        return Err(Error::Config(format!(
                            "object {} keyframes must be strictly increasing",
                            o.name
                        )));
                    }
                    if k.iter().any(|f| !(f.x.is_finite() && f.y.is_finite() && f.yaw.is_finite()))
                    {
                        return Err(Error::Config(format!("object {} motion not finite", o.name)));
                    }
                }
                Motion::ConstantVelocity {
                    start,
                    velocity,
                    yaw_rate,
                } => {
                    if !start.iter().chain(velocity).chain([yaw_rate]).all(|v| v.is_finite()) {
                        return Err(Error::Config(format!("object {} motion not finite", o.name)));
                    }
                }
            }
        }
        match &self.lidar {
            LidarModel::Spherical {
                beams,
                azimuth_steps,
                max_range,
                elevation_min_deg,
                elevation_max_deg,
                ..
            } => {
                if *beams == 0 || *azimuth_steps == 0 || *max_range <= 0.0 {
                    return Err(Error::Config("lidar needs beams, columns and range".into()));
                }
                if elevation_max_deg < elevation_min_deg {
                    return Err(Error::Config("lidar elevation range inverted".into()));
                }
            }
            LidarModel::Uniform { density, max_range } => {
                if *density <= 0.0 || *max_range <= 0.0 {
                    return Err(Error::Config("uniform lidar needs density and range".into()));
                }
            }
        }
        for c in &self.cameras {
            c.validate()?;
        }
        Ok(())
    }
}

fn check_size(size: &[f64; 3], what: &str) -> Result<()> {
    if size.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::Degenerate(format!("{what} has a non-positive extent {size:?}")))
    }
}
