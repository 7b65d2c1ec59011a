//! Analytic scene geometry: a bounded ground plane and oriented boxes, with
//! exact ray casting at any frame.

use crate::geometry::{SE3Pose, Vec3};

use super::config::{GroundConfig, Motion, SceneConfig};

pub const GROUND_BODY: u32 = 0;

#[derive(Clone, Debug)]
pub enum Shape {
    Ground(GroundConfig),
    Box { half: [f64; 3] },
}

#[derive(Clone, Debug)]
enum Placement {
    Fixed(SE3Pose),
    Moving { motion: Motion, size: [f64; 3] },
}

#[derive(Clone, Debug)]
pub struct Body {
    pub id: u32,
    pub name: String,
    pub shape: Shape,
    placement: Placement,
}

impl Body {
    pub fn pose_at(&self, frame: f64, frame_dt: f64) -> SE3Pose {
        match &self.placement {
            Placement::Fixed(p) => *p,
            Placement::Moving { motion, size } => motion.pose_at(frame, frame_dt, size),
        }
    }

    /// True when the body never moves; its pose is then the same object at
    /// every frame, so static-point math involves no pose round-off.
    pub fn is_static(&self) -> bool {
        match &self.placement {
            Placement::Fixed(_) => true,
            Placement::Moving { motion, .. } => motion.is_static(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub body: u32,
}

#[derive(Clone, Debug)]
pub struct World {
    pub bodies: Vec<Body>,
    pub frame_dt: f64,
}

/// Body placements frozen at one frame, with inverses cached for casting.
pub struct FrameGeometry<'a> {
    world: &'a World,
    inv: Vec<SE3Pose>,
}

impl World {
    pub fn from_config(cfg: &SceneConfig) -> Self {
        let mut bodies = Vec::new();
        if let Some(g) = cfg.ground {
            bodies.push(Body {
                id: GROUND_BODY,
                name: "ground".into(),
                shape: Shape::Ground(g),
                placement: Placement::Fixed(SE3Pose::identity()),
            });
        }
        let mut next = 1u32;
        for (i, b) in cfg.static_boxes.iter().enumerate() {
            bodies.push(Body {
                id: next,
                name: format!("static_{i}"),
                shape: Shape::Box {
                    half: b.size.map(|s| s / 2.0),
                },
                placement: Placement::Fixed(SE3Pose::from_yaw(b.yaw, Vec3::from(b.center))),
            });
            next += 1;
        }
        for o in &cfg.objects {
            bodies.push(Body {
                id: next,
                name: o.name.clone(),
                shape: Shape::Box {
                    half: o.size.map(|s| s / 2.0),
                },
                placement: Placement::Moving {
                    motion: o.motion.clone(),
                    size: o.size,
                },
            });
            next += 1;
        }
        World {
            bodies,
            frame_dt: cfg.frame_dt,
        }
    }

    pub fn body(&self, id: u32) -> Option<&Body> {
        self.bodies.iter().find(|b| b.id == id)
    }

    pub fn at_frame(&self, frame: f64) -> FrameGeometry<'_> {
        FrameGeometry {
            world: self,
            inv: self
                .bodies
                .iter()
                .map(|b| b.pose_at(frame, self.frame_dt).inverse())
                .collect(),
        }
    }

    /// Relative world motion of a body between two frames: `B_to ∘ B_from⁻¹`.
    /// Exactly the identity for static bodies.
    pub fn body_motion(&self, id: u32, from: f64, to: f64) -> SE3Pose {
        match self.body(id) {
            Some(b) if !b.is_static() => {
                b.pose_at(to, self.frame_dt).compose(&b.pose_at(from, self.frame_dt).inverse())
            }
            _ => SE3Pose::identity(),
        }
    }
}

impl FrameGeometry<'_> {
    /// Closest surface hit along `origin + t·dir` with `t_min < t <= t_max`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (body, inv) in self.world.bodies.iter().zip(&self.inv) {
            let t = match &body.shape {
                Shape::Ground(g) => intersect_ground(g, origin, dir),
                Shape::Box { half } => {
                    intersect_box(half, &inv.transform(origin), &inv.rotate(dir), t_min)
                }
            };
            if let Some(t) = t {
                if t > t_min && t <= t_max && best.is_none_or(|h| t < h.t) {
                    best = Some(Hit { t, body: body.id });
                }
            }
        }
        best
    }
}

fn intersect_ground(g: &GroundConfig, o: &Vec3, d: &Vec3) -> Option<f64> {
    if d.z >= 0.0 || o.z <= 0.0 {
        return None;
    }
    let t = -o.z / d.z;
    let x = o.x + t * d.x;
    let y = o.y + t * d.y;
    (x >= g.x_min && x <= g.x_max && y >= g.y_min && y <= g.y_max).then_some(t)
}

/// Slab test against an origin-centred axis-aligned box; returns the entry
/// distance, ignoring rays that start inside.
fn intersect_box(half: &[f64; 3], o: &Vec3, d: &Vec3, t_min: f64) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut ta, mut tb) = ((-half[a] - o[a]) * inv, (half[a] - o[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > t_min).then_some(t0)
}
