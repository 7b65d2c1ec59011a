//! Deterministic synthetic driving scenes with exact ground truth.

mod bundle;
mod config;
mod generate;
pub mod suite;
mod world;

pub use bundle::{PointFrame, SceneBundle, OCCLUSION_TOLERANCE};
pub use config::{
    BoxConfig, EgoMotion, GroundConfig, Keyframe, LidarModel, Motion, ObjectConfig, SceneConfig,
};
pub use generate::{ego_flow, ego_pose, generate_scene, gt_flow, residual_flow};
pub use suite::{standard_suite, suite_scene};
pub use world::{Body, Hit, Shape, World, GROUND_BODY};

pub(crate) use bundle::{parse_bits, sha256_hex};
