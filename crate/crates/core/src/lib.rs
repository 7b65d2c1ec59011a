//! Static/dynamic pseudo-label refinement for LiDAR sequences using
//! camera point tracks.
//!
//! Ray casting over a voxel grid gives a first, noisy dynamic mask. Its
//! dynamic points become image tracking queries; trajectories that deviate
//! from the path a static point would follow under ego motion are voted
//! moving, and those motion cues are lifted back onto the LiDAR points of
//! every frame they span. A deterministic scene simulator supplies exact
//! ground truth for all of it.

pub mod autolabel;
pub mod error;
pub mod geometry;
pub mod labels;
pub mod lifting;
pub mod metrics;
pub mod motion;
pub mod par;
pub mod pipeline;
pub mod raycast;
pub mod sim;
pub mod spatial;
pub mod textfmt;
pub mod tracking;

pub use error::{Error, Result};
