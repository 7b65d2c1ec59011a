//! Occupancy ray casting: voxels crossed by sensor rays become void, and a
//! point that later lands in void space is labelled dynamic.
//!
//! A ray at time `s` voids every voxel it crosses, except its own endpoint
//! voxel and any voxel holding a return from the same scan. The void time of
//! a voxel is the earliest such `s`. A point observed at time `t` is dynamic
//! iff its voxel's void time is strictly earlier than `t`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::labels::MaskHeader;
use crate::par;
use crate::sim::SceneBundle;

pub type VoxelIndex = [i32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub voxel_size: f64,
    pub origin: [f64; 3],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            origin: [0.0; 3],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(Error::Config(format!("voxel size {} must be positive", self.voxel_size)));
        }
        Ok(())
    }

    /// `floor((p − origin) / voxel_size)` per axis.
    #[inline]
    pub fn voxel_of(&self, p: &Vec3) -> VoxelIndex {
        [
            ((p.x - self.origin[0]) / self.voxel_size).floor() as i32,
            ((p.y - self.origin[1]) / self.voxel_size).floor() as i32,
            ((p.z - self.origin[2]) / self.voxel_size).floor() as i32,
        ]
    }
}

/// Voxels crossed by the segment `origin → endpoint`, in traversal order,
/// starting with the origin voxel and stopping before the endpoint voxel.
pub fn traverse_ray(origin: &Vec3, endpoint: &Vec3, grid: &GridSpec) -> Result<Vec<VoxelIndex>> {
    let d = endpoint - origin;
    if d.x == 0.0 && d.y == 0.0 && d.z == 0.0 {
        return Err(Error::Degenerate("zero-length ray".into()));
    }
    let mut out = Vec::new();
    walk(origin, &d, grid.voxel_of(endpoint), grid, |v| out.push(v));
    Ok(out)
}

/// Amanatidis–Woo walk over `origin + s·d, s ∈ [0, 1]`. `end` comes from
/// the endpoint itself: `origin + d` can round into a neighbouring voxel.
#[inline]
fn walk(origin: &Vec3, d: &Vec3, end: VoxelIndex, grid: &GridSpec, mut visit: impl FnMut(VoxelIndex)) {
    let mut v = grid.voxel_of(origin);
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if d[a] > 0.0 {
            step[a] = 1;
            let boundary = grid.origin[a] + (v[a] + 1) as f64 * grid.voxel_size;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = grid.voxel_size / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            let boundary = grid.origin[a] + v[a] as f64 * grid.voxel_size;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = -grid.voxel_size / d[a];
        }
    }
    let budget: i64 = (0..3).map(|a| (end[a] as i64 - v[a] as i64).abs()).sum::<i64>() + 3;
    for _ in 0..budget {
        if v == end {
            return;
        }
        visit(v);
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[a] > 1.0 {
            // round-off put the endpoint voxel off the walked line
            return;
        }
        v[a] += step[a];
        t_max[a] += t_delta[a];
    }
}

/// One scan in world coordinates.
#[derive(Clone, Debug)]
pub struct ScanFrame {
    pub points: Vec<Vec3>,
    pub sensor_origin: Vec3,
    pub timestamp: u32,
}

/// Void/occupancy bookkeeping over a sequence of scans.
#[derive(Clone, Debug, Default)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    /// Earliest time each voxel was observed void.
    pub void: FxHashMap<VoxelIndex, u32>,
    /// Times at which each voxel held at least one return (ascending).
    pub occupied: FxHashMap<VoxelIndex, Vec<u32>>,
    last_timestamp: Option<u32>,
}

impl VoxelGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            ..Default::default()
        })
    }

    pub fn void_time(&self, v: &VoxelIndex) -> Option<u32> {
        self.void.get(v).copied()
    }

    /// Folds one scan into the grid. Scans must arrive in strictly
    /// increasing timestamp order.
    pub fn add_scan(&mut self, scan: &ScanFrame) -> Result<()> {
        if let Some(last) = self.last_timestamp {
            if scan.timestamp <= last {
                return Err(Error::Config(format!(
                    "scan timestamps must increase strictly ({} after {last})",
                    scan.timestamp
                )));
            }
        }
        let spec = self.spec;
        let occupied_now: FxHashSet<VoxelIndex> =
            scan.points.iter().map(|p| spec.voxel_of(p)).collect();
        let per_ray: Vec<Vec<VoxelIndex>> = par::map(&scan.points, |p| {
            let d = p - scan.sensor_origin;
            let mut out = Vec::new();
            if d != Vec3::zeros() {
                walk(&scan.sensor_origin, &d, spec.voxel_of(p), &spec, |v| out.push(v));
            }
            out
        });
        for ray in per_ray {
            for v in ray {
                if !occupied_now.contains(&v) {
                    self.void.entry(v).or_insert(scan.timestamp);
                }
            }
        }
        for v in occupied_now {
            self.occupied.entry(v).or_default().push(scan.timestamp);
        }
        self.last_timestamp = Some(scan.timestamp);
        Ok(())
    }

    /// Marks `fraction` of the voxels that look static (occupied, never
    /// void) as void from their first observation on. Emulates sparse-ray
    /// failures of a real occupancy mapper. Returns the number voided.
    pub fn inject_false_voids(&mut self, fraction: f64, seed: u64) -> Result<usize> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("false-void fraction {fraction} outside [0,1]")));
        }
        let mut candidates: Vec<(VoxelIndex, u32)> = self
            .occupied
            .iter()
            .filter(|(v, _)| !self.void.contains_key(*v))
            .map(|(v, times)| (*v, times[0]))
            .collect();
        candidates.sort_unstable();
        let k = (fraction * candidates.len() as f64).round() as usize;
        if k == 0 {
            return Ok(0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), k).into_vec();
        picked.sort_unstable();
        for i in picked {
            let (v, first) = candidates[i];
            self.void.insert(v, first);
        }
        Ok(k)
    }
}

/// Builds the void map from scans ordered by strictly increasing timestamp.
pub fn build_void_map(frames: &[ScanFrame], spec: GridSpec) -> Result<VoxelGrid> {
    if frames.is_empty() {
        return Err(Error::Config("no scans to build a void map from".into()));
    }
    let mut grid = VoxelGrid::new(spec)?;
    for f in frames {
        grid.add_scan(f)?;
    }
    Ok(grid)
}

/// Per-point dynamic flags for one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicMask {
    pub frame: usize,
    pub mask: Vec<bool>,
}

impl DynamicMask {
    pub fn header(&self) -> MaskHeader {
        MaskHeader {
            frame: self.frame,
            count: self.mask.len(),
            source: "raycast".into(),
            params_hash: None,
        }
    }

    pub fn dynamic_count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }
}

/// `m_i = 1` iff the point's voxel was void strictly before `timestamp`.
pub fn classify_dufo(points: &[Vec3], timestamp: u32, grid: &VoxelGrid) -> Vec<bool> {
    points
        .iter()
        .map(|p| {
            grid.void_time(&grid.spec.voxel_of(p))
                .is_some_and(|vt| vt < timestamp)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaycastParams {
    pub voxel_size: f64,
    pub origin: [f64; 3],
    /// Fraction of static-looking voxels voided on purpose.
    pub false_void_fraction: f64,
    pub false_void_seed: u64,
}

impl Default for RaycastParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            origin: [0.0; 3],
            false_void_fraction: 0.0,
            false_void_seed: 0,
        }
    }
}

impl RaycastParams {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            voxel_size: self.voxel_size,
            origin: self.origin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        if !(0.0..=1.0).contains(&self.false_void_fraction) {
            return Err(Error::Config("false_void_fraction outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Runs the ray-casting labeller over every frame of a scene.
pub fn raycast_scene(bundle: &SceneBundle, params: &RaycastParams) -> Result<Vec<DynamicMask>> {
    params.validate()?;
    let scans: Vec<ScanFrame> = (0..bundle.frame_count())
        .map(|t| ScanFrame {
            points: bundle.world_points(t),
            sensor_origin: *bundle.poses[t].translation(),
            timestamp: t as u32,
        })
        .collect();
    let mut grid = build_void_map(&scans, params.grid())?;
    if params.false_void_fraction > 0.0 {
        grid.inject_false_voids(params.false_void_fraction, params.false_void_seed)?;
    }
    Ok(par::map(&scans, |s| DynamicMask {
        frame: s.timestamp as usize,
        mask: classify_dufo(&s.points, s.timestamp, &grid),
    }))
}
