//! Cluster-based auto-labelling strategies that consume a dynamic source
//! mask (raycast or refined): plain masking ("seflow") and cluster-ratio
//! reassignment ("seflowpp").

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::labels::{FrameLabels, LabelSet, Provenance};
use crate::par;
use crate::sim::SceneBundle;
use crate::spatial::KdTree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoLabelParams {
    /// Nearest-neighbor distance to the next frame above which a point is
    /// a motion candidate (meters).
    pub tau_d: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    pub min_cluster_size: usize,
    pub cluster_epsilon: f64,
    /// Points with world height below this are treated as ground and never
    /// clustered. `None` disables ground removal.
    pub ground_height: Option<f64>,
}

impl Default for AutoLabelParams {
    fn default() -> Self {
        Self {
            tau_d: 0.14,
            tau_1: 0.05,
            tau_2: 0.30,
            min_cluster_size: 20,
            cluster_epsilon: 0.7,
            ground_height: Some(0.15),
        }
    }
}

impl AutoLabelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.tau_1 && self.tau_1 <= self.tau_2 && self.tau_2 <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= tau_1 ({}) <= tau_2 ({}) <= 1",
                self.tau_1, self.tau_2
            )));
        }
        if !(self.tau_d.is_finite() && self.tau_d > 0.0) {
            return Err(Error::Config("tau_d must be positive".into()));
        }
        if !(self.cluster_epsilon.is_finite() && self.cluster_epsilon > 0.0) {
            return Err(Error::Config("cluster_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[serde(rename = "seflow")]
    SeFlow,
    #[default]
    #[serde(rename = "seflowpp")]
    SeFlowPlusPlus,
}

impl Strategy {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::SeFlow => "seflow",
            Strategy::SeFlowPlusPlus => "seflowpp",
        }
    }
}

fn arr(p: &Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Points of `current` whose nearest neighbor in `next` is farther than
/// `tau_d`. Both frames must be in the same (world) coordinates.
pub fn nn_dynamic_set(current: &[Vec3], next: &[Vec3], tau_d: f64) -> Result<Vec<bool>> {
    if next.is_empty() {
        return Err(Error::Degenerate("next frame has no points".into()));
    }
    let pts: Vec<[f64; 3]> = next.iter().map(arr).collect();
    let tree = KdTree::new(&pts);
    Ok(par::map(current, |p| {
        let nb = tree.nearest(&arr(p)).expect("tree is non-empty");
        nb.dist2.sqrt() > tau_d
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub id: usize,
    /// Ascending point indices.
    pub members: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clusters (link distance ≤ `cluster_epsilon`) of the
/// masked points; components smaller than `min_cluster_size` are dropped.
/// Cluster ids follow the order of each cluster's lowest member index.
pub fn cluster_dynamic_points(points: &[Vec3], mask: &[bool], params: &AutoLabelParams) -> Result<Vec<Cluster>> {
    if points.len() != mask.len() {
        return Err(Error::LengthMismatch {
            what: "points vs dynamic mask",
            left: points.len(),
            right: mask.len(),
        });
    }
    let selected: Vec<usize> = (0..points.len()).filter(|i| mask[*i]).collect();
    let coords: Vec<[f64; 3]> = selected.iter().map(|i| arr(&points[*i])).collect();
    let tree = KdTree::new(&coords);
    let mut parent: Vec<usize> = (0..selected.len()).collect();
    for (a, c) in coords.iter().enumerate() {
        for b in tree.within_radius(c, params.cluster_epsilon) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for a in 0..selected.len() {
        let r = find(&mut parent, a);
        groups.entry(r).or_default().push(selected[a]);
    }
    let mut clusters: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|m| m.len() >= params.min_cluster_size)
        .collect();
    clusters.sort_by_key(|m| m[0]);
    Ok(clusters
        .into_iter()
        .enumerate()
        .map(|(id, members)| Cluster { id, members })
        .collect())
}

fn fraction(mask: &[bool], c: &Cluster) -> f64 {
    c.members.iter().filter(|i| mask[**i]).count() as f64 / c.members.len() as f64
}

/// Per-cluster verdict: dynamic iff `min(r1, r2) ≥ tau_1` and
/// `max(r1, r2) ≥ tau_2`, where r1/r2 are the source-mask and
/// nearest-neighbor-set fractions of the cluster.
pub fn seflowpp_reassign(clusters: &[Cluster], source: &[bool], nnd: &[bool], params: &AutoLabelParams) -> Vec<bool> {
    clusters
        .iter()
        .map(|c| {
            let r1 = fraction(source, c);
            let r2 = fraction(nnd, c);
            r1.min(r2) >= params.tau_1 && r1.max(r2) >= params.tau_2
        })
        .collect()
}

/// Clustered points stay dynamic only if the source mask agrees; everything
/// else becomes static.
pub fn seflow_reassign(n: usize, clusters: &[Cluster], source: &[bool]) -> Vec<bool> {
    let mut out = vec![false; n];
    for c in clusters {
        for &i in &c.members {
            out[i] = source[i];
        }
    }
    out
}

fn drop_ground(mask: &[bool], world: &[Vec3], ground_height: Option<f64>) -> Vec<bool> {
    match ground_height {
        None => mask.to_vec(),
        Some(h) => mask.iter().zip(world).map(|(m, p)| *m && p.z >= h).collect(),
    }
}

/// Labels one frame given its world points, the next frame's world points
/// (if any) and the source mask.
pub fn autolabel_frame(
    world: &[Vec3],
    next_world: Option<&[Vec3]>,
    source: &[bool],
    strategy: Strategy,
    params: &AutoLabelParams,
) -> Result<Vec<bool>> {
    if world.len() != source.len() {
        return Err(Error::LengthMismatch {
            what: "points vs source mask",
            left: world.len(),
            right: source.len(),
        });
    }
    let source = drop_ground(source, world, params.ground_height);
    match strategy {
        Strategy::SeFlow => {
            let clusters = cluster_dynamic_points(world, &source, params)?;
            Ok(seflow_reassign(world.len(), &clusters, &source))
        }
        Strategy::SeFlowPlusPlus => {
            let nnd = match next_world {
                Some(next) if !next.is_empty() => nn_dynamic_set(world, next, params.tau_d)?,
                _ => vec![false; world.len()],
            };
            let nnd = drop_ground(&nnd, world, params.ground_height);
            let candidates: Vec<bool> = source.iter().zip(&nnd).map(|(a, b)| *a || *b).collect();
            let clusters = cluster_dynamic_points(world, &candidates, params)?;
            let verdict = seflowpp_reassign(&clusters, &source, &nnd, params);
            let mut out = vec![false; world.len()];
            for (c, dynamic) in clusters.iter().zip(verdict) {
                if dynamic {
                    for &i in &c.members {
                        out[i] = true;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Runs an auto-labelling strategy over every frame of a scene.
pub fn autolabel_scene(
    bundle: &SceneBundle,
    source: &[Vec<bool>],
    strategy: Strategy,
    params: &AutoLabelParams,
) -> Result<LabelSet> {
    params.validate()?;
    if source.len() != bundle.frame_count() {
        return Err(Error::LengthMismatch {
            what: "source masks vs frames",
            left: source.len(),
            right: bundle.frame_count(),
        });
    }
    let world: Vec<Vec<Vec3>> = (0..bundle.frame_count()).map(|t| bundle.world_points(t)).collect();
    let frames = par::try_map(&(0..bundle.frame_count()).collect::<Vec<_>>(), |&t| {
        let next = world.get(t + 1).map(|v| v.as_slice());
        let dynamic = autolabel_frame(&world[t], next, &source[t], strategy, params)?;
        Ok::<_, Error>(FrameLabels::uniform(t, dynamic, Provenance::Autolabeler))
    })?;
    Ok(LabelSet {
        source: strategy.tag().into(),
        params_hash: None,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: Vec3, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|i| center + Vec3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1, 0.0))
            .collect()
    }

    fn params() -> AutoLabelParams {
        AutoLabelParams {
            ground_height: None,
            ..Default::default()
        }
    }

    #[test]
    fn nnd_examples() {
        let a = blob(Vec3::zeros(), 10);
        assert!(nn_dynamic_set(&a, &a, 0.14).unwrap().iter().all(|m| !m));
        let b = vec![Vec3::new(0.2, 0.0, 0.0)];
        assert_eq!(nn_dynamic_set(&[Vec3::zeros()], &b, 0.14).unwrap(), vec![true]);
        assert!(nn_dynamic_set(&a, &[], 0.14).is_err());
    }

    #[test]
    fn clustering_examples() {
        let mut pts = blob(Vec3::zeros(), 25);
        pts.extend(blob(Vec3::new(5.0, 0.0, 0.0), 25));
        let mask = vec![true; pts.len()];
        let c = cluster_dynamic_points(&pts, &mask, &params()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members, (0..25).collect::<Vec<_>>());

        let small = blob(Vec3::zeros(), 19);
        assert!(cluster_dynamic_points(&small, &[true; 19], &params()).unwrap().is_empty());

        let chain: Vec<Vec3> = (0..30).map(|i| Vec3::new(i as f64 * 0.5, 0.0, 0.0)).collect();
        assert_eq!(cluster_dynamic_points(&chain, &[true; 30], &params()).unwrap().len(), 1);
    }

    #[test]
    fn reassign_examples() {
        let c = vec![Cluster { id: 0, members: (0..100).collect() }];
        let m = |k: usize| (0..100).map(|i| i < k).collect::<Vec<bool>>();
        let p = params();
        assert_eq!(seflowpp_reassign(&c, &m(10), &m(40), &p), vec![true]);
        assert_eq!(seflowpp_reassign(&c, &m(2), &m(90), &p), vec![false]);
        assert_eq!(seflowpp_reassign(&c, &m(0), &m(0), &p), vec![false]);
    }

    #[test]
    fn seflow_masks_by_source() {
        let c = vec![Cluster { id: 0, members: vec![0, 1, 2] }];
        let out = seflow_reassign(5, &c, &[true, false, true, true, false]);
        assert_eq!(out, vec![true, false, true, false, false]);
    }

    #[test]
    fn params_validated() {
        assert!(AutoLabelParams { tau_1: 0.5, tau_2: 0.3, ..Default::default() }.validate().is_err());
        assert!(AutoLabelParams { tau_d: 0.0, ..Default::default() }.validate().is_err());
        assert!(AutoLabelParams::default().validate().is_ok());
    }
}
