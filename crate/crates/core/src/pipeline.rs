//! End-to-end orchestration: configuration, the track-and-lift refinement
//! over clips and cameras, run reports, and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autolabel::{autolabel_scene, AutoLabelParams, Strategy};
use crate::error::{Error, Result};
use crate::labels::{FrameLabels, LabelSet, Provenance};
use crate::lifting::{build_frame_index, cue_flags, lift_cues, refine_labels, write_cue_log, CueHit, InitRule, LiftParams};
use crate::metrics::{evaluate_sequence, pool_reports, Averaging, LabelQualityReport};
use crate::motion::{compute_votes, rigid_trajectory, select_moving, CompensationParams, MotionVote};
use crate::par;
use crate::raycast::{raycast_scene, RaycastParams};
use crate::sim::{sha256_hex, SceneBundle};
use crate::tracking::{
    select_queries, split_into_clips, Clip, FileTracker, NoiseParams, NoisyOracleTracker, OracleTracker,
    PointTracker, DEFAULT_MAX_QUERIES,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerSource {
    #[default]
    Oracle,
    /// Oracle plus pixel noise and dropout, seeded by the run seed.
    Noisy { sigma_px: f64, dropout_rate: f64 },
    File { path: PathBuf },
}

impl TrackerSource {
    /// Parses the CLI form: `oracle`, `noisy`, `noisy:SIGMA:DROPOUT` or
    /// `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(TrackerSource::Oracle);
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(TrackerSource::File { path: path.into() });
        }
        if s == "noisy" {
            return Ok(TrackerSource::Noisy {
                sigma_px: 1.0,
                dropout_rate: 0.1,
            });
        }
        if let Some(rest) = s.strip_prefix("noisy:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let num = |x: &str| {
                x.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad tracker spec {s:?}")))
            };
            if parts.len() == 2 {
                return Ok(TrackerSource::Noisy {
                    sigma_px: num(parts[0])?,
                    dropout_rate: num(parts[1])?,
                });
            }
        }
        Err(Error::Config(format!(
            "unknown tracker {s:?} (expected oracle, noisy[:SIGMA:DROPOUT] or file:PATH)"
        )))
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn PointTracker>> {
        Ok(match self {
            TrackerSource::Oracle => Box::new(OracleTracker),
            TrackerSource::Noisy { sigma_px, dropout_rate } => {
                let p = NoiseParams {
                    sigma_px: *sigma_px,
                    dropout_rate: *dropout_rate,
                    seed,
                };
                p.validate()?;
                Box::new(NoisyOracleTracker(p))
            }
            TrackerSource::File { path } => Box::new(FileTracker::load(path)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub clip_length: usize,
    /// Frames between clip starts; defaults to `clip_length` (no overlap).
    pub clip_stride: Option<usize>,
    pub max_queries: usize,
    pub seed: u64,
    pub raycast: RaycastParams,
    pub compensation: CompensationParams,
    pub lift: LiftParams,
    pub init: InitRule,
    pub tracker: TrackerSource,
    pub autolabel: AutoLabelParams,
    pub strategy: Strategy,
    pub averaging: Averaging,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clip_length: 6,
            clip_stride: None,
            max_queries: DEFAULT_MAX_QUERIES,
            seed: 0,
            raycast: RaycastParams::default(),
            compensation: CompensationParams::default(),
            lift: LiftParams::default(),
            init: InitRule::Fresh,
            tracker: TrackerSource::Oracle,
            autolabel: AutoLabelParams::default(),
            strategy: Strategy::SeFlowPlusPlus,
            averaging: Averaging::Micro,
        }
    }
}

impl PipelineConfig {
    pub fn stride(&self) -> usize {
        self.clip_stride.unwrap_or(self.clip_length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_length < 2 {
            return Err(Error::Config(format!("clip_length {} must be at least 2", self.clip_length)));
        }
        if self.stride() == 0 {
            return Err(Error::Config("clip_stride must be positive".into()));
        }
        if self.max_queries == 0 {
            return Err(Error::Config("max_queries must be positive".into()));
        }
        self.raycast.validate()?;
        self.compensation.validate(self.clip_length)?;
        self.lift.validate()?;
        self.autolabel.validate()?;
        if let TrackerSource::Noisy { sigma_px, dropout_rate } = self.tracker {
            NoiseParams {
                sigma_px,
                dropout_rate,
                seed: 0,
            }
            .validate()?;
        }
        Ok(())
    }

    /// Resolves a configuration: defaults, then `file` (a partial JSON
    /// object), then `key.path=value` overrides. Values that parse as JSON
    /// are used as such, anything else as a string.
    pub fn resolve(file: Option<&Value>, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(PipelineConfig::default())?;
        if let Some(f) = file {
            if !f.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
            merge(&mut v, f);
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, key, value)?;
        }
        let cfg: PipelineConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(Some(&v), overrides)
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        sha256_hex(canonical_json(&v).as_bytes())
    }
}

fn merge(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
    }
    Err(Error::Config("empty override key".into()))
}

/// JSON with object keys sorted, so equal values hash equally.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let sorted: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, sort(v))).collect();
                Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(v)).expect("value serializes")
}

/// Counters for one (clip, camera) group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub clip_start: usize,
    pub camera_id: usize,
    pub queries: usize,
    pub moving: usize,
    pub cue_hits: usize,
}

#[derive(Clone, Debug)]
pub struct TrackCueOutput {
    pub labels: LabelSet,
    pub hits: Vec<CueHit>,
    pub votes: Vec<(GroupStats, Vec<MotionVote>)>,
}

impl TrackCueOutput {
    pub fn groups(&self) -> Vec<GroupStats> {
        self.votes.iter().map(|(g, _)| g.clone()).collect()
    }
}

struct GroupResult {
    stats: GroupStats,
    votes: Vec<MotionVote>,
    hits: Vec<CueHit>,
}

fn run_group(
    bundle: &SceneBundle,
    raycast: &[Vec<bool>],
    clip: &Clip,
    camera_id: usize,
    config: &PipelineConfig,
    tracker: &dyn PointTracker,
) -> Result<GroupResult> {
    let cam = &bundle.cameras[camera_id];
    let t = clip.start;
    let points = &bundle.frames[t].points;
    let queries = select_queries(points, &raycast[t], cam, camera_id, t, config.max_queries)?;
    let tracked = tracker.track(bundle, &queries, clip, cam)?;
    if tracked.len() != queries.len() {
        return Err(Error::Invariant(format!(
            "tracker returned {} trajectories for {} queries",
            tracked.len(),
            queries.len()
        )));
    }
    let poses = &bundle.poses[clip.frames()];
    let votes = queries
        .iter()
        .zip(&tracked)
        .map(|(q, tr)| {
            let rigid = rigid_trajectory(q.query_id, &points[q.point_index], poses, cam);
            compute_votes(tr, &rigid, &config.compensation)
        })
        .collect::<Result<Vec<_>>>()?;
    let moving = select_moving(&votes, &config.compensation);
    let hits = if moving.is_empty() {
        Vec::new()
    } else {
        let indices: Vec<_> = clip
            .frames()
            .map(|k| build_frame_index(k, camera_id, &bundle.frames[k].points, cam))
            .collect();
        let chosen: Vec<_> = moving.iter().map(|&i| &tracked[i]).collect();
        lift_cues(&chosen, &indices, cam, &config.lift)?
    };
    Ok(GroupResult {
        stats: GroupStats {
            clip_start: clip.start,
            camera_id,
            queries: queries.len(),
            moving: moving.len(),
            cue_hits: hits.len(),
        },
        votes,
        hits,
    })
}

/// Refines raycast masks with lifted image cues. Groups run on the current
/// worker pool; results are merged in (clip, camera) order.
pub fn run_trackcue(
    bundle: &SceneBundle,
    raycast: &[Vec<bool>],
    config: &PipelineConfig,
    tracker: &dyn PointTracker,
) -> Result<TrackCueOutput> {
    config.validate()?;
    if bundle.cameras.is_empty() {
        return Err(Error::Config("scene has no camera calibration".into()));
    }
    if raycast.len() != bundle.frame_count() {
        return Err(Error::LengthMismatch {
            what: "raycast masks vs frames",
            left: raycast.len(),
            right: bundle.frame_count(),
        });
    }
    let clips = split_into_clips(bundle.frame_count(), config.clip_length, config.stride())?;
    let tasks: Vec<(Clip, usize)> = clips
        .iter()
        .flat_map(|c| (0..bundle.cameras.len()).map(move |cam| (*c, cam)))
        .collect();
    let results = par::try_map(&tasks, |(clip, cam)| run_group(bundle, raycast, clip, *cam, config, tracker))?;

    let mut covered = vec![false; bundle.frame_count()];
    for c in &clips {
        for k in c.frames() {
            covered[k] = true;
        }
    }
    let mut hits: Vec<CueHit> = Vec::new();
    let mut votes = Vec::with_capacity(results.len());
    for r in results {
        hits.extend_from_slice(&r.hits);
        votes.push((r.stats, r.votes));
    }
    crate::lifting::canonicalize(&mut hits);
    let flags = cue_flags(&bundle.frame_sizes(), &hits)?;
    let mut labels = refine_labels(raycast, &flags, &covered, config.init)?;
    labels.params_hash = Some(config.hash());
    Ok(TrackCueOutput { labels, hits, votes })
}

/// Per-frame label set straight from raycast masks.
pub fn raycast_label_set(masks: Vec<Vec<bool>>, params_hash: Option<String>) -> LabelSet {
    LabelSet {
        source: "raycast".into(),
        params_hash,
        frames: masks
            .into_iter()
            .enumerate()
            .map(|(t, m)| FrameLabels::uniform(t, m, Provenance::Raycast))
            .collect(),
    }
}

pub fn evaluate_against_gt(bundle: &SceneBundle, masks: &[Vec<bool>], averaging: Averaging) -> Result<LabelQualityReport> {
    evaluate_sequence(masks, &bundle.gt_masks, averaging)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub dynamic_points: usize,
    pub total_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<LabelQualityReport>,
}

impl StageReport {
    fn new(stage: &str, labels: &LabelSet, bundle: &SceneBundle, averaging: Averaging) -> Result<Self> {
        let has_gt = bundle.gt_masks.len() == bundle.frame_count();
        Ok(Self {
            stage: stage.into(),
            dynamic_points: labels.dynamic_count(),
            total_points: labels.point_count(),
            metrics: if has_gt {
                Some(evaluate_against_gt(bundle, &labels.masks(), averaging)?)
            } else {
                None
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub stages: Vec<StageReport>,
    pub groups: Vec<GroupStats>,
    /// Hash of this report with `timings_ms` removed.
    pub content_hash: String,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn seal(&mut self) {
        self.content_hash = String::new();
        let mut v = serde_json::to_value(&*self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timings_ms");
            m.remove("content_hash");
        }
        self.content_hash = sha256_hex(canonical_json(&v).as_bytes());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Everything one `pipeline` run produces.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub raycast: LabelSet,
    pub trackcue: TrackCueOutput,
    pub autolabel: LabelSet,
    pub report: RunReport,
}

/// Raycast → refine → auto-label → evaluate on one scene.
pub fn run_pipeline(bundle: &SceneBundle, config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    let hash = config.hash();
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let rc_masks: Vec<Vec<bool>> = raycast_scene(bundle, &config.raycast)?
        .into_iter()
        .map(|m| m.mask)
        .collect();
    lap("raycast", &mut timings);
    let tracker = config.tracker.build(config.seed)?;
    let trackcue = run_trackcue(bundle, &rc_masks, config, tracker.as_ref())?;
    lap("trackcue", &mut timings);
    let mut auto = autolabel_scene(bundle, &trackcue.labels.masks(), config.strategy, &config.autolabel)?;
    auto.params_hash = Some(hash.clone());
    lap("autolabel", &mut timings);
    let raycast = raycast_label_set(rc_masks, Some(hash.clone()));

    let stages = vec![
        StageReport::new("raycast", &raycast, bundle, config.averaging)?,
        StageReport::new("trackcue", &trackcue.labels, bundle, config.averaging)?,
        StageReport::new(config.strategy.tag(), &auto, bundle, config.averaging)?,
    ];
    lap("evaluate", &mut timings);
    let mut report = RunReport {
        scene: bundle.config.name.clone(),
        config: config.clone(),
        config_hash: hash,
        stages,
        groups: trackcue.groups(),
        content_hash: String::new(),
        timings_ms: timings,
    };
    report.seal();
    Ok(PipelineRun {
        raycast,
        trackcue,
        autolabel: auto,
        report,
    })
}

impl PipelineRun {
    /// Writes `raycast/`, `trackcue/` (masks, `cues.jsonl`), `<strategy>/`
    /// and `report.json` under `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        self.raycast.write_dir(&out.join("raycast"))?;
        let tc = out.join("trackcue");
        self.trackcue.labels.write_dir(&tc)?;
        write_cue_log(&tc.join("cues.jsonl"), &self.trackcue.hits)?;
        self.autolabel.write_dir(&out.join(&self.autolabel.source))?;
        self.report.write(&out.join("report.json"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    ClipLength,
    TauDyn,
    ResolutionScale,
    TrackerNoise,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "clip-length" => Ok(SweepAxis::ClipLength),
            "tau-dyn" => Ok(SweepAxis::TauDyn),
            "resolution-scale" => Ok(SweepAxis::ResolutionScale),
            "tracker-noise" => Ok(SweepAxis::TrackerNoise),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::ClipLength => "clip_length",
            SweepAxis::TauDyn => "tau_dyn",
            SweepAxis::ResolutionScale => "resolution_scale",
            SweepAxis::TrackerNoise => "tracker_noise",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub report: LabelQualityReport,
}

/// Refined-label quality for each axis value, pooled over `bundles`.
/// Raycast masks are computed once per scene and shared by every row.
pub fn sweep(bundles: &[SceneBundle], config: &PipelineConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let masks: Vec<Vec<Vec<bool>>> = bundles
        .iter()
        .map(|b| Ok(raycast_scene(b, &config.raycast)?.into_iter().map(|m| m.mask).collect()))
        .collect::<Result<_>>()?;
    values
        .iter()
        .map(|&value| {
            let mut cfg = config.clone();
            let mut scale = None;
            match axis {
                SweepAxis::ClipLength => {
                    if value < 2.0 || value.fract() != 0.0 {
                        return Err(Error::Config(format!("clip length {value} must be an integer >= 2")));
                    }
                    cfg.clip_length = value as usize;
                    cfg.clip_stride = config.clip_stride;
                }
                SweepAxis::TauDyn => cfg.compensation.tau_dyn = value,
                SweepAxis::ResolutionScale => scale = Some(value),
                SweepAxis::TrackerNoise => {
                    let dropout_rate = match config.tracker {
                        TrackerSource::Noisy { dropout_rate, .. } => dropout_rate,
                        TrackerSource::Oracle => 0.0,
                        TrackerSource::File { .. } => {
                            return Err(Error::Config("tracker-noise sweep needs a simulated tracker".into()))
                        }
                    };
                    cfg.tracker = TrackerSource::Noisy {
                        sigma_px: value,
                        dropout_rate,
                    };
                }
            }
            cfg.validate()?;
            let tracker = cfg.tracker.build(cfg.seed)?;
            let reports = bundles
                .iter()
                .zip(&masks)
                .map(|(b, m)| {
                    let scaled;
                    let b = match scale {
                        Some(s) => {
                            let mut c = b.clone();
                            c.cameras = b.cameras.iter().map(|cam| cam.scaled(s)).collect::<Result<_>>()?;
                            scaled = c;
                            &scaled
                        }
                        None => b,
                    };
                    let out = run_trackcue(b, m, &cfg, tracker.as_ref())?;
                    evaluate_against_gt(b, &out.labels.masks(), cfg.averaging)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                axis,
                value,
                report: pool_reports(&reports),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,precision,recall,f1,accuracy,dynamic_iou,pred_dyn_ratio,gt_dyn_ratio,tp,fp,tn,fn\n");
    for r in rows {
        let q = &r.report;
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            r.axis.name(),
            r.value,
            q.precision,
            q.recall,
            q.f1,
            q.accuracy,
            q.dynamic_iou,
            q.pred_dyn_ratio,
            q.gt_dyn_ratio,
            q.tp,
            q.fp,
            q.tn,
            q.fn_
        );
    }
    s
}
