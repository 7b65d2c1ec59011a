//! `trackcue` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use log::info;

use trackcue::autolabel::autolabel_scene;
use trackcue::geometry::CameraModel;
use trackcue::labels::read_mask_dir;
use trackcue::lifting::write_cue_log;
use trackcue::motion::write_vote_dump;
use trackcue::par;
use trackcue::pipeline::{
    evaluate_against_gt, raycast_label_set, run_pipeline, run_trackcue, sweep, sweep_csv, PipelineConfig, SweepAxis,
    TrackerSource,
};
use trackcue::raycast::raycast_scene;
use trackcue::sim::{generate_scene, standard_suite, suite_scene, SceneBundle, SceneConfig};
use trackcue::tracking::{
    save_trajectories, select_queries, split_into_clips, Clip, PointTracker, Query, TrackedTrajectory,
};
use trackcue::{Error, Result};

#[derive(Parser)]
#[command(name = "trackcue", version, about = "Refine LiDAR dynamic-point labels with image point tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON pipeline configuration (partial; defaults fill the rest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set lift.top_k=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run seed (noisy tracker, false-void injection).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// oracle, noisy, noisy:SIGMA:DROPOUT or file:PATH
    #[arg(long)]
    tracker: Option<String>,
    /// Frames between clip starts (default: the clip length).
    #[arg(long)]
    clip_stride: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut overrides = self.set.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(c) = self.clip_stride {
            overrides.push(format!("clip_stride={c}"));
        }
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p, &overrides)?,
            None => PipelineConfig::resolve(None, &overrides)?,
        };
        if let Some(t) = &self.tracker {
            cfg.tracker = TrackerSource::parse(t)?;
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scene bundles.
    Simulate {
        /// Standard-suite scene name.
        #[arg(long, conflicts_with_all = ["all", "scene_config"])]
        name: Option<String>,
        /// Write every standard-suite scene under OUT/<name>.
        #[arg(long)]
        all: bool,
        /// Scene configuration JSON.
        #[arg(long)]
        scene_config: Option<PathBuf>,
        /// Overrides the scene's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ray-casting dynamic masks for a scene.
    Raycast {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Refine raycast masks with lifted track cues.
    Trackcue {
        #[arg(long)]
        scene: PathBuf,
        /// Directory of raycast masks; computed from the scene if absent.
        #[arg(long)]
        raycast: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the tracker queries (JSON lines) here before tracking.
        #[arg(long)]
        export_queries: Option<PathBuf>,
        /// Write the trajectories the tracker returned here.
        #[arg(long)]
        save_tracks: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Auto-label a scene from a source mask directory.
    Autolabel {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a mask directory against the scene's ground truth.
    Evaluate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Refined-label quality over a range of one parameter.
    Sweep {
        /// Scene bundle directories; the standard suite if none given.
        #[arg(long)]
        scene: Vec<PathBuf>,
        /// clip-length, tau-dyn, resolution-scale or tracker-noise
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// CSV output file (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Raycast, refine, auto-label and evaluate in one go.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            name,
            all,
            scene_config,
            seed,
            out,
        } => simulate(name, all, scene_config, seed, &out),
        Command::Raycast { scene, out, common } => {
            let cfg = common.resolve()?;
            let bundle = SceneBundle::read_dir(&scene)?;
            par::with_workers(common.workers, || {
                let masks = raycast_masks(&bundle, &cfg)?;
                raycast_label_set(masks, Some(cfg.hash())).write_dir(&out)?;
                write_config(&out, &cfg)
            })
        }
        Command::Trackcue {
            scene,
            raycast,
            out,
            export_queries,
            save_tracks,
            common,
        } => {
            let cfg = common.resolve()?;
            let bundle = SceneBundle::read_dir(&scene)?;
            par::with_workers(common.workers, || {
                let masks = match &raycast {
                    Some(dir) => read_masks(dir, &bundle)?,
                    None => raycast_masks(&bundle, &cfg)?,
                };
                if let Some(path) = &export_queries {
                    write_queries(path, &bundle, &masks, &cfg)?;
                }
                let tracker = Recorder {
                    inner: cfg.tracker.build(cfg.seed)?,
                    seen: Mutex::new(Vec::new()),
                };
                let output = run_trackcue(&bundle, &masks, &cfg, &tracker)?;
                output.labels.write_dir(&out)?;
                write_cue_log(&out.join("cues.jsonl"), &output.hits)?;
                let votes = out.join("votes");
                fs::create_dir_all(&votes).map_err(|e| Error::io(&votes, e))?;
                for (g, v) in &output.votes {
                    write_vote_dump(&votes.join(format!("clip_{:04}_cam_{}.jsonl", g.clip_start, g.camera_id)), v)?;
                }
                if let Some(path) = &save_tracks {
                    let mut seen = tracker.seen.into_inner().expect("tracker lock is not poisoned");
                    seen.sort_by_key(|t| (t.camera_id, t.clip_start, t.query_id));
                    save_trajectories(path, &seen)?;
                }
                info!(
                    "{} groups, {} cue hits, dynamic ratio {:.4}",
                    output.votes.len(),
                    output.hits.len(),
                    output.labels.dynamic_ratio()
                );
                write_config(&out, &cfg)
            })
        }
        Command::Autolabel {
            scene,
            source,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let bundle = SceneBundle::read_dir(&scene)?;
            par::with_workers(common.workers, || {
                let masks = read_masks(&source, &bundle)?;
                let mut labels = autolabel_scene(&bundle, &masks, cfg.strategy, &cfg.autolabel)?;
                labels.params_hash = Some(cfg.hash());
                labels.write_dir(&out)?;
                write_config(&out, &cfg)
            })
        }
        Command::Evaluate {
            scene,
            labels,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let bundle = SceneBundle::read_dir(&scene)?;
            let masks = read_masks(&labels, &bundle)?;
            let report = evaluate_against_gt(&bundle, &masks, cfg.averaging)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            print!("{text}");
            if let Some(path) = out {
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Sweep {
            scene,
            axis,
            values,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let axis = SweepAxis::parse(&axis)?;
            let bundles = if scene.is_empty() {
                standard_suite()
                    .iter()
                    .map(|c| generate_scene(c, c.seed))
                    .collect::<Result<Vec<_>>>()?
            } else {
                scene.iter().map(|d| SceneBundle::read_dir(d)).collect::<Result<Vec<_>>>()?
            };
            let rows = par::with_workers(common.workers, || sweep(&bundles, &cfg, axis, &values))?;
            let csv = sweep_csv(&rows);
            match out {
                Some(path) => fs::write(&path, csv).map_err(|e| Error::io(&path, e))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Pipeline { scene, out, common } => {
            let cfg = common.resolve()?;
            let bundle = SceneBundle::read_dir(&scene)?;
            let run = par::with_workers(common.workers, || run_pipeline(&bundle, &cfg))?;
            run.write(&out)?;
            for s in &run.report.stages {
                match &s.metrics {
                    Some(m) => info!(
                        "{:>9}: P {:.2} R {:.2} F1 {:.2} ({} dynamic)",
                        s.stage,
                        100.0 * m.precision,
                        100.0 * m.recall,
                        100.0 * m.f1,
                        s.dynamic_points
                    ),
                    None => info!("{:>9}: {} dynamic", s.stage, s.dynamic_points),
                }
            }
            Ok(())
        }
    }
}

fn simulate(name: Option<String>, all: bool, scene_config: Option<PathBuf>, seed: Option<u64>, out: &Path) -> Result<()> {
    let write = |cfg: &SceneConfig, dir: &Path| -> Result<()> {
        let bundle = generate_scene(cfg, seed.unwrap_or(cfg.seed))?;
        bundle.write_dir(dir)?;
        info!(
            "{}: {} frames, GT dynamic ratio {:.4} -> {}",
            cfg.name,
            bundle.frame_count(),
            bundle.gt_dynamic_ratio(),
            dir.display()
        );
        Ok(())
    };
    if all {
        for cfg in standard_suite() {
            write(&cfg, &out.join(&cfg.name))?;
        }
        return Ok(());
    }
    let cfg = match (name, scene_config) {
        (Some(n), _) => {
            suite_scene(&n).ok_or_else(|| Error::Config(format!("no standard-suite scene named {n:?}")))?
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(Error::Config("simulate needs --name, --all or --scene-config".into())),
    };
    write(&cfg, out)
}

fn raycast_masks(bundle: &SceneBundle, cfg: &PipelineConfig) -> Result<Vec<Vec<bool>>> {
    Ok(raycast_scene(bundle, &cfg.raycast)?.into_iter().map(|m| m.mask).collect())
}

fn read_masks(dir: &Path, bundle: &SceneBundle) -> Result<Vec<Vec<bool>>> {
    let masks: Vec<Vec<bool>> = read_mask_dir(dir, bundle.frame_count())?
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    for (t, (m, f)) in masks.iter().zip(&bundle.frames).enumerate() {
        if m.len() != f.len() {
            return Err(Error::Format(format!(
                "{}: frame {t} mask has {} entries, scene frame has {} points",
                dir.display(),
                m.len(),
                f.len()
            )));
        }
    }
    Ok(masks)
}

fn write_config(out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let path = out.join("config.json");
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    fs::write(&path, serde_json::to_string_pretty(cfg)? + "\n").map_err(|e| Error::io(&path, e))
}

/// Every query the pipeline will hand to the tracker, one JSON object per
/// line, so an external tracker can answer them through a trajectory file.
fn write_queries(path: &Path, bundle: &SceneBundle, masks: &[Vec<bool>], cfg: &PipelineConfig) -> Result<()> {
    let mut buf = Vec::new();
    for clip in split_into_clips(bundle.frame_count(), cfg.clip_length, cfg.stride())? {
        for (camera_id, cam) in bundle.cameras.iter().enumerate() {
            let t = clip.start;
            for q in select_queries(&bundle.frames[t].points, &masks[t], cam, camera_id, t, cfg.max_queries)? {
                serde_json::to_writer(&mut buf, &q)?;
                buf.push(b'\n');
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Passes calls through and keeps a copy of every trajectory returned.
struct Recorder {
    inner: Box<dyn PointTracker>,
    seen: Mutex<Vec<TrackedTrajectory>>,
}

impl PointTracker for Recorder {
    fn track(&self, scene: &SceneBundle, queries: &[Query], clip: &Clip, cam: &CameraModel) -> Result<Vec<TrackedTrajectory>> {
        let out = self.inner.track(scene, queries, clip, cam)?;
        self.seen.lock().expect("tracker lock is not poisoned").extend(out.iter().cloned());
        Ok(out)
    }
}
