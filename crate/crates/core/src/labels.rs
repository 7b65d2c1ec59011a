//! Per-frame static/dynamic label files and label sets.
//!
//! A mask file is one JSON header line followed by one `0`/`1` line per
//! point:
//!
//! ```text
//! {"frame":3,"count":1874,"source":"trackcue","params_hash":"9f0c…"}
//! 0
//! 1
//! …
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::parse_bits;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub frame: usize,
    pub count: usize,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_hash: Option<String>,
}

pub fn mask_file_name(frame: usize) -> String {
    format!("mask_{frame:04}.txt")
}

pub fn format_mask(header: &MaskHeader, mask: &[bool]) -> Result<String> {
    if header.count != mask.len() {
        return Err(Error::LengthMismatch {
            what: "mask header count vs mask",
            left: header.count,
            right: mask.len(),
        });
    }
    let mut s = serde_json::to_string(header)?;
    s.reserve(mask.len() * 2 + 1);
    s.push('\n');
    for b in mask {
        s.push_str(if *b { "1\n" } else { "0\n" });
    }
    Ok(s)
}

pub fn parse_mask(text: &str, name: &str) -> Result<(MaskHeader, Vec<bool>)> {
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let header: MaskHeader = serde_json::from_str(head)
        .map_err(|e| Error::Format(format!("{name}: bad header: {e}")))?;
    let mask = parse_bits(body, name)?;
    if mask.len() != header.count {
        return Err(Error::Format(format!(
            "{name}: header count {} but {} entries",
            header.count,
            mask.len()
        )));
    }
    Ok((header, mask))
}

pub fn write_mask(dir: &Path, header: &MaskHeader, mask: &[bool]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(mask_file_name(header.frame));
    fs::write(&path, format_mask(header, mask)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_mask(path: &Path) -> Result<(MaskHeader, Vec<bool>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text, &path.display().to_string())
}

/// Reads `mask_0000.txt .. mask_{n-1}.txt` from `dir`.
pub fn read_mask_dir(dir: &Path, frames: usize) -> Result<Vec<(MaskHeader, Vec<bool>)>> {
    (0..frames)
        .map(|t| {
            let (h, m) = read_mask(&dir.join(mask_file_name(t)))?;
            if h.frame != t {
                return Err(Error::Format(format!("{}: header frame {} != {t}", dir.display(), h.frame)));
            }
            Ok((h, m))
        })
        .collect()
}

/// What produced a point's final label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raycast,
    Lifted,
    Autolabeler,
    Gt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameLabels {
    pub frame: usize,
    pub dynamic: Vec<bool>,
    pub provenance: Vec<Provenance>,
    /// Lifted image-cue flags `e` for this frame.
    pub cue: Vec<bool>,
}

impl FrameLabels {
    pub fn uniform(frame: usize, dynamic: Vec<bool>, provenance: Provenance) -> Self {
        let n = dynamic.len();
        Self {
            frame,
            dynamic,
            provenance: vec![provenance; n],
            cue: vec![false; n],
        }
    }
}

/// Static/dynamic labels for a sequence of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub source: String,
    pub params_hash: Option<String>,
    pub frames: Vec<FrameLabels>,
}

impl LabelSet {
    pub fn masks(&self) -> Vec<Vec<bool>> {
        self.frames.iter().map(|f| f.dynamic.clone()).collect()
    }

    pub fn dynamic_count(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.dynamic.iter().filter(|b| **b).count())
            .sum()
    }

    pub fn point_count(&self) -> usize {
        self.frames.iter().map(|f| f.dynamic.len()).sum()
    }

    pub fn dynamic_ratio(&self) -> f64 {
        let n = self.point_count();
        if n == 0 {
            0.0
        } else {
            self.dynamic_count() as f64 / n as f64
        }
    }

    pub fn header(&self, frame: &FrameLabels) -> MaskHeader {
        MaskHeader {
            frame: frame.frame,
            count: frame.dynamic.len(),
            source: self.source.clone(),
            params_hash: self.params_hash.clone(),
        }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for f in &self.frames {
            write_mask(dir, &self.header(f), &f.dynamic)?;
        }
        Ok(())
    }

    /// Summary line per frame, used in reports.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            let _ = write!(s, "{}:{} ", f.frame, f.dynamic.iter().filter(|b| **b).count());
        }
        s
    }
}
