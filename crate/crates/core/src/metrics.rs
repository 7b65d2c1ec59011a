//! Ground-truth dynamic labels and label-quality scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Per-point 3D motion over one frame interval (meters/frame).
pub type FlowField = Vec<Vec3>;

/// Residual-motion threshold separating static from dynamic points (meters).
pub const GT_DYNAMIC_THRESHOLD: f64 = 0.05;

/// Dynamic iff `‖f_gt − f_ego‖ > threshold` (strict).
pub fn gt_dynamic_mask(gt_flow: &[Vec3], ego_flow: &[Vec3], threshold: f64) -> Result<Vec<bool>> {
    if gt_flow.len() != ego_flow.len() {
        return Err(Error::LengthMismatch {
            what: "gt vs ego flow",
            left: gt_flow.len(),
            right: ego_flow.len(),
        });
    }
    Ok(gt_flow
        .iter()
        .zip(ego_flow)
        .map(|(g, e)| (g - e).norm() > threshold)
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_masks(pred: &[bool], gt: &[bool]) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::LengthMismatch {
                what: "predicted vs ground-truth mask",
                left: pred.len(),
                right: gt.len(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gt) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Self {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

/// Precision/recall family for the dynamic class. Fractions, not percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelQualityReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub dynamic_iou: f64,
    pub pred_dyn_ratio: f64,
    pub gt_dyn_ratio: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl LabelQualityReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let (precision, d1) = ratio(c.tp, c.tp + c.fp);
        let (recall, d2) = ratio(c.tp, c.tp + c.fn_);
        let (f1, d3) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        let (dynamic_iou, d4) = ratio(c.tp, c.tp + c.fp + c.fn_);
        let (accuracy, d5) = ratio(c.tp + c.tn, c.total());
        let (pred_dyn_ratio, _) = ratio(c.tp + c.fp, c.total());
        let (gt_dyn_ratio, _) = ratio(c.tp + c.fn_, c.total());
        if d1 || d2 || d3 || d4 || d5 {
            log::debug!("label report with zero denominators: {c:?}");
        }
        LabelQualityReport {
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
            precision,
            recall,
            f1,
            accuracy,
            dynamic_iou,
            pred_dyn_ratio,
            gt_dyn_ratio,
            degenerate: d1 || d2 || d3 || d4 || d5,
        }
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }
}

pub fn evaluate_labels(pred: &[bool], gt: &[bool]) -> Result<LabelQualityReport> {
    Ok(LabelQualityReport::from_confusion(Confusion::from_masks(pred, gt)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pool confusion counts over all frames, then score.
    #[default]
    Micro,
    /// Score each frame, then average the scores.
    Macro,
}

/// Scores a sequence of frames.
pub fn evaluate_sequence(
    pred: &[Vec<bool>],
    gt: &[Vec<bool>],
    averaging: Averaging,
) -> Result<LabelQualityReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "predicted vs ground-truth frames",
            left: pred.len(),
            right: gt.len(),
        });
    }
    let per_frame = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| Confusion::from_masks(p, g))
        .collect::<Result<Vec<_>>>()?;
    let pooled: Confusion = per_frame.iter().copied().sum();
    let mut report = LabelQualityReport::from_confusion(pooled);
    if averaging == Averaging::Macro && !per_frame.is_empty() {
        let reports: Vec<LabelQualityReport> =
            per_frame.into_iter().map(LabelQualityReport::from_confusion).collect();
        let n = reports.len() as f64;
        let mean = |f: fn(&LabelQualityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        report.precision = mean(|r| r.precision);
        report.recall = mean(|r| r.recall);
        report.f1 = mean(|r| r.f1);
        report.accuracy = mean(|r| r.accuracy);
        report.dynamic_iou = mean(|r| r.dynamic_iou);
        report.degenerate = reports.iter().any(|r| r.degenerate);
    }
    Ok(report)
}

/// Micro-pools several already-computed reports (e.g. scenes of a suite).
pub fn pool_reports<'a>(reports: impl IntoIterator<Item = &'a LabelQualityReport>) -> LabelQualityReport {
    LabelQualityReport::from_confusion(reports.into_iter().map(|r| r.confusion()).sum())
}
