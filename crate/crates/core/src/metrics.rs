//! Area-weighted confusion matrices and per-class reports.
//!
//! Faces are weighted by surface area, not counted. Faces whose ground truth
//! is unclassified are skipped; a face predicted as unclassified is always an
//! error and lands in a separate column that no class is credited with.

use crate::mesh_io::{ClassId, TriangleMesh};
use crate::segmentation::{upper_bound_labels, SegmentSet};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::ops::{Add, AddAssign};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("meshes differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("confusion matrix holds no area")]
    Empty,
    #[error("no reports to aggregate")]
    NoReports,
}

/// Rows are ground-truth classes 1..=6; column 0 is "predicted unclassified",
/// columns 1..=6 the predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub area: [[f64; 7]; 6],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `area` for one face; unclassified ground truth is ignored.
    pub fn add_area(&mut self, gt: ClassId, pred: ClassId, area: f64) {
        if gt.is_classified() {
            self.area[gt.slot()][pred.get() as usize] += area;
        }
    }

    /// Adds every face of `gt` with its label in `pred`.
    pub fn accumulate(&mut self, gt: &TriangleMesh, pred: &TriangleMesh) -> Result<(), MetricsError> {
        if gt.face_count() != pred.face_count() || gt.vertex_count() != pred.vertex_count() {
            return Err(MetricsError::ShapeMismatch(format!(
                "{} faces / {} vertices vs {} faces / {} vertices",
                gt.face_count(),
                gt.vertex_count(),
                pred.face_count(),
                pred.vertex_count()
            )));
        }
        if gt.faces() != pred.faces() {
            return Err(MetricsError::ShapeMismatch("face connectivity differs".into()));
        }
        self.accumulate_labels(gt, pred.face_labels())
    }

    /// Adds every face of `gt` with the predicted label `pred[face]`.
    pub fn accumulate_labels(
        &mut self,
        gt: &TriangleMesh,
        pred: &[ClassId],
    ) -> Result<(), MetricsError> {
        if pred.len() != gt.face_count() {
            return Err(MetricsError::ShapeMismatch(format!(
                "{} predictions for {} faces",
                pred.len(),
                gt.face_count()
            )));
        }
        for (f, (&g, &p)) in gt.face_labels().iter().zip(pred).enumerate() {
            self.add_area(g, p, gt.face_area(f));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.area.iter().flatten().sum()
    }

    /// Ground-truth area of class slot `k`.
    pub fn gt_area(&self, k: usize) -> f64 {
        self.area[k].iter().sum()
    }

    /// Area predicted as class slot `k`.
    pub fn pred_area(&self, k: usize) -> f64 {
        self.area.iter().map(|row| row[k + 1]).sum()
    }

    pub fn true_positive(&self, k: usize) -> f64 {
        self.area[k][k + 1]
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        for (r, ro) in self.area.iter_mut().zip(o.area) {
            for (x, y) in r.iter_mut().zip(ro) {
                *x += y;
            }
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::new(), Add::add)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassId,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub gt_area: f64,
    pub pred_area: f64,
    /// Whether the class has ground-truth or predicted area; only present
    /// classes enter the means.
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub oa: f64,
    pub macc: f64,
    pub miou: f64,
    pub mf1: f64,
    pub total_area: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Precision, recall, F1 and IoU per class plus OA and the class means.
/// Undefined ratios are 0.
pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total <= 0.0 {
        return Err(MetricsError::Empty);
    }
    let per_class: Vec<ClassMetrics> = ClassId::LABELLED
        .iter()
        .enumerate()
        .map(|(k, &class)| {
            let tp = cm.true_positive(k);
            let gt = cm.gt_area(k);
            let pred = cm.pred_area(k);
            let precision = ratio(tp, pred);
            let recall = ratio(tp, gt);
            ClassMetrics {
                class,
                name: class.name().to_string(),
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                iou: ratio(tp, gt + pred - tp),
                gt_area: gt,
                pred_area: pred,
                present: gt > 0.0 || pred > 0.0,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.present).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    let diag: f64 = (0..6).map(|k| cm.true_positive(k)).sum();
    Ok(MetricsReport {
        oa: diag / total,
        macc: mean(|c| c.recall),
        miou: mean(|c| c.iou),
        mf1: mean(|c| c.f1),
        total_area: total,
        per_class,
    })
}

/// Metrics of `mesh`'s ground truth against its own area-majority segment labels.
pub fn evaluate_upper_bound(
    mesh: &TriangleMesh,
    segments: &SegmentSet,
) -> Result<MetricsReport, MetricsError> {
    let mut cm = ConfusionMatrix::new();
    cm.accumulate_labels(mesh, &upper_bound_labels(mesh, segments))?;
    report(&cm)
}

/// Per-class CSV: `class,precision,recall,f1,iou,upper_bound_iou`, fractions
/// in `[0, 1]`; the last column is empty without an upper-bound report.
pub fn write_class_table(
    out: impl Write,
    rep: &MetricsReport,
    upper: Option<&MetricsReport>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "precision", "recall", "f1", "iou", "upper_bound_iou"])?;
    for (k, c) in rep.per_class.iter().enumerate() {
        let ub = upper.map(|u| u.per_class[k].iou.to_string()).unwrap_or_default();
        w.write_record([
            c.name.clone(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            c.iou.to_string(),
            ub,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub oa: MeanStd,
    pub macc: MeanStd,
    pub miou: MeanStd,
    pub mf1: MeanStd,
    /// Per-class IoU over runs, in class order 1..=6.
    pub class_iou: Vec<MeanStd>,
}

/// Mean and standard deviation of repeated runs.
pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let col = |f: &dyn Fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        runs: reports.len(),
        oa: col(&|r| r.oa),
        macc: col(&|r| r.macc),
        miou: col(&|r| r.miou),
        mf1: col(&|r| r.mf1),
        class_iou: (0..6).map(|k| col(&|r| r.per_class[k].iou)).collect(),
    })
}
