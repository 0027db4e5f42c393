//! Editable annotation sessions.
//!
//! A session starts from an initial state (labels, segment assignment and
//! per-segment predictions) and records every successful edit in an
//! append-only log. Replaying the log on the initial state reproduces the
//! current state exactly; [`AnnotationSession::replay`] does that and the
//! persisted form stores only the initial state plus the log.

mod store;

pub use store::{SaveLock, TileStore};

use crate::features::{TileContext, FEATURE_DIM};
use crate::forest::{ForestModel, Prediction};
use crate::mesh_io::{ClassId, TriangleMesh};
use crate::segmentation::{
    extract_planar_region, majority_label, oversegment, split_by_stroke, SegmentSet,
    SegmentationError, SegmentationParams,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown tile {0:?}")]
    UnknownTile(String),
    #[error("empty target")]
    EmptyTarget,
    #[error("face {0} does not exist")]
    UnknownFace(u32),
    #[error("segment {0} does not exist")]
    UnknownSegment(u32),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("prediction: {0}")]
    Model(String),
    #[error("session file: {0}")]
    Format(String),
    #[error("tile {0:?} is being saved by another writer")]
    Locked(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a label edit applies to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ids", rename_all = "snake_case")]
pub enum Target {
    Faces(Vec<u32>),
    Segments(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    AssignLabel {
        target: Target,
        class: ClassId,
    },
    SplitPlanar {
        segment: u32,
        max_distance: f64,
        max_angle: f64,
        min_region_faces: usize,
    },
    SplitStroke {
        stroke: Vec<u32>,
        max_distance: f64,
    },
}

/// What an edit changed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EditEffect {
    /// Relabelled faces with their previous labels.
    pub faces: Vec<u32>,
    pub old_labels: Vec<ClassId>,
    pub new_label: Option<ClassId>,
    /// Segments created by the edit.
    pub new_segments: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub op: EditOp,
    pub effect: EditEffect,
}

/// The replayable part of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub labels: Vec<ClassId>,
    /// Segment id per face.
    pub segments: Vec<u32>,
    /// Per segment; `None` when the session was opened without a model.
    pub predictions: Vec<Option<Prediction>>,
    pub confirmed: Vec<bool>,
}

/// Classifier plus the feature mask it was trained with.
pub struct Predictor<'a> {
    pub model: &'a ForestModel,
    pub mask: [bool; FEATURE_DIM],
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a ForestModel) -> Self {
        Predictor {
            model,
            mask: [true; FEATURE_DIM],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarThresholds {
    pub max_distance: f64,
    pub max_angle: f64,
    pub min_region_faces: usize,
}

#[derive(Clone, Debug)]
pub struct AnnotationSession {
    mesh: TriangleMesh,
    segments: SegmentSet,
    predictions: Vec<Option<Prediction>>,
    confirmed: Vec<bool>,
    initial: SessionState,
    log: Vec<EditRecord>,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AnnotationSession {
    /// Opens a tile. Segments come from the mesh's `segment_id`s when every
    /// face has one, otherwise from over-segmentation with `params`. With a
    /// predictor every segment is classified and its faces pre-labelled.
    pub fn open(
        mut mesh: TriangleMesh,
        predictor: Option<&Predictor>,
        params: &SegmentationParams,
    ) -> Result<AnnotationSession, SessionError> {
        let assignment: Vec<i32> = if mesh.face_segments().iter().all(|&s| s >= 0) {
            mesh.face_segments().to_vec()
        } else {
            let segs = oversegment(&mesh, params)?;
            segs.face_assignment().iter().map(|&s| s as i32).collect()
        };
        let segments = SegmentSet::from_assignment(&mesh, &assignment)?;
        let predictions = match predictor {
            None => vec![None; segments.len()],
            Some(p) => {
                let ctx = TileContext::new(&mesh, &segments).map_err(|e| SessionError::Model(e.to_string()))?;
                let x: Vec<_> = ctx.featurize_all().iter().map(|f| f.masked(&p.mask)).collect();
                let preds = p
                    .model
                    .predict_many(&x)
                    .map_err(|e| SessionError::Model(e.to_string()))?;
                let labels = segments
                    .face_assignment()
                    .iter()
                    .map(|&s| preds[s as usize].class)
                    .collect();
                mesh.set_face_labels(labels).expect("one label per face");
                preds.into_iter().map(Some).collect()
            }
        };
        segments.apply_to_mesh(&mut mesh);
        let initial = SessionState {
            labels: mesh.face_labels().to_vec(),
            segments: segments.face_assignment().to_vec(),
            predictions: predictions.clone(),
            confirmed: vec![false; mesh.face_count()],
        };
        Ok(AnnotationSession {
            confirmed: initial.confirmed.clone(),
            mesh,
            segments,
            predictions,
            initial,
            log: Vec::new(),
        })
    }

    /// Rebuilds a session from its initial state and edit log.
    pub fn replay(
        mesh: TriangleMesh,
        initial: SessionState,
        log: Vec<EditRecord>,
    ) -> Result<AnnotationSession, SessionError> {
        let mut s = AnnotationSession::from_state(mesh, initial)?;
        for rec in log {
            let effect = s.apply(&rec.op)?;
            if effect != rec.effect {
                return Err(SessionError::Format(format!(
                    "edit {} does not replay to its recorded effect",
                    rec.seq
                )));
            }
            s.log.push(rec);
        }
        Ok(s)
    }

    fn from_state(mut mesh: TriangleMesh, initial: SessionState) -> Result<AnnotationSession, SessionError> {
        let n = mesh.face_count();
        if initial.labels.len() != n || initial.segments.len() != n || initial.confirmed.len() != n {
            return Err(SessionError::Format("state does not match the mesh".into()));
        }
        let assignment: Vec<i32> = initial.segments.iter().map(|&s| s as i32).collect();
        let segments = SegmentSet::from_assignment(&mesh, &assignment)?;
        if segments.face_assignment() != initial.segments.as_slice()
            || initial.predictions.len() != segments.len()
        {
            return Err(SessionError::Format("segment ids are not dense".into()));
        }
        mesh.set_face_labels(initial.labels.clone()).expect("checked length");
        segments.apply_to_mesh(&mut mesh);
        Ok(AnnotationSession {
            confirmed: initial.confirmed.clone(),
            predictions: initial.predictions.clone(),
            mesh,
            segments,
            initial,
            log: Vec::new(),
        })
    }

    pub fn tile_id(&self) -> &str {
        self.mesh.tile_id()
    }

    /// The mesh with current labels and segment ids.
    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn segments(&self) -> &SegmentSet {
        &self.segments
    }

    pub fn predictions(&self) -> &[Option<Prediction>] {
        &self.predictions
    }

    pub fn confirmed(&self) -> &[bool] {
        &self.confirmed
    }

    pub fn log(&self) -> &[EditRecord] {
        &self.log
    }

    pub fn initial_state(&self) -> &SessionState {
        &self.initial
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            labels: self.mesh.face_labels().to_vec(),
            segments: self.segments.face_assignment().to_vec(),
            predictions: self.predictions.clone(),
            confirmed: self.confirmed.clone(),
        }
    }

    /// Confirmed area over the area that was not unclassified when the
    /// session opened. Faces that started unclassified count for neither.
    pub fn progress(&self) -> f64 {
        let mut done = 0.0;
        let mut total = 0.0;
        for f in 0..self.mesh.face_count() {
            if self.initial.labels[f].is_classified() {
                let a = self.mesh.face_area(f);
                total += a;
                if self.confirmed[f] {
                    done += a;
                }
            }
        }
        if total > 0.0 {
            done / total
        } else {
            0.0
        }
    }

    /// Area-majority current label of a segment.
    pub fn segment_class(&self, id: u32) -> ClassId {
        let seg = &self.segments.segments()[id as usize];
        majority_label(&self.mesh, &seg.face_ids, self.mesh.face_labels())
    }

    /// Top class probability of a segment; 1 without a model.
    pub fn segment_confidence(&self, id: u32) -> f64 {
        self.predictions[id as usize]
            .map(|p| p.confidence())
            .unwrap_or(1.0)
    }

    /// Segments with top probability `≤ prob_max`, area in
    /// `[area_min, area_max]` and, if given, current class `class`.
    pub fn filter_segments(
        &self,
        prob_max: f64,
        area_min: f64,
        area_max: f64,
        class: Option<ClassId>,
    ) -> Result<Vec<u32>, SessionError> {
        if !(0.0..=1.0).contains(&prob_max) {
            return Err(SessionError::InvalidFilter(format!("prob_max {prob_max} outside [0, 1]")));
        }
        if !(area_min >= 0.0 && area_min <= area_max) {
            return Err(SessionError::InvalidFilter(format!(
                "area range [{area_min}, {area_max}] is empty or negative"
            )));
        }
        Ok(self
            .segments
            .segments()
            .iter()
            .filter(|s| {
                self.segment_confidence(s.id) <= prob_max
                    && s.area >= area_min
                    && s.area <= area_max
                    && class.is_none_or(|c| self.segment_class(s.id) == c)
            })
            .map(|s| s.id)
            .collect())
    }

    pub fn assign_label(&mut self, target: Target, class: ClassId) -> Result<&EditRecord, SessionError> {
        self.record(EditOp::AssignLabel { target, class })
    }

    pub fn split_segment_planar(
        &mut self,
        segment: u32,
        t: &PlanarThresholds,
    ) -> Result<&EditRecord, SessionError> {
        self.record(EditOp::SplitPlanar {
            segment,
            max_distance: t.max_distance,
            max_angle: t.max_angle,
            min_region_faces: t.min_region_faces,
        })
    }

    pub fn split_by_stroke(&mut self, stroke: Vec<u32>, max_distance: f64) -> Result<&EditRecord, SessionError> {
        self.record(EditOp::SplitStroke { stroke, max_distance })
    }

    /// Applies `op` and appends it to the log. A failing op changes nothing.
    pub fn record(&mut self, op: EditOp) -> Result<&EditRecord, SessionError> {
        let effect = self.apply(&op)?;
        self.log.push(EditRecord {
            seq: self.log.len() as u64,
            timestamp_ms: now_ms(),
            op,
            effect,
        });
        Ok(self.log.last().expect("just pushed"))
    }

    fn apply(&mut self, op: &EditOp) -> Result<EditEffect, SessionError> {
        match op {
            EditOp::AssignLabel { target, class } => self.apply_label(target, *class),
            EditOp::SplitPlanar {
                segment,
                max_distance,
                max_angle,
                min_region_faces,
            } => {
                self.segments.get(*segment).map_err(|_| SessionError::UnknownSegment(*segment))?;
                let faces = extract_planar_region(
                    &self.mesh,
                    &self.segments,
                    *segment,
                    *max_distance,
                    *max_angle,
                    *min_region_faces,
                )?;
                let mut next = self.segments.clone();
                let created = next.carve(&self.mesh, *segment, &faces)?;
                Ok(self.adopt(next, created.into_iter().collect()))
            }
            EditOp::SplitStroke { stroke, max_distance } => {
                let next = split_by_stroke(&self.mesh, &self.segments, stroke, *max_distance)?;
                let created = (self.segments.len() as u32..next.len() as u32).collect();
                Ok(self.adopt(next, created))
            }
        }
    }

    /// Switches to `next`; new segments inherit the prediction of the
    /// segment their faces came from.
    fn adopt(&mut self, next: SegmentSet, created: Vec<u32>) -> EditEffect {
        for &id in &created {
            let first = next.segments()[id as usize].face_ids[0];
            let parent = self.segments.segment_of(first as usize);
            self.predictions.push(self.predictions[parent as usize]);
        }
        self.segments = next;
        self.segments.apply_to_mesh(&mut self.mesh);
        EditEffect {
            new_segments: created,
            ..Default::default()
        }
    }

    fn apply_label(&mut self, target: &Target, class: ClassId) -> Result<EditEffect, SessionError> {
        let mut faces: Vec<u32> = match target {
            Target::Faces(f) => {
                if let Some(&bad) = f.iter().find(|&&x| x as usize >= self.mesh.face_count()) {
                    return Err(SessionError::UnknownFace(bad));
                }
                f.clone()
            }
            Target::Segments(ids) => {
                let mut out = Vec::new();
                for &id in ids {
                    let seg = self.segments.get(id).map_err(|_| SessionError::UnknownSegment(id))?;
                    out.extend_from_slice(&seg.face_ids);
                }
                out
            }
        };
        faces.sort_unstable();
        faces.dedup();
        if faces.is_empty() {
            return Err(SessionError::EmptyTarget);
        }
        // A strict subset of a segment becomes its own segment.
        let mut by_segment: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &f in &faces {
            by_segment.entry(self.segments.segment_of(f as usize)).or_default().push(f);
        }
        let mut next = self.segments.clone();
        let mut created = Vec::new();
        for (seg, fs) in by_segment {
            if let Some(id) = next.carve(&self.mesh, seg, &fs)? {
                created.push(id);
            }
        }
        let mut effect = self.adopt(next, created);
        effect.old_labels = faces.iter().map(|&f| self.mesh.face_labels()[f as usize]).collect();
        for &f in &faces {
            self.mesh.set_face_label(f as usize, class);
            self.confirmed[f as usize] = true;
        }
        effect.faces = faces;
        effect.new_label = Some(class);
        Ok(effect)
    }
}
