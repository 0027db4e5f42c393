//! A directory of tiles with their persisted sessions.
//!
//! `<tile>.ply` holds the mesh with the current labels and segment ids;
//! `<tile>.session.json` holds the initial state and the edit log. A save
//! holds `<tile>.save.lock` for its duration.

use super::{AnnotationSession, EditRecord, Predictor, SessionError, SessionState};
use crate::mesh_io::{write_ply, PlyFormat};
use crate::segmentation::SegmentationParams;
use crate::workflow::{load_tile, write_atomic};
use serde::{Deserialize, Serialize};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

const SESSION_FORMAT: &str = "meshlabel-session";
const SESSION_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SessionFile {
    format: String,
    version: u32,
    tile_id: String,
    initial: SessionState,
    log: Vec<EditRecord>,
}

#[derive(Clone, Debug)]
pub struct TileStore {
    dir: PathBuf,
}

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct SaveLock {
    path: PathBuf,
}

impl Drop for SaveLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl TileStore {
    pub fn new(dir: impl Into<PathBuf>) -> TileStore {
        TileStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ply_path(&self, tile_id: &str) -> PathBuf {
        self.dir.join(format!("{tile_id}.ply"))
    }

    pub fn session_path(&self, tile_id: &str) -> PathBuf {
        self.dir.join(format!("{tile_id}.session.json"))
    }

    fn lock_path(&self, tile_id: &str) -> PathBuf {
        self.dir.join(format!("{tile_id}.save.lock"))
    }

    /// Tile ids (PLY file stems), sorted.
    pub fn list(&self) -> Result<Vec<String>, SessionError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "ply") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(stem.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn check_id(&self, tile_id: &str) -> Result<(), SessionError> {
        let plain = !tile_id.is_empty()
            && !tile_id.contains(['/', '\\'])
            && tile_id != "."
            && tile_id != "..";
        if plain && self.ply_path(tile_id).is_file() {
            Ok(())
        } else {
            Err(SessionError::UnknownTile(tile_id.to_string()))
        }
    }

    /// Opens a tile. A saved session is replayed from its log and must agree
    /// with the labels and segments in the PLY; otherwise a fresh session
    /// starts, pre-labelled by `predictor` if given.
    pub fn open(
        &self,
        tile_id: &str,
        predictor: Option<&Predictor>,
        params: &SegmentationParams,
    ) -> Result<AnnotationSession, SessionError> {
        self.check_id(tile_id)?;
        let mut mesh = load_tile(&self.ply_path(tile_id)).map_err(|e| SessionError::Format(e.to_string()))?;
        mesh.set_tile_id(tile_id);
        let session_path = self.session_path(tile_id);
        if !session_path.is_file() {
            return AnnotationSession::open(mesh, predictor, params);
        }
        let file: SessionFile = serde_json::from_slice(&std::fs::read(&session_path)?)
            .map_err(|e| SessionError::Format(e.to_string()))?;
        if file.format != SESSION_FORMAT || file.version != SESSION_VERSION {
            return Err(SessionError::Format(format!(
                "unsupported session file {} v{}",
                file.format, file.version
            )));
        }
        let saved_labels = mesh.face_labels().to_vec();
        let saved_segments = mesh.face_segments().to_vec();
        let s = AnnotationSession::replay(mesh, file.initial, file.log)?;
        let same_segments = s
            .segments()
            .face_assignment()
            .iter()
            .zip(&saved_segments)
            .all(|(&a, &b)| a as i32 == b);
        if s.mesh().face_labels() != saved_labels.as_slice() || !same_segments {
            return Err(SessionError::Format(format!(
                "session log of {tile_id:?} does not match its mesh"
            )));
        }
        Ok(s)
    }

    /// Takes the save lock of a tile; fails if another writer holds it.
    pub fn lock(&self, tile_id: &str) -> Result<SaveLock, SessionError> {
        let path = self.lock_path(tile_id);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(SaveLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(SessionError::Locked(tile_id.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Writes the mesh and the session file, each atomically.
    pub fn save(&self, session: &AnnotationSession) -> Result<(), SessionError> {
        let tile_id = session.tile_id();
        self.check_id(tile_id)?;
        let _lock = self.lock(tile_id)?;
        let file = SessionFile {
            format: SESSION_FORMAT.into(),
            version: SESSION_VERSION,
            tile_id: tile_id.to_string(),
            initial: session.initial_state().clone(),
            log: session.log().to_vec(),
        };
        let json = serde_json::to_vec(&file).map_err(|e| SessionError::Format(e.to_string()))?;
        write_atomic(&self.ply_path(tile_id), &write_ply(session.mesh(), PlyFormat::BinaryLittleEndian))?;
        write_atomic(&self.session_path(tile_id), &json)?;
        Ok(())
    }
}
