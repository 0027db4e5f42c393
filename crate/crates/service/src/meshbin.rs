//! Binary mesh payload for tiles too large for JSON.
//!
//! Layout, all little-endian:
//!
//! | field        | type          | count          |
//! |--------------|---------------|----------------|
//! | magic        | `b"MLMB"`     | 4 bytes        |
//! | version      | u32           | 1              |
//! | positions    | u32 n, f32    | n = 3 × verts  |
//! | faces        | u32 n, u32    | n = 3 × faces  |
//! | face segment | u32 n, u32    | n = faces      |
//! | face label   | u32 n, u32    | n = faces      |
//! | confirmed    | u32 n, u32    | n = faces      |
//!
//! Positions are relative to the origin sent in the `x-mesh-origin` header
//! (`x,y,z` as decimal f64), which keeps f32 precision at map coordinates.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use meshlabel::session::AnnotationSession;
use std::io::{Cursor, Read};

pub const MAGIC: &[u8; 4] = b"MLMB";
pub const VERSION: u32 = 1;
pub const ORIGIN_HEADER: &str = "x-mesh-origin";

#[derive(Clone, Debug, PartialEq)]
pub struct MeshPayload {
    pub origin: [f64; 3],
    pub positions: Vec<f32>,
    pub faces: Vec<u32>,
    pub face_segment: Vec<u32>,
    pub face_label: Vec<u32>,
    pub confirmed: Vec<u32>,
}

impl MeshPayload {
    pub fn from_session(s: &AnnotationSession) -> MeshPayload {
        let mesh = s.mesh();
        let (lo, _) = mesh.bounding_box();
        let origin = [lo.x, lo.y, lo.z];
        MeshPayload {
            origin,
            positions: mesh
                .vertices()
                .iter()
                .flat_map(|p| [(p.x - lo.x) as f32, (p.y - lo.y) as f32, (p.z - lo.z) as f32])
                .collect(),
            faces: mesh.faces().iter().flatten().copied().collect(),
            face_segment: s.segments().face_assignment().to_vec(),
            face_label: mesh.face_labels().iter().map(|c| c.get() as u32).collect(),
            confirmed: s.confirmed().iter().map(|&c| c as u32).collect(),
        }
    }

    pub fn origin_header(&self) -> String {
        format!("{},{},{}", self.origin[0], self.origin[1], self.origin[2])
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * (self.positions.len() + 4 * self.face_segment.len() + 5));
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.positions.len() as u32).unwrap();
        for &v in &self.positions {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
        for arr in [&self.faces, &self.face_segment, &self.face_label, &self.confirmed] {
            out.write_u32::<LittleEndian>(arr.len() as u32).unwrap();
            for &v in arr.iter() {
                out.write_u32::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    /// Parses a body and its origin header.
    pub fn decode(bytes: &[u8], origin_header: &str) -> Result<MeshPayload, String> {
        let origin: Vec<f64> = origin_header
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let origin: [f64; 3] = origin.try_into().map_err(|_| "origin needs three values".to_string())?;
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| e.to_string())?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = |r: &mut Cursor<&[u8]>| -> Result<usize, String> {
            let n = r.read_u32::<LittleEndian>().map_err(|e| e.to_string())? as usize;
            if n * 4 > bytes.len() {
                return Err("array length exceeds payload".into());
            }
            Ok(n)
        };
        let n = count(&mut r)?;
        let mut positions = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut positions).map_err(|e| e.to_string())?;
        let mut arrays = Vec::with_capacity(4);
        for _ in 0..4 {
            let n = count(&mut r)?;
            let mut a = vec![0u32; n];
            r.read_u32_into::<LittleEndian>(&mut a).map_err(|e| e.to_string())?;
            arrays.push(a);
        }
        if r.position() as usize != bytes.len() {
            return Err("trailing bytes".into());
        }
        let confirmed = arrays.pop().unwrap();
        let face_label = arrays.pop().unwrap();
        let face_segment = arrays.pop().unwrap();
        let faces = arrays.pop().unwrap();
        Ok(MeshPayload {
            origin,
            positions,
            faces,
            face_segment,
            face_label,
            confirmed,
        })
    }
}
