//! PLY 1.0 reader and writer (ASCII and binary little endian).
//!
//! Recognised vertex properties: `x y z`, colour as `red green blue` (or
//! `r g b`). Recognised face properties: `vertex_indices` (or
//! `vertex_index`), `label`, `segment_id`, and face colour. Everything else
//! is parsed and dropped. The writer stores the tile id in a
//! `comment tile_id <id>` header line.

use super::{ClassId, ColorSample, MeshError, TriangleMesh};
use crate::sampling::SampledPointCloud;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Point3;
use std::io::{Cursor, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    tile_id: Option<String>,
    body_offset: usize,
}

fn header_err(msg: impl Into<String>) -> MeshError {
    MeshError::Header(msg.into())
}

fn body_err(msg: impl Into<String>) -> MeshError {
    MeshError::Body(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header, MeshError> {
    let mut offset = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err("missing end_header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| header_err("header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .to_string();
        offset += nl + 1;
        let done = line.trim() == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }

    let mut it = lines.iter();
    if it.next().map(|l| l.trim()) != Some("ply") {
        return Err(header_err("missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut tile_id = None;
    for line in it {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let f = tok.next().ok_or_else(|| header_err("format line"))?;
                let version = tok.next().unwrap_or("");
                if version != "1.0" {
                    return Err(header_err(format!("unsupported version {version:?}")));
                }
                format = Some(match f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(header_err(format!("unsupported format {other}"))),
                });
            }
            Some("comment") => {
                if tok.next() == Some("tile_id") {
                    let id: Vec<&str> = tok.collect();
                    tile_id = Some(id.join(" "));
                }
            }
            Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| header_err("element name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| header_err(format!("element {name} count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err("property before any element"))?;
                let ty = tok.next().ok_or_else(|| header_err("property type"))?;
                let kind = if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) if !count.is_float() => {
                            PropKind::List { count, item }
                        }
                        _ => return Err(header_err("bad list property types")),
                    }
                } else {
                    PropKind::Scalar(
                        Scalar::parse(ty)
                            .ok_or_else(|| header_err(format!("unknown type {ty}")))?,
                    )
                };
                let name = tok.next().ok_or_else(|| header_err("property name"))?;
                el.props.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            Some("end_header") => {}
            Some(other) => return Err(header_err(format!("unexpected keyword {other}"))),
            None => {}
        }
    }
    let format = format.ok_or_else(|| header_err("missing format line"))?;
    Ok(Header {
        format,
        elements,
        tile_id,
        body_offset: offset,
    })
}

trait ValueReader {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, MeshError>;
    fn end_row(&mut self) -> Result<(), MeshError> {
        Ok(())
    }
}

struct AsciiReader<'a> {
    lines: std::str::Lines<'a>,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> AsciiReader<'a> {
    fn new(text: &'a str) -> Self {
        AsciiReader {
            lines: text.lines(),
            tokens: Vec::new().into_iter(),
        }
    }
}

impl ValueReader for AsciiReader<'_> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        loop {
            if let Some(t) = self.tokens.next() {
                let v: f64 = t
                    .parse()
                    .map_err(|_| body_err(format!("bad number {t:?}")))?;
                if !ty.is_float() && v.fract() != 0.0 {
                    return Err(body_err(format!("expected integer, got {t:?}")));
                }
                return Ok(v);
            }
            let line = self
                .lines
                .next()
                .ok_or_else(|| body_err("unexpected end of data"))?;
            self.tokens = line.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn end_row(&mut self) -> Result<(), MeshError> {
        if self.tokens.next().is_some() {
            return Err(body_err("trailing values on row"));
        }
        self.tokens = Vec::new().into_iter();
        Ok(())
    }
}

struct BinaryReader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl ValueReader for BinaryReader<'_> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let c = &mut self.cur;
        let v = match ty {
            Scalar::I8 => c.read_i8().map(f64::from),
            Scalar::U8 => c.read_u8().map(f64::from),
            Scalar::I16 => c.read_i16::<LittleEndian>().map(f64::from),
            Scalar::U16 => c.read_u16::<LittleEndian>().map(f64::from),
            Scalar::I32 => c.read_i32::<LittleEndian>().map(f64::from),
            Scalar::U32 => c.read_u32::<LittleEndian>().map(f64::from),
            Scalar::F32 => c.read_f32::<LittleEndian>().map(f64::from),
            Scalar::F64 => c.read_f64::<LittleEndian>(),
        };
        v.map_err(|_| body_err("unexpected end of data"))
    }
}

fn color_channel(v: f64, ty: Scalar) -> Result<u8, MeshError> {
    let c = if ty.is_float() { (v * 255.0).round() } else { v };
    if (0.0..=255.0).contains(&c) {
        Ok(c as u8)
    } else {
        Err(body_err(format!("colour channel {v} out of range")))
    }
}

fn color_index(name: &str) -> Option<usize> {
    match name {
        "red" | "r" | "diffuse_red" => Some(0),
        "green" | "g" | "diffuse_green" => Some(1),
        "blue" | "b" | "diffuse_blue" => Some(2),
        _ => None,
    }
}

#[derive(Default)]
struct Rows {
    values: Vec<Vec<f64>>,
    lists: Vec<Vec<f64>>,
}

fn read_element(
    reader: &mut dyn ValueReader,
    el: &Element,
    wanted: &[&str],
    list_name: Option<&[&str]>,
) -> Result<Rows, MeshError> {
    let slots: Vec<Option<usize>> = el
        .props
        .iter()
        .map(|p| {
            wanted.iter().position(|w| {
                *w == p.name || (color_index(w).is_some() && color_index(w) == color_index(&p.name))
            })
        })
        .collect();
    let mut rows = Rows::default();
    for _ in 0..el.count {
        let mut row = vec![f64::NAN; wanted.len()];
        let mut list = Vec::new();
        for (p, slot) in el.props.iter().zip(&slots) {
            match p.kind {
                PropKind::Scalar(ty) => {
                    let v = reader.scalar(ty)?;
                    if let Some(s) = slot {
                        row[*s] = if color_index(&p.name).is_some() {
                            color_channel(v, ty)? as f64
                        } else {
                            v
                        };
                    }
                }
                PropKind::List { count, item } => {
                    let n = reader.scalar(count)?;
                    if n < 0.0 {
                        return Err(body_err("negative list length"));
                    }
                    let keep = list_name.is_some_and(|names| names.contains(&p.name.as_str()));
                    for _ in 0..n as usize {
                        let v = reader.scalar(item)?;
                        if keep {
                            list.push(v);
                        }
                    }
                }
            }
        }
        reader.end_row()?;
        rows.values.push(row);
        rows.lists.push(list);
    }
    Ok(rows)
}

/// Parses an ASCII or binary little-endian PLY triangle mesh.
pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let text;
    let mut ascii;
    let mut binary;
    let reader: &mut dyn ValueReader = match header.format {
        PlyFormat::Ascii => {
            text = std::str::from_utf8(body).map_err(|_| body_err("ASCII body is not UTF-8"))?;
            ascii = AsciiReader::new(text);
            &mut ascii
        }
        PlyFormat::BinaryLittleEndian => {
            binary = BinaryReader {
                cur: Cursor::new(body),
            };
            &mut binary
        }
    };

    const VERTEX_PROPS: [&str; 6] = ["x", "y", "z", "red", "green", "blue"];
    const FACE_PROPS: [&str; 5] = ["label", "segment_id", "red", "green", "blue"];
    let mut vertex_rows = None;
    let mut face_rows = None;
    let mut vertex_has_color = false;
    let mut face_has_color = false;
    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                for axis in ["x", "y", "z"] {
                    if !el.props.iter().any(|p| p.name == axis) {
                        return Err(header_err(format!("vertex element lacks `{axis}`")));
                    }
                }
                vertex_has_color = has_rgb(el);
                vertex_rows = Some(read_element(reader, el, &VERTEX_PROPS, None)?);
            }
            "face" => {
                if !el.props.iter().any(|p| {
                    matches!(p.kind, PropKind::List { .. })
                        && (p.name == "vertex_indices" || p.name == "vertex_index")
                }) {
                    return Err(header_err("face element lacks `vertex_indices`"));
                }
                face_has_color = has_rgb(el);
                face_rows = Some(read_element(
                    reader,
                    el,
                    &FACE_PROPS,
                    Some(&["vertex_indices", "vertex_index"]),
                )?);
            }
            _ => {
                read_element(reader, el, &[], None)?;
            }
        }
    }
    let vertex_rows = vertex_rows.ok_or_else(|| header_err("no vertex element"))?;
    let face_rows = face_rows.ok_or_else(|| header_err("no face element"))?;

    let vertices: Vec<Point3<f64>> = vertex_rows
        .values
        .iter()
        .map(|r| Point3::new(r[0], r[1], r[2]))
        .collect();
    let vcolors: Option<Vec<[u8; 3]>> = vertex_has_color.then(|| {
        vertex_rows
            .values
            .iter()
            .map(|r| [r[3] as u8, r[4] as u8, r[5] as u8])
            .collect()
    });

    let nv = vertices.len();
    let nf = face_rows.values.len();
    let mut faces = Vec::with_capacity(nf);
    let mut labels = Vec::with_capacity(nf);
    let mut segments = Vec::with_capacity(nf);
    let mut colors = Vec::with_capacity(nf);
    for (fi, (row, idx)) in face_rows.values.iter().zip(&face_rows.lists).enumerate() {
        if idx.len() != 3 {
            return Err(MeshError::NotTriangle {
                face: fi,
                count: idx.len(),
            });
        }
        let mut f = [0u32; 3];
        for k in 0..3 {
            let v = idx[k];
            if v < 0.0 || v as usize >= nv {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    vertex: v as i64,
                    count: nv,
                });
            }
            f[k] = v as u32;
        }
        faces.push(f);
        labels.push(if row[0].is_nan() {
            ClassId::UNCLASSIFIED
        } else {
            ClassId::from_i64(row[0] as i64)?
        });
        segments.push(if row[1].is_nan() { -1 } else { row[1] as i32 });
        let samples = if face_has_color {
            vec![ColorSample::at_centroid([
                row[2] as u8,
                row[3] as u8,
                row[4] as u8,
            ])]
        } else if let Some(vc) = &vcolors {
            (0..3)
                .map(|k| ColorSample::at_corner(vc[f[k] as usize], k))
                .collect()
        } else {
            vec![ColorSample::at_centroid(super::DEFAULT_FACE_COLOR)]
        };
        colors.push(samples);
    }

    TriangleMesh::from_parts(
        header.tile_id.unwrap_or_default(),
        vertices,
        faces,
        labels,
        segments,
        colors,
    )
}

fn has_rgb(el: &Element) -> bool {
    (0..3).all(|k| {
        el.props
            .iter()
            .any(|p| color_index(&p.name) == Some(k) && matches!(p.kind, PropKind::Scalar(_)))
    })
}

/// Serialises a mesh with labels, segment ids and colours.
///
/// Colours are written per vertex when the mesh's samples are exactly
/// consistent corner colours, otherwise as the per-face mean.
pub fn write_ply(mesh: &TriangleMesh, format: PlyFormat) -> Vec<u8> {
    let vertex_colors = mesh.vertex_colors();
    let mut out = Vec::new();
    let mut h = String::new();
    h.push_str("ply\n");
    h.push_str(format_line(format));
    if !mesh.tile_id().is_empty() {
        h.push_str(&format!("comment tile_id {}\n", mesh.tile_id()));
    }
    h.push_str(&format!("element vertex {}\n", mesh.vertex_count()));
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if vertex_colors.is_some() {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    h.push_str(&format!("element face {}\n", mesh.face_count()));
    h.push_str("property list uchar int vertex_indices\n");
    h.push_str("property int label\nproperty int segment_id\n");
    if vertex_colors.is_none() {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    h.push_str("end_header\n");
    out.extend_from_slice(h.as_bytes());

    match format {
        PlyFormat::Ascii => {
            let mut s = String::new();
            for (i, p) in mesh.vertices().iter().enumerate() {
                s.push_str(&format!("{} {} {}", p.x, p.y, p.z));
                if let Some(vc) = &vertex_colors {
                    let c = vc[i];
                    s.push_str(&format!(" {} {} {}", c[0], c[1], c[2]));
                }
                s.push('\n');
            }
            for (fi, f) in mesh.faces().iter().enumerate() {
                s.push_str(&format!(
                    "3 {} {} {} {} {}",
                    f[0],
                    f[1],
                    f[2],
                    mesh.face_labels()[fi].get(),
                    mesh.face_segments()[fi]
                ));
                if vertex_colors.is_none() {
                    let c = mesh.mean_face_color(fi);
                    s.push_str(&format!(" {} {} {}", c[0], c[1], c[2]));
                }
                s.push('\n');
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            // Writes into a Vec<u8> cannot fail.
            for (i, p) in mesh.vertices().iter().enumerate() {
                for k in 0..3 {
                    out.write_f64::<LittleEndian>(p[k]).unwrap();
                }
                if let Some(vc) = &vertex_colors {
                    out.extend_from_slice(&vc[i]);
                }
            }
            for (fi, f) in mesh.faces().iter().enumerate() {
                out.write_u8(3).unwrap();
                for &v in f {
                    out.write_i32::<LittleEndian>(v as i32).unwrap();
                }
                out.write_i32::<LittleEndian>(mesh.face_labels()[fi].get() as i32)
                    .unwrap();
                out.write_i32::<LittleEndian>(mesh.face_segments()[fi])
                    .unwrap();
                if vertex_colors.is_none() {
                    out.extend_from_slice(&mesh.mean_face_color(fi));
                }
            }
        }
    }
    out
}

fn format_line(format: PlyFormat) -> &'static str {
    match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    }
}

/// Writes a sampled point cloud: `x y z` (double), `red green blue` (uchar),
/// `label` and `source_face` (int).
pub fn write_point_cloud_ply(
    cloud: &SampledPointCloud,
    format: PlyFormat,
    mut out: impl Write,
) -> std::io::Result<()> {
    let mut h = String::from("ply\n");
    h.push_str(format_line(format));
    h.push_str(&format!("element vertex {}\n", cloud.len()));
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    h.push_str("property int label\nproperty int source_face\n");
    h.push_str("end_header\n");
    out.write_all(h.as_bytes())?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let c = cloud.colors[i];
        match format {
            PlyFormat::Ascii => writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                p.x,
                p.y,
                p.z,
                c[0],
                c[1],
                c[2],
                cloud.labels[i].get(),
                cloud.source_faces[i]
            )?,
            PlyFormat::BinaryLittleEndian => {
                for k in 0..3 {
                    out.write_f64::<LittleEndian>(p[k])?;
                }
                out.write_all(&c)?;
                out.write_i32::<LittleEndian>(cloud.labels[i].get() as i32)?;
                out.write_i32::<LittleEndian>(cloud.source_faces[i] as i32)?;
            }
        }
    }
    Ok(())
}
