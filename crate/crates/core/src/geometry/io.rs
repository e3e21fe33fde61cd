//! Mesh file formats: Wavefront OBJ (geometry only) and PLY (ASCII or
//! binary). Colours, texture coordinates and normals in the files are ignored.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::{GeometryError, TriangleMesh};

/// Loads an `.obj` or `.ply` file. Polygons are fan-triangulated and
/// degenerate faces dropped; vertex order is preserved.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, GeometryError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = fs::read(path)?;
    let label = path.display().to_string();
    let (vertices, faces) = match ext.as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes), &label)?,
        "ply" => parse_ply(&bytes, &label)?,
        other => return Err(GeometryError::UnsupportedFormat(format!("'.{other}' ({label})"))),
    };
    TriangleMesh::new_lenient(vertices, faces)
}

fn parse_err(path: &str, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        path: path.to_owned(),
        message: message.into(),
    }
}

/// Vertices and triangle indices as read from a mesh file.
pub type MeshData = (Vec<Point3<f64>>, Vec<[u32; 3]>);

pub fn parse_obj(text: &str, label: &str) -> Result<MeshData, GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(label, format!("line {}: {e}", ln + 1)))?;
                if c.len() != 3 {
                    return Err(parse_err(label, format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(label, format!("line {}: bad face index '{t}'", ln + 1)))?;
                    let n = vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(parse_err(
                            label,
                            format!("line {}: face index {i} out of range", ln + 1),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(
                        label,
                        format!("line {}: face needs at least 3 vertices", ln + 1),
                    ));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    Ok((vertices, faces))
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    Le,
    Be,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    format: Format,
    label: &'a str,
}

impl Cursor<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, GeometryError> {
        let n = ty.size();
        let b = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| parse_err(self.label, format!("unexpected end of data at byte {}", self.pos)))?;
        self.pos += n;
        let le = self.format == Format::Le;
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().unwrap();
                (if le {
                    <$t>::from_le_bytes(arr)
                } else {
                    <$t>::from_be_bytes(arr)
                }) as f64
            }};
        }
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        })
    }
}

pub fn parse_ply(bytes: &[u8], label: &str) -> Result<MeshData, GeometryError> {
    let header_end = bytes
        .windows(b"end_header".len())
        .position(|w| w == b"end_header")
        .ok_or_else(|| parse_err(label, "missing end_header"))?;
    let mut body_start = header_end + b"end_header".len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err(label, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first().copied() {
            Some("format") => {
                format = Some(match t.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::Le,
                    Some("binary_big_endian") => Format::Be,
                    other => return Err(parse_err(label, format!("unknown format {other:?}"))),
                })
            }
            Some("element") => {
                let (Some(name), Some(count)) = (t.get(1), t.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(parse_err(label, format!("bad element line '{line}'")));
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(label, "property before element"))?;
                let bad = || parse_err(label, format!("bad property line '{line}'"));
                if t.get(1) == Some(&"list") {
                    let ct = t.get(2).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    let it = t.get(3).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props
                        .push(Property::List(t.get(4).ok_or_else(bad)?.to_string(), ct, it));
                } else {
                    let ty = t.get(1).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props
                        .push(Property::Scalar(t.get(2).ok_or_else(bad)?.to_string(), ty));
                }
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| parse_err(label, "missing format line"))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let body = &bytes[body_start..];
    let ascii_text = if format == Format::Ascii {
        String::from_utf8_lossy(body).into_owned()
    } else {
        String::new()
    };
    let mut ascii_tokens = ascii_text.split_whitespace();
    let mut cur = Cursor {
        data: body,
        pos: 0,
        format,
        label,
    };
    let mut next = |ty: Scalar| -> Result<f64, GeometryError> {
        if format == Format::Ascii {
            ascii_tokens
                .next()
                .ok_or_else(|| parse_err(label, "unexpected end of ascii data"))?
                .parse::<f64>()
                .map_err(|e| parse_err(label, e.to_string()))
        } else {
            cur.read(ty)
        }
    };
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [f64::NAN; 3];
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = next(*ty)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = next(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(next(*it)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(parse_err(label, "face with fewer than 3 vertices"));
                            }
                            for k in 1..n - 1 {
                                faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                if xyz.iter().any(|c| c.is_nan()) {
                    return Err(parse_err(label, "vertex element lacks x/y/z"));
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    if let Some((fi, _)) = faces
        .iter()
        .enumerate()
        .find(|(_, f)| f.iter().any(|&i| i as usize >= vertices.len()))
    {
        return Err(parse_err(label, format!("face {fi} index out of range")));
    }
    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    Ok((vertices, faces))
}

/// Writes vertices with shortest round-trip formatting, so output is
/// reproducible and lossless.
pub fn write_obj(mesh: &TriangleMesh, mut w: impl Write) -> std::io::Result<()> {
    let mut s = String::new();
    for v in mesh.vertices() {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in mesh.faces() {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    w.write_all(s.as_bytes())
}

pub fn save_obj(mesh: &TriangleMesh, path: &Path) -> std::io::Result<()> {
    write_obj(mesh, std::io::BufWriter::new(fs::File::create(path)?))
}

/// Binary little-endian PLY with double vertices and uint indices.
pub fn write_ply(mesh: &TriangleMesh, mut w: impl Write) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.face_count()
    )?;
    let mut buf = Vec::new();
    for v in mesh.vertices() {
        for c in [v.x, v.y, v.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        buf.push(3);
        for i in f {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    w.write_all(&buf)
}
