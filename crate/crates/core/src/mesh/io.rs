//! OBJ, OFF and PLY readers, plus a PLY writer for per-vertex scalar fields.
//!
//! Polygons with more than three corners are fan-triangulated. Text formats
//! report errors with 1-based line numbers; binary PLY reports the element
//! index instead.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{TriangleMesh, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "off" => Some(MeshFormat::Off),
            "ply" => Some(MeshFormat::Ply),
            _ => None,
        }
    }
}

/// Counts observed while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    pub vertices: usize,
    pub faces: usize,
    pub dropped_faces: usize,
}

/// Loads a mesh; `format` defaults to the file extension.
pub fn load_mesh(
    path: impl AsRef<Path>,
    format: Option<MeshFormat>,
) -> Result<(TriangleMesh, LoadReport)> {
    let path = path.as_ref();
    let format = format.or_else(|| MeshFormat::from_path(path)).ok_or_else(|| {
        Error::InvalidArgument(format!("cannot infer mesh format of {}", path.display()))
    })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&bytes, format)
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<(TriangleMesh, LoadReport)> {
    let (positions, faces) = match format {
        MeshFormat::Obj => parse_obj(as_text(bytes)?)?,
        MeshFormat::Off => parse_off(as_text(bytes)?)?,
        MeshFormat::Ply => parse_ply(bytes)?,
    };
    let (mesh, dropped) = TriangleMesh::with_report(positions, faces)?;
    let report = LoadReport {
        vertices: mesh.vertex_count(),
        faces: mesh.face_count(),
        dropped_faces: dropped,
    };
    log::info!(
        "loaded mesh: {} vertices, {} faces ({} dropped)",
        report.vertices,
        report.faces,
        report.dropped_faces
    );
    Ok((mesh, report))
}

fn as_text(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Format {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

fn parse_f64(token: Option<&str>, line: usize) -> Result<f64> {
    let token = token.ok_or_else(|| format_err(line, "missing coordinate"))?;
    token
        .parse()
        .map_err(|_| format_err(line, format!("bad number `{token}`")))
}

fn fan(polygon: &[u32], faces: &mut Vec<[u32; 3]>) {
    for k in 1..polygon.len().saturating_sub(1) {
        faces.push([polygon[0], polygon[k], polygon[k + 1]]);
    }
}

fn check_index(index: usize, vertex_count: usize, line: usize) -> Result<u32> {
    if index >= vertex_count {
        return Err(format_err(
            line,
            format!("vertex index {index} out of range ({vertex_count} vertices)"),
        ));
    }
    Ok(index as u32)
}

pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let mut positions = Vec::new();
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = parse_f64(tokens.next(), line)?;
                let y = parse_f64(tokens.next(), line)?;
                let z = parse_f64(tokens.next(), line)?;
                positions.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| format_err(line, format!("bad face index `{tok}`")))?;
                    corners.push(idx);
                }
                if corners.len() < 3 {
                    return Err(format_err(line, "face needs at least 3 vertices"));
                }
                polygons.push((line, corners));
            }
            _ => {}
        }
    }
    let nv = positions.len();
    let mut faces = Vec::new();
    for (line, corners) in polygons {
        let mut poly = Vec::with_capacity(corners.len());
        for idx in corners {
            // 1-based; negative indices count back from the end.
            let resolved = if idx > 0 {
                idx - 1
            } else if idx < 0 {
                nv as i64 + idx
            } else {
                return Err(format_err(line, "face index 0 is invalid in OBJ"));
            };
            if resolved < 0 {
                return Err(format_err(line, format!("vertex index {idx} out of range")));
            }
            poly.push(check_index(resolved as usize, nv, line)?);
        }
        fan(&poly, &mut faces);
    }
    Ok((positions, faces))
}

pub fn parse_off(text: &str) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    // Meaningful lines with their numbers, comments stripped.
    let mut lines = text.lines().enumerate().filter_map(|(n, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((n + 1, l))
    });
    let (line, first) = lines.next().ok_or_else(|| format_err(1, "empty OFF file"))?;
    let counts_line = if first == "OFF" {
        lines.next().ok_or_else(|| format_err(line, "missing counts"))?
    } else if let Some(rest) = first.strip_prefix("OFF") {
        (line, rest.trim())
    } else {
        return Err(format_err(line, "missing OFF header"));
    };
    let (line, counts) = counts_line;
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format_err(line, format!("bad count `{t}`"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(format_err(line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| format_err(line, "unexpected end of file in vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_f64(t.next(), line)?;
        let y = parse_f64(t.next(), line)?;
        let z = parse_f64(t.next(), line)?;
        positions.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    let mut last_line = line;
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| format_err(last_line, "unexpected end of file in face list"))?;
        last_line = line;
        let mut t = l.split_whitespace();
        let k: usize = t
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(line, "bad polygon size"))?;
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let idx: usize = t
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format_err(line, "bad face index"))?;
            poly.push(check_index(idx, nv, line)?);
        }
        if k < 3 {
            return Err(format_err(line, "face needs at least 3 vertices"));
        }
        fan(&poly, &mut faces);
    }
    Ok((positions, faces))
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
    fn parse(name: &str) -> Option<Self> {
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, bytes: &[u8], little: bool) -> f64 {
        macro_rules! get {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = bytes[..$n].try_into().unwrap();
                if little {
                    <$t>::from_le_bytes(arr) as f64
                } else {
                    <$t>::from_be_bytes(arr) as f64
                }
            }};
        }
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => get!(i16, 2),
            Scalar::U16 => get!(u16, 2),
            Scalar::I32 => get!(i32, 4),
            Scalar::U32 => get!(u32, 4),
            Scalar::F32 => get!(f32, 4),
            Scalar::F64 => get!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

pub fn parse_ply(bytes: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    // Header is ASCII and ends with the `end_header` line.
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err(line_no + 1, "unterminated PLY header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| format_err(line_no + 1, "non-ASCII header"))?
            .trim_end_matches('\r')
            .trim();
        pos += end + 1;
        line_no += 1;
        let mut t = line.split_whitespace();
        match t.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(format_err(1, "missing `ply` magic")),
            Some("format") => {
                encoding = Some(match t.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    Some("binary_big_endian") => PlyEncoding::BinaryBe,
                    other => {
                        return Err(format_err(line_no, format!("unknown format {other:?}")))
                    }
                })
            }
            Some("element") => {
                let name = t.next().ok_or_else(|| format_err(line_no, "element name"))?;
                let count = t
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format_err(line_no, "element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| format_err(line_no, "property before element"))?;
                let bad = || format_err(line_no, format!("bad property `{line}`"));
                let kind = t.next().ok_or_else(bad)?;
                let prop = if kind == "list" {
                    let count = Scalar::parse(t.next().ok_or_else(bad)?).ok_or_else(bad)?;
                    let item = Scalar::parse(t.next().ok_or_else(bad)?).ok_or_else(bad)?;
                    Property::List(t.next().ok_or_else(bad)?.to_string(), count, item)
                } else {
                    let s = Scalar::parse(kind).ok_or_else(bad)?;
                    Property::Scalar(t.next().ok_or_else(bad)?.to_string(), s)
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(format_err(line_no, format!("unexpected header keyword `{other}`")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| format_err(line_no, "missing format line"))?;

    // Each element is decoded into rows of numbers; list properties are
    // flattened with their length prefix.
    let mut rows_by_element: Vec<Vec<Vec<f64>>> = Vec::with_capacity(elements.len());
    match encoding {
        PlyEncoding::Ascii => {
            let body = as_text(&bytes[pos..])?;
            let mut lines = body
                .lines()
                .enumerate()
                .map(|(n, l)| (line_no + n + 1, l))
                .filter(|(_, l)| !l.trim().is_empty());
            for el in &elements {
                let mut rows = Vec::with_capacity(el.count);
                for _ in 0..el.count {
                    let (ln, l) = lines
                        .next()
                        .ok_or_else(|| format_err(line_no, format!("truncated `{}`", el.name)))?;
                    let row: Vec<f64> = l
                        .split_whitespace()
                        .map(|tok| {
                            tok.parse()
                                .map_err(|_| format_err(ln, format!("bad number `{tok}`")))
                        })
                        .collect::<Result<_>>()?;
                    rows.push(row);
                }
                rows_by_element.push(rows);
            }
        }
        PlyEncoding::BinaryLe | PlyEncoding::BinaryBe => {
            let little = encoding == PlyEncoding::BinaryLe;
            let mut cursor = pos;
            let mut take = |s: Scalar, el: &str, k: usize| -> Result<f64> {
                if cursor + s.size() > bytes.len() {
                    return Err(Error::Binary(format!("truncated PLY `{el}` element {k}")));
                }
                let v = s.read(&bytes[cursor..], little);
                cursor += s.size();
                Ok(v)
            };
            for el in &elements {
                let mut rows = Vec::with_capacity(el.count);
                for k in 0..el.count {
                    let mut row = Vec::new();
                    for p in &el.properties {
                        match p {
                            Property::Scalar(_, s) => row.push(take(*s, &el.name, k)?),
                            Property::List(_, cs, is) => {
                                let n = take(*cs, &el.name, k)?;
                                row.push(n);
                                for _ in 0..n as usize {
                                    row.push(take(*is, &el.name, k)?);
                                }
                            }
                        }
                    }
                    rows.push(row);
                }
                rows_by_element.push(rows);
            }
        }
    }

    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (el, rows) in elements.iter().zip(&rows_by_element) {
        match el.name.as_str() {
            "vertex" => {
                let col = |name: &str| {
                    el.properties
                        .iter()
                        .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
                        .ok_or_else(|| format_err(line_no, format!("vertex lacks `{name}`")))
                };
                if el.properties.iter().any(|p| matches!(p, Property::List(..))) {
                    return Err(format_err(line_no, "list properties on vertices unsupported"));
                }
                let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
                for (k, row) in rows.iter().enumerate() {
                    if row.len() < el.properties.len() {
                        return Err(Error::Binary(format!("vertex {k} has too few values")));
                    }
                    positions.push(Vec3::new(row[cx], row[cy], row[cz]));
                }
            }
            "face" => {
                let vertex_total = elements_vertex_count(&elements);
                let list_at = el
                    .properties
                    .iter()
                    .position(|p| {
                        matches!(p, Property::List(n, ..) if n == "vertex_indices" || n == "vertex_index")
                    })
                    .ok_or_else(|| format_err(line_no, "face lacks vertex_indices"))?;
                if list_at != 0 {
                    return Err(format_err(line_no, "vertex_indices must be the first face property"));
                }
                for (k, row) in rows.iter().enumerate() {
                    let n = *row.first().ok_or_else(|| Error::Binary(format!("empty face {k}")))?
                        as usize;
                    if row.len() < 1 + n || n < 3 {
                        return Err(Error::Binary(format!("face {k} malformed")));
                    }
                    let mut poly = Vec::with_capacity(n);
                    for &idx in &row[1..1 + n] {
                        if idx < 0.0 || idx as usize >= vertex_total {
                            return Err(Error::Binary(format!("face {k} index {idx} out of range")));
                        }
                        poly.push(idx as u32);
                    }
                    fan(&poly, &mut faces);
                }
            }
            _ => {}
        }
    }
    Ok((positions, faces))
}

fn elements_vertex_count(elements: &[Element]) -> usize {
    elements
        .iter()
        .find(|e| e.name == "vertex")
        .map_or(0, |e| e.count)
}

/// ASCII PLY with a float `quality` property per vertex, for viewing scalar
/// fields in MeshLab and similar tools.
pub fn ply_with_quality(mesh: &TriangleMesh, quality: &[f64]) -> Result<String> {
    if quality.len() != mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "{} quality values for {} vertices",
            quality.len(),
            mesh.vertex_count()
        )));
    }
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\n\
         property float z\nproperty float quality\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    );
    for (p, q) in mesh.positions().iter().zip(quality) {
        let _ = writeln!(out, "{} {} {} {}", p.x as f32, p.y as f32, p.z as f32, *q as f32);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    Ok(out)
}

pub fn write_ply_with_quality(
    path: impl AsRef<Path>,
    mesh: &TriangleMesh,
    quality: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ply_with_quality(mesh, quality)?).map_err(|e| Error::io(path, e))
}

/// Plain OBJ dump of a mesh.
pub fn write_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ICOSAHEDRON_OBJ: &str = "\
# icosahedron, hand-written
v 0 1 1.618034
v 0 -1 1.618034
v 0 1 -1.618034
v 0 -1 -1.618034
v 1 1.618034 0
v -1 1.618034 0
v 1 -1.618034 0
v -1 -1.618034 0
v 1.618034 0 1
v -1.618034 0 1
v 1.618034 0 -1
v -1.618034 0 -1
f 1 2 9
f 1 10 2
f 1 9 5
f 1 5 6
f 1 6 10
f 2 7 9
f 2 10 8
f 2 8 7
f 3 5 11
f 3 6 5
f 3 12 6
f 3 4 12
f 3 11 4
f 4 11 7
f 4 7 8
f 4 8 12
f 9 7 11
f 9 11 5
f 10 6 12
f 10 12 8
";

    #[test]
    fn single_triangle_off() {
        let (mesh, report) =
            parse_mesh(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", MeshFormat::Off).unwrap();
        assert_eq!((mesh.vertex_count(), mesh.face_count()), (3, 1));
        assert_eq!(report.dropped_faces, 0);
    }

    #[test]
    fn degenerate_index_triple_is_dropped() {
        let src = b"OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n3 0 0 1\n3 1 3 2\n";
        let (mesh, report) = parse_mesh(src, MeshFormat::Off).unwrap();
        assert_eq!(mesh.face_count(), 1);
        assert_eq!(report.dropped_faces, 1);
    }

    #[test]
    fn icosahedron_obj_counts() {
        let (mesh, _) = parse_mesh(ICOSAHEDRON_OBJ.as_bytes(), MeshFormat::Obj).unwrap();
        assert_eq!((mesh.vertex_count(), mesh.face_count()), (12, 20));
        assert_eq!(mesh.build_graph().edge_count(), 30);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 x 0\nf 1 2 3\n", MeshFormat::Obj)
            .unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        let err = parse_mesh(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", MeshFormat::Off)
            .unwrap_err();
        assert!(matches!(err, Error::Format { line: 6, .. }), "{err}");
    }

    #[test]
    fn zero_faces_is_an_error() {
        let err = parse_mesh(b"OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n", MeshFormat::Off).unwrap_err();
        assert!(matches!(err, Error::EmptyMesh));
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 -1\n";
        let (mesh, _) = parse_mesh(src.as_bytes(), MeshFormat::Obj).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn ascii_ply_round_trip_with_quality() {
        let mesh = crate::mesh::shapes::icosphere(1);
        let q: Vec<f64> = (0..mesh.vertex_count()).map(|i| i as f64 * 0.5).collect();
        let text = ply_with_quality(&mesh, &q).unwrap();
        let (back, _) = parse_mesh(text.as_bytes(), MeshFormat::Ply).unwrap();
        assert_eq!(back.faces(), mesh.faces());
        for (a, b) in back.positions().iter().zip(mesh.positions()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn binary_ply() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment t\nelement vertex 3\n\
property float x\nproperty float y\nproperty float z\nproperty uchar red\n\
element face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for (x, y) in [(0.0f32, 0.0f32), (1.0, 0.0), (0.0, 1.0)] {
            bytes.extend(x.to_le_bytes());
            bytes.extend(y.to_le_bytes());
            bytes.extend(0.5f32.to_le_bytes());
            bytes.push(255);
        }
        bytes.push(3);
        for i in 0u32..3 {
            bytes.extend(i.to_le_bytes());
        }
        let (mesh, _) = parse_mesh(&bytes, MeshFormat::Ply).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.positions()[1], Vec3::new(1.0, 0.0, 0.5));
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(parse_mesh(&bytes, MeshFormat::Ply), Err(Error::Binary(_))));
    }
}
