//! Point cloud and pose files.
//!
//! Supported clouds: PLY (ASCII or binary little-endian, `x`/`y`/`z` vertex
//! properties, everything else ignored) and plain XYZ text with whitespace or
//! comma separators. Rows with non-finite coordinates are dropped and counted.
//! Poses are a single line of 12 numbers: row-major rotation then translation.

use std::fs;
use std::io::Write;
use std::path::Path;

use cobigicp::se3::RigidTransform;
use cobigicp::surface::PointCloud;
use nalgebra::Vector3;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    /// Rows skipped because a coordinate was NaN or infinite.
    pub dropped: usize,
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<LoadedCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    let (points, dropped) = if bytes.starts_with(b"ply") {
        parse_ply(path, &bytes)?
    } else {
        let text = String::from_utf8_lossy(&bytes);
        parse_xyz(path, &text)?
    };
    if points.is_empty() {
        return Err(BenchError::NoValidPoints(path.to_path_buf()));
    }
    Ok(LoadedCloud {
        cloud: PointCloud::new(points)?,
        dropped,
    })
}

fn finite(p: &Vector3<f64>) -> bool {
    p.iter().all(|v| v.is_finite())
}

/// XYZ text: one point per line, first three numeric fields used. A
/// non-numeric first line is taken as a column header; `#` starts a comment.
pub fn parse_xyz(path: &Path, text: &str) -> Result<(Vec<Vector3<f64>>, usize)> {
    let mut points = Vec::new();
    let mut dropped = 0;
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().take(3).map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => {
                seen_data = true;
                let p = Vector3::new(v[0], v[1], v[2]);
                if finite(&p) {
                    points.push(p);
                } else {
                    dropped += 1;
                }
            }
            Ok(_) => {
                return Err(BenchError::parse(path, line_no, "expected three coordinates"));
            }
            Err(_) if !seen_data => {
                seen_data = true; // header row
            }
            Err(e) => return Err(BenchError::parse(path, line_no, format!("bad number: {e}"))),
        }
    }
    Ok((points, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    /// `None` marks a list property.
    properties: Vec<(String, Option<ScalarType>)>,
}

pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(Vec<Vector3<f64>>, usize)> {
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;

    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&c| c == b'\n')
            .map(|p| offset + p)
            .ok_or_else(|| BenchError::parse(path, line_no + 1, "unterminated PLY header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| BenchError::parse(path, line_no, "non-UTF-8 header"))?
            .trim();
        offset = end + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(BenchError::parse(path, 1, "missing 'ply' magic")),
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => {
                return Err(BenchError::parse(path, line_no, format!("unsupported PLY format {other}")))
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| BenchError::parse(path, line_no, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| BenchError::parse(path, line_no, "property before element"))?;
                el.properties.push((name.to_string(), None));
            }
            ["property", ty, name] => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| BenchError::parse(path, line_no, format!("unknown property type {ty:?}")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| BenchError::parse(path, line_no, "property before element"))?;
                el.properties.push((name.to_string(), Some(ty)));
            }
            ["end_header"] => break,
            _ => return Err(BenchError::parse(path, line_no, format!("unrecognized header line {line:?}"))),
        }
    }

    let format = format.ok_or_else(|| BenchError::parse(path, line_no, "missing format line"))?;
    let (vertex_pos, vertex) = elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| BenchError::parse(path, line_no, "no vertex element"))?;
    let column = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|(n, _)| n == axis)
            .ok_or_else(|| BenchError::parse(path, line_no, format!("vertex has no {axis} property")))
    };
    let cols = [column("x")?, column("y")?, column("z")?];

    let mut points = Vec::with_capacity(vertex.count);
    let mut dropped = 0;
    match format {
        PlyFormat::Ascii => {
            let body = String::from_utf8_lossy(&bytes[offset..]);
            let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            // rows of elements declared before the vertices
            let skip: usize = elements[..vertex_pos].iter().map(|e| e.count).sum();
            for _ in 0..skip {
                lines.next();
            }
            for _ in 0..vertex.count {
                let (i, l) = lines
                    .next()
                    .ok_or_else(|| BenchError::parse(path, line_no, "fewer vertex rows than declared"))?;
                let row = line_no + i + 1;
                let toks: Vec<&str> = l.split_whitespace().collect();
                let mut p = Vector3::zeros();
                for (axis, &c) in cols.iter().enumerate() {
                    let tok = toks
                        .get(c)
                        .ok_or_else(|| BenchError::parse(path, row, "short vertex row"))?;
                    p[axis] = tok
                        .parse()
                        .map_err(|_| BenchError::parse(path, row, format!("bad number {tok:?}")))?;
                }
                if finite(&p) {
                    points.push(p);
                } else {
                    dropped += 1;
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            if elements[..=vertex_pos]
                .iter()
                .any(|e| e.properties.iter().any(|(_, t)| t.is_none()))
            {
                return Err(BenchError::parse(
                    path,
                    line_no,
                    "list properties before or in the vertex element are not supported in binary PLY",
                ));
            }
            let stride = |e: &Element| e.properties.iter().map(|(_, t)| t.unwrap().size()).sum::<usize>();
            let mut pos = offset
                + elements[..vertex_pos]
                    .iter()
                    .map(|e| e.count * stride(e))
                    .sum::<usize>();
            let vstride = stride(vertex);
            let offsets: Vec<usize> = vertex
                .properties
                .iter()
                .scan(0, |acc, (_, t)| {
                    let o = *acc;
                    *acc += t.unwrap().size();
                    Some(o)
                })
                .collect();
            if bytes.len() < pos + vertex.count * vstride {
                return Err(BenchError::parse(path, line_no, "binary vertex data truncated"));
            }
            for _ in 0..vertex.count {
                let row = &bytes[pos..pos + vstride];
                let mut p = Vector3::zeros();
                for (axis, &c) in cols.iter().enumerate() {
                    let ty = vertex.properties[c].1.unwrap();
                    p[axis] = ty.read_le(&row[offsets[c]..]);
                }
                if finite(&p) {
                    points.push(p);
                } else {
                    dropped += 1;
                }
                pos += vstride;
            }
        }
    }
    Ok((points, dropped))
}

pub fn save_xyz(path: impl AsRef<Path>, points: &[Vector3<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(points.len() * 48);
    for p in points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(path, out).map_err(|e| BenchError::io(path, e))
}

pub fn load_pose(path: impl AsRef<Path>) -> Result<RigidTransform> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let (i, line) = text
        .lines()
        .enumerate()
        .find(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .ok_or_else(|| BenchError::parse(path, 1, "empty pose file"))?;
    line.parse::<RigidTransform>()
        .map_err(|e| BenchError::parse(path, i + 1, e.to_string()))
}

pub fn save_pose(path: impl AsRef<Path>, t: &RigidTransform) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    writeln!(f, "{t}").map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn xyz_three_lines() {
        let (pts, dropped) = parse_xyz(p(), "0 0 0\n1,2,3\n4 5 6 7\n").unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[1], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(dropped, 0);
    }

    #[test]
    fn xyz_header_and_nan() {
        let mut text = String::from("x,y,z\n");
        for i in 0..10 {
            if i == 4 {
                text.push_str("nan,1,2\n");
            } else {
                text.push_str(&format!("{i},0,1\n"));
            }
        }
        let (pts, dropped) = parse_xyz(p(), &text).unwrap();
        assert_eq!((pts.len(), dropped), (9, 1));
    }

    #[test]
    fn xyz_errors_carry_line_number() {
        match parse_xyz(p(), "1 2 3\n4 5\n") {
            Err(BenchError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_xyz(p(), "1 2 3\n1 b 2\n"), Err(BenchError::Parse { line: 2, .. })));
    }

    #[test]
    fn ascii_ply_with_extras() {
        let ply = "ply\nformat ascii 1.0\ncomment test\nelement vertex 5\nproperty float x\nproperty float y\n\
                   property float z\nproperty uchar red\nproperty float intensity\nelement face 1\n\
                   property list uchar int vertex_indices\nend_header\n\
                   0 0 0 255 1\n1 0 0 0 2\n0 1 0 0 3\n0 0 1 0 4\n1 1 1 0 5\n3 0 1 2\n";
        let (pts, dropped) = parse_ply(p(), ply.as_bytes()).unwrap();
        assert_eq!(pts.len(), 5);
        assert_eq!(dropped, 0);
        assert_eq!(pts[4], Vector3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn binary_ply() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\n\
property float y\nproperty uchar tag\nproperty double z\nend_header\n"
            .to_vec();
        for (x, y, z) in [(1.5f64, 2.5f32, -3.0f64), (f64::NAN, 0.0, 0.0)] {
            bytes.extend_from_slice(&x.to_le_bytes());
            bytes.extend_from_slice(&y.to_le_bytes());
            bytes.push(7);
            bytes.extend_from_slice(&z.to_le_bytes());
        }
        let (pts, dropped) = parse_ply(p(), &bytes).unwrap();
        assert_eq!(pts, vec![Vector3::new(1.5, 2.5, -3.0)]);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn bad_ply_header_reports_line() {
        let ply = "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n0\n";
        assert!(matches!(parse_ply(p(), ply.as_bytes()), Err(BenchError::Parse { line: 4, .. })));
        let ply = "ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(matches!(parse_ply(p(), ply.as_bytes()), Err(BenchError::Parse { line: 2, .. })));
    }
}
