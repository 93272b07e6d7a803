//! PLY reading and writing for voxelized colored point clouds.
//!
//! The reader accepts `ascii` and `binary_little_endian` files with scalar
//! `x`, `y`, `z` and optional `red`, `green`, `blue` vertex properties.
//! Clouds whose coordinates are all non-negative integers are taken as already
//! voxelized and keep their coordinates; anything else is shifted so the
//! minimum lands at the origin and floored onto the grid. Points landing in
//! the same voxel are merged by averaging their colors. The grid extent is
//! read from a `comment extent S` header line when present, otherwise it is
//! the smallest cube holding every point.

use crate::error::{Error, Result};
use crate::geometry::{Coord, PointCloud, Rgb, MAX_EXTENT};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

    /// Full-scale value of an integer color channel.
    fn color_scale(self) -> f64 {
        match self {
            Scalar::U8 | Scalar::I8 => 255.0,
            Scalar::U16 | Scalar::I16 => 65535.0,
            Scalar::U32 | Scalar::I32 => u32::MAX as f64,
            Scalar::F32 | Scalar::F64 => 1.0,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
    /// Line of the `element` declaration.
    line: usize,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
    extent: Option<u32>,
    /// Number of header lines including `end_header`.
    lines: usize,
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

fn read_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line_no = 0;
    let mut buf = Vec::new();
    let mut next = |r: &mut dyn BufRead| -> Result<Option<String>> {
        buf.clear();
        let n = r
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::Parse { line: line_no + 1, msg: e.to_string() })?;
        if n == 0 {
            return Ok(None);
        }
        line_no += 1;
        let s = String::from_utf8(buf.clone())
            .map_err(|_| Error::Parse { line: line_no, msg: "header is not UTF-8".into() })?;
        Ok(Some(s.trim_end_matches(['\n', '\r']).to_string()))
    };

    match next(r)? {
        Some(l) if l.trim() == "ply" => {}
        _ => return parse_err(1, "missing 'ply' magic"),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut extent = None;
    let mut line = 1;
    loop {
        let Some(text) = next(r)? else {
            return parse_err(line + 1, "unexpected end of file before end_header");
        };
        line += 1;
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["format", f, ver] => {
                if *ver != "1.0" {
                    return parse_err(line, format!("unsupported version {ver}"));
                }
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return parse_err(line, format!("unsupported format {other}")),
                });
            }
            ["comment", "extent", s] => {
                let s: u32 = s.parse().map_err(|_| Error::Parse { line, msg: format!("bad extent {s}") })?;
                extent = Some(s);
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("bad element count {count}") })?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    line,
                });
            }
            ["property", "list", ..] => {
                let Some(el) = elements.last_mut() else {
                    return parse_err(line, "property before any element");
                };
                if el.name == "vertex" {
                    return parse_err(line, "list properties on vertices are not supported");
                }
                // Marked with an empty name; only legal on trailing elements.
                el.props.push((String::new(), Scalar::U8));
            }
            ["property", ty, name] => {
                let Some(el) = elements.last_mut() else {
                    return parse_err(line, "property before any element");
                };
                let Some(s) = Scalar::parse(ty) else {
                    return parse_err(line, format!("unknown property type {ty}"));
                };
                el.props.push((name.to_string(), s));
            }
            ["end_header"] => break,
            _ => return parse_err(line, format!("unrecognized header line {text:?}")),
        }
    }
    let Some(format) = format else {
        return parse_err(line, "missing format line");
    };
    Ok(Header {
        format,
        elements,
        extent,
        lines: line,
    })
}

struct Layout {
    /// Column index of x, y, z.
    xyz: [usize; 3],
    rgb: Option<([usize; 3], Scalar)>,
    types: Vec<Scalar>,
}

fn vertex_layout(el: &Element) -> Result<Layout> {
    let find = |n: &str| el.props.iter().position(|(p, _)| p == n);
    let mut xyz = [0; 3];
    for (a, n) in ["x", "y", "z"].iter().enumerate() {
        xyz[a] = find(n).ok_or_else(|| Error::Attribute(format!("vertex property {n}")))?;
    }
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some(([r, g, b], el.props[r].1)),
        (None, None, None) => None,
        _ => return Err(Error::Attribute("incomplete red/green/blue properties".into())),
    };
    Ok(Layout {
        xyz,
        rgb,
        types: el.props.iter().map(|p| p.1).collect(),
    })
}

/// Reads a PLY file into a voxelized cloud.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(file))
}

/// Reads PLY data from any reader.
pub fn read_ply_from(mut r: impl BufRead) -> Result<PointCloud> {
    let header = read_header(&mut r)?;
    let Some(vi) = header.elements.iter().position(|e| e.name == "vertex") else {
        return parse_err(header.lines, "no vertex element");
    };
    let layout = vertex_layout(&header.elements[vi])?;
    let count = header.elements[vi].count;
    if count == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(count);
    let mut colors: Option<Vec<Rgb>> = layout.rgb.map(|_| Vec::with_capacity(count));
    let mut line = header.lines;

    match header.format {
        Format::Ascii => {
            let mut text = String::new();
            let mut read_line = |line: &mut usize| -> Result<Vec<f64>> {
                text.clear();
                let n = r.read_line(&mut text).map_err(|e| Error::Parse { line: *line + 1, msg: e.to_string() })?;
                *line += 1;
                if n == 0 {
                    return parse_err(*line, "unexpected end of file");
                }
                text.split_whitespace()
                    .map(|w| w.parse::<f64>().map_err(|_| Error::Parse { line: *line, msg: format!("bad number {w:?}") }))
                    .collect()
            };
            for el in &header.elements[..vi] {
                for _ in 0..el.count {
                    read_line(&mut line)?;
                }
            }
            for _ in 0..count {
                let vals = read_line(&mut line)?;
                if vals.len() != layout.types.len() {
                    return parse_err(line, format!("expected {} values, got {}", layout.types.len(), vals.len()));
                }
                points.push(layout.xyz.map(|c| vals[c]));
                if let (Some(cols), Some((idx, ty))) = (&mut colors, layout.rgb) {
                    cols.push(idx.map(|c| vals[c] / ty.color_scale()));
                }
            }
        }
        Format::BinaryLe => {
            for el in &header.elements[..vi] {
                if el.props.iter().any(|p| p.0.is_empty()) {
                    return parse_err(el.line, "list properties before the vertex element are not supported");
                }
                let size: usize = el.props.iter().map(|p| p.1.size()).sum();
                let mut skip = vec![0u8; size * el.count];
                r.read_exact(&mut skip)
                    .map_err(|_| Error::Parse { line: el.line, msg: format!("truncated {} data", el.name) })?;
            }
            let offsets: Vec<usize> = layout
                .types
                .iter()
                .scan(0, |acc, t| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = layout.types.iter().map(|t| t.size()).sum();
            let mut rec = vec![0u8; stride];
            for k in 0..count {
                r.read_exact(&mut rec).map_err(|_| Error::Parse {
                    line,
                    msg: format!("truncated binary data at vertex {k} of {count}"),
                })?;
                let val = |c: usize| layout.types[c].decode(&rec[offsets[c]..]);
                points.push(layout.xyz.map(val));
                if let (Some(cols), Some((idx, ty))) = (&mut colors, layout.rgb) {
                    cols.push(idx.map(|c| val(c) / ty.color_scale()));
                }
            }
            line += 1;
        }
    }
    if let Some(p) = points.iter().find(|p| p.iter().any(|x| !x.is_finite())) {
        return parse_err(line, format!("non-finite coordinate {p:?}"));
    }
    if let Some(cols) = &mut colors {
        for c in cols.iter_mut() {
            for x in c.iter_mut() {
                *x = x.clamp(0.0, 1.0);
            }
        }
    }
    let coords = quantize(&points);
    let need = coords.iter().flatten().copied().max().unwrap_or(0) + 1;
    let extent = match header.extent {
        Some(s) if s >= need => s,
        Some(s) => {
            return Err(Error::InvalidCloud(format!("declared extent {s} is smaller than the data ({need})")));
        }
        None => need,
    };
    if extent > MAX_EXTENT {
        return Err(Error::InvalidCloud(format!("extent {extent} exceeds {MAX_EXTENT}")));
    }
    PointCloud::merge_duplicates(&coords, colors.as_deref(), extent)
}

fn quantize(points: &[[f64; 3]]) -> Vec<Coord> {
    let integral = points.iter().flatten().all(|&x| x >= 0.0 && x.fract() == 0.0 && x < MAX_EXTENT as f64);
    if integral {
        return points.iter().map(|p| p.map(|x| x as u32)).collect();
    }
    let mut min = [f64::INFINITY; 3];
    for p in points {
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
        }
    }
    points
        .iter()
        .map(|p| std::array::from_fn(|a| (p[a] - min[a]).floor().min((MAX_EXTENT - 1) as f64) as u32))
        .collect()
}

/// Writes a binary little-endian PLY with float coordinates and, when the
/// cloud has colors, 8-bit channels `round(c * 255)`.
pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_ply_to(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ply_to(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    let mut head = format!(
        "ply\nformat binary_little_endian 1.0\ncomment extent {}\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n",
        cloud.extent(),
        cloud.len()
    );
    if cloud.colors().is_some() {
        head.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    head.push_str("end_header\n");
    w.write_all(head.as_bytes())?;
    let mut rec = Vec::with_capacity(15);
    for (j, c) in cloud.coords().iter().enumerate() {
        rec.clear();
        for &x in c {
            rec.extend_from_slice(&(x as f32).to_le_bytes());
        }
        if let Some(colors) = cloud.colors() {
            rec.extend(colors[j].iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8));
        }
        w.write_all(&rec)?;
    }
    Ok(())
}
