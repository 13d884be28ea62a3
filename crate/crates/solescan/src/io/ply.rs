//! PLY reader/writer for clouds and meshes.
//!
//! Supported subset: element `vertex` with float32 x/y/z, optional float32
//! nx/ny/nz, optional uint32 view_id; element `face` with a
//! `list uchar uint` index property. Both ASCII and binary-little-endian
//! variants, writers are byte-deterministic.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

struct VertexLayout {
    count: usize,
    // Property order as declared; we only accept the fixed layouts below.
    has_normals: bool,
    has_view_ids: bool,
}

struct Header {
    format: PlyFormat,
    vertex: VertexLayout,
    face_count: usize,
    /// Line index (1-based) where the header ends, for error reporting.
    end_line: usize,
    /// Byte offset just past "end_header\n".
    data_offset: usize,
}

fn parse_error(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut lines = Vec::new();
    while offset < bytes.len() {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| offset + p)
            .ok_or_else(|| parse_error(path, "header", "missing end_header"))?;
        let line = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| parse_error(path, format!("byte {offset}"), "non-utf8 header"))?
            .trim_end_matches('\r')
            .to_string();
        offset = end + 1;
        let is_end = line == "end_header";
        lines.push(line);
        if is_end {
            break;
        }
        if lines.len() > 200 {
            return Err(parse_error(path, "header", "header too long"));
        }
    }
    if lines.last().map(String::as_str) != Some("end_header") {
        return Err(parse_error(path, "header", "missing end_header"));
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(parse_error(path, "line 1", "not a PLY file"));
    }

    let mut format = None;
    let mut vertex: Option<VertexLayout> = None;
    let mut face_count = 0usize;
    let mut current: Option<&str> = None;
    let mut vertex_props: Vec<String> = Vec::new();

    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("ply") | Some("comment") | Some("end_header") | None => {}
            Some("format") => {
                format = match it.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLittleEndian),
                    other => {
                        return Err(parse_error(
                            path,
                            format!("line {lineno}"),
                            format!("unsupported format {other:?}"),
                        ))
                    }
                };
            }
            Some("element") => {
                let name = it.next().unwrap_or("");
                let count: usize = it
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_error(path, format!("line {lineno}"), "bad element count"))?;
                match name {
                    "vertex" => {
                        current = Some("vertex");
                        vertex = Some(VertexLayout {
                            count,
                            has_normals: false,
                            has_view_ids: false,
                        });
                    }
                    "face" => {
                        current = Some("face");
                        face_count = count;
                    }
                    other => {
                        return Err(parse_error(
                            path,
                            format!("line {lineno}"),
                            format!("unsupported element '{other}'"),
                        ))
                    }
                }
            }
            Some("property") => match current {
                Some("vertex") => {
                    let rest: Vec<&str> = it.collect();
                    if rest.len() != 2 {
                        return Err(parse_error(
                            path,
                            format!("line {lineno}"),
                            "unsupported vertex property",
                        ));
                    }
                    vertex_props.push(format!("{} {}", rest[0], rest[1]));
                }
                Some("face") => {
                    let decl: Vec<&str> = it.collect();
                    if decl != ["list", "uchar", "uint", "vertex_indices"]
                        && decl != ["list", "uint8", "uint32", "vertex_indices"]
                    {
                        return Err(parse_error(
                            path,
                            format!("line {lineno}"),
                            "unsupported face property",
                        ));
                    }
                }
                _ => {
                    return Err(parse_error(
                        path,
                        format!("line {lineno}"),
                        "property outside element",
                    ))
                }
            },
            Some(other) => {
                return Err(parse_error(
                    path,
                    format!("line {lineno}"),
                    format!("unknown header keyword '{other}'"),
                ))
            }
        }
    }

    let format = format.ok_or_else(|| parse_error(path, "header", "missing format line"))?;
    let mut vertex = vertex.ok_or_else(|| parse_error(path, "header", "missing vertex element"))?;

    let base = ["float x", "float y", "float z"];
    if vertex_props.len() < 3 || vertex_props[..3] != base {
        return Err(parse_error(
            path,
            "header",
            "vertex element must start with float x/y/z",
        ));
    }
    let mut rest = &vertex_props[3..];
    if rest.len() >= 3 && rest[..3] == ["float nx", "float ny", "float nz"] {
        vertex.has_normals = true;
        rest = &rest[3..];
    }
    if rest.len() == 1 && (rest[0] == "uint view_id" || rest[0] == "uint32 view_id") {
        vertex.has_view_ids = true;
        rest = &rest[1..];
    }
    if !rest.is_empty() {
        return Err(parse_error(
            path,
            "header",
            format!("unsupported vertex properties: {rest:?}"),
        ));
    }

    Ok(Header {
        format,
        vertex,
        face_count,
        end_line: lines.len(),
        data_offset: offset,
    })
}

struct ParsedPly {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    view_ids: Option<Vec<u32>>,
    faces: Vec<[u32; 3]>,
}

fn parse_body(path: &Path, bytes: &[u8], header: &Header) -> Result<ParsedPly> {
    let v = &header.vertex;
    let mut points = Vec::with_capacity(v.count);
    let mut normals = v.has_normals.then(|| Vec::with_capacity(v.count));
    let mut view_ids = v.has_view_ids.then(|| Vec::with_capacity(v.count));
    let mut faces = Vec::with_capacity(header.face_count);

    match header.format {
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&bytes[header.data_offset..]).map_err(|_| {
                parse_error(path, format!("byte {}", header.data_offset), "non-utf8 body")
            })?;
            let mut lines = body.lines();
            let mut lineno = header.end_line;
            for i in 0..v.count {
                lineno += 1;
                let line = lines.next().ok_or_else(|| {
                    parse_error(path, format!("line {lineno}"), format!("missing vertex {i}"))
                })?;
                // Properties are declared float32; parse at f32 precision
                // so ASCII and binary files yield identical geometry.
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f32>().map(|v| v as f64))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_error(path, format!("line {lineno}"), e.to_string()))?;
                let expected = 3
                    + if v.has_normals { 3 } else { 0 }
                    + if v.has_view_ids { 1 } else { 0 };
                if vals.len() != expected {
                    return Err(parse_error(
                        path,
                        format!("line {lineno}"),
                        format!("expected {expected} values, got {}", vals.len()),
                    ));
                }
                points.push(Point3::new(vals[0], vals[1], vals[2]));
                let mut k = 3;
                if let Some(ns) = normals.as_mut() {
                    ns.push(Vector3::new(vals[k], vals[k + 1], vals[k + 2]));
                    k += 3;
                }
                if let Some(ids) = view_ids.as_mut() {
                    ids.push(vals[k] as u32);
                }
            }
            for i in 0..header.face_count {
                lineno += 1;
                let line = lines.next().ok_or_else(|| {
                    parse_error(path, format!("line {lineno}"), format!("missing face {i}"))
                })?;
                let vals: Vec<u64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<u64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_error(path, format!("line {lineno}"), e.to_string()))?;
                if vals.len() != 4 || vals[0] != 3 {
                    return Err(parse_error(
                        path,
                        format!("line {lineno}"),
                        "only triangle faces are supported",
                    ));
                }
                faces.push([vals[1] as u32, vals[2] as u32, vals[3] as u32]);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut cur = header.data_offset;
            let take_f32 = |cur: &mut usize| -> Result<f32> {
                let end = *cur + 4;
                if end > bytes.len() {
                    return Err(parse_error(path, format!("byte {cur}"), "unexpected EOF"));
                }
                let val = f32::from_le_bytes(bytes[*cur..end].try_into().unwrap());
                *cur = end;
                Ok(val)
            };
            let take_u32 = |cur: &mut usize| -> Result<u32> {
                let end = *cur + 4;
                if end > bytes.len() {
                    return Err(parse_error(path, format!("byte {cur}"), "unexpected EOF"));
                }
                let val = u32::from_le_bytes(bytes[*cur..end].try_into().unwrap());
                *cur = end;
                Ok(val)
            };
            for _ in 0..v.count {
                let x = take_f32(&mut cur)? as f64;
                let y = take_f32(&mut cur)? as f64;
                let z = take_f32(&mut cur)? as f64;
                points.push(Point3::new(x, y, z));
                if let Some(ns) = normals.as_mut() {
                    let nx = take_f32(&mut cur)? as f64;
                    let ny = take_f32(&mut cur)? as f64;
                    let nz = take_f32(&mut cur)? as f64;
                    ns.push(Vector3::new(nx, ny, nz));
                }
                if let Some(ids) = view_ids.as_mut() {
                    ids.push(take_u32(&mut cur)?);
                }
            }
            for _ in 0..header.face_count {
                if cur >= bytes.len() {
                    return Err(parse_error(path, format!("byte {cur}"), "unexpected EOF"));
                }
                let n = bytes[cur];
                cur += 1;
                if n != 3 {
                    return Err(parse_error(
                        path,
                        format!("byte {}", cur - 1),
                        "only triangle faces are supported",
                    ));
                }
                let a = take_u32(&mut cur)?;
                let b = take_u32(&mut cur)?;
                let c = take_u32(&mut cur)?;
                faces.push([a, b, c]);
            }
        }
    }

    // Stored normals are float32 and may miss unit length by rounding;
    // re-normalize rather than reject.
    let normals = normals.map(|ns| {
        ns.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    Vector3::z()
                }
            })
            .collect()
    });

    Ok(ParsedPly {
        points,
        normals,
        view_ids,
        faces,
    })
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let parsed = parse_body(path, &bytes, &header)?;
    PointCloud::with_attributes(parsed.points, parsed.normals, parsed.view_ids)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let parsed = parse_body(path, &bytes, &header)?;
    if parsed.faces.is_empty() {
        return Err(parse_error(path, "header", "mesh file has no faces"));
    }
    TriangleMesh::new(parsed.points, parsed.faces)
}

/// Read a PLY that may or may not carry faces: meshes come back as
/// `Ok(Err(mesh))`... kept simple: returns the cloud plus faces if present.
pub fn read_cloud_or_mesh(path: impl AsRef<Path>) -> Result<(PointCloud, Vec<[u32; 3]>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let parsed = parse_body(path, &bytes, &header)?;
    let cloud = PointCloud::with_attributes(parsed.points, parsed.normals, parsed.view_ids)?;
    Ok((cloud, parsed.faces))
}

fn f32s(v: f64) -> f32 {
    v as f32
}

fn write_header(
    out: &mut Vec<u8>,
    format: PlyFormat,
    n_vertices: usize,
    has_normals: bool,
    has_view_ids: bool,
    n_faces: Option<usize>,
) {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let _ = writeln!(out, "ply");
    let _ = writeln!(out, "format {fmt} 1.0");
    let _ = writeln!(out, "element vertex {n_vertices}");
    let _ = writeln!(out, "property float x");
    let _ = writeln!(out, "property float y");
    let _ = writeln!(out, "property float z");
    if has_normals {
        let _ = writeln!(out, "property float nx");
        let _ = writeln!(out, "property float ny");
        let _ = writeln!(out, "property float nz");
    }
    if has_view_ids {
        let _ = writeln!(out, "property uint view_id");
    }
    if let Some(n) = n_faces {
        let _ = writeln!(out, "element face {n}");
        let _ = writeln!(out, "property list uchar uint vertex_indices");
    }
    let _ = writeln!(out, "end_header");
}

fn format_f32(v: f32) -> String {
    // Shortest round-trip representation; deterministic.
    format!("{v}")
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_header(
        &mut out,
        format,
        cloud.len(),
        cloud.normals.is_some(),
        cloud.view_ids.is_some(),
        None,
    );
    match format {
        PlyFormat::Ascii => {
            for i in 0..cloud.len() {
                let p = cloud.points[i];
                let mut line = format!(
                    "{} {} {}",
                    format_f32(f32s(p.x)),
                    format_f32(f32s(p.y)),
                    format_f32(f32s(p.z))
                );
                if let Some(ns) = &cloud.normals {
                    let n = ns[i];
                    line.push_str(&format!(
                        " {} {} {}",
                        format_f32(f32s(n.x)),
                        format_f32(f32s(n.y)),
                        format_f32(f32s(n.z))
                    ));
                }
                if let Some(ids) = &cloud.view_ids {
                    line.push_str(&format!(" {}", ids[i]));
                }
                let _ = writeln!(out, "{line}");
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for i in 0..cloud.len() {
                let p = cloud.points[i];
                out.extend_from_slice(&f32s(p.x).to_le_bytes());
                out.extend_from_slice(&f32s(p.y).to_le_bytes());
                out.extend_from_slice(&f32s(p.z).to_le_bytes());
                if let Some(ns) = &cloud.normals {
                    let n = ns[i];
                    out.extend_from_slice(&f32s(n.x).to_le_bytes());
                    out.extend_from_slice(&f32s(n.y).to_le_bytes());
                    out.extend_from_slice(&f32s(n.z).to_le_bytes());
                }
                if let Some(ids) = &cloud.view_ids {
                    out.extend_from_slice(&ids[i].to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_header(
        &mut out,
        format,
        mesh.vertices.len(),
        false,
        false,
        Some(mesh.faces.len()),
    );
    match format {
        PlyFormat::Ascii => {
            for v in &mesh.vertices {
                let _ = writeln!(
                    out,
                    "{} {} {}",
                    format_f32(f32s(v.x)),
                    format_f32(f32s(v.y)),
                    format_f32(f32s(v.z))
                );
            }
            for f in &mesh.faces {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for v in &mesh.vertices {
                out.extend_from_slice(&f32s(v.x).to_le_bytes());
                out.extend_from_slice(&f32s(v.y).to_le_bytes());
                out.extend_from_slice(&f32s(v.z).to_le_bytes());
            }
            for f in &mesh.faces {
                out.push(3u8);
                for &idx in f {
                    out.extend_from_slice(&idx.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
