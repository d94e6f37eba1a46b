use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    StlAscii,
    StlBinary,
}

impl std::str::FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "stl_ascii" | "stl-ascii" => Ok(MeshFormat::StlAscii),
            "stl_binary" | "stl-binary" => Ok(MeshFormat::StlBinary),
            _ => Err(Error::Argument(format!("unknown mesh format `{s}`"))),
        }
    }
}

impl MeshFormat {
    /// Guesses the format from a file extension and, for `.stl`, the content.
    pub fn detect(extension: &str, bytes: &[u8]) -> Result<Self> {
        match extension.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "stl" => {
                // ASCII STL starts with "solid", but so do some binary headers;
                // trust the binary length arithmetic when it is consistent.
                if bytes.len() >= 84 {
                    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
                    if bytes.len() == 84 + 50 * n {
                        return Ok(MeshFormat::StlBinary);
                    }
                }
                if bytes.trim_ascii_start().starts_with(b"solid") {
                    Ok(MeshFormat::StlAscii)
                } else {
                    Ok(MeshFormat::StlBinary)
                }
            }
            other => Err(Error::Argument(format!("unsupported mesh extension `{other}`"))),
        }
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub name: String,
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    /// Triangles discarded for repeating a vertex index.
    pub dropped_degenerate: usize,
}

impl TriangleMesh {
    /// Builds a mesh, dropping triangles that repeat a vertex index.
    pub fn new(name: impl Into<String>, vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let count = vertices.len();
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for t in triangles {
            if let Some(bad) = t.iter().find(|i| **i >= count) {
                return Err(Error::Index {
                    index: *bad as i64,
                    count,
                });
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                dropped += 1;
            } else {
                kept.push(t);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(TriangleMesh {
            name: name.into(),
            vertices,
            triangles: kept,
            dropped_degenerate: dropped,
        })
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh> {
    if bytes.is_empty() {
        return Err(Error::Parse {
            location: "byte 0".into(),
            message: "input is empty".into(),
        });
    }
    match format {
        MeshFormat::Obj => parse_obj(bytes),
        MeshFormat::StlAscii => parse_stl_ascii(bytes),
        MeshFormat::StlBinary => parse_stl_binary(bytes),
    }
}

fn line_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| line_err(line, "missing coordinate"))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| line_err(line, format!("bad number `{tok}`")))?;
    if !v.is_finite() {
        return Err(line_err(line, format!("non-finite coordinate `{tok}`")));
    }
    Ok(v)
}

fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        location: format!("byte {}", e.valid_up_to()),
        message: "OBJ is not valid UTF-8".into(),
    })?;
    let mut name = String::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line_no)?;
                let y = parse_f64(toks.next(), line_no)?;
                let z = parse_f64(toks.next(), line_no)?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| line_err(line_no, format!("bad face index `{tok}`")))?;
                    // 1-based, negative values count back from the latest vertex
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(line_err(line_no, "face index 0 is invalid"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(Error::Index {
                            index: idx,
                            count: vertices.len(),
                        });
                    }
                    face.push(resolved as usize);
                }
                if face.len() < 3 {
                    return Err(line_err(line_no, "face needs at least 3 vertices"));
                }
                for w in 1..face.len() - 1 {
                    triangles.push([face[0], face[w], face[w + 1]]);
                }
            }
            Some("o") | Some("g") if name.is_empty() => {
                name = toks.collect::<Vec<_>>().join(" ");
            }
            _ => {}
        }
    }
    TriangleMesh::new(name, vertices, triangles)
}

/// Merges bit-identical coordinates into shared vertices.
#[derive(Default)]
struct VertexDedup {
    vertices: Vec<Point3>,
    seen: HashMap<[u64; 3], usize>,
}

impl VertexDedup {
    fn insert(&mut self, p: Point3) -> usize {
        let key = p.map(f64::to_bits);
        *self.seen.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        location: format!("byte {}", e.valid_up_to()),
        message: "ASCII STL is not valid UTF-8".into(),
    })?;
    let mut name = String::new();
    let mut dedup = VertexDedup::default();
    let mut triangles = Vec::new();
    let mut facet: Vec<usize> = Vec::with_capacity(3);
    let mut in_loop = false;
    let mut saw_solid = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            None => {}
            Some("solid") => {
                saw_solid = true;
                name = toks.collect::<Vec<_>>().join(" ");
            }
            Some("facet") | Some("endsolid") => {}
            Some("outer") => {
                if in_loop {
                    return Err(line_err(line_no, "nested `outer loop`"));
                }
                in_loop = true;
                facet.clear();
            }
            Some("vertex") => {
                if !in_loop {
                    return Err(line_err(line_no, "`vertex` outside a loop"));
                }
                let x = parse_f64(toks.next(), line_no)?;
                let y = parse_f64(toks.next(), line_no)?;
                let z = parse_f64(toks.next(), line_no)?;
                facet.push(dedup.insert([x, y, z]));
            }
            Some("endloop") => {
                if !in_loop || facet.len() != 3 {
                    return Err(line_err(line_no, "facet loop must hold exactly 3 vertices"));
                }
                in_loop = false;
                triangles.push([facet[0], facet[1], facet[2]]);
            }
            Some("endfacet") => {}
            Some(other) => return Err(line_err(line_no, format!("unexpected keyword `{other}`"))),
        }
    }
    if !saw_solid {
        return Err(line_err(1, "missing `solid` header"));
    }
    if in_loop {
        return Err(line_err(text.lines().count(), "unterminated facet loop"));
    }
    TriangleMesh::new(name, dedup.vertices, triangles)
}

fn parse_stl_binary(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() < 84 {
        return Err(Error::Parse {
            location: format!("byte {}", bytes.len()),
            message: "binary STL shorter than its 84-byte header".into(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() != expected {
        return Err(Error::Parse {
            location: format!("byte {}", bytes.len().min(expected)),
            message: format!(
                "binary STL declares {count} facets ({expected} bytes), file has {}",
                bytes.len()
            ),
        });
    }
    let header = String::from_utf8_lossy(&bytes[..80]);
    let name = header.trim_end_matches('\0').trim().to_string();
    let mut dedup = VertexDedup::default();
    let mut triangles = Vec::with_capacity(count);
    for f in 0..count {
        let base = 84 + 50 * f;
        // skip the 12-byte normal; three vertices follow
        let mut tri = [0usize; 3];
        for (v, slot) in tri.iter_mut().enumerate() {
            let at = base + 12 + 12 * v;
            let mut p = [0.0; 3];
            for (a, c) in p.iter_mut().enumerate() {
                let o = at + 4 * a;
                let val = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
                if !val.is_finite() {
                    return Err(Error::Parse {
                        location: format!("byte {o}"),
                        message: "non-finite vertex coordinate".into(),
                    });
                }
                *c = val as f64;
            }
            *slot = dedup.insert(p);
        }
        triangles.push(tri);
    }
    TriangleMesh::new(name, dedup.vertices, triangles)
}

/// Closed axis-aligned box `[lo, hi]` as 8 vertices and 12 outward-wound triangles.
pub fn box_mesh(lo: Point3, hi: Point3) -> TriangleMesh {
    let v = (0..8)
        .map(|c| {
            [
                if c & 1 == 0 { lo[0] } else { hi[0] },
                if c & 2 == 0 { lo[1] } else { hi[1] },
                if c & 4 == 0 { lo[2] } else { hi[2] },
            ]
        })
        .collect();
    let t = vec![
        [0, 2, 1], [1, 2, 3], // z = lo
        [4, 5, 6], [5, 7, 6], // z = hi
        [0, 1, 4], [1, 5, 4], // y = lo
        [2, 6, 3], [3, 6, 7], // y = hi
        [0, 4, 2], [2, 4, 6], // x = lo
        [1, 3, 5], [3, 7, 5], // x = hi
    ];
    TriangleMesh::new("box", v, t).expect("box mesh is well formed")
}
