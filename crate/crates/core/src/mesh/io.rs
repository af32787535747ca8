use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    /// ASCII STL only.
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(MeshFormat::Stl),
            _ => None,
        }
    }
}

impl std::str::FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            "stl" | "stl-ascii" => Ok(MeshFormat::Stl),
            other => Err(format!("unknown mesh format `{other}`")),
        }
    }
}

/// Reads and indexes a mesh. `weld_tolerance` only affects STL input; 0
/// welds by exact coordinate equality.
pub fn load_mesh(path: &Path, format: MeshFormat, weld_tolerance: f64) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::Stl => parse_stl(&text, weld_tolerance),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: "missing coordinate".into(),
    })?;
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid number `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite coordinate `{tok}`"),
        });
    }
    Ok(v)
}

pub fn parse_off(text: &str) -> Result<TriMesh> {
    // Data lines with comments stripped, keeping 1-based line numbers.
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });

    let (mut line_no, mut line) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    if let Some(rest) = line.strip_prefix("OFF") {
        let rest = rest.trim();
        if rest.is_empty() {
            (line_no, line) = lines.next().ok_or(Error::Parse {
                line: line_no,
                message: "missing counts line".into(),
            })?;
        } else {
            line = rest;
        }
    }
    let counts: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: line_no,
            message: "invalid counts line".into(),
        })?;
    if counts.len() < 2 {
        return Err(Error::Parse {
            line: line_no,
            message: "counts line needs vertex and face counts".into(),
        });
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or(Error::Parse {
            line: line_no,
            message: format!("expected {nv} vertices, found {}", positions.len()),
        })?;
        line_no = ln;
        let mut it = l.split_whitespace();
        positions.push(Vec3::new(
            parse_f64(it.next(), ln)?,
            parse_f64(it.next(), ln)?,
            parse_f64(it.next(), ln)?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, l) = lines.next().ok_or(Error::Parse {
            line: line_no,
            message: format!("expected {nf} faces, found {f}"),
        })?;
        line_no = ln;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::BadFace {
                face: f,
                message: format!("invalid index on line {ln}"),
            })?;
        if idx.first() != Some(&3) || idx.len() < 4 {
            return Err(Error::BadFace {
                face: f,
                message: format!("line {ln}: only triangles are supported"),
            });
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    TriMesh::new(positions, faces)
}

/// OBJ reader: `v` and `f` records only; everything else is skipped with a
/// warning. Face indices are 1-based; negative indices are relative.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let mut ignored = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut it = l.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => positions.push(Vec3::new(
                parse_f64(it.next(), ln)?,
                parse_f64(it.next(), ln)?,
                parse_f64(it.next(), ln)?,
            )),
            "f" => {
                let face = faces.len();
                let mut idx = Vec::with_capacity(3);
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = head.parse().map_err(|_| Error::BadFace {
                        face,
                        message: format!("line {ln}: invalid index `{tok}`"),
                    })?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        positions.len() as i64 + raw
                    } else {
                        return Err(Error::BadFace {
                            face,
                            message: format!("line {ln}: index 0 is invalid in 1-based OBJ"),
                        });
                    };
                    if resolved < 0 {
                        return Err(Error::BadFace {
                            face,
                            message: format!("line {ln}: relative index `{tok}` out of range"),
                        });
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() != 3 {
                    return Err(Error::BadFace {
                        face,
                        message: format!("line {ln}: only triangles are supported"),
                    });
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            other => {
                ignored.insert(other.to_string());
            }
        }
    }
    if !ignored.is_empty() {
        warn!("ignored OBJ records: {}", ignored.into_iter().collect::<Vec<_>>().join(", "));
    }
    TriMesh::new(positions, faces)
}

/// ASCII STL reader. Vertices are welded by exact bitwise equality when
/// `tolerance == 0`, otherwise within `tolerance` (first come, first kept).
pub fn parse_stl(text: &str, tolerance: f64) -> Result<TriMesh> {
    let mut corners: Vec<(usize, Vec3)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if let Some(rest) = l.strip_prefix("vertex") {
            let mut it = rest.split_whitespace();
            let p = Vec3::new(
                parse_f64(it.next(), i + 1)?,
                parse_f64(it.next(), i + 1)?,
                parse_f64(it.next(), i + 1)?,
            );
            corners.push((i + 1, p));
        }
    }
    if !corners.len().is_multiple_of(3) {
        return Err(Error::Parse {
            line: corners.last().map_or(0, |c| c.0),
            message: format!("{} vertex records is not a multiple of 3", corners.len()),
        });
    }

    let mut welder = Welder::new(tolerance);
    let ids: Vec<usize> = corners.iter().map(|&(_, p)| welder.insert(p)).collect();
    let faces = ids.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    TriMesh::new(welder.positions, faces)
}

struct Welder {
    tolerance: f64,
    positions: Vec<Vec3>,
    exact: HashMap<[u64; 3], usize>,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl Welder {
    fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            positions: Vec::new(),
            exact: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    fn cell(&self, p: &Vec3) -> [i64; 3] {
        [p.x, p.y, p.z].map(|c| (c / self.tolerance).floor() as i64)
    }

    fn insert(&mut self, p: Vec3) -> usize {
        // Normalize -0.0 so it welds with 0.0.
        let key = [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
        if let Some(&id) = self.exact.get(&key) {
            return id;
        }
        if self.tolerance > 0.0 {
            let c = self.cell(&p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            if let Some(&id) = list
                                .iter()
                                .find(|&&id| (self.positions[id] - p).norm() <= self.tolerance)
                            {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        let id = self.positions.len();
        self.positions.push(p);
        self.exact.insert(key, id);
        if self.tolerance > 0.0 {
            let c = self.cell(&p);
            self.cells.entry(c).or_default().push(id);
        }
        id
    }
}

pub fn write_off(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} {}", mesh.num_vertices(), mesh.num_faces(), mesh.num_edges());
    for p in mesh.positions() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
