//! Indexed triangle meshes and on-mesh point locations.

mod io;

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use io::{load_mesh, parse_obj, parse_off, parse_stl, write_off, MeshFormat};

pub type Vec3 = Vector3<f64>;

/// Faces whose area falls below this fraction of the mean face area are
/// rejected as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

const NO_FACE: usize = usize::MAX;

/// Immutable, fully indexed triangle mesh (millimetres).
///
/// Faces are counter-clockwise when seen from the side their normal points
/// to. All derived tables are built once in [`TriMesh::new`].
#[derive(Debug, Clone)]
pub struct TriMesh {
    positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    edges: Vec<[usize; 2]>,
    edge_faces: Vec<[usize; 2]>,
    face_edges: Vec<[usize; 3]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_neighbors: Vec<Vec<usize>>,
    dual_areas: Vec<f64>,
    vertex_normals: Vec<Vec3>,
    boundary_vertex: Vec<bool>,
    boundary_loops: Vec<Vec<usize>>,
    checksum: String,
}

impl TriMesh {
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = positions.len();
        for (f, tri) in faces.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::BadFace {
                    face: f,
                    message: format!("vertex index {bad} out of range (mesh has {nv} vertices)"),
                });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::BadFace {
                    face: f,
                    message: format!("repeated vertex in {tri:?}"),
                });
            }
        }
        if faces.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "mesh has no faces".into(),
            });
        }

        let mut normals = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        for tri in &faces {
            let [p0, p1, p2] = tri.map(|v| positions[v]);
            let cross = (p1 - p0).cross(&(p2 - p0));
            let norm = cross.norm();
            areas.push(0.5 * norm);
            normals.push(if norm > 0.0 { cross / norm } else { Vec3::zeros() });
        }
        let mean_area = areas.iter().sum::<f64>() / areas.len() as f64;
        for (f, &a) in areas.iter().enumerate() {
            if !(a > DEGENERATE_AREA_RATIO * mean_area) {
                return Err(Error::DegenerateTriangle { face: f, area: a });
            }
        }

        // Undirected edges, numbered in order of first appearance.
        let mut edges = Vec::new();
        let mut edge_faces: Vec<[usize; 2]> = Vec::new();
        let mut edge_dir: Vec<bool> = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        for (f, tri) in faces.iter().enumerate() {
            let mut fe = [0usize; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let forward = a < b;
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push([NO_FACE, NO_FACE]);
                    edge_dir.push(forward);
                    edges.len() - 1
                });
                let slot = &mut edge_faces[e];
                if slot[0] == NO_FACE {
                    slot[0] = f;
                } else if slot[1] == NO_FACE {
                    if edge_dir[e] == forward {
                        return Err(Error::InconsistentOrientation { a: key.0, b: key.1 });
                    }
                    slot[1] = f;
                } else {
                    let count = faces
                        .iter()
                        .filter(|t| {
                            (0..3).any(|j| {
                                let (x, y) = (t[j], t[(j + 1) % 3]);
                                (x.min(y), x.max(y)) == key
                            })
                        })
                        .count();
                    return Err(Error::NonManifoldEdge {
                        a: key.0,
                        b: key.1,
                        count,
                    });
                }
                fe[k] = e;
            }
            face_edges.push(fe);
        }

        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, tri) in faces.iter().enumerate() {
            for &v in tri {
                vertex_faces[v].push(f);
            }
        }
        if let Some(v) = vertex_faces.iter().position(Vec::is_empty) {
            return Err(Error::Parse {
                line: 0,
                message: format!("vertex {v} is not referenced by any face"),
            });
        }
        let mut vertex_neighbors = vec![Vec::new(); nv];
        for &[a, b] in &edges {
            vertex_neighbors[a].push(b);
            vertex_neighbors[b].push(a);
        }
        for n in &mut vertex_neighbors {
            n.sort_unstable();
        }

        let dual_areas = barycentric_dual_areas(nv, &faces, &areas);

        let mut vertex_normals = vec![Vec3::zeros(); nv];
        for (f, tri) in faces.iter().enumerate() {
            for &v in tri {
                vertex_normals[v] += normals[f] * areas[f];
            }
        }
        for n in &mut vertex_normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }

        let mut boundary_vertex = vec![false; nv];
        for (e, ef) in edge_faces.iter().enumerate() {
            if ef[1] == NO_FACE {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }
        let boundary_loops = trace_boundary_loops(nv, &faces, &face_edges, &edge_faces)?;

        let checksum = mesh_checksum(&positions, &faces);

        Ok(Self {
            positions,
            faces,
            normals,
            areas,
            edges,
            edge_faces,
            face_edges,
            edge_lookup,
            vertex_faces,
            vertex_neighbors,
            dual_areas,
            vertex_normals,
            boundary_vertex,
            boundary_loops,
            checksum,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> [usize; 3] {
        self.faces[f]
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        self.normals[f]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.areas[f]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    /// Edge vector opposite corner `k` of face `f`, oriented counter-clockwise
    /// (from corner `k+1` to corner `k+2`).
    pub fn edge_vector(&self, f: usize, k: usize) -> Vec3 {
        let t = self.faces[f];
        self.positions[t[(k + 2) % 3]] - self.positions[t[(k + 1) % 3]]
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let t = self.faces[f];
        (self.positions[t[0]] + self.positions[t[1]] + self.positions[t[2]]) / 3.0
    }

    /// Undirected edges as `[a, b]` with `a < b`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Faces incident to edge `e` (one or two).
    pub fn edge_faces(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        self.edge_faces[e].iter().copied().filter(|&f| f != NO_FACE)
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_faces[e][1] == NO_FACE
    }

    /// Edge ids of face `f`; entry `k` is the edge opposite corner `k`.
    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edges[f]
    }

    /// Incident faces D1(i), ascending.
    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// 1-ring neighbours N1(i), ascending.
    pub fn vertex_neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_neighbors[v]
    }

    pub fn dual_area(&self, v: usize) -> f64 {
        self.dual_areas[v]
    }

    pub fn dual_areas(&self) -> &[f64] {
        &self.dual_areas
    }

    /// Area-weighted average of incident face normals.
    pub fn vertex_normal(&self, v: usize) -> Vec3 {
        self.vertex_normals[v]
    }

    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn total_area(&self) -> f64 {
        crate::exec::compensated_sum(self.areas.iter().copied())
    }

    pub fn mean_edge_length(&self) -> f64 {
        let total: f64 = self
            .edges
            .iter()
            .map(|&[a, b]| (self.positions[a] - self.positions[b]).norm())
            .sum();
        total / self.edges.len() as f64
    }

    /// Bounding-box diagonal, used as the length scale for tolerances.
    pub fn diameter(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }

    /// Hex SHA-256 over vertex coordinates and face indices.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Connected component label per vertex and the component count.
    /// Labels are assigned in order of the lowest vertex index.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let nv = self.num_vertices();
        let mut label = vec![usize::MAX; nv];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..nv {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in &self.vertex_neighbors[v] {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Position on edge (a, b) at parameter `t` from `a`.
    pub fn lerp(&self, a: usize, b: usize, t: f64) -> Vec3 {
        self.positions[a] + (self.positions[b] - self.positions[a]) * t
    }
}

/// Barycentric dual-cell areas: one third of every incident face.
pub fn dual_cell_areas(mesh: &TriMesh) -> Vec<f64> {
    mesh.dual_areas.clone()
}

/// Boundary loops of `mesh`, each oriented with the surface on its left.
pub fn boundary_loops(mesh: &TriMesh) -> Vec<Vec<usize>> {
    mesh.boundary_loops.clone()
}

fn barycentric_dual_areas(nv: usize, faces: &[[usize; 3]], areas: &[f64]) -> Vec<f64> {
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); nv];
    for (f, tri) in faces.iter().enumerate() {
        for &v in tri {
            parts[v].push(areas[f] / 3.0);
        }
    }
    parts
        .into_iter()
        .map(crate::exec::compensated_sum)
        .collect()
}

fn trace_boundary_loops(
    nv: usize,
    faces: &[[usize; 3]],
    face_edges: &[[usize; 3]],
    edge_faces: &[[usize; 2]],
) -> Result<Vec<Vec<usize>>> {
    // Boundary half-edges follow their face's orientation, which keeps the
    // surface on the left.
    let mut next = vec![usize::MAX; nv];
    let mut incoming = vec![0usize; nv];
    for (f, tri) in faces.iter().enumerate() {
        for k in 0..3 {
            let e = face_edges[f][k];
            if edge_faces[e][1] != NO_FACE {
                continue;
            }
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            if next[a] != usize::MAX {
                return Err(Error::OpenBoundary { vertex: a });
            }
            next[a] = b;
            incoming[b] += 1;
        }
    }
    if let Some(v) = incoming.iter().position(|&c| c > 1) {
        return Err(Error::OpenBoundary { vertex: v });
    }

    let mut visited = vec![false; nv];
    let mut loops = Vec::new();
    for start in 0..nv {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        loop {
            if visited[v] {
                if v != start {
                    return Err(Error::OpenBoundary { vertex: v });
                }
                break;
            }
            visited[v] = true;
            cycle.push(v);
            v = next[v];
            if v == usize::MAX {
                return Err(Error::OpenBoundary {
                    vertex: *cycle.last().unwrap(),
                });
            }
        }
        // `start` is the smallest vertex of its loop since scanning is ascending.
        loops.push(cycle);
    }
    Ok(loops)
}

fn mesh_checksum(positions: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((positions.len() as u64).to_le_bytes());
    for p in positions {
        for c in p.iter() {
            hasher.update(c.to_le_bytes());
        }
    }
    hasher.update((faces.len() as u64).to_le_bytes());
    for t in faces {
        for &v in t {
            hasher.update((v as u64).to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// A point on the mesh: either a vertex or an interior point of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationKind {
    Vertex(usize),
    /// Edge `(a, b)` with `a < b`, point at `a + t (b - a)`, `0 < t < 1`.
    Edge { a: usize, b: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "LocationRepr", try_from = "LocationRepr")]
pub struct MeshLocation {
    pub kind: LocationKind,
    pub position: Vec3,
}

impl MeshLocation {
    pub fn vertex(mesh: &TriMesh, v: usize) -> Self {
        Self {
            kind: LocationKind::Vertex(v),
            position: mesh.position(v),
        }
    }

    /// Point at parameter `t` from `a` along edge (a, b). Parameters at or
    /// beyond the endpoints collapse to the vertex.
    pub fn on_edge(mesh: &TriMesh, a: usize, b: usize, t: f64) -> Self {
        if t <= 0.0 {
            return Self::vertex(mesh, a);
        }
        if t >= 1.0 {
            return Self::vertex(mesh, b);
        }
        let (a, b, t) = if a < b { (a, b, t) } else { (b, a, 1.0 - t) };
        Self {
            kind: LocationKind::Edge { a, b, t },
            position: mesh.lerp(a, b, t),
        }
    }

    /// Linear interpolation of per-vertex `values` at this location.
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        match self.kind {
            LocationKind::Vertex(v) => values[v],
            LocationKind::Edge { a, b, t } => values[a] + (values[b] - values[a]) * t,
        }
    }

    pub fn interpolate_vec(&self, values: &[Vec3]) -> Vec3 {
        match self.kind {
            LocationKind::Vertex(v) => values[v],
            LocationKind::Edge { a, b, t } => values[a] + (values[b] - values[a]) * t,
        }
    }

    /// Faces containing this location.
    pub fn incident_faces(&self, mesh: &TriMesh) -> Vec<usize> {
        match self.kind {
            LocationKind::Vertex(v) => mesh.vertex_faces(v).to_vec(),
            LocationKind::Edge { a, b, .. } => mesh
                .edge_id(a, b)
                .map(|e| mesh.edge_faces(e).collect())
                .unwrap_or_default(),
        }
    }

    pub fn is_on_boundary(&self, mesh: &TriMesh) -> bool {
        match self.kind {
            LocationKind::Vertex(v) => mesh.is_boundary_vertex(v),
            LocationKind::Edge { a, b, .. } => mesh
                .edge_id(a, b)
                .is_some_and(|e| mesh.is_boundary_edge(e)),
        }
    }

    /// Same vertex, or same edge at the same parameter.
    pub fn same_site(&self, other: &MeshLocation) -> bool {
        self.kind == other.kind
    }
}

#[derive(Serialize, Deserialize)]
struct LocationRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertex: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    xyz: [f64; 3],
}

impl From<MeshLocation> for LocationRepr {
    fn from(loc: MeshLocation) -> Self {
        let xyz = [loc.position.x, loc.position.y, loc.position.z];
        match loc.kind {
            LocationKind::Vertex(v) => LocationRepr {
                kind: "vertex".into(),
                vertex: Some(v),
                edge: None,
                t: None,
                xyz,
            },
            LocationKind::Edge { a, b, t } => LocationRepr {
                kind: "edge".into(),
                vertex: None,
                edge: Some([a, b]),
                t: Some(t),
                xyz,
            },
        }
    }
}

impl TryFrom<LocationRepr> for MeshLocation {
    type Error = String;

    fn try_from(r: LocationRepr) -> Result<Self, String> {
        let position = Vec3::new(r.xyz[0], r.xyz[1], r.xyz[2]);
        let kind = match r.kind.as_str() {
            "vertex" => LocationKind::Vertex(r.vertex.ok_or("vertex location without `vertex`")?),
            "edge" => {
                let [a, b] = r.edge.ok_or("edge location without `edge`")?;
                let t = r.t.ok_or("edge location without `t`")?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(format!("edge parameter {t} outside (0, 1)"));
                }
                LocationKind::Edge { a, b, t }
            }
            other => return Err(format!("unknown location kind `{other}`")),
        };
        Ok(MeshLocation { kind, position })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn unit_square() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn unit_square_indexing() {
        let m = unit_square();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_faces(), 2);
        assert_eq!(m.num_edges(), 5);
        assert_eq!(m.boundary_loops(), &[vec![0, 1, 2, 3]]);
        assert!((0..4).all(|v| m.is_boundary_vertex(v)));
    }

    #[test]
    fn unit_square_dual_areas() {
        let c = dual_cell_areas(&unit_square());
        let expect = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0];
        for (got, want) in c.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn equilateral_triangle_dual_areas() {
        let h = 3f64.sqrt() / 2.0;
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.5, h, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for &c in m.dual_areas() {
            assert!((c - (3f64.sqrt() / 4.0) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn icosphere_is_closed_genus_zero() {
        let m = synth::icosphere(10.0, 3);
        assert_eq!(m.num_faces(), 1280);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.boundary_loops().is_empty());
        let rel = (crate::exec::compensated_sum(m.dual_areas().iter().copied()) - m.total_area())
            .abs()
            / m.total_area();
        assert!(rel < 1e-9);
    }

    #[test]
    fn annulus_has_two_loops() {
        let m = synth::annulus(2.0, 5.0, 4, 24);
        assert_eq!(m.boundary_loops().len(), 2);
    }

    #[test]
    fn boundary_loops_keep_surface_on_left() {
        let m = synth::grid(0.0, 3.0, 0.0, 2.0, 3, 2);
        let lp = &m.boundary_loops()[0];
        // Signed area of the loop in the xy-plane is positive (counter-clockwise).
        let mut s = 0.0;
        for i in 0..lp.len() {
            let p = m.position(lp[i]);
            let q = m.position(lp[(i + 1) % lp.len()]);
            s += p.x * q.y - q.x * p.y;
        }
        assert!(s > 0.0);
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let err = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, -1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonManifoldEdge { a: 0, b: 1, count: 3 } | Error::InconsistentOrientation { .. }));
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let err = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 3, 1]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { face: 1, .. }));
    }

    #[test]
    fn bowtie_vertex_is_open_boundary() {
        let err = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(-1.0, -1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 3, 4]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::OpenBoundary { vertex: 0 }));
    }

    #[test]
    fn edge_location_normalizes_and_collapses() {
        let m = unit_square();
        let loc = MeshLocation::on_edge(&m, 2, 0, 0.25);
        assert_eq!(loc.kind, LocationKind::Edge { a: 0, b: 2, t: 0.75 });
        assert!((loc.position - Vec3::new(0.75, 0.75, 0.0)).norm() < 1e-15);
        assert_eq!(MeshLocation::on_edge(&m, 2, 0, 0.0).kind, LocationKind::Vertex(2));
        assert_eq!(MeshLocation::on_edge(&m, 2, 0, 1.0).kind, LocationKind::Vertex(0));
    }

    #[test]
    fn loading_twice_gives_identical_tables() {
        let a = synth::disk(5.0, 6);
        let b = TriMesh::new(a.positions().to_vec(), a.faces().to_vec()).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.checksum(), b.checksum());
        for v in 0..a.num_vertices() {
            assert_eq!(a.vertex_faces(v), b.vertex_faces(v));
            assert_eq!(a.vertex_neighbors(v), b.vertex_neighbors(v));
        }
    }
}
