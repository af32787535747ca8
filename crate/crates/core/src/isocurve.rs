//! Level-set extraction by seed growth.
//!
//! A vertex is *above* level `l` when `phi >= l`; a vertex sitting exactly
//! on the level is thereby pushed up by an infinitesimal amount, so every
//! triangle is cut by at most one straight segment and every crossed edge
//! has one endpoint strictly below the level. Crossed edges and the faces
//! linking them form a graph of paths and cycles, one per curve.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::energy::ScalarField;
use crate::mesh::LocationKind;
use crate::{Error, ExecPolicy, MeshLocation, Result, TriMesh, Vec3};

/// Levels that coincide with the field extremes are moved inward by this
/// fraction of the range.
pub const EXTREMUM_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoCurve {
    pub level: f64,
    pub closed: bool,
    /// Checksum of the field the curve was traced on.
    pub field: String,
    /// Ordered points. A closed curve does not repeat its first point.
    pub points: Vec<MeshLocation>,
}

impl IsoCurve {
    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Polyline segments as index pairs, including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points.len();
        let m = if self.closed && n > 2 { n } else { n.saturating_sub(1) };
        (0..m).map(move |i| (i, (i + 1) % n))
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .map(|(i, j)| (self.points[j].position - self.points[i].position).norm())
            .sum()
    }
}

/// Moves `level` inside `(min, max)` when it sits on an extreme; `None`
/// when it lies outside the range.
pub fn clamp_level(level: f64, min: f64, max: f64) -> Option<f64> {
    let eps = EXTREMUM_CLAMP * (max - min);
    if !(max > min) || level < min || level > max || !level.is_finite() {
        return None;
    }
    if level == min {
        Some(min + eps)
    } else if level == max {
        Some(max - eps)
    } else {
        Some(level)
    }
}

/// All connected components of `{phi = level}`.
///
/// Curves are oriented so that, seen from the surface normal, higher values
/// lie to the right of the direction of travel. Closed curves start at the
/// crossing on the lowest-numbered edge, open curves at the boundary end
/// fixed by the orientation, so the output does not depend on scan order.
pub fn extract(mesh: &TriMesh, phi: &ScalarField, level: f64) -> Result<Vec<IsoCurve>> {
    phi.check_mesh(mesh)?;
    let Some(level) = clamp_level(level, phi.min(), phi.max()) else {
        warn!(
            "level {level} outside ({}, {}): no curves",
            phi.min(),
            phi.max()
        );
        return Ok(Vec::new());
    };
    Ok(trace(mesh, phi.values(), level, &phi.checksum()))
}

/// [`extract`] for several levels; levels are independent and run under
/// `exec`. The result is indexed like `levels`.
pub fn extract_levels(
    mesh: &TriMesh,
    phi: &ScalarField,
    levels: &[f64],
    exec: ExecPolicy,
) -> Result<Vec<Vec<IsoCurve>>> {
    phi.check_mesh(mesh)?;
    let id = phi.checksum();
    let (min, max) = (phi.min(), phi.max());
    Ok(exec.map_slice(levels, |&l| match clamp_level(l, min, max) {
        Some(l) => trace(mesh, phi.values(), l, &id),
        None => Vec::new(),
    }))
}

/// Tracing on raw values, without the range clamp. Used directly by tests
/// that need fields violating the planner's preconditions.
pub fn trace(mesh: &TriMesh, phi: &[f64], level: f64, field: &str) -> Vec<IsoCurve> {
    let above = |v: usize| phi[v] >= level;
    let crossed = |e: usize| {
        let [a, b] = mesh.edges()[e];
        above(a) != above(b)
    };

    // next[e] = edge where the curve leaves the face it enters through e.
    let ne = mesh.num_edges();
    let mut next = vec![usize::MAX; ne];
    let mut has_prev = vec![false; ne];
    for f in 0..mesh.num_faces() {
        let tri = mesh.face(f);
        let up = tri.map(above);
        if up[0] == up[1] && up[1] == up[2] {
            continue;
        }
        // The apex is the corner alone on its side; both crossed edges
        // touch it. Edge k of the face is opposite corner k.
        let s = (0..3).find(|&k| up[k] != up[(k + 1) % 3] && up[k] != up[(k + 2) % 3]).unwrap();
        let edges = mesh.face_edges(f);
        let to_next = edges[(s + 2) % 3]; // edge (s, s+1)
        let to_prev = edges[(s + 1) % 3]; // edge (s+2, s)
        let (from, to) = if up[s] { (to_prev, to_next) } else { (to_next, to_prev) };
        next[from] = to;
        has_prev[to] = true;
    }

    let point = |e: usize| {
        let [a, b] = mesh.edges()[e];
        let (lo, hi) = if above(a) { (b, a) } else { (a, b) };
        let t = (level - phi[lo]) / (phi[hi] - phi[lo]);
        MeshLocation::on_edge(mesh, lo, hi, t)
    };

    let mut visited = vec![false; ne];
    let mut curves = Vec::new();
    let walk = |start: usize, closed: bool, visited: &mut Vec<bool>| {
        let mut points: Vec<MeshLocation> = Vec::new();
        let mut e = start;
        loop {
            visited[e] = true;
            let p = point(e);
            if points.last().is_none_or(|q| !q.same_site(&p)) {
                points.push(p);
            }
            e = next[e];
            if e == usize::MAX || e == start {
                break;
            }
        }
        if closed && points.len() > 1 && points[0].same_site(points.last().unwrap()) {
            points.pop();
        }
        if points.len() < 2 {
            warn!("level {level}: curve from edge {start} collapses to a single point, dropped");
            return None;
        }
        Some(IsoCurve {
            level,
            closed,
            field: field.to_string(),
            points,
        })
    };
    for e in 0..ne {
        if crossed(e) && !has_prev[e] && !visited[e] {
            curves.extend(walk(e, false, &mut visited));
        }
    }
    for e in 0..ne {
        if crossed(e) && !visited[e] {
            curves.extend(walk(e, true, &mut visited));
        }
    }
    curves
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    OpenEndInterior,
    SegmentOffFace,
    RepeatedPoint,
    FaceCrossedTwice,
    CurvesIntersect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub curve: usize,
    pub other: Option<usize>,
    pub xyz: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub curves: usize,
    pub points: usize,
    /// Smallest distance between points of curves at different levels;
    /// infinite when fewer than two levels are present.
    pub min_separation: f64,
    pub violations: Vec<Violation>,
}

impl TopologyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(crate) fn site_key(p: &MeshLocation) -> (usize, usize, u64) {
    match p.kind {
        LocationKind::Vertex(v) => (v, usize::MAX, 0),
        LocationKind::Edge { a, b, t } => (a, b, t.to_bits()),
    }
}

fn xyz(p: Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Checks the level-set guarantees on a set of curves from one field:
/// open ends on the boundary, consecutive points in a common face, each
/// face crossed once per level, no repeated or shared points, and positive
/// separation between different levels.
pub fn verify_topology(curves: &[IsoCurve], mesh: &TriMesh) -> TopologyReport {
    let mut violations = Vec::new();
    let mut report = |kind, curve, other, p: Vec3| {
        violations.push(Violation {
            kind,
            curve,
            other,
            xyz: xyz(p),
        })
    };

    let mut owner: HashMap<(usize, usize, u64), usize> = HashMap::new();
    let mut face_use: HashMap<(u64, usize), usize> = HashMap::new();
    for (c, curve) in curves.iter().enumerate() {
        if !curve.closed {
            for end in [curve.points.first(), curve.points.last()].into_iter().flatten() {
                if !end.is_on_boundary(mesh) {
                    report(ViolationKind::OpenEndInterior, c, None, end.position);
                }
            }
        }
        for (i, j) in curve.segments() {
            let (p, q) = (&curve.points[i], &curve.points[j]);
            let fq = q.incident_faces(mesh);
            let common: Vec<usize> = p.incident_faces(mesh).into_iter().filter(|f| fq.contains(f)).collect();
            match common.as_slice() {
                [] => report(ViolationKind::SegmentOffFace, c, None, p.position),
                [f] => {
                    if let Some(&prev) = face_use.get(&(curve.level.to_bits(), *f)) {
                        let other = (prev != c).then_some(prev);
                        report(ViolationKind::FaceCrossedTwice, c, other, mesh.face_centroid(*f));
                    } else {
                        face_use.insert((curve.level.to_bits(), *f), c);
                    }
                }
                // A segment along a mesh edge: both end vertices on the level.
                _ => {}
            }
        }
        for p in &curve.points {
            match owner.insert(site_key(p), c) {
                Some(prev) if prev == c => report(ViolationKind::RepeatedPoint, c, None, p.position),
                Some(prev) => report(ViolationKind::CurvesIntersect, c, Some(prev), p.position),
                None => {}
            }
        }
    }

    let min_separation = min_separation(curves, mesh.mean_edge_length().max(f64::MIN_POSITIVE));
    let points = curves.iter().map(|c| c.points.len()).sum();
    TopologyReport {
        curves: curves.len(),
        points,
        min_separation,
        violations,
    }
}

/// Nearest pair of points on curves with different levels, by a uniform
/// grid of cell size `cell`. Pairs farther than `cell` apart are not
/// examined, so a result of `cell` or more reads as "at least `cell`".
fn min_separation(curves: &[IsoCurve], cell: f64) -> f64 {
    let key = |p: Vec3| {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<(f64, Vec3)>> = HashMap::new();
    for c in curves {
        for p in &c.points {
            grid.entry(key(p.position)).or_default().push((c.level, p.position));
        }
    }
    let distinct_levels = curves.windows(2).any(|w| w[0].level != w[1].level)
        || curves.first().is_some_and(|c0| curves.iter().any(|c| c.level != c0.level));
    if !distinct_levels {
        return f64::INFINITY;
    }
    let mut best = cell;
    for c in curves {
        for p in &c.points {
            let k = key(p.position);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                            continue;
                        };
                        for &(l, q) in bucket {
                            if l != c.level {
                                best = best.min((q - p.position).norm());
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

pub fn write_curves_json(curves: &[IsoCurve], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, curves)?;
    w.flush().map_err(|e| Error::io(path, e))
}
