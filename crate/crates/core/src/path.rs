//! From a solved field to a finished tool path: level scheduling, greedy
//! chord simplification and export.

use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::diffops::{CurvatureData, Operators};
use crate::energy::ScalarField;
use crate::isocurve::{extract, extract_levels, site_key, IsoCurve};
use crate::optimizer::PlanMode;
use crate::{Error, ExecPolicy, Result, TriMesh, Vec3};

/// Offset of the first and last direction-parallel levels from the field
/// extremes, as a fraction of the range.
pub const ENDPOINT_OFFSET: f64 = 1e-6;

/// Adaptive increments below this fraction of the range abort scheduling.
pub const MIN_INCREMENT_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    IsoScallop,
    Adaptive,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iso-scallop" | "iso" => Ok(ScheduleKind::IsoScallop),
            "adaptive" => Ok(ScheduleKind::Adaptive),
            other => Err(Error::Config(format!(
                "unknown schedule '{other}' (expected iso-scallop or adaptive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub kind: ScheduleKind,
    pub mode: PlanMode,
    pub h: f64,
    /// Strictly increasing.
    pub levels: Vec<f64>,
    /// Offset of the first level above the field minimum (and, in direction
    /// mode, of the last level below the maximum).
    pub endpoint_offset: f64,
    /// True when the last level sits at the maximum (direction mode).
    pub ends_at_max: bool,
    /// The field range fits in one increment, so a single level was used.
    pub single_level: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<String>,
}

impl LevelSchedule {
    pub fn increments(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn single(kind: ScheduleKind, mode: PlanMode, h: f64, phi: &ScalarField) -> Self {
        warn!(
            "sqrt(h) = {} covers the whole field range {}: one level",
            h.sqrt(),
            phi.range()
        );
        Self {
            kind,
            mode,
            h,
            levels: vec![0.5 * (phi.min() + phi.max())],
            endpoint_offset: 0.0,
            ends_at_max: false,
            single_level: true,
            sampling: None,
        }
    }
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("h must be positive, got {h}")))
    }
}

/// Levels `min + i sqrt(h)`. The first level is lifted off the minimum by
/// [`ENDPOINT_OFFSET`] of the range; direction-parallel schedules also end
/// just below the maximum, contour-parallel ones at the last full step.
pub fn schedule_iso_scallop(phi: &ScalarField, h: f64, mode: PlanMode) -> Result<LevelSchedule> {
    check_h(h)?;
    let (min, max, range) = (phi.min(), phi.max(), phi.range());
    let step = h.sqrt();
    if step >= range {
        return Ok(LevelSchedule::single(ScheduleKind::IsoScallop, mode, h, phi));
    }
    let delta = ENDPOINT_OFFSET * range;
    let mut levels = vec![min + delta];
    for i in 1.. {
        let l = min + i as f64 * step;
        if l >= max - delta {
            break;
        }
        levels.push(l);
    }
    let ends_at_max = mode == PlanMode::Direction;
    if ends_at_max {
        levels.push(max - delta);
    }
    Ok(LevelSchedule {
        kind: ScheduleKind::IsoScallop,
        mode,
        h,
        levels,
        endpoint_offset: delta,
        ends_at_max,
        single_level: false,
        sampling: None,
    })
}

/// Per-face level increment `|grad phi| sqrt(8h / (κs + κc))`; `None` where
/// the gradient vanishes or the cutter would gouge.
pub fn face_increments(
    mesh: &TriMesh,
    phi: &ScalarField,
    curvature: &CurvatureData,
    kappa_c: f64,
    h: f64,
    exec: ExecPolicy,
) -> Result<Vec<Option<f64>>> {
    phi.check_mesh(mesh)?;
    let ops = Operators::new(mesh);
    let values = phi.values();
    Ok(exec.map(mesh.num_faces(), |f| {
        let g = ops.face_gradient(mesh, f, values);
        let norm = g.norm();
        if norm == 0.0 {
            return None;
        }
        let dir = ops.from_frame(f, &g);
        let s = curvature.face(f).normal_curvature(&dir) + kappa_c;
        (s > 0.0).then(|| norm * (8.0 * h / s).sqrt())
    }))
}

/// Smallest increment over every point of `curves`; at a point the
/// smallest value over its incident faces is used.
fn min_increment(mesh: &TriMesh, curves: &[IsoCurve], per_face: &[Option<f64>]) -> Option<f64> {
    curves
        .iter()
        .flat_map(|c| &c.points)
        .filter_map(|p| {
            p.incident_faces(mesh)
                .into_iter()
                .filter_map(|f| per_face[f])
                .min_by(f64::total_cmp)
        })
        .min_by(f64::total_cmp)
}

/// Variable-increment schedule: each next level is the current one plus
/// the smallest increment found along the current curves.
#[allow(clippy::too_many_arguments)]
pub fn schedule_adaptive(
    mesh: &TriMesh,
    phi: &ScalarField,
    curvature: &CurvatureData,
    kappa_c: f64,
    h: f64,
    mode: PlanMode,
    start: Option<f64>,
    exec: ExecPolicy,
) -> Result<LevelSchedule> {
    check_h(h)?;
    let (min, max, range) = (phi.min(), phi.max(), phi.range());
    if h.sqrt() >= range {
        return Ok(LevelSchedule::single(ScheduleKind::Adaptive, mode, h, phi));
    }
    let per_face = face_increments(mesh, phi, curvature, kappa_c, h, exec)?;
    let delta = ENDPOINT_OFFSET * range;
    let mut level = start.unwrap_or(min + delta);
    let mut levels = vec![level];
    let ends_at_max = mode == PlanMode::Direction;
    loop {
        let curves = extract(mesh, phi, level)?;
        let Some(inc) = min_increment(mesh, &curves, &per_face) else {
            return Err(Error::DegenerateIncrement { level, increment: 0.0 });
        };
        if inc < MIN_INCREMENT_RATIO * range {
            return Err(Error::DegenerateIncrement { level, increment: inc });
        }
        level += inc;
        if level >= max - delta {
            if ends_at_max {
                levels.push(max - delta);
            }
            break;
        }
        levels.push(level);
    }
    Ok(LevelSchedule {
        kind: ScheduleKind::Adaptive,
        mode,
        h,
        levels,
        endpoint_offset: delta,
        ends_at_max,
        single_level: false,
        sampling: Some("all curve points; per point, minimum over incident faces".into()),
    })
}

fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Greedy forward merge: the current chord is extended over successive
/// points for as long as every point it skips stays within `chord_tol`.
/// Retained points are a subset of the input; both ends (the seam of a
/// closed curve) are kept. A zero tolerance returns the curve unchanged.
pub fn simplify(curve: &IsoCurve, chord_tol: f64) -> IsoCurve {
    if chord_tol <= 0.0 || curve.points.len() < 3 {
        return curve.clone();
    }
    let mut pts = curve.positions();
    if curve.closed {
        pts.push(pts[0]);
    }
    let n = pts.len();
    let mut keep = vec![0];
    let mut anchor = 0;
    let mut end = 2;
    while end < n {
        let fits = (anchor + 1..end).all(|k| point_segment_distance(&pts[k], &pts[anchor], &pts[end]) <= chord_tol);
        if fits {
            end += 1;
        } else {
            anchor = end - 1;
            keep.push(anchor);
            end = anchor + 2;
        }
    }
    if curve.closed {
        // Index n - 1 is the seam again.
    } else {
        keep.push(n - 1);
    }
    IsoCurve {
        level: curve.level,
        closed: curve.closed,
        field: curve.field.clone(),
        points: keep.into_iter().map(|k| curve.points[k]).collect(),
    }
}

/// Largest distance from a dropped point of `original` to the retained
/// chord covering it. Errors when `simplified` is not an ordered subset of
/// `original` with the same ends.
pub fn chord_error(original: &IsoCurve, simplified: &IsoCurve) -> Result<f64> {
    let bad = || Error::MeshMismatch("simplified curve is not a subset of the original".into());
    let kept = &simplified.points;
    if kept.is_empty() || original.closed != simplified.closed {
        return Err(bad());
    }
    let mut orig = original.points.clone();
    if original.closed {
        orig.push(orig[0]);
    }
    let mut chain: Vec<_> = kept.clone();
    if simplified.closed {
        chain.push(chain[0]);
    }
    if site_key(&orig[0]) != site_key(&chain[0]) {
        return Err(bad());
    }
    let mut worst = 0.0f64;
    let mut j = 1;
    let mut skipped: Vec<Vec3> = Vec::new();
    for p in &orig[1..] {
        if j < chain.len() && site_key(p) == site_key(&chain[j]) {
            let (a, b) = (chain[j - 1].position, chain[j].position);
            for q in skipped.drain(..) {
                worst = worst.max(point_segment_distance(&q, &a, &b));
            }
            j += 1;
        } else {
            skipped.push(p.position);
        }
    }
    if j != chain.len() || !skipped.is_empty() {
        return Err(bad());
    }
    Ok(worst)
}

/// Snapshot of the settings a path was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub kappa_c: f64,
    pub lambda: f64,
    pub h: f64,
    pub chord_tol: f64,
    /// Rapid-move height above the highest path point (mm).
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    /// Feed rate written on the first cutting move of each curve (mm/min).
    #[serde(default = "default_feed")]
    pub feed: f64,
}

fn default_clearance() -> f64 {
    5.0
}

fn default_feed() -> f64 {
    1000.0
}

impl PathSettings {
    pub fn new(kappa_c: f64, lambda: f64, h: f64, chord_tol: f64) -> Self {
        Self {
            kappa_c,
            lambda,
            h,
            chord_tol,
            clearance: default_clearance(),
            feed: default_feed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCurve {
    pub id: usize,
    pub level: f64,
    pub closed: bool,
    pub length: f64,
    /// Point count before simplification.
    pub source_points: usize,
    pub curve: IsoCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolPath {
    pub mesh_checksum: String,
    pub field_checksum: String,
    pub settings: PathSettings,
    pub schedule: LevelSchedule,
    /// Machining order: schedule order, then extraction order per level.
    pub curves: Vec<PathCurve>,
}

/// Extracts every scheduled level and simplifies each curve. Also returns
/// the unsimplified curves, aligned with `path.curves`.
pub fn build(
    mesh: &TriMesh,
    phi: &ScalarField,
    schedule: &LevelSchedule,
    settings: &PathSettings,
    exec: ExecPolicy,
) -> Result<(ToolPath, Vec<IsoCurve>)> {
    let raw: Vec<IsoCurve> = extract_levels(mesh, phi, &schedule.levels, exec)?
        .into_iter()
        .flatten()
        .collect();
    let simplified = exec.map_slice(&raw, |c| simplify(c, settings.chord_tol));
    let curves = simplified
        .into_iter()
        .zip(&raw)
        .enumerate()
        .map(|(id, (curve, src))| PathCurve {
            id,
            level: curve.level,
            closed: curve.closed,
            length: curve.length(),
            source_points: src.points.len(),
            curve,
        })
        .collect();
    let path = ToolPath {
        mesh_checksum: mesh.checksum().to_string(),
        field_checksum: phi.checksum(),
        settings: settings.clone(),
        schedule: schedule.clone(),
        curves,
    };
    Ok((path, raw))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

impl ToolPath {
    pub fn total_length(&self) -> f64 {
        self.curves.iter().map(|c| c.length).sum()
    }

    pub fn num_points(&self) -> usize {
        self.curves.iter().map(|c| c.curve.points.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        w.write_all(self.to_json()?.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// One row per point: `curve,level,x,y,z`.
    pub fn write_csv_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "curve,level,x,y,z")?;
        for c in &self.curves {
            for p in &c.curve.points {
                let q = p.position;
                writeln!(w, "{},{},{},{},{}", c.id, c.level, q.x, q.y, q.z)?;
            }
        }
        w.flush()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(create(path)?).map_err(|e| Error::io(path, e))
    }

    /// Minimal RS-274: for each curve a rapid to its start at the safe
    /// height, a feed move down, feed moves through the points (back to the
    /// start for closed curves) and a rapid retract.
    pub fn write_gcode_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let s = &self.settings;
        let top = self
            .curves
            .iter()
            .flat_map(|c| &c.curve.points)
            .map(|p| p.position.z)
            .fold(f64::NEG_INFINITY, f64::max);
        let safe_z = if top.is_finite() { top } else { 0.0 } + s.clearance;
        writeln!(w, "; isolevel tool path")?;
        writeln!(
            w,
            "; kappa_c={} h={} lambda={} chord_tol={}",
            s.kappa_c, s.h, s.lambda, s.chord_tol
        )?;
        writeln!(w, "; schedule={:?} mode={:?} curves={}", self.schedule.kind, self.schedule.mode, self.curves.len())?;
        writeln!(w, "; mesh={} field={}", self.mesh_checksum, self.field_checksum)?;
        writeln!(w, "G21")?;
        writeln!(w, "G90")?;
        writeln!(w, "G0 Z{safe_z:.6}")?;
        for c in &self.curves {
            let pts = &c.curve.points;
            let Some(first) = pts.first() else { continue };
            writeln!(w, "; curve {} level {}", c.id, c.level)?;
            let p = first.position;
            writeln!(w, "G0 X{:.6} Y{:.6}", p.x, p.y)?;
            writeln!(w, "G1 X{:.6} Y{:.6} Z{:.6} F{}", p.x, p.y, p.z, s.feed)?;
            let tail = pts[1..].iter().chain(c.closed.then_some(first));
            for q in tail {
                let q = q.position;
                writeln!(w, "G1 X{:.6} Y{:.6} Z{:.6}", q.x, q.y, q.z)?;
            }
            writeln!(w, "G0 Z{safe_z:.6}")?;
        }
        writeln!(w, "M2")?;
        w.flush()
    }

    pub fn write_gcode(&self, path: &Path) -> Result<()> {
        self.write_gcode_to(create(path)?).map_err(|e| Error::io(path, e))
    }
}
