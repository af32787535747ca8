//! Evaluation of a planned field and path: relative deviation from the
//! iso-scallop condition, curvature of the path, and a direct geometric
//! measurement of the scallop left between two adjacent passes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffops::{kappa_g_lossy, CurvatureData, Operators};
use crate::energy::{target_gradient_norm, PlannerConfig, ScalarField};
use crate::exec::compensated_sum;
use crate::isocurve::IsoCurve;
use crate::path::ToolPath;
use crate::{Error, ExecPolicy, Result, TriMesh, Vec3};

/// Lower bin edges of the deviation histogram: 0%, 1%, ..., 10%; the last
/// bin is open.
pub fn deviation_bins() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 100.0).collect()
}

/// Lower bin edges of the curvature histogram (1/mm), step 0.025 up to
/// 0.5; the last bin is open.
pub fn curvature_bins() -> Vec<f64> {
    (0..=20).map(|k| k as f64 * 0.025).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Lower edges; bin `i` is `[edges[i], edges[i + 1])`, the last bin has
    /// no upper edge.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, samples: &[f64]) -> Self {
        let mut counts = vec![0; edges.len()];
        for &x in samples {
            let bin = edges.partition_point(|&e| e <= x).saturating_sub(1);
            counts[bin] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin_low,bin_high,count`; the open bin has `inf` as its high edge.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_low,bin_high,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            let hi = self.edges.get(i + 1).map_or("inf".to_string(), |e| e.to_string());
            writeln!(w, "{},{},{}", self.edges[i], hi, c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                count: 0,
                mean: f64::NAN,
                median: f64::NAN,
                max: f64::NAN,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            count: n,
            mean: compensated_sum(sorted.iter().copied()) / n as f64,
            median,
            max: sorted[n - 1],
        }
    }
}

fn fraction_above(samples: &[f64], t: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().filter(|&&x| x > t).count() as f64 / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub mesh_checksum: String,
    pub field_checksum: String,
    /// Per-face relative deviation; `None` for excluded faces.
    pub per_face: Vec<Option<f64>>,
    pub histogram: Histogram,
    pub summary: Summary,
    pub fraction_above_5pct: f64,
    pub fraction_above_10pct: f64,
    /// Faces where `κs + κc <= 0` or the gradient vanishes.
    pub excluded_faces: usize,
}

impl DeviationStats {
    pub fn samples(&self) -> Vec<f64> {
        self.per_face.iter().flatten().copied().collect()
    }
}

/// Relative deviation from the iso-scallop condition for one face.
pub fn relative_deviation(grad_norm: f64, kappa_s: f64, kappa_c: f64) -> Option<f64> {
    let target = target_gradient_norm(kappa_s, kappa_c).ok()?;
    Some((1.0 - grad_norm / target).abs())
}

/// `|1 - |grad phi| / sqrt((κs + κc) / 8)|` on every face.
pub fn deviation_stats(
    mesh: &TriMesh,
    phi: &ScalarField,
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<DeviationStats> {
    phi.check_mesh(mesh)?;
    let ops = Operators::new(mesh);
    let values = phi.values();
    let per_face: Vec<Option<f64>> = config.exec().map(mesh.num_faces(), |f| {
        let g = ops.face_gradient(mesh, f, values);
        let norm = g.norm();
        if norm == 0.0 {
            return None;
        }
        let ks = curvature.face(f).normal_curvature(&ops.from_frame(f, &g));
        relative_deviation(norm, ks, config.kappa_c)
    });
    let samples: Vec<f64> = per_face.iter().flatten().copied().collect();
    Ok(DeviationStats {
        mesh_checksum: mesh.checksum().to_string(),
        field_checksum: phi.checksum(),
        histogram: Histogram::new(deviation_bins(), &samples),
        summary: Summary::of(&samples),
        fraction_above_5pct: fraction_above(&samples, 0.05),
        fraction_above_10pct: fraction_above(&samples, 0.10),
        excluded_faces: per_face.len() - samples.len(),
        per_face,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureStats {
    pub mesh_checksum: String,
    /// `sqrt(κg² + κn²)` at each usable path point, in path order.
    pub samples: Vec<f64>,
    pub histogram: Histogram,
    pub summary: Summary,
    /// Points dropped because a neighbouring face has a vanishing gradient.
    pub skipped: usize,
}

/// Curvature of the path curves from the field: κn of the level line on
/// the incident faces (averaged) and κg interpolated from the vertices.
pub fn curvature_stats(
    mesh: &TriMesh,
    phi: &ScalarField,
    curvature: &CurvatureData,
    path: &ToolPath,
    eps_g: f64,
) -> Result<CurvatureStats> {
    phi.check_mesh(mesh)?;
    if path.mesh_checksum != mesh.checksum() {
        return Err(Error::MeshMismatch("tool path was planned on a different mesh".into()));
    }
    let ops = Operators::new(mesh);
    let values = phi.values();
    let kg = kappa_g_lossy(mesh, &ops, values, eps_g);
    let kn: Vec<Option<f64>> = ExecPolicy::default().map(mesh.num_faces(), |f| {
        let g = ops.face_gradient(mesh, f, values);
        if !(g.norm() >= eps_g) {
            return None;
        }
        let dir = mesh.face_normal(f).cross(&ops.from_frame(f, &g));
        Some(curvature.face(f).normal_curvature(&dir))
    });
    let mut samples = Vec::new();
    let mut skipped = 0;
    for p in path.curves.iter().flat_map(|c| &c.curve.points) {
        let faces = p.incident_faces(mesh);
        let n: Option<Vec<f64>> = faces.iter().map(|&f| kn[f]).collect();
        let g = p.interpolate(&kg);
        match n {
            Some(n) if !n.is_empty() && g.is_finite() => {
                let n = n.iter().sum::<f64>() / n.len() as f64;
                samples.push((g * g + n * n).sqrt());
            }
            _ => skipped += 1,
        }
    }
    Ok(CurvatureStats {
        mesh_checksum: mesh.checksum().to_string(),
        histogram: Histogram::new(curvature_bins(), &samples),
        summary: Summary::of(&samples),
        samples,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScallopSample {
    pub p: [f64; 3],
    pub q: [f64; 3],
    /// 3D distance between the two contact points.
    pub spacing: f64,
    /// Ridge height above the mesh; `None` when the passes are more than
    /// two cutter radii apart and leave uncut material between them.
    pub height: Option<f64>,
}

fn nearest_on_polyline(curve: &IsoCurve, x: &Vec3) -> (Vec3, f64) {
    let pts = curve.positions();
    if pts.len() == 1 {
        return (pts[0], 0.0);
    }
    let mut best = (pts[0], f64::INFINITY, 0.0);
    for (i, j) in curve.segments() {
        let (a, b) = (pts[i], pts[j]);
        let d = b - a;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((x - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let y = a + d * t;
        let dist = (x - y).norm();
        if dist < best.1 {
            best = (y, dist, i as f64 + t);
        }
    }
    (best.0, best.2)
}

/// Unit normal at a point of `curve` with fractional index `s`, from the
/// interpolated vertex normals.
fn normal_at(mesh: &TriMesh, curve: &IsoCurve, s: f64) -> Vec3 {
    let n = curve.points.len();
    let i = (s.floor() as usize).min(n - 1);
    let t = s - i as f64;
    let normals = mesh.vertex_normals();
    let a = curve.points[i].interpolate_vec(normals);
    let b = curve.points[(i + 1) % n].interpolate_vec(normals);
    (a * (1.0 - t) + b * t).normalize()
}

fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Signed distance from `x` to the mesh along `normal`'s side, searching
/// faces whose centroid lies within `radius` of `center`.
fn signed_distance(mesh: &TriMesh, x: &Vec3, normal: &Vec3, center: &Vec3, radius: f64) -> f64 {
    let mut best = (f64::INFINITY, Vec3::zeros());
    for f in 0..mesh.num_faces() {
        if (mesh.face_centroid(f) - center).norm() > radius {
            continue;
        }
        let [a, b, c] = mesh.face(f).map(|v| mesh.position(v));
        let y = closest_point_on_triangle(x, &a, &b, &c);
        let d = (x - y).norm();
        if d < best.0 {
            best = (d, y);
        }
    }
    if (x - best.1).dot(normal) >= 0.0 {
        best.0
    } else {
        -best.0
    }
}

/// Scallop left between passes `ci` and `cj` by a ball-end cutter of
/// radius `r`, measured at every `stride`-th point of `ci`: the two cutter
/// spheres touching the surface at `p` and at its nearest point `q` on
/// `cj` intersect in a circle; the point of that circle nearest the
/// surface is the ridge, and its distance to the mesh is the height.
pub fn scallop_oracle(mesh: &TriMesh, ci: &IsoCurve, cj: &IsoCurve, r: f64, stride: usize) -> Vec<ScallopSample> {
    let stride = stride.max(1);
    let search = 4.0 * r + 4.0 * mesh.mean_edge_length();
    (0..ci.points.len())
        .step_by(stride)
        .map(|i| {
            let p = ci.points[i].position;
            let np = normal_at(mesh, ci, i as f64);
            let (q, s) = nearest_on_polyline(cj, &p);
            let nq = normal_at(mesh, cj, s);
            let c1 = p + np * r;
            let c2 = q + nq * r;
            let axis = c2 - c1;
            let d = axis.norm();
            let height = if d > 2.0 * r {
                None
            } else if d == 0.0 {
                Some(0.0)
            } else {
                let a = axis / d;
                let nbar = (np + nq).normalize();
                let down = -(nbar - a * nbar.dot(&a));
                let rho = (r * r - 0.25 * d * d).sqrt();
                let ridge = (c1 + c2) * 0.5 + down.normalize() * rho;
                Some(signed_distance(mesh, &ridge, &nbar, &((p + q) * 0.5), search))
            };
            ScallopSample {
                p: [p.x, p.y, p.z],
                q: [q.x, q.y, q.z],
                spacing: (q - p).norm(),
                height,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScallopSummary {
    pub samples: usize,
    /// Samples with passes more than two radii apart.
    pub uncut: usize,
    pub heights: Summary,
    pub min: f64,
}

impl ScallopSummary {
    pub fn of(samples: &[ScallopSample]) -> Self {
        let h: Vec<f64> = samples.iter().filter_map(|s| s.height).collect();
        Self {
            samples: samples.len(),
            uncut: samples.len() - h.len(),
            heights: Summary::of(&h),
            min: h.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub deviation: Summary,
    pub fraction_above_5pct: f64,
    pub fraction_above_10pct: f64,
    pub curvature: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// For each consecutive pair of rows: the later row's deviation
    /// histogram has at least as much mass above every bin edge.
    pub deviation_tail_dominates: Vec<bool>,
    /// For each consecutive pair: the later row's mean path curvature is
    /// not larger.
    pub curvature_mean_nonincreasing: Vec<bool>,
}

fn tail_mass(h: &Histogram) -> Vec<f64> {
    let total = h.total().max(1) as f64;
    (0..h.counts.len()).map(|i| h.counts[i..].iter().sum::<usize>() as f64 / total).collect()
}

/// Side-by-side summary of several analyses of fields on one mesh, in the
/// given order.
pub fn compare_fields(reports: &[(String, DeviationStats, CurvatureStats)]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Config("comparison needs at least two analyses".into()));
    }
    let mesh = &reports[0].1.mesh_checksum;
    for (label, d, c) in reports {
        if &d.mesh_checksum != mesh || &c.mesh_checksum != mesh {
            return Err(Error::MeshMismatch(format!("analysis '{label}' uses a different mesh")));
        }
    }
    let rows = reports
        .iter()
        .map(|(label, d, c)| ComparisonRow {
            label: label.clone(),
            deviation: d.summary,
            fraction_above_5pct: d.fraction_above_5pct,
            fraction_above_10pct: d.fraction_above_10pct,
            curvature: c.summary,
        })
        .collect();
    let pairs: Vec<_> = reports.windows(2).collect();
    let deviation_tail_dominates = pairs
        .iter()
        .map(|w| {
            let (a, b) = (tail_mass(&w[0].1.histogram), tail_mass(&w[1].1.histogram));
            a.iter().zip(&b).all(|(x, y)| y >= x)
        })
        .collect();
    let curvature_mean_nonincreasing = pairs
        .iter()
        .map(|w| w[1].2.summary.mean <= w[0].2.summary.mean)
        .collect();
    Ok(Comparison {
        rows,
        deviation_tail_dominates,
        curvature_mean_nonincreasing,
    })
}

impl Comparison {
    /// Plain-text table, one row per analysis.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12}\n",
            "label", "dev_mean", "dev_median", "dev>5%", "dev>10%", "kappa_mean", "kappa_max"
        );
        for r in &self.rows {
            s += &format!(
                "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.5} {:>12.5}\n",
                r.label,
                r.deviation.mean,
                r.deviation.median,
                r.fraction_above_5pct,
                r.fraction_above_10pct,
                r.curvature.mean,
                r.curvature.max
            );
        }
        s
    }
}
