//! Discrete differential operators on piecewise-linear fields: per-face
//! gradient, per-vertex divergence, per-face curvature tensor and the
//! normal/geodesic curvatures of iso-level curves.

use std::io::Write;

use log::warn;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::mesh::{TriMesh, Vec3};

pub type Vec2 = Vector2<f64>;

/// Cotangent magnitudes are clamped to this bound.
pub const COT_CLAMP: f64 = 1e8;

/// One constant tangent vector per face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVectorField(pub Vec<Vec3>);

impl FaceVectorField {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.norm()).collect()
    }
}

/// Per-face geometry shared by every operator, expressed in an orthonormal
/// tangent frame (u along the first edge, v = N x u).
#[derive(Debug, Clone)]
pub struct Operators {
    frames: Vec<[Vec3; 2]>,
    /// Gradient of the hat function of corner k, `(N x e_k) / 2A`.
    grad_basis: Vec<[Vec2; 3]>,
    /// Divergence weight of corner k: `cot θ1 e1 + cot θ2 e2`, plus
    /// `e x N` for each incident boundary edge.
    div_weights: Vec<[Vec2; 3]>,
    /// Same without boundary terms (weak divergence).
    weak_div_weights: Vec<[Vec2; 3]>,
    clamped: usize,
}

fn cot(a: &Vec3, b: &Vec3) -> (f64, bool) {
    let c = a.dot(b) / a.cross(b).norm();
    if c.abs() > COT_CLAMP || !c.is_finite() {
        (COT_CLAMP.copysign(if c.is_nan() { 1.0 } else { c }), true)
    } else {
        (c, false)
    }
}

impl Operators {
    pub fn new(mesh: &TriMesh) -> Self {
        let nf = mesh.num_faces();
        let mut frames = Vec::with_capacity(nf);
        let mut grad_basis = Vec::with_capacity(nf);
        let mut div_weights = Vec::with_capacity(nf);
        let mut weak_div_weights = Vec::with_capacity(nf);
        let mut clamped = 0;
        for f in 0..nf {
            let tri = mesh.face(f);
            let p = tri.map(|v| mesh.position(v));
            let n = mesh.face_normal(f);
            let u = (p[1] - p[0]).normalize();
            let v = n.cross(&u);
            let to2 = |x: Vec3| Vec2::new(x.dot(&u), x.dot(&v));
            let two_a = 2.0 * mesh.face_area(f);

            let basis = [0, 1, 2].map(|k| to2(n.cross(&mesh.edge_vector(f, k)) / two_a));

            let mut cots = [0.0; 3];
            for (m, c) in cots.iter_mut().enumerate() {
                let (val, hit) = cot(&(p[(m + 1) % 3] - p[m]), &(p[(m + 2) % 3] - p[m]));
                clamped += hit as usize;
                *c = val;
            }
            let weak = [0, 1, 2].map(|k| {
                let e1 = p[(k + 1) % 3] - p[k];
                let e2 = p[(k + 2) % 3] - p[k];
                // θ1 is opposite e1 (corner k+2), θ2 opposite e2 (corner k+1).
                to2(e1 * cots[(k + 2) % 3] + e2 * cots[(k + 1) % 3])
            });
            let mut full = weak;
            let fe = mesh.face_edges(f);
            for m in 0..3 {
                if mesh.is_boundary_edge(fe[m]) {
                    let out = to2(mesh.edge_vector(f, m).cross(&n));
                    full[(m + 1) % 3] += out;
                    full[(m + 2) % 3] += out;
                }
            }
            frames.push([u, v]);
            grad_basis.push(basis);
            div_weights.push(full);
            weak_div_weights.push(weak);
        }
        if clamped > 0 {
            warn!("clamped {clamped} cotangent(s) to |cot| <= {COT_CLAMP:e}");
        }
        Self {
            frames,
            grad_basis,
            div_weights,
            weak_div_weights,
            clamped,
        }
    }

    pub fn num_faces(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, f: usize) -> [Vec3; 2] {
        self.frames[f]
    }

    pub fn grad_basis(&self, f: usize) -> &[Vec2; 3] {
        &self.grad_basis[f]
    }

    pub fn div_weights(&self, f: usize) -> &[Vec2; 3] {
        &self.div_weights[f]
    }

    pub fn clamped_cotangents(&self) -> usize {
        self.clamped
    }

    pub fn to_frame(&self, f: usize, x: &Vec3) -> Vec2 {
        let [u, v] = self.frames[f];
        Vec2::new(x.dot(&u), x.dot(&v))
    }

    pub fn from_frame(&self, f: usize, x: &Vec2) -> Vec3 {
        let [u, v] = self.frames[f];
        u * x.x + v * x.y
    }

    /// Face gradient of `phi` in the face frame.
    #[inline]
    pub fn face_gradient(&self, mesh: &TriMesh, f: usize, phi: &[f64]) -> Vec2 {
        let t = mesh.face(f);
        let b = &self.grad_basis[f];
        b[0] * phi[t[0]] + b[1] * phi[t[1]] + b[2] * phi[t[2]]
    }

    pub fn gradients(&self, mesh: &TriMesh, phi: &[f64], exec: ExecPolicy) -> Vec<Vec2> {
        exec.map(mesh.num_faces(), |f| self.face_gradient(mesh, f, phi))
    }

    /// Pointwise divergence of a frame-coordinate face field.
    pub fn divergence(&self, mesh: &TriMesh, x: &[Vec2], exec: ExecPolicy) -> Vec<f64> {
        exec.map(mesh.num_vertices(), |i| {
            let mut s = 0.0;
            for &f in mesh.vertex_faces(i) {
                let k = corner_of(mesh, f, i);
                s += self.div_weights[f][k].dot(&x[f]);
            }
            s / (2.0 * mesh.dual_area(i))
        })
    }

    /// Integrated weak divergence `-∫ X · ∇ψ_i` (natural boundary condition).
    pub fn weak_divergence(&self, mesh: &TriMesh, x: &[Vec2]) -> Vec<f64> {
        (0..mesh.num_vertices())
            .map(|i| {
                mesh.vertex_faces(i)
                    .iter()
                    .map(|&f| 0.5 * self.weak_div_weights[f][corner_of(mesh, f, i)].dot(&x[f]))
                    .sum()
            })
            .collect()
    }
}

/// Position of vertex `v` within face `f`.
#[inline]
pub fn corner_of(mesh: &TriMesh, f: usize, v: usize) -> usize {
    let t = mesh.face(f);
    if t[0] == v {
        0
    } else if t[1] == v {
        1
    } else {
        debug_assert_eq!(t[2], v);
        2
    }
}

/// Per-face gradient of the piecewise-linear interpolant of `phi`.
pub fn gradient(mesh: &TriMesh, phi: &[f64]) -> Result<FaceVectorField> {
    check_len(mesh, phi)?;
    let ops = Operators::new(mesh);
    Ok(FaceVectorField(
        (0..mesh.num_faces())
            .map(|f| ops.from_frame(f, &ops.face_gradient(mesh, f, phi)))
            .collect(),
    ))
}

/// Per-vertex divergence of a face vector field (outward flux over the
/// dual cell divided by its area; boundary vertices include the flux
/// through their boundary half-edges).
pub fn divergence(mesh: &TriMesh, x: &FaceVectorField) -> Vec<f64> {
    let ops = Operators::new(mesh);
    let x2: Vec<Vec2> = x.0.iter().enumerate().map(|(f, v)| ops.to_frame(f, v)).collect();
    ops.divergence(mesh, &x2, ExecPolicy::default())
}

pub(crate) fn check_len(mesh: &TriMesh, phi: &[f64]) -> Result<()> {
    if phi.len() != mesh.num_vertices() {
        return Err(Error::FieldSize {
            expected: mesh.num_vertices(),
            got: phi.len(),
        });
    }
    Ok(())
}

/// Curvature tensor of one face in its tangent frame. Positive for convex
/// surfaces with outward normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCurvature {
    pub face: usize,
    pub u: Vec3,
    pub v: Vec3,
    pub tensor: Matrix2<f64>,
}

impl FaceCurvature {
    /// Normal curvature along the tangent direction `dir` (any length).
    pub fn normal_curvature(&self, dir: &Vec3) -> f64 {
        let d = Vec2::new(dir.dot(&self.u), dir.dot(&self.v));
        let n2 = d.norm_squared();
        if n2 == 0.0 {
            return 0.0;
        }
        d.dot(&(self.tensor * d)) / n2
    }

    /// Principal curvatures `(k1, k2)`, `k1 >= k2`, with unit directions.
    pub fn principal(&self) -> ((f64, f64), (Vec3, Vec3)) {
        let (k1, k2, d1) = sym2_eigen(&self.tensor);
        let dir1 = self.u * d1.x + self.v * d1.y;
        let dir2 = self.u * -d1.y + self.v * d1.x;
        ((k1, k2), (dir1, dir2))
    }
}

/// Eigen-decomposition of a symmetric 2x2 matrix: (λmax, λmin, unit
/// eigenvector of λmax).
fn sym2_eigen(m: &Matrix2<f64>) -> (f64, f64, Vec2) {
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c).powi(2) + b * b).sqrt();
    let (l1, l2) = (mean + r, mean - r);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    (l1, l2, Vec2::new(theta.cos(), theta.sin()))
}

#[derive(Debug, Clone)]
pub struct CurvatureData {
    faces: Vec<FaceCurvature>,
    fallback_faces: Vec<usize>,
}

impl CurvatureData {
    pub fn face(&self, f: usize) -> &FaceCurvature {
        &self.faces[f]
    }

    pub fn faces(&self) -> &[FaceCurvature] {
        &self.faces
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Faces whose fit was rank deficient and fell back to a zero tensor.
    pub fn fallback_faces(&self) -> &[usize] {
        &self.fallback_faces
    }

    /// Principal curvatures per face, `(k1, k2)` with `k1 >= k2`.
    pub fn principal_curvatures(&self) -> Vec<(f64, f64)> {
        self.faces.iter().map(|c| c.principal().0).collect()
    }
}

/// Per-face curvature tensor by least-squares fit of the vertex-normal
/// differences along the three edges.
pub fn curvature_tensor(mesh: &TriMesh) -> CurvatureData {
    curvature_tensor_with(mesh, &Operators::new(mesh), ExecPolicy::default())
}

/// Vertex normals weighted by `sin(angle) / (|e1| |e2|)` per incident
/// corner (Max 1999). They are exact for vertices lying on a sphere, which
/// the area-weighted normals are not; the curvature fit uses these.
pub fn max_weighted_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); mesh.num_vertices()];
    for tri in mesh.faces() {
        for k in 0..3 {
            let p = mesh.position(tri[k]);
            let e1 = mesh.position(tri[(k + 1) % 3]) - p;
            let e2 = mesh.position(tri[(k + 2) % 3]) - p;
            normals[tri[k]] += e1.cross(&e2) / (e1.norm_squared() * e2.norm_squared());
        }
    }
    for (v, n) in normals.iter_mut().enumerate() {
        let len = n.norm();
        *n = if len > 0.0 { *n / len } else { mesh.vertex_normal(v) };
    }
    normals
}

pub fn curvature_tensor_with(mesh: &TriMesh, ops: &Operators, exec: ExecPolicy) -> CurvatureData {
    let normals = max_weighted_normals(mesh);
    let fits = exec.map(mesh.num_faces(), |f| {
        let [u, v] = ops.frame(f);
        let tri = mesh.face(f);
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        let mut scale = 0.0f64;
        for k in 0..3 {
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            let e = mesh.position(b) - mesh.position(a);
            let dn = normals[b] - normals[a];
            let (eu, ev) = (e.dot(&u), e.dot(&v));
            let (nu, nv) = (dn.dot(&u), dn.dot(&v));
            // Rows [eu, ev, 0] -> nu and [0, eu, ev] -> nv.
            for (row, rhs) in [(Vector3::new(eu, ev, 0.0), nu), (Vector3::new(0.0, eu, ev), nv)] {
                ata += row * row.transpose();
                atb += row * rhs;
            }
            scale = scale.max(e.norm_squared());
        }
        let det = ata.determinant();
        let tensor = if det.abs() > 1e-12 * scale.powi(3) {
            ata.try_inverse().map(|inv| {
                let x = inv * atb;
                Matrix2::new(x[0], x[1], x[1], x[2])
            })
        } else {
            None
        };
        (f, u, v, tensor)
    });
    let mut faces = Vec::with_capacity(fits.len());
    let mut fallback_faces = Vec::new();
    for (f, u, v, tensor) in fits {
        let tensor = tensor.unwrap_or_else(|| {
            fallback_faces.push(f);
            Matrix2::zeros()
        });
        faces.push(FaceCurvature { face: f, u, v, tensor });
    }
    if !fallback_faces.is_empty() {
        warn!(
            "curvature fit rank deficient on {} face(s); using zero tensor",
            fallback_faces.len()
        );
    }
    CurvatureData {
        faces,
        fallback_faces,
    }
}

fn gradient_floor_check(face: usize, g: &Vec3, eps_g: f64) -> Result<Vec3> {
    let n = g.norm();
    if !(n >= eps_g) || n == 0.0 {
        return Err(Error::DegenerateGradient { faces: vec![face] });
    }
    Ok(g / n)
}

/// Normal curvature of the surface along the gradient direction.
pub fn kappa_s(face: &FaceCurvature, g: &Vec3, eps_g: f64) -> Result<f64> {
    let dir = gradient_floor_check(face.face, g, eps_g)?;
    Ok(face.normal_curvature(&dir))
}

/// Normal curvature of the iso-level curve, i.e. along `n x g`.
pub fn kappa_n(face: &FaceCurvature, normal: &Vec3, g: &Vec3, eps_g: f64) -> Result<f64> {
    let dir = gradient_floor_check(face.face, g, eps_g)?;
    Ok(face.normal_curvature(&normal.cross(&dir)))
}

/// Per-vertex geodesic curvature of the iso-level curves of `phi`, the
/// divergence of the normalized gradient.
pub fn kappa_g(mesh: &TriMesh, phi: &[f64], eps_g: f64) -> Result<Vec<f64>> {
    check_len(mesh, phi)?;
    let ops = Operators::new(mesh);
    let g = ops.gradients(mesh, phi, ExecPolicy::default());
    for v in 0..mesh.num_vertices() {
        if mesh.vertex_faces(v).iter().any(|&f| !(g[f].norm() >= eps_g)) {
            return Err(Error::DegenerateVertexGradient { vertex: v });
        }
    }
    let unit: Vec<Vec2> = g.iter().map(|x| x / x.norm()).collect();
    Ok(ops.divergence(mesh, &unit, ExecPolicy::default()))
}

/// Like [`kappa_g`] but yields NaN at vertices touching a face whose
/// gradient is below `eps_g`.
pub fn kappa_g_lossy(mesh: &TriMesh, ops: &Operators, phi: &[f64], eps_g: f64) -> Vec<f64> {
    let g = ops.gradients(mesh, phi, ExecPolicy::default());
    let unit: Vec<Vec2> = g
        .iter()
        .map(|x| {
            let n = x.norm();
            if n >= eps_g && n > 0.0 {
                x / n
            } else {
                Vec2::zeros()
            }
        })
        .collect();
    let mut div = ops.divergence(mesh, &unit, ExecPolicy::default());
    for (v, d) in div.iter_mut().enumerate() {
        if mesh.vertex_faces(v).iter().any(|&f| unit[f] == Vec2::zeros()) {
            *d = f64::NAN;
        }
    }
    div
}

/// Dumps a per-element scalar field as `index,value` CSV.
pub fn write_scalar_csv<W: Write>(mut w: W, name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,{name}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    Ok(())
}

/// Dumps a per-element vector field as `index,x,y,z` CSV.
pub fn write_vector_csv<W: Write>(mut w: W, values: &[Vec3]) -> std::io::Result<()> {
    writeln!(w, "index,x,y,z")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", v.x, v.y, v.z)?;
    }
    Ok(())
}
