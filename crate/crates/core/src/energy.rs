//! The discrete planning objective: iso-scallop width residual plus a
//! weighted smoothness term, with its exact gradient.
//!
//! For each face `j` with gradient `g_j` and unit direction `ĝ_j`:
//!
//! ```text
//! r_j   = |g_j| - sqrt((κs_j + κc) / 8),   κs_j = ĝᵀ T_j ĝ
//! E_w   = Σ_j A_j r_j²
//! E_κ   = Σ_j A_j κn_j² + Σ_i C_i κg_i²
//! E     = E_w + λ E_κ
//! ```
//!
//! `κs` is recomputed from the current direction at every evaluation and
//! the gradient includes its dependence on `ĝ`, so [`EnergyModel::gradient`]
//! is the exact derivative of [`EnergyModel::evaluate`].

use std::io::Write;

use log::warn;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffops::{CurvatureData, Operators, Vec2};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::mesh::TriMesh;

/// Relative gradient floor: `ε_g = EPS_G_RATIO · median target`.
pub const EPS_G_RATIO: f64 = 1e-3;

/// Settings of the barrier / quasi-Newton solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Barrier continuation steps.
    pub max_outer: usize,
    /// Quasi-Newton iterations per barrier step.
    pub max_inner: usize,
    /// Stationarity tolerance, relative to `sqrt(area) · scale`.
    pub grad_tol: f64,
    /// Initial barrier weight, relative to the energy scale.
    pub barrier_mu0: f64,
    /// Factor applied to the barrier weight after each outer step.
    pub barrier_shrink: f64,
    /// Fixed-order sums so that repeated runs are bit-identical.
    pub deterministic_reduction: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer: 5,
            max_inner: 400,
            grad_tol: 1e-5,
            barrier_mu0: 1e-3,
            barrier_shrink: 0.1,
            deterministic_reduction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Cutter curvature, 1 / ball-end radius (1/mm).
    pub kappa_c: f64,
    /// Scallop height tolerance (mm).
    #[serde(default = "default_h")]
    pub h: f64,
    /// Smoothness weight.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Chord deviation tolerance for simplification (mm).
    #[serde(default = "default_chord_tol")]
    pub chord_tol: f64,
    /// Gradient floor; derived from the curvature when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_g: Option<f64>,
    #[serde(flatten)]
    pub solver: SolverSettings,
}

fn default_h() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1.0
}

fn default_chord_tol() -> f64 {
    0.01
}

impl PlannerConfig {
    pub fn new(kappa_c: f64) -> Self {
        Self {
            kappa_c,
            h: default_h(),
            lambda: default_lambda(),
            chord_tol: default_chord_tol(),
            eps_g: None,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn cutter_radius(&self) -> f64 {
        1.0 / self.kappa_c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("kappa_c", self.kappa_c)?;
        positive("h", self.h)?;
        positive("chord_tol", self.chord_tol)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(e) = self.eps_g {
            positive("eps_g", e)?;
        }
        let s = &self.solver;
        positive("grad_tol", s.grad_tol)?;
        positive("barrier_mu0", s.barrier_mu0)?;
        if !(s.barrier_shrink > 0.0 && s.barrier_shrink < 1.0) {
            return Err(Error::Config(format!(
                "barrier_shrink must lie in (0, 1), got {}",
                s.barrier_shrink
            )));
        }
        if s.max_outer == 0 || s.max_inner == 0 {
            return Err(Error::Config("max_outer and max_inner must be at least 1".into()));
        }
        Ok(())
    }

    /// The configured floor, or `EPS_G_RATIO` times the median target.
    pub fn resolve_eps_g(&self, curvature: &CurvatureData) -> f64 {
        self.eps_g
            .unwrap_or_else(|| EPS_G_RATIO * reference_target(curvature, self.kappa_c))
    }

    pub fn exec(&self) -> ExecPolicy {
        ExecPolicy::default()
    }
}

/// `sqrt((κs + κc) / 8)`, the gradient norm that yields scallop height
/// equal to the square of the level spacing.
pub fn target_gradient_norm(kappa_s: f64, kappa_c: f64) -> Result<f64> {
    let s = kappa_s + kappa_c;
    if s > 0.0 {
        Ok((s / 8.0).sqrt())
    } else {
        Err(Error::Gouging { face: None, value: s })
    }
}

/// Median over faces of the target computed with the mean curvature in
/// place of `κs`. Used to scale the initial field and the gradient floor
/// before any direction is known.
pub fn reference_target(curvature: &CurvatureData, kappa_c: f64) -> f64 {
    let mut t: Vec<f64> = curvature
        .faces()
        .iter()
        .filter_map(|c| target_gradient_norm(0.5 * c.tensor.trace(), kappa_c).ok())
        .collect();
    if t.is_empty() {
        return (kappa_c / 8.0).sqrt();
    }
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

/// Per-vertex values of the planning field over one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    mesh_checksum: String,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::FieldSize {
                expected: mesh.num_vertices(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!("field value at vertex {v} is not finite")));
        }
        Ok(Self {
            mesh_checksum: mesh.checksum().to_string(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_checksum(&self) -> &str {
        &self.mesh_checksum
    }

    /// Errors unless the field was built on `mesh`.
    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_checksum != mesh.checksum() || self.values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch(format!(
                "field belongs to mesh {}, got {}",
                self.mesh_checksum,
                mesh.checksum()
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    /// SHA-256 over the little-endian bit patterns of the values.
    pub fn checksum(&self) -> String {
        values_checksum(&self.values)
    }
}

pub fn values_checksum(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_w: f64,
    pub e_kappa: f64,
    pub e_total: f64,
    pub lambda: f64,
    /// Faces dropped from the width term because `κs + κc <= 0`.
    pub excluded_faces: Vec<usize>,
    /// Per-face width residual `|g| - target` (0 on excluded faces).
    #[serde(skip)]
    pub residuals: Vec<f64>,
    /// Per-face target gradient norm (NaN on excluded faces).
    #[serde(skip)]
    pub targets: Vec<f64>,
}

/// Everything one face contributes, in its tangent frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FaceTerms {
    pub(crate) norm: f64,
    pub(crate) dir: Vec2,
    pub(crate) kappa_n: f64,
    pub(crate) target: Option<f64>,
}

const ROT: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

/// Precomputed operators and settings for repeated energy evaluation.
#[derive(Debug)]
pub struct EnergyModel<'a> {
    mesh: &'a TriMesh,
    curvature: &'a CurvatureData,
    ops: Operators,
    kappa_c: f64,
    lambda: f64,
    eps_g: f64,
    exec: ExecPolicy,
    deterministic: bool,
}

impl<'a> EnergyModel<'a> {
    pub fn new(mesh: &'a TriMesh, curvature: &'a CurvatureData, config: &PlannerConfig) -> Result<Self> {
        config.validate()?;
        if curvature.len() != mesh.num_faces() {
            return Err(Error::MeshMismatch(format!(
                "curvature has {} faces, mesh has {}",
                curvature.len(),
                mesh.num_faces()
            )));
        }
        Ok(Self {
            mesh,
            curvature,
            ops: Operators::new(mesh),
            kappa_c: config.kappa_c,
            lambda: config.lambda,
            eps_g: config.resolve_eps_g(curvature),
            exec: config.exec(),
            deterministic: config.solver.deterministic_reduction,
        })
    }

    pub fn with_exec(mut self, exec: ExecPolicy) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn ops(&self) -> &Operators {
        &self.ops
    }

    pub fn eps_g(&self) -> f64 {
        self.eps_g
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn exec(&self) -> ExecPolicy {
        self.exec
    }

    pub fn deterministic(&self) -> bool {
        self.deterministic
    }

    /// Face gradients in their tangent frames.
    pub fn gradients(&self, phi: &[f64]) -> Vec<Vec2> {
        self.ops.gradients(self.mesh, phi, self.exec)
    }

    /// `|∇φ| - ε_g` per face.
    pub fn constraint_values(&self, phi: &[f64]) -> Vec<f64> {
        let eps = self.eps_g;
        self.exec
            .map(self.mesh.num_faces(), |f| self.ops.face_gradient(self.mesh, f, phi).norm() - eps)
    }

    pub fn sum(&self, values: &[f64]) -> f64 {
        self.exec.sum(values, self.deterministic)
    }

    fn face_terms(&self, grads: &[Vec2]) -> Result<Vec<FaceTerms>> {
        let bad: Vec<usize> = (0..grads.len())
            .filter(|&f| !(grads[f].norm() >= self.eps_g))
            .collect();
        if !bad.is_empty() {
            return Err(Error::DegenerateGradient { faces: bad });
        }
        Ok(self.exec.map(grads.len(), |f| {
            let norm = grads[f].norm();
            let dir = grads[f] / norm;
            let t = &self.curvature.face(f).tensor;
            let kappa_s = dir.dot(&(t * dir));
            let side = ROT * dir;
            let kappa_n = side.dot(&(t * side));
            FaceTerms {
                norm,
                dir,
                kappa_n,
                target: target_gradient_norm(kappa_s, self.kappa_c).ok(),
            }
        }))
    }

    fn kappa_g(&self, terms: &[FaceTerms]) -> Vec<f64> {
        let dirs: Vec<Vec2> = terms.iter().map(|t| t.dir).collect();
        self.ops.divergence(self.mesh, &dirs, self.exec)
    }

    fn breakdown(&self, terms: &[FaceTerms], kg: &[f64]) -> EnergyBreakdown {
        let m = self.mesh;
        let residuals: Vec<f64> = terms
            .iter()
            .map(|t| t.target.map_or(0.0, |target| t.norm - target))
            .collect();
        let excluded_faces: Vec<usize> = (0..terms.len()).filter(|&f| terms[f].target.is_none()).collect();
        let w: Vec<f64> = (0..terms.len()).map(|f| m.face_area(f) * residuals[f] * residuals[f]).collect();
        let kn: Vec<f64> = (0..terms.len())
            .map(|f| m.face_area(f) * terms[f].kappa_n * terms[f].kappa_n)
            .collect();
        let kgv: Vec<f64> = (0..kg.len()).map(|i| m.dual_area(i) * kg[i] * kg[i]).collect();
        let e_w = self.sum(&w);
        let e_kappa = self.sum(&kn) + self.sum(&kgv);
        EnergyBreakdown {
            e_w,
            e_kappa,
            e_total: e_w + self.lambda * e_kappa,
            lambda: self.lambda,
            excluded_faces,
            residuals,
            targets: terms.iter().map(|t| t.target.unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn evaluate(&self, phi: &[f64]) -> Result<EnergyBreakdown> {
        crate::diffops::check_len(self.mesh, phi)?;
        let terms = self.face_terms(&self.gradients(phi))?;
        let kg = self.kappa_g(&terms);
        let out = self.breakdown(&terms, &kg);
        if !out.excluded_faces.is_empty() {
            warn!(
                "{} face(s) in the gouging regime excluded from the width term",
                out.excluded_faces.len()
            );
        }
        Ok(out)
    }

    /// Energy together with `dE/dφ` for every vertex.
    pub fn evaluate_with_gradient(&self, phi: &[f64]) -> Result<(EnergyBreakdown, Vec<f64>)> {
        crate::diffops::check_len(self.mesh, phi)?;
        let terms = self.face_terms(&self.gradients(phi))?;
        let kg = self.kappa_g(&terms);
        let out = self.breakdown(&terms, &kg);
        let dg = self.face_sensitivities(&terms, &kg, |_, _| Vec2::zeros());
        Ok((out, self.scatter(&dg)))
    }

    /// `dE/dg_f` per face, with `extra(f, terms)` added to it (used by
    /// the optimizer for the barrier term).
    pub(crate) fn face_sensitivities<F>(&self, terms: &[FaceTerms], kg: &[f64], extra: F) -> Vec<Vec2>
    where
        F: Fn(usize, &FaceTerms) -> Vec2 + Sync + Send,
    {
        let m = self.mesh;
        let lambda = self.lambda;
        self.exec.map(terms.len(), |f| {
            let t = &terms[f];
            let a = m.face_area(f);
            let tensor = &self.curvature.face(f).tensor;
            // Derivative with respect to the unit direction.
            let mut d_dir = Vec2::zeros();
            let mut d_g = Vec2::zeros();
            if let Some(target) = t.target {
                let r = t.norm - target;
                d_g += t.dir * (2.0 * a * r);
                d_dir -= (tensor * t.dir) * (a * r / (4.0 * target));
            }
            if lambda != 0.0 {
                d_dir += (ROT.transpose() * tensor * ROT * t.dir) * (4.0 * lambda * a * t.kappa_n);
                let tri = m.face(f);
                let w = self.ops.div_weights(f);
                for k in 0..3 {
                    d_dir += w[k] * (lambda * kg[tri[k]]);
                }
            }
            let tangential = d_dir - t.dir * t.dir.dot(&d_dir);
            d_g + tangential / t.norm + extra(f, t)
        })
    }

    /// `dE/dφ_k = Σ_f dE/dg_f · ∇ψ_k`, assembled in face order.
    pub(crate) fn scatter(&self, dg: &[Vec2]) -> Vec<f64> {
        let m = self.mesh;
        let mut out = vec![0.0; m.num_vertices()];
        for (f, d) in dg.iter().enumerate() {
            let tri = m.face(f);
            let b = self.ops.grad_basis(f);
            for k in 0..3 {
                out[tri[k]] += d.dot(&b[k]);
            }
        }
        out
    }

    /// Face terms and per-vertex κg for callers that add their own terms.
    pub(crate) fn prepare(&self, phi: &[f64]) -> Result<(Vec<FaceTerms>, Vec<f64>)> {
        let terms = self.face_terms(&self.gradients(phi))?;
        let kg = self.kappa_g(&terms);
        Ok((terms, kg))
    }

    pub(crate) fn breakdown_of(&self, terms: &[FaceTerms], kg: &[f64]) -> EnergyBreakdown {
        self.breakdown(terms, kg)
    }

    /// Gauss-Newton approximation of the Hessian of `E_total` plus the
    /// barrier `-μ Σ_j A_j log(|g_j| - ε_g)`, as vertex triplets. Each
    /// residual (width per face, `κn` per face, `κg` per vertex, barrier
    /// per face) contributes the outer product of its linearization.
    pub(crate) fn gauss_newton_triplets(&self, terms: &[FaceTerms], mu: f64) -> Vec<(usize, usize, f64)> {
        let m = self.mesh;
        let lambda = self.lambda;
        let eps = self.eps_g;
        let project = |t: &FaceTerms, d: Vec2| (d - t.dir * t.dir.dot(&d)) / t.norm;
        let mut out = Vec::with_capacity(27 * terms.len());
        let push_face_row = |out: &mut Vec<(usize, usize, f64)>, f: usize, row: Vec2| {
            let tri = m.face(f);
            let b = self.ops.grad_basis(f);
            let c = [row.dot(&b[0]), row.dot(&b[1]), row.dot(&b[2])];
            for i in 0..3 {
                for j in 0..3 {
                    out.push((tri[i], tri[j], c[i] * c[j]));
                }
            }
        };
        for (f, t) in terms.iter().enumerate() {
            let a = m.face_area(f);
            let tensor = &self.curvature.face(f).tensor;
            if let Some(target) = t.target {
                let row = (t.dir - project(t, tensor * t.dir) / (8.0 * target)) * a.sqrt();
                push_face_row(&mut out, f, row);
            }
            if lambda > 0.0 {
                let d = ROT.transpose() * tensor * ROT * t.dir * 2.0;
                push_face_row(&mut out, f, project(t, d) * (lambda * a).sqrt());
            }
            if mu > 0.0 {
                let c = t.norm - eps;
                push_face_row(&mut out, f, t.dir * ((mu * a).sqrt() / c));
            }
        }
        if lambda > 0.0 {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(16);
            for i in 0..m.num_vertices() {
                row.clear();
                let scale = lambda.sqrt() / (2.0 * m.dual_area(i).sqrt());
                for &f in m.vertex_faces(i) {
                    let k = crate::diffops::corner_of(m, f, i);
                    let u = project(&terms[f], self.ops.div_weights(f)[k]) * scale;
                    let tri = m.face(f);
                    let b = self.ops.grad_basis(f);
                    for q in 0..3 {
                        let c = u.dot(&b[q]);
                        match row.iter_mut().find(|e| e.0 == tri[q]) {
                            Some(e) => e.1 += c,
                            None => row.push((tri[q], c)),
                        }
                    }
                }
                for &(vi, ci) in &row {
                    for &(vj, cj) in &row {
                        out.push((vi, vj, ci * cj));
                    }
                }
            }
        }
        out
    }

    pub fn gradient(&self, phi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate_with_gradient(phi)?.1)
    }
}

/// Evaluates the objective once.
pub fn energy(
    mesh: &TriMesh,
    phi: &[f64],
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<EnergyBreakdown> {
    EnergyModel::new(mesh, curvature, config)?.evaluate(phi)
}

/// Exact gradient of [`energy`] with respect to every vertex value.
pub fn energy_gradient(
    mesh: &TriMesh,
    phi: &[f64],
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<Vec<f64>> {
    EnergyModel::new(mesh, curvature, config)?.gradient(phi)
}

/// `|∇φ_j| - ε_g` for every face; the field is feasible when all are >= 0.
pub fn constraint_values(mesh: &TriMesh, phi: &[f64], eps_g: f64) -> Result<Vec<f64>> {
    crate::diffops::check_len(mesh, phi)?;
    let ops = Operators::new(mesh);
    Ok((0..mesh.num_faces())
        .map(|f| ops.face_gradient(mesh, f, phi).norm() - eps_g)
        .collect())
}

/// One optimizer iteration in the energy trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub e_w: f64,
    pub e_kappa: f64,
    pub e_total: f64,
    pub max_violation: f64,
}

pub fn write_energy_trace<W: Write>(mut w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "iter,e_w,e_kappa,e_total,max_violation")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.iter, r.e_w, r.e_kappa, r.e_total, r.max_violation)?;
    }
    Ok(())
}

/// Largest constraint violation, `max(0, -min_j c_j)`.
pub fn max_violation(constraints: &[f64]) -> f64 {
    constraints.iter().fold(0.0f64, |m, &c| m.max(-c))
}
