//! Sparse assembly and symmetric positive definite solves.
//!
//! Every linear system in the pipeline (heat diffusion, Poisson recovery,
//! harmonic baseline, optimizer preconditioner) is a cotangent stiffness
//! matrix, possibly shifted by the lumped mass, restricted to the free
//! vertices of a Dirichlet problem.

use sprs::{CsMat, FillInReduction, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::diffops::Operators;
use crate::error::{Error, Result};
use crate::exec::compensated_sum;
use crate::mesh::TriMesh;

/// Relative residual every solve must reach.
/// Smallest accepted LDL pivot relative to the largest one.
const PIVOT_TOL: f64 = 1e-13;

pub const SOLVE_TOL: f64 = 1e-10;
const MAX_REFINEMENT: usize = 5;

/// Cotangent stiffness `K_ij = Σ_f A_f ∇ψ_i · ∇ψ_j` as (row, col, value)
/// triplets, duplicates not yet summed.
pub fn stiffness_triplets(mesh: &TriMesh, ops: &Operators) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(9 * mesh.num_faces());
    for f in 0..mesh.num_faces() {
        let t = mesh.face(f);
        let b = ops.grad_basis(f);
        let a = mesh.face_area(f);
        for i in 0..3 {
            for j in 0..3 {
                out.push((t[i], t[j], a * b[i].dot(&b[j])));
            }
        }
    }
    out
}

/// `y = K x` without forming the matrix.
pub fn stiffness_apply(mesh: &TriMesh, ops: &Operators, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; mesh.num_vertices()];
    for f in 0..mesh.num_faces() {
        let t = mesh.face(f);
        let g = ops.face_gradient(mesh, f, x) * mesh.face_area(f);
        let b = ops.grad_basis(f);
        for k in 0..3 {
            y[t[k]] += b[k].dot(&g);
        }
    }
    y
}

/// Splits the vertices into fixed and free sets and keeps the index map.
#[derive(Debug, Clone)]
pub struct Reduction {
    /// `slot[v]` is the free-variable index of vertex `v`, if free.
    slot: Vec<Option<usize>>,
    free: Vec<usize>,
}

impl Reduction {
    pub fn new(num_vertices: usize, fixed: &[usize]) -> Self {
        let mut is_fixed = vec![false; num_vertices];
        for &v in fixed {
            is_fixed[v] = true;
        }
        let mut slot = vec![None; num_vertices];
        let mut free = Vec::new();
        for v in 0..num_vertices {
            if !is_fixed[v] {
                slot[v] = Some(free.len());
                free.push(v);
            }
        }
        Self { slot, free }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn slot(&self, v: usize) -> Option<usize> {
        self.slot[v]
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    pub fn scatter(&self, reduced: &[f64], full: &mut [f64]) {
        for (k, &v) in self.free.iter().enumerate() {
            full[v] = reduced[k];
        }
    }
}

/// Factorization of a symmetric positive definite matrix restricted to
/// the free vertices, together with the coupling to the fixed ones.
pub struct DirichletSolver {
    reduction: Reduction,
    /// Free x free block.
    a_ff: CsMat<f64>,
    /// Free x all block, used to move fixed values to the right-hand side.
    a_fa: CsMat<f64>,
    factor: LdlNumeric<f64, usize>,
}

impl std::fmt::Debug for DirichletSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletSolver")
            .field("free", &self.reduction.num_free())
            .field("nnz", &self.a_ff.nnz())
            .finish()
    }
}

impl DirichletSolver {
    /// Factors `A = stiffness_scale K + diag(mass_shift)` restricted to the
    /// vertices not in `fixed`.
    pub fn new(
        mesh: &TriMesh,
        ops: &Operators,
        stiffness_scale: f64,
        mass_shift: Option<&[f64]>,
        fixed: &[usize],
    ) -> Result<Self> {
        let mut triplets = stiffness_triplets(mesh, ops);
        if stiffness_scale != 1.0 {
            triplets.iter_mut().for_each(|t| t.2 *= stiffness_scale);
        }
        if let Some(m) = mass_shift {
            triplets.extend(m.iter().enumerate().map(|(v, &mv)| (v, v, mv)));
        }
        Self::from_triplets(mesh.num_vertices(), triplets, fixed)
    }

    /// Factors the symmetric `n x n` matrix given as (row, col, value)
    /// triplets (duplicates summed), restricted to the vertices not in
    /// `fixed`. Only entries with `row <= col` are read; the lower triangle
    /// is mirrored from them so the assembled matrix is exactly symmetric.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        fixed: &[usize],
    ) -> Result<Self> {
        let reduction = Reduction::new(n, fixed);
        let nf = reduction.num_free();
        if nf == 0 {
            return Err(Error::LinearSolve("no free vertices".into()));
        }
        let mut ff = TriMat::new((nf, nf));
        let mut fa = TriMat::new((nf, n));
        let mut add = |i: usize, j: usize, v: f64| {
            if let Some(si) = reduction.slot(i) {
                fa.add_triplet(si, j, v);
                if let Some(sj) = reduction.slot(j) {
                    ff.add_triplet(si, sj, v);
                }
            }
        };
        // Merge duplicates in a fixed order so that the mirrored entries
        // are bitwise equal and the assembly is reproducible.
        let mut upper: Vec<(usize, usize, f64)> = triplets.into_iter().filter(|t| t.0 <= t.1).collect();
        upper.sort_by_key(|t| (t.0, t.1));
        let mut k = 0;
        while k < upper.len() {
            let (i, j) = (upper[k].0, upper[k].1);
            let mut v = 0.0;
            while k < upper.len() && upper[k].0 == i && upper[k].1 == j {
                v += upper[k].2;
                k += 1;
            }
            add(i, j, v);
            if i != j {
                add(j, i, v);
            }
        }
        let a_ff: CsMat<f64> = ff.to_csc();
        let a_fa: CsMat<f64> = fa.to_csr();
        let factor = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .numeric(a_ff.view())
            .map_err(|e| Error::LinearSolve(format!("factorization failed: {e}")))?;
        // A singular matrix can leave a rounding-level positive pivot.
        let d_max = factor.d().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        if factor.d().iter().any(|&d| !(d > PIVOT_TOL * d_max)) {
            return Err(Error::LinearSolve(
                "matrix is not positive definite on the free vertices".into(),
            ));
        }
        Ok(Self {
            reduction,
            a_ff,
            a_fa,
            factor,
        })
    }

    pub fn reduction(&self) -> &Reduction {
        &self.reduction
    }

    /// One forward/backward substitution, no residual check. Used as a
    /// preconditioner.
    pub fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        self.factor.solve(b)
    }

    /// Solves the reduced system `A_FF x = b` with iterative refinement
    /// until the relative residual is below [`SOLVE_TOL`].
    pub fn solve_reduced(&self, b: &[f64]) -> Result<Vec<f64>> {
        let b_norm = norm(b);
        let mut x: Vec<f64> = self.factor.solve(b);
        if b_norm == 0.0 {
            return Ok(x);
        }
        for _ in 0..MAX_REFINEMENT {
            let ax = matvec(&self.a_ff, &x);
            let r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
            if norm(&r) <= SOLVE_TOL * b_norm {
                return Ok(x);
            }
            let dx: Vec<f64> = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        let ax = matvec(&self.a_ff, &x);
        let res = norm(&b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
        if res <= SOLVE_TOL * b_norm {
            Ok(x)
        } else {
            Err(Error::LinearSolve(format!(
                "relative residual {:.3e} above {SOLVE_TOL:e}",
                res / b_norm
            )))
        }
    }

    /// Solves `A x = rhs` on the free vertices with `x = values` on the
    /// fixed ones. `rhs` and `values` are full-length.
    pub fn solve(&self, rhs: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        let mut fixed_only = values.to_vec();
        for &v in self.reduction.free() {
            fixed_only[v] = 0.0;
        }
        let coupling = matvec(&self.a_fa, &fixed_only);
        let b: Vec<f64> = self
            .reduction
            .free()
            .iter()
            .enumerate()
            .map(|(k, &v)| rhs[v] - coupling[k])
            .collect();
        let x = self.solve_reduced(&b)?;
        let mut out = fixed_only;
        self.reduction.scatter(&x, &mut out);
        Ok(out)
    }
}

/// `A x` for either storage order.
fn matvec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    for (&v, (i, j)) in a.iter() {
        y[i] += v * x[j];
    }
    y
}

pub fn norm(x: &[f64]) -> f64 {
    compensated_sum(x.iter().map(|v| v * v)).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let m = synth::disk(2.0, 5);
        let ops = Operators::new(&m);
        let ones = vec![1.0; m.num_vertices()];
        for y in stiffness_apply(&m, &ops, &ones) {
            assert!(y.abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_apply_matches_triplets() {
        let m = synth::wavy(6);
        let ops = Operators::new(&m);
        let x: Vec<f64> = (0..m.num_vertices()).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut y = vec![0.0; m.num_vertices()];
        for (i, j, v) in stiffness_triplets(&m, &ops) {
            y[i] += v * x[j];
        }
        for (a, b) in y.iter().zip(stiffness_apply(&m, &ops, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_solve_reproduces_linear_field() {
        // Linear functions are discrete harmonic on a planar mesh, so fixing
        // the boundary to x reproduces x inside.
        let m = synth::disk(3.0, 8);
        let ops = Operators::new(&m);
        let fixed: Vec<usize> = (0..m.num_vertices()).filter(|&v| m.is_boundary_vertex(v)).collect();
        let solver = DirichletSolver::new(&m, &ops, 1.0, None, &fixed).unwrap();
        let values: Vec<f64> = m.positions().iter().map(|p| p.x).collect();
        let x = solver.solve(&vec![0.0; m.num_vertices()], &values).unwrap();
        for (v, p) in m.positions().iter().enumerate() {
            assert!((x[v] - p.x).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn shifted_solve_without_fixed_vertices() {
        let m = synth::icosphere(1.0, 2);
        let ops = Operators::new(&m);
        let mass = m.dual_areas().to_vec();
        let solver = DirichletSolver::new(&m, &ops, 0.1, Some(&mass), &[]).unwrap();
        // (M + tK) 1 = M 1.
        let x = solver.solve(&mass, &vec![0.0; m.num_vertices()]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let m = synth::disk(1.0, 3);
        let ops = Operators::new(&m);
        assert!(DirichletSolver::new(&m, &ops, 1.0, None, &[]).is_err());
    }
}
