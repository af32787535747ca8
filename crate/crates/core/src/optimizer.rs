//! Field initialization, the barrier-constrained solve and the harmonic
//! baseline.
//!
//! The free variables are the non-seed vertex values; seed values are
//! eliminated and stay exactly zero. The constraint `|∇φ_j| >= ε_g` is
//! enforced by a logarithmic barrier whose weight shrinks geometrically
//! over the outer iterations. Each barrier subproblem is minimized by
//! L-BFGS whose initial inverse Hessian is a factored Gauss-Newton matrix
//! of the residuals, refreshed periodically. Stationarity is measured in
//! the norm induced by the reduced cotangent stiffness matrix.

use std::collections::VecDeque;
use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::diffops::{CurvatureData, Operators, Vec2};
use crate::energy::{
    max_violation, reference_target, target_gradient_norm, EnergyBreakdown, EnergyModel, PlannerConfig, ScalarField, TraceRow,
};
use crate::error::{Error, Result};
use crate::exec::compensated_sum;
use crate::linalg::{dot, stiffness_triplets, DirichletSolver, Reduction};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Seeded from part of one boundary loop.
    Direction,
    /// Seeded from the whole boundary.
    Contour,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direction" => Ok(PlanMode::Direction),
            "contour" => Ok(PlanMode::Contour),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected direction or contour)"
            ))),
        }
    }
}

/// Seed curve at level zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub seeds: Vec<usize>,
    pub mode: PlanMode,
}

impl BoundaryCondition {
    /// Validates `seeds` against `mesh` for `mode`.
    pub fn new(mesh: &TriMesh, seeds: Vec<usize>, mode: PlanMode) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Boundary("seed curve is empty".into()));
        }
        if let Some(&v) = seeds.iter().find(|&&v| v >= mesh.num_vertices()) {
            return Err(Error::Boundary(format!("seed vertex {v} out of range")));
        }
        if let Some(&v) = seeds.iter().find(|&&v| !mesh.is_boundary_vertex(v)) {
            return Err(Error::Boundary(format!("seed vertex {v} is not on the mesh boundary")));
        }
        let loops = mesh.boundary_loops();
        match mode {
            PlanMode::Direction => {
                let same_loop = loops
                    .iter()
                    .any(|l| seeds.iter().all(|v| l.contains(v)));
                if !same_loop {
                    return Err(Error::Boundary(
                        "direction mode seeds must lie on a single boundary loop".into(),
                    ));
                }
            }
            PlanMode::Contour => {
                let mut seeded = vec![false; mesh.num_vertices()];
                for &v in &seeds {
                    seeded[v] = true;
                }
                if loops.iter().flatten().any(|&v| !seeded[v]) {
                    return Err(Error::Boundary(
                        "contour mode seeds must cover every boundary loop".into(),
                    ));
                }
            }
        }
        if seeds.len() >= mesh.num_vertices() {
            return Err(Error::Boundary("seed curve leaves no interior to plan".into()));
        }
        Ok(Self { seeds, mode })
    }

    /// Every boundary vertex, loop by loop.
    pub fn contour(mesh: &TriMesh) -> Result<Self> {
        if mesh.boundary_loops().is_empty() {
            return Err(Error::Boundary("contour mode requires boundary".into()));
        }
        Self::new(mesh, mesh.boundary_loops().concat(), PlanMode::Contour)
    }

    /// A contiguous run of boundary loop `loop_index`: `len` vertices
    /// starting at position `start` (wrapping), or the whole loop.
    pub fn direction(mesh: &TriMesh, loop_index: usize, run: Option<(usize, usize)>) -> Result<Self> {
        let loops = mesh.boundary_loops();
        if loops.is_empty() {
            return Err(Error::Boundary("direction mode requires boundary".into()));
        }
        let l = loops.get(loop_index).ok_or_else(|| {
            Error::Boundary(format!(
                "boundary loop {loop_index} does not exist ({} loop(s))",
                loops.len()
            ))
        })?;
        let seeds = match run {
            None => l.clone(),
            Some((start, len)) => {
                if len == 0 || len > l.len() || start >= l.len() {
                    return Err(Error::Boundary(format!(
                        "run {start}+{len} is invalid for a loop of {} vertices",
                        l.len()
                    )));
                }
                (0..len).map(|k| l[(start + k) % l.len()]).collect()
            }
        };
        Self::new(mesh, seeds, PlanMode::Direction)
    }

    /// Boundary vertices satisfying `pred`, in boundary loop order.
    pub fn direction_where(
        mesh: &TriMesh,
        pred: impl Fn(&crate::Vec3) -> bool,
    ) -> Result<Self> {
        let seeds: Vec<usize> = mesh
            .boundary_loops()
            .iter()
            .flatten()
            .copied()
            .filter(|&v| pred(&mesh.position(v)))
            .collect();
        Self::new(mesh, seeds, PlanMode::Direction)
    }
}

fn check_reachable(mesh: &TriMesh, seeds: &[usize]) -> Result<()> {
    let (labels, count) = mesh.connected_components();
    let mut seeded = vec![false; count];
    for &s in seeds {
        seeded[labels[s]] = true;
    }
    if let Some(c) = (0..count).find(|&c| !seeded[c]) {
        let vertex = labels.iter().position(|&l| l == c).unwrap_or(0);
        return Err(Error::Unreachable { component: c, vertex });
    }
    Ok(())
}

/// Approximate geodesic distance to `seeds` by the heat method: one
/// backward-Euler heat step with `t = (mean edge length)²`, normalized
/// negative gradient, then a Poisson solve with zero Dirichlet data on
/// the seeds.
pub fn geodesic_distance(mesh: &TriMesh, ops: &Operators, seeds: &[usize]) -> Result<Vec<f64>> {
    check_reachable(mesh, seeds)?;
    let n = mesh.num_vertices();
    let h = mesh.mean_edge_length();
    let mass = mesh.dual_areas().to_vec();
    let heat = DirichletSolver::new(mesh, ops, h * h, Some(&mass), &[])?;
    let mut rhs = vec![0.0; n];
    for &s in seeds {
        rhs[s] = mass[s];
    }
    let u = heat.solve(&rhs, &vec![0.0; n])?;
    let x: Vec<Vec2> = (0..mesh.num_faces())
        .map(|f| {
            let g = ops.face_gradient(mesh, f, &u);
            let len = g.norm();
            if len > 0.0 {
                -g / len
            } else {
                Vec2::zeros()
            }
        })
        .collect();
    let mut b = vec![0.0; n];
    for f in 0..mesh.num_faces() {
        let tri = mesh.face(f);
        let basis = ops.grad_basis(f);
        for k in 0..3 {
            b[tri[k]] += mesh.face_area(f) * basis[k].dot(&x[f]);
        }
    }
    let poisson = DirichletSolver::new(mesh, ops, 1.0, None, seeds)?;
    poisson.solve(&b, &vec![0.0; n])
}

/// Initial field: geodesic distance to the seeds scaled by the median
/// target gradient norm, repaired if any face is below the gradient floor.
pub fn initialize(
    mesh: &TriMesh,
    bc: &BoundaryCondition,
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<(ScalarField, bool)> {
    config.validate()?;
    let ops = Operators::new(mesh);
    let scale = reference_target(curvature, config.kappa_c);
    let dist = geodesic_distance(mesh, &ops, &bc.seeds)?;
    let mut seeded = vec![false; mesh.num_vertices()];
    for &s in &bc.seeds {
        seeded[s] = true;
    }
    if let Some(f) = (0..mesh.num_faces()).find(|&f| mesh.face(f).iter().all(|&v| seeded[v])) {
        return Err(Error::Boundary(format!(
            "face {f} has all three vertices on the seed curve, so its gradient is zero; refine the mesh there"
        )));
    }
    let mut phi: Vec<f64> = dist.iter().map(|d| d * scale).collect();
    let eps_g = config.resolve_eps_g(curvature);
    // A margin above the floor keeps the first barrier value finite and
    // leaves the line search room to move.
    let floor = 2.0 * eps_g;
    let feasible = |phi: &[f64]| (0..mesh.num_faces()).all(|f| ops.face_gradient(mesh, f, phi).norm() > floor);
    if feasible(&phi) {
        return Ok((ScalarField::new(mesh, phi)?, false));
    }
    let weak = (0..mesh.num_faces())
        .filter(|&f| ops.face_gradient(mesh, f, &phi).norm() <= floor)
        .count();
    warn!("initial field below the gradient floor on {weak} face(s); repairing");
    let sets = DirichletSets::farthest_from(mesh, bc, &dist)?;
    let harmonic = solve_harmonic(mesh, &ops, &sets)?;
    let amplitude = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(scale * mesh.diameter());
    let mut weight = 1e-3;
    while weight <= 1.0 {
        let trial: Vec<f64> = phi
            .iter()
            .zip(&harmonic)
            .map(|(p, q)| p + weight * amplitude * q)
            .collect();
        if feasible(&trial) {
            phi = trial;
            return Ok((ScalarField::new(mesh, phi)?, true));
        }
        weight *= 4.0;
    }
    Err(Error::DegenerateGradient {
        faces: (0..mesh.num_faces())
            .filter(|&f| ops.face_gradient(mesh, f, &phi).norm() <= floor)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleStartRepaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Whether the stationarity test passed, independent of a repair.
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub energy: EnergyBreakdown,
    pub initial_energy: EnergyBreakdown,
    pub max_constraint_violation: f64,
    pub min_constraint: f64,
    /// Stiffness-preconditioned norm of the barrier objective's gradient
    /// over the free vertices, at the final barrier weight.
    pub gradient_norm: f64,
    /// Same norm for `E_total` alone; nonzero where the floor is active.
    pub energy_gradient_norm: f64,
    pub gradient_tol: f64,
    pub eps_g: f64,
    pub final_mu: f64,
    /// How `κs` inside the width target is treated.
    pub kappa_s_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub outer: Vec<OuterRow>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerExit {
    Converged,
    MaxInner,
    LineSearch,
    Stalled,
}

/// Summary of one barrier subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRow {
    pub mu: f64,
    pub inner_iterations: usize,
    pub exit: InnerExit,
    pub barrier_gradient_norm: f64,
    pub energy_gradient_norm: f64,
    pub e_total: f64,
    pub min_constraint: f64,
}

/// Barrier objective over the free variables.
struct Barrier<'a, 'm> {
    model: &'a EnergyModel<'m>,
    reduction: &'a Reduction,
    mu: f64,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    energy: EnergyBreakdown,
    /// Gradient of `E_total` alone over the free variables.
    energy_grad: Vec<f64>,
    min_c: f64,
}

impl Barrier<'_, '_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.model.mesh().num_vertices()];
        self.reduction.scatter(x, &mut phi);
        phi
    }

    /// `None` when `x` is not strictly feasible.
    fn eval(&self, x: Vec<f64>) -> Option<Point> {
        let phi = self.full(&x);
        let eps = self.model.eps_g();
        let c = self.model.constraint_values(&phi);
        let min_c = c.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_c > 0.0) {
            return None;
        }
        let (terms, kg) = self.model.prepare(&phi).ok()?;
        let energy = self.model.breakdown_of(&terms, &kg);
        let mesh = self.model.mesh();
        let logs: Vec<f64> = (0..mesh.num_faces()).map(|f| mesh.face_area(f) * c[f].ln()).collect();
        let f = energy.e_total - self.mu * self.model.sum(&logs);
        let mu = self.mu;
        let dg = self.model.face_sensitivities(&terms, &kg, |_, _| Vec2::zeros());
        let barrier: Vec<Vec2> = (0..mesh.num_faces())
            .map(|j| dg[j] - terms[j].dir * (mu * mesh.face_area(j) / (terms[j].norm - eps)))
            .collect();
        let energy_grad = self.reduction.gather(&self.model.scatter(&dg));
        let grad = self.reduction.gather(&self.model.scatter(&barrier));
        Some(Point {
            x,
            f,
            grad,
            energy,
            energy_grad,
            min_c,
        })
    }
}

/// Limited-memory inverse Hessian with a sparse-factor initial matrix.
struct Lbfgs {
    pre: DirichletSolver,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    gamma: f64,
    memory: usize,
}

impl Lbfgs {
    fn new(pre: DirichletSolver, gamma: f64, memory: usize) -> Self {
        Self {
            pre,
            pairs: VecDeque::new(),
            gamma,
            memory,
        }
    }

    fn reset(&mut self) {
        self.pairs.clear();
    }

    /// Swaps in a new initial matrix; old pairs were scaled for the old one.
    fn replace_preconditioner(&mut self, pre: DirichletSolver) {
        self.pre = pre;
        self.gamma = 1.0;
        self.pairs.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 0.0) {
            return;
        }
        let hy = self.pre.apply_inverse(&y);
        let yhy = dot(&y, &hy);
        if yhy > 0.0 {
            self.gamma = sy / yhy;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let mut r: Vec<f64> = self.pre.apply_inverse(&q).into_iter().map(|v| v * self.gamma).collect();
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &r);
            for (ri, si) in r.iter_mut().zip(s) {
                *ri += (a - b) * si;
            }
        }
        r.iter_mut().for_each(|v| *v = -*v);
        r
    }
}

/// Gauss-Newton matrix of the barrier objective at `x`, regularized by a
/// small multiple of the stiffness matrix and factored.
fn gauss_newton_preconditioner(
    model: &EnergyModel,
    reduction: &Reduction,
    seeds: &[usize],
    x: &[f64],
    mu: f64,
) -> Result<DirichletSolver> {
    let mesh = model.mesh();
    let mut phi = vec![0.0; mesh.num_vertices()];
    reduction.scatter(x, &mut phi);
    let (terms, _) = model.prepare(&phi)?;
    let mut triplets = model.gauss_newton_triplets(&terms, mu);
    let gn_trace: f64 = triplets.iter().filter(|t| t.0 == t.1).map(|t| t.2).sum();
    let k = stiffness_triplets(mesh, model.ops());
    let k_trace: f64 = k.iter().filter(|t| t.0 == t.1).map(|t| t.2).sum();
    let tau = GN_REGULARIZATION * gn_trace / k_trace;
    triplets.extend(k.into_iter().map(|(i, j, v)| (i, j, tau * v)));
    DirichletSolver::from_triplets(mesh.num_vertices(), triplets, seeds)
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;
const LBFGS_MEMORY: usize = 12;
/// Stiffness added to the Gauss-Newton matrix, relative to its trace.
const GN_REGULARIZATION: f64 = 1e-4;
/// Inner iterations between Gauss-Newton refreshes.
const GN_REFRESH: usize = 20;
/// An inner loop whose relative decrease stays below `STALL_RATIO` for
/// `STALL_COUNT` iterations has hit rounding noise.
const STALL_RATIO: f64 = 1e-15;
const STALL_COUNT: usize = 5;

fn precond_norm(pre: &DirichletSolver, g: &[f64]) -> f64 {
    dot(g, &pre.apply_inverse(g)).max(0.0).sqrt()
}

/// Minimizes the planning objective subject to the gradient floor, with
/// the seed values held at zero.
pub fn solve(
    mesh: &TriMesh,
    bc: &BoundaryCondition,
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<(ScalarField, SolveReport)> {
    let (init, repaired) = initialize(mesh, bc, config, curvature)?;
    solve_from(mesh, bc, config, curvature, init, repaired)
}

/// Like [`solve`] but starting from a given feasible field.
pub fn solve_from(
    mesh: &TriMesh,
    bc: &BoundaryCondition,
    config: &PlannerConfig,
    curvature: &CurvatureData,
    init: ScalarField,
    repaired: bool,
) -> Result<(ScalarField, SolveReport)> {
    let started = Instant::now();
    init.check_mesh(mesh)?;
    let model = EnergyModel::new(mesh, curvature, config)?;
    let settings = &config.solver;
    let scale = reference_target(curvature, config.kappa_c);
    let reduction = Reduction::new(mesh.num_vertices(), &bc.seeds);
    let pre = DirichletSolver::new(mesh, model.ops(), 1.0, None, &bc.seeds)?;
    let tol = settings.grad_tol * mesh.total_area().sqrt() * scale;

    let mut phi0 = init.into_values();
    for &s in &bc.seeds {
        phi0[s] = 0.0;
    }
    let initial_energy = model
        .evaluate(&phi0)
        .map_err(|e| Error::LinearSolve(format!("initial field is infeasible: {e}")))?;

    let mut mu = settings.barrier_mu0 * scale * scale;
    let mut x = reduction.gather(&phi0);
    let mut best: (f64, Vec<f64>) = (initial_energy.e_total, x.clone());
    let mut trace = Vec::new();
    let mut outer_rows = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for outer in 0..settings.max_outer {
        let barrier = Barrier {
            model: &model,
            reduction: &reduction,
            mu,
        };
        let mut point = barrier
            .eval(x.clone())
            .ok_or_else(|| Error::LinearSolve("iterate left the feasible region".into()))?;
        let mut lbfgs = Lbfgs::new(
            gauss_newton_preconditioner(&model, &reduction, &bc.seeds, &point.x, mu)?,
            1.0,
            LBFGS_MEMORY,
        );
        let mut stalled = 0;
        let mut exit = InnerExit::MaxInner;
        let mut inner_iterations = 0;
        for inner in 0..settings.max_inner {
            if inner > 0 && inner % GN_REFRESH == 0 {
                lbfgs.replace_preconditioner(gauss_newton_preconditioner(
                    &model, &reduction, &bc.seeds, &point.x, mu,
                )?);
            }
            if precond_norm(&pre, &point.grad) <= tol {
                exit = InnerExit::Converged;
                break;
            }
            let mut dir = lbfgs.direction(&point.grad);
            let mut slope = dot(&dir, &point.grad);
            if !(slope < 0.0) {
                lbfgs.reset();
                dir = lbfgs.direction(&point.grad);
                slope = dot(&dir, &point.grad);
            }
            let mut step = 1.0;
            let mut next = None;
            for _ in 0..MAX_BACKTRACK {
                let trial: Vec<f64> = point.x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                if let Some(p) = barrier.eval(trial) {
                    if p.f <= point.f + ARMIJO * step * slope {
                        next = Some(p);
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some(p) = next else {
                if lbfgs.pairs.is_empty() {
                    exit = InnerExit::LineSearch;
                    break;
                }
                lbfgs.reset();
                continue;
            };
            iterations += 1;
            inner_iterations += 1;
            let s: Vec<f64> = p.x.iter().zip(&point.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = p.grad.iter().zip(&point.grad).map(|(a, b)| a - b).collect();
            lbfgs.push(s, y);
            if point.f - p.f <= STALL_RATIO * p.f.abs().max(f64::MIN_POSITIVE) {
                stalled += 1;
            } else {
                stalled = 0;
            }
            point = p;
            trace.push(TraceRow {
                iter: iterations,
                e_w: point.energy.e_w,
                e_kappa: point.energy.e_kappa,
                e_total: point.energy.e_total,
                max_violation: 0.0,
            });
            if point.energy.e_total < best.0 {
                best = (point.energy.e_total, point.x.clone());
            }
            if stalled >= STALL_COUNT {
                exit = InnerExit::Stalled;
                break;
            }
        }
        x = point.x.clone();
        let row = OuterRow {
            mu,
            inner_iterations,
            exit,
            barrier_gradient_norm: precond_norm(&pre, &point.grad),
            energy_gradient_norm: precond_norm(&pre, &point.energy_grad),
            e_total: point.energy.e_total,
            min_constraint: point.min_c,
        };
        debug!("outer {outer}: {row:?}");
        outer_rows.push(row);
        let inner_converged = exit == InnerExit::Converged;
        // Either the floor is inactive and E itself is stationary, or the
        // barrier subproblem is solved at the final weight.
        if inner_converged && (row.energy_gradient_norm <= tol || outer + 1 == settings.max_outer) {
            converged = true;
            break;
        }
        if outer + 1 < settings.max_outer {
            mu *= settings.barrier_shrink;
        }
    }
    let last = *outer_rows.last().expect("at least one outer iteration");

    // Return the lowest-energy feasible iterate; normally the last one.
    let mut phi = vec![0.0; mesh.num_vertices()];
    let final_x = if best.0 < model.evaluate(&{
        reduction.scatter(&x, &mut phi);
        phi.clone()
    })?
    .e_total
    {
        best.1
    } else {
        x
    };
    reduction.scatter(&final_x, &mut phi);
    let energy = model.evaluate(&phi)?;
    let c = model.constraint_values(&phi);
    let min_c = c.iter().copied().fold(f64::INFINITY, f64::min);
    let status = if repaired {
        SolveStatus::InfeasibleStartRepaired
    } else if converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    info!(
        "solve {:?}: {iterations} iterations, E_total {:.6e} (from {:.6e})",
        status, energy.e_total, initial_energy.e_total
    );
    let report = SolveReport {
        status,
        converged,
        iterations,
        outer_iterations: outer_rows.len(),
        energy,
        initial_energy,
        max_constraint_violation: max_violation(&c),
        min_constraint: min_c,
        gradient_norm: last.barrier_gradient_norm,
        energy_gradient_norm: last.energy_gradient_norm,
        gradient_tol: tol,
        eps_g: model.eps_g(),
        final_mu: mu,
        kappa_s_policy: "re-evaluated from the current gradient direction at every evaluation".into(),
        wall_time_s: (!settings.deterministic_reduction).then(|| started.elapsed().as_secs_f64()),
        outer: outer_rows,
        trace,
    };
    Ok((ScalarField::new(mesh, phi)?, report))
}

/// Dirichlet data for the harmonic baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSets {
    pub zero: Vec<usize>,
    pub one: Vec<usize>,
}

impl DirichletSets {
    /// Seeds at 0 and the vertex farthest (geodesically) from them at 1.
    pub fn from_bc(mesh: &TriMesh, bc: &BoundaryCondition) -> Result<Self> {
        let ops = Operators::new(mesh);
        let dist = geodesic_distance(mesh, &ops, &bc.seeds)?;
        Self::farthest_from(mesh, bc, &dist)
    }

    fn farthest_from(mesh: &TriMesh, bc: &BoundaryCondition, dist: &[f64]) -> Result<Self> {
        let mut is_seed = vec![false; mesh.num_vertices()];
        for &s in &bc.seeds {
            is_seed[s] = true;
        }
        let far = (0..mesh.num_vertices())
            .filter(|&v| !is_seed[v])
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .ok_or(Error::ConstantField)?;
        Ok(Self {
            zero: bc.seeds.clone(),
            one: vec![far],
        })
    }
}

fn solve_harmonic(mesh: &TriMesh, ops: &Operators, sets: &DirichletSets) -> Result<Vec<f64>> {
    if sets.zero.is_empty() || sets.one.is_empty() {
        return Err(Error::ConstantField);
    }
    if sets.one.iter().any(|v| sets.zero.contains(v)) {
        return Err(Error::Boundary("a vertex is fixed to both 0 and 1".into()));
    }
    let n = mesh.num_vertices();
    let mut fixed = sets.zero.clone();
    fixed.extend_from_slice(&sets.one);
    check_reachable(mesh, &fixed)?;
    let mut values = vec![0.0; n];
    for &v in &sets.one {
        values[v] = 1.0;
    }
    let solver = DirichletSolver::new(mesh, ops, 1.0, None, &fixed)?;
    solver.solve(&vec![0.0; n], &values)
}

/// Discrete harmonic field (cotangent Laplace equation) with `sets.zero`
/// at 0 and `sets.one` at 1.
pub fn solve_laplacian_baseline(mesh: &TriMesh, sets: &DirichletSets) -> Result<ScalarField> {
    let ops = Operators::new(mesh);
    ScalarField::new(mesh, solve_harmonic(mesh, &ops, sets)?)
}

/// The harmonic baseline for `bc`, rescaled by the factor that best fits
/// the iso-scallop width term, `s = Σ A |g| t / Σ A |g|²`, so that its
/// relative deviation measures level spacing rather than the arbitrary
/// 0..1 normalization.
pub fn laplacian_baseline(
    mesh: &TriMesh,
    bc: &BoundaryCondition,
    config: &PlannerConfig,
    curvature: &CurvatureData,
) -> Result<ScalarField> {
    let raw = solve_laplacian_baseline(mesh, &DirichletSets::from_bc(mesh, bc)?)?;
    let ops = Operators::new(mesh);
    let (mut num, mut den) = (Vec::new(), Vec::new());
    for f in 0..mesh.num_faces() {
        let g = ops.face_gradient(mesh, f, raw.values());
        let norm = g.norm();
        if norm == 0.0 {
            continue;
        }
        let ks = curvature.face(f).normal_curvature(&ops.from_frame(f, &g));
        if let Ok(t) = target_gradient_norm(ks, config.kappa_c) {
            let a = mesh.face_area(f);
            num.push(a * norm * t);
            den.push(a * norm * norm);
        }
    }
    let scale = compensated_sum(num) / compensated_sum(den);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::ConstantField);
    }
    ScalarField::new(mesh, raw.values().iter().map(|v| v * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffops::curvature_tensor;
    use crate::synth;

    const PLANE_TARGET: f64 = 0.176_776_695_296_636_9;

    fn strip_bc(m: &TriMesh) -> BoundaryCondition {
        BoundaryCondition::direction_where(m, |p| p.x.abs() < 1e-9).unwrap()
    }

    #[test]
    fn initialization_on_strip_is_scaled_distance() {
        let m = synth::strip(40);
        let c = curvature_tensor(&m);
        let cfg = PlannerConfig::new(0.25);
        let (phi, repaired) = initialize(&m, &strip_bc(&m), &cfg, &c).unwrap();
        assert!(!repaired);
        for (v, p) in m.positions().iter().enumerate() {
            let near_corner = (p.y < 1.0 || p.y > 9.0) && p.x < 1.0;
            if !near_corner && p.x > 0.0 {
                let expect = PLANE_TARGET * p.x;
                assert!((phi.values()[v] - expect).abs() <= 0.02 * expect, "{v}: {} vs {expect}", phi.values()[v]);
            }
        }
    }

    #[test]
    fn initialization_is_monotone_in_arc_distance() {
        // Seeds on the rim of a hemisphere-like cap: the field must grow
        // with the polar distance from the rim.
        let m = synth::sphere_cap(10.0, std::f64::consts::FRAC_PI_2, 16);
        let c = curvature_tensor(&m);
        let bc = BoundaryCondition::contour(&m).unwrap();
        let (phi, _) = initialize(&m, &bc, &PlannerConfig::new(0.25), &c).unwrap();
        let mut by_polar: Vec<(f64, f64)> = m
            .positions()
            .iter()
            .zip(phi.values())
            .map(|(p, &v)| ((p.z / 10.0).clamp(-1.0, 1.0).acos(), v))
            .collect();
        by_polar.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Group by ring (equal polar angle) and compare ring means.
        let mut rings: Vec<(f64, f64, usize)> = Vec::new();
        for (t, v) in by_polar {
            match rings.last_mut() {
                Some(r) if (r.0 - t).abs() < 1e-6 => {
                    r.1 += v;
                    r.2 += 1;
                }
                _ => rings.push((t, v, 1)),
            }
        }
        for w in rings.windows(2) {
            assert!(w[0].1 / w[0].2 as f64 > w[1].1 / w[1].2 as f64);
        }
    }

    #[test]
    fn closed_mesh_cannot_be_seeded() {
        let m = synth::icosphere(10.0, 1);
        let all: Vec<usize> = (0..m.num_vertices()).collect();
        assert!(BoundaryCondition::new(&m, all, PlanMode::Contour).is_err());
        assert!(matches!(
            BoundaryCondition::contour(&m),
            Err(Error::Boundary(msg)) if msg.contains("contour mode requires boundary")
        ));
    }

    #[test]
    fn unreachable_component_is_named() {
        let a = synth::grid(0.0, 1.0, 0.0, 1.0, 2, 2);
        let b = synth::grid(5.0, 6.0, 0.0, 1.0, 2, 2);
        let mut pos = a.positions().to_vec();
        let off = pos.len();
        pos.extend_from_slice(b.positions());
        let mut faces = a.faces().to_vec();
        faces.extend(b.faces().iter().map(|t| t.map(|v| v + off)));
        let m = TriMesh::new(pos, faces).unwrap();
        let bc = BoundaryCondition::direction(&m, 0, None).unwrap();
        let c = curvature_tensor(&m);
        match initialize(&m, &bc, &PlannerConfig::new(0.25), &c) {
            Err(Error::Unreachable { component: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn face_with_only_seed_vertices_is_rejected() {
        // A grid corner triangle has all three vertices on the boundary.
        let m = synth::grid(0.0, 4.0, 0.0, 4.0, 4, 4);
        let bc = BoundaryCondition::contour(&m).unwrap();
        let c = curvature_tensor(&m);
        match initialize(&m, &bc, &PlannerConfig::new(0.25), &c) {
            Err(Error::Boundary(msg)) => assert!(msg.contains("all three vertices"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strip_solve_reaches_linear_field() {
        let m = synth::strip(30);
        let c = curvature_tensor(&m);
        let cfg = PlannerConfig::new(0.25).with_lambda(0.0);
        let bc = strip_bc(&m);
        let (phi, report) = solve(&m, &bc, &cfg, &c).unwrap();
        assert!(report.energy.e_w <= 1e-6 * m.total_area() * PLANE_TARGET * PLANE_TARGET, "{report:?}");
        assert!(report.energy.e_total <= report.initial_energy.e_total);
        for &s in &bc.seeds {
            assert_eq!(phi.values()[s], 0.0);
        }
        let g = crate::diffops::gradient(&m, phi.values()).unwrap();
        for n in g.norms() {
            assert!((n - PLANE_TARGET).abs() <= 0.01 * PLANE_TARGET);
        }
        assert!(report.min_constraint > 0.0);
    }

    #[test]
    fn solve_is_deterministic() {
        let m = synth::wavy(12);
        let c = curvature_tensor(&m);
        let cfg = PlannerConfig::new(0.25).with_lambda(1.0);
        let bc = BoundaryCondition::direction_where(&m, |p| p.x.abs() < 1e-9).unwrap();
        let (a, ra) = solve(&m, &bc, &cfg, &c).unwrap();
        let (b, rb) = solve(&m, &bc, &cfg, &c).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    }

    #[test]
    fn baseline_on_strip_is_linear() {
        let m = synth::strip(20);
        let zero: Vec<usize> = (0..m.num_vertices()).filter(|&v| m.position(v).x == 0.0).collect();
        let one: Vec<usize> = (0..m.num_vertices()).filter(|&v| m.position(v).x == 20.0).collect();
        let phi = solve_laplacian_baseline(&m, &DirichletSets { zero, one }).unwrap();
        for (v, p) in m.positions().iter().enumerate() {
            assert!((phi.values()[v] - p.x / 20.0).abs() < 1e-10);
        }
    }

    #[test]
    fn baseline_on_annulus_is_log_radial() {
        let (r0, r1) = (2.0, 6.0);
        let m = synth::annulus(r0, r1, 12, 96);
        let loops = m.boundary_loops();
        let radius = |v: usize| m.position(v).xy().norm();
        let (inner, outer) = if radius(loops[0][0]) < radius(loops[1][0]) {
            (loops[0].clone(), loops[1].clone())
        } else {
            (loops[1].clone(), loops[0].clone())
        };
        let phi = solve_laplacian_baseline(&m, &DirichletSets { zero: inner, one: outer }).unwrap();
        for v in 0..m.num_vertices() {
            let expect = (radius(v) / r0).ln() / (r1 / r0).ln();
            assert!((phi.values()[v] - expect).abs() < 5e-3, "{v}");
        }
    }

    #[test]
    fn baseline_without_second_set_is_constant_error() {
        let m = synth::strip(10);
        let sets = DirichletSets { zero: vec![0], one: vec![] };
        assert!(matches!(solve_laplacian_baseline(&m, &sets), Err(Error::ConstantField)));
    }

    #[test]
    fn dirichlet_sets_pick_far_vertex() {
        let m = synth::strip(20);
        let sets = DirichletSets::from_bc(&m, &strip_bc(&m)).unwrap();
        assert_eq!(sets.one.len(), 1);
        assert!((m.position(sets.one[0]).x - 20.0).abs() < 1e-9);
    }
}
