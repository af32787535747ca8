use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use isolevel::analysis::{
    compare_fields, curvature_stats, deviation_stats, scallop_oracle, Comparison, CurvatureStats, DeviationStats,
    ScallopSummary,
};
use isolevel::diffops::{curvature_tensor, CurvatureData};
use isolevel::energy::{write_energy_trace, ScalarField};
use isolevel::isocurve::{verify_topology, TopologyReport};
use isolevel::mesh::{load_mesh, MeshFormat};
use isolevel::optimizer::{laplacian_baseline, solve, PlanMode};
use isolevel::path::{build, chord_error, schedule_adaptive, schedule_iso_scallop, LevelSchedule, ScheduleKind, ToolPath};
use isolevel::TriMesh;
use log::{info, warn};
use serde::Serialize;

use crate::config::{read_table, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{now_unix, output_dir, sha256_hex, RunManifest, Timestamps, Writer};

pub const FIELD_FILE: &str = "field.json";
pub const PATH_FILE: &str = "path.json";

fn tool() -> String {
    format!("isolevel {}", env!("CARGO_PKG_VERSION"))
}

pub fn load(path: &Path, weld: f64) -> CliResult<TriMesh> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| CliError::usage(format!("{}: unknown mesh format (expected .off, .obj or .stl)", path.display())))?;
    Ok(load_mesh(path, format, weld)?)
}

fn canonical(path: &Path) -> CliResult<String> {
    let p = std::fs::canonicalize(path).map_err(|e| CliError::io(path, e))?;
    Ok(p.to_string_lossy().into_owned())
}

fn base_table(config: Option<&Path>) -> CliResult<toml::Table> {
    config.map(read_table).transpose().map(Option::unwrap_or_default)
}

fn timestamps(cfg: &RunConfig, started: f64) -> Option<Timestamps> {
    (!cfg.deterministic()).then(|| Timestamps {
        started_unix: started,
        finished_unix: now_unix(),
    })
}

/// Loads the mesh recorded in a plan manifest and checks it is unchanged.
fn mesh_of(manifest: &RunManifest, cfg: &RunConfig) -> CliResult<TriMesh> {
    let mesh = load(Path::new(&manifest.mesh), cfg.weld_tolerance)?;
    if mesh.checksum() != manifest.mesh_checksum {
        return Err(CliError::new(
            "E_MISMATCH",
            crate::error::EXIT_INPUT,
            format!("mesh {} changed since it was planned", manifest.mesh),
        ));
    }
    Ok(mesh)
}

/// Reads a field written by `plan`, verifying it against its manifest.
fn read_field(field: &Path) -> CliResult<(ScalarField, RunManifest, PathBuf)> {
    let (manifest, dir) = RunManifest::beside(field)?;
    manifest.verify(field)?;
    let text = std::fs::read_to_string(field).map_err(|e| CliError::io(field, e))?;
    let phi: ScalarField = serde_json::from_str(&text)?;
    Ok((phi, manifest, dir))
}

pub struct PlanInput {
    pub mesh: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub out: PathBuf,
}

pub fn plan(input: PlanInput) -> CliResult<PathBuf> {
    let started = now_unix();
    let mut table = base_table(input.config.as_deref())?;
    input.overrides.apply(&mut table);
    let cfg = RunConfig::from_table(table)?;
    let mesh = load(&input.mesh, cfg.weld_tolerance)?;
    let bc = cfg.boundary_condition(&mesh)?;
    let curvature = curvature_tensor(&mesh);

    let (phi, report) = solve(&mesh, &bc, &cfg.planner, &curvature)?;
    info!(
        "solve {:?}: {} iterations, E = {:e}",
        report.status, report.iterations, report.energy.e_total
    );

    let (dir, name) = output_dir(&input.out, "plan", &("plan", mesh.checksum(), &cfg))?;
    let mut w = Writer::new(dir);
    w.json(FIELD_FILE, &phi)?;
    w.json("report.json", &report)?;
    w.with("trace.csv", |buf| write_energy_trace(buf, &report.trace))?;
    let manifest = RunManifest {
        tool: tool(),
        command: "plan".into(),
        mesh: canonical(&input.mesh)?,
        mesh_checksum: mesh.checksum().to_string(),
        config: cfg.clone(),
        output_dir: name,
        inputs: BTreeMap::from([("mesh".to_string(), mesh.checksum().to_string())]),
        checksums: BTreeMap::from([("field".to_string(), phi.checksum())]),
        artifacts: Vec::new(),
        timestamps: timestamps(&cfg, started),
    };
    let written = w.finish(manifest)?;
    if !report.converged {
        return Err(CliError::solver(format!(
            "solver stopped without converging ({:?}, gradient norm {:e} > {:e}); outputs kept in {}",
            report.status,
            report.gradient_norm,
            report.gradient_tol,
            written.display()
        )));
    }
    Ok(written)
}

pub struct PathInput {
    pub field: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PathReport {
    curves: usize,
    points_extracted: usize,
    points_kept: usize,
    total_length: f64,
    chord_tol: f64,
    max_chord_error: f64,
    topology: TopologyReport,
}

pub fn make_schedule(
    mesh: &TriMesh,
    phi: &ScalarField,
    cfg: &RunConfig,
    curvature: impl FnOnce() -> CurvatureData,
) -> CliResult<LevelSchedule> {
    let h = cfg.planner.h;
    Ok(match cfg.schedule {
        ScheduleKind::IsoScallop => schedule_iso_scallop(phi, h, cfg.mode)?,
        ScheduleKind::Adaptive => schedule_adaptive(
            mesh,
            phi,
            &curvature(),
            cfg.planner.kappa_c,
            h,
            cfg.mode,
            None,
            cfg.planner.exec(),
        )?,
    })
}

pub fn path(input: PathInput) -> CliResult<PathBuf> {
    let started = now_unix();
    let (phi, plan, plan_dir) = read_field(&input.field)?;
    let mut table = plan.config.to_table();
    if let Some(extra) = input.config.as_deref() {
        table.extend(read_table(extra)?);
    }
    input.overrides.apply(&mut table);
    let cfg = RunConfig::from_table(table)?;
    let mesh = mesh_of(&plan, &cfg)?;
    phi.check_mesh(&mesh)?;

    let schedule = make_schedule(&mesh, &phi, &cfg, || curvature_tensor(&mesh))?;
    let (tool_path, raw) = build(&mesh, &phi, &schedule, &cfg.path_settings(), cfg.planner.exec())?;
    let topology = verify_topology(&raw, &mesh);
    if !topology.is_clean() {
        warn!("{} topology violation(s) in the extracted curves", topology.violations.len());
    }
    let mut max_chord_error = 0.0f64;
    for (c, r) in tool_path.curves.iter().zip(&raw) {
        max_chord_error = max_chord_error.max(chord_error(r, &c.curve)?);
    }
    let report = PathReport {
        curves: tool_path.curves.len(),
        points_extracted: raw.iter().map(|c| c.points.len()).sum(),
        points_kept: tool_path.num_points(),
        total_length: tool_path.total_length(),
        chord_tol: cfg.planner.chord_tol,
        max_chord_error,
        topology,
    };

    let root = input.out.unwrap_or_else(|| plan_dir.parent().unwrap_or(Path::new(".")).to_path_buf());
    let (dir, name) = output_dir(&root, "path", &("path", phi.checksum(), &cfg))?;
    let mut w = Writer::new(dir);
    let schedule_json = serde_json::to_string_pretty(&schedule)? + "\n";
    let path_json = tool_path.to_json()? + "\n";
    w.bytes("schedule.json", schedule_json.as_bytes())?;
    w.bytes(PATH_FILE, path_json.as_bytes())?;
    w.with("path.csv", |buf| tool_path.write_csv_to(buf))?;
    w.with("path.gcode", |buf| tool_path.write_gcode_to(buf))?;
    w.json("report.json", &report)?;
    let manifest = RunManifest {
        tool: tool(),
        command: "path".into(),
        mesh: plan.mesh.clone(),
        mesh_checksum: plan.mesh_checksum.clone(),
        config: cfg.clone(),
        output_dir: name,
        inputs: BTreeMap::from([("field".to_string(), plan.verify(&input.field)?)]),
        checksums: BTreeMap::from([
            ("field".to_string(), phi.checksum()),
            ("schedule".to_string(), sha256_hex(schedule_json.as_bytes())),
            ("path".to_string(), sha256_hex(path_json.as_bytes())),
        ]),
        artifacts: Vec::new(),
        timestamps: timestamps(&cfg, started),
    };
    w.finish(manifest)
}

pub struct AnalyzeInput {
    pub field: PathBuf,
    pub path: PathBuf,
    pub baseline: bool,
    pub overrides: Overrides,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OraclePair {
    pub level_a: f64,
    pub level_b: f64,
    pub h: f64,
    pub cutter_radius: f64,
    pub summary: ScallopSummary,
    /// `(median height - h) / h`.
    pub relative_error: f64,
}

/// Scallop oracle on `k` adjacent level pairs spread over the schedule.
/// In direction mode the final, partial step is left out.
pub fn oracle_spot_checks(mesh: &TriMesh, path: &ToolPath, k: usize) -> Vec<OraclePair> {
    let levels = &path.schedule.levels;
    let mut gaps = levels.len().saturating_sub(1);
    if path.schedule.ends_at_max {
        gaps = gaps.saturating_sub(1);
    }
    if gaps == 0 || k == 0 {
        return Vec::new();
    }
    let picks: Vec<usize> = if k >= gaps {
        (0..gaps).collect()
    } else if k == 1 {
        vec![gaps / 2]
    } else {
        let mut p: Vec<usize> = (0..k).map(|i| (i * (gaps - 1) + (k - 1) / 2) / (k - 1)).collect();
        p.dedup();
        p
    };
    let r = 1.0 / path.settings.kappa_c;
    let h = path.settings.h;
    picks
        .into_iter()
        .filter_map(|j| {
            let (la, lb) = (levels[j], levels[j + 1]);
            let a = path.curves.iter().find(|c| c.level == la)?;
            let start = a.curve.points.first()?.position;
            let b = path
                .curves
                .iter()
                .filter(|c| c.level == lb)
                .min_by(|x, y| {
                    let d = |c: &isolevel::path::PathCurve| {
                        c.curve.points.iter().map(|p| (p.position - start).norm()).fold(f64::INFINITY, f64::min)
                    };
                    d(x).total_cmp(&d(y))
                })?;
            let stride = (a.curve.points.len() / 50).max(1);
            let summary = ScallopSummary::of(&scallop_oracle(mesh, &a.curve, &b.curve, r, stride));
            Some(OraclePair {
                level_a: la,
                level_b: lb,
                h,
                cutter_radius: r,
                relative_error: (summary.heights.median - h) / h,
                summary,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct AnalysisSummary {
    faces: usize,
    excluded_faces: usize,
    deviation_mean: f64,
    deviation_median: f64,
    deviation_max: f64,
    fraction_above_5pct: f64,
    fraction_above_10pct: f64,
    curvature_samples: usize,
    curvature_mean: f64,
    curvature_max: f64,
    oracle_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_fraction_above_10pct: Option<f64>,
}

fn write_stats(w: &mut Writer, prefix: &str, d: &DeviationStats, c: &CurvatureStats) -> CliResult<()> {
    w.json(&format!("{prefix}deviation.json"), d)?;
    w.with(&format!("{prefix}deviation_hist.csv"), |buf| d.histogram.write_csv(buf))?;
    w.json(&format!("{prefix}curvature.json"), c)?;
    w.with(&format!("{prefix}curvature_hist.csv"), |buf| c.histogram.write_csv(buf))
}

pub fn analyze(input: AnalyzeInput) -> CliResult<PathBuf> {
    let started = now_unix();
    let (phi, plan, plan_dir) = read_field(&input.field)?;
    let (path_manifest, _) = RunManifest::beside(&input.path)?;
    path_manifest.verify(&input.path)?;
    let tool_path = ToolPath::read_json(&input.path)?;
    if tool_path.field_checksum != phi.checksum() {
        return Err(CliError::new(
            "E_MISMATCH",
            crate::error::EXIT_INPUT,
            "tool path was built from a different field",
        ));
    }
    let mut table = path_manifest.config.to_table();
    input.overrides.apply(&mut table);
    let cfg = RunConfig::from_table(table)?;
    let mesh = mesh_of(&plan, &cfg)?;
    phi.check_mesh(&mesh)?;
    let curvature = curvature_tensor(&mesh);
    let eps_g = cfg.planner.resolve_eps_g(&curvature);

    let dev = deviation_stats(&mesh, &phi, &cfg.planner, &curvature)?;
    let curv = curvature_stats(&mesh, &phi, &curvature, &tool_path, eps_g)?;
    let oracle = oracle_spot_checks(&mesh, &tool_path, cfg.oracle_pairs);

    let root = input.out.unwrap_or_else(|| plan_dir.parent().unwrap_or(Path::new(".")).to_path_buf());
    let key = ("analyze", phi.checksum(), &tool_path.field_checksum, &path_manifest.checksums, &cfg, input.baseline);
    let (dir, name) = output_dir(&root, "analysis", &key)?;
    let mut w = Writer::new(dir);
    write_stats(&mut w, "", &dev, &curv)?;
    w.json("oracle.json", &oracle)?;

    let mut comparison: Option<Comparison> = None;
    if input.baseline {
        let bc = cfg.boundary_condition(&mesh)?;
        let base = laplacian_baseline(&mesh, &bc, &cfg.planner, &curvature)?;
        let schedule = make_schedule(&mesh, &base, &cfg, || curvature_tensor(&mesh))?;
        let (base_path, _) = build(&mesh, &base, &schedule, &cfg.path_settings(), cfg.planner.exec())?;
        let bdev = deviation_stats(&mesh, &base, &cfg.planner, &curvature)?;
        let bcurv = curvature_stats(&mesh, &base, &curvature, &base_path, eps_g)?;
        write_stats(&mut w, "baseline_", &bdev, &bcurv)?;
        let cmp = compare_fields(&[
            ("baseline".to_string(), bdev, bcurv),
            ("planned".to_string(), dev.clone(), curv.clone()),
        ])?;
        w.json("comparison.json", &cmp)?;
        w.bytes("comparison.txt", cmp.table().as_bytes())?;
        comparison = Some(cmp);
    }

    let summary = AnalysisSummary {
        faces: mesh.num_faces(),
        excluded_faces: dev.excluded_faces,
        deviation_mean: dev.summary.mean,
        deviation_median: dev.summary.median,
        deviation_max: dev.summary.max,
        fraction_above_5pct: dev.fraction_above_5pct,
        fraction_above_10pct: dev.fraction_above_10pct,
        curvature_samples: curv.summary.count,
        curvature_mean: curv.summary.mean,
        curvature_max: curv.summary.max,
        oracle_pairs: oracle.len(),
        baseline_fraction_above_10pct: comparison.as_ref().map(|c| c.rows[0].fraction_above_10pct),
    };
    w.json("summary.json", &summary)?;
    let manifest = RunManifest {
        tool: tool(),
        command: "analyze".into(),
        mesh: plan.mesh.clone(),
        mesh_checksum: plan.mesh_checksum.clone(),
        config: cfg.clone(),
        output_dir: name,
        inputs: BTreeMap::from([
            ("field".to_string(), plan.verify(&input.field)?),
            ("path".to_string(), path_manifest.verify(&input.path)?),
        ]),
        checksums: BTreeMap::from([("field".to_string(), phi.checksum())]),
        artifacts: Vec::new(),
        timestamps: timestamps(&cfg, started),
    };
    w.finish(manifest)
}

#[derive(Serialize)]
pub struct MeshInfo {
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    pub boundary_loops: Vec<usize>,
    pub components: usize,
    pub euler_characteristic: i64,
    pub area: f64,
    pub mean_edge_length: f64,
    pub diameter: f64,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub checksum: String,
    pub modes: Vec<PlanMode>,
}

pub fn mesh_info(mesh_path: &Path, weld: f64) -> CliResult<MeshInfo> {
    let mesh = load(mesh_path, weld)?;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.positions() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let loops: Vec<usize> = mesh.boundary_loops().iter().map(Vec::len).collect();
    let modes = if loops.is_empty() {
        Vec::new()
    } else {
        vec![PlanMode::Direction, PlanMode::Contour]
    };
    Ok(MeshInfo {
        vertices: mesh.num_vertices(),
        faces: mesh.num_faces(),
        edges: mesh.num_edges(),
        boundary_loops: loops,
        components: mesh.connected_components().1,
        euler_characteristic: mesh.euler_characteristic(),
        area: mesh.total_area(),
        mean_edge_length: mesh.mean_edge_length(),
        diameter: mesh.diameter(),
        bbox_min: lo,
        bbox_max: hi,
        checksum: mesh.checksum().to_string(),
        modes,
    })
}
