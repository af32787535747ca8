use approx::assert_relative_eq;
use isolevel::analysis::{deviation_bins, Histogram};
use isolevel::diffops::{curvature_tensor, divergence, gradient, FaceVectorField};
use isolevel::energy::{EnergyModel, PlannerConfig, ScalarField};
use isolevel::isocurve::{extract, verify_topology};
use isolevel::optimizer::PlanMode;
use isolevel::path::{chord_error, schedule_iso_scallop, simplify};
use isolevel::{synth, ExecPolicy, TriMesh, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unit-square grid with interior vertices moved by up to `jitter` cells.
/// Above about 0.25 a triangle can fold over.
fn jittered(n: usize, jitter: f64, seed: u64) -> TriMesh {
    let m = synth::grid(0.0, 1.0, 0.0, 1.0, n, n);
    let h = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = m
        .positions()
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if m.is_boundary_vertex(v) {
                *p
            } else {
                p + Vec3::new(rng.random_range(-jitter..jitter) * h, rng.random_range(-jitter..jitter) * h, 0.0)
            }
        })
        .collect();
    TriMesh::new(positions, m.faces().to_vec()).unwrap()
}

/// Smooth random field: a few random plane waves.
fn waves(m: &TriMesh, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(0.0..6.3),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    m.positions()
        .iter()
        .map(|p| p.x + k.iter().map(|(a, b, c, w)| 0.1 * w * (a * p.x + b * p.y + c).sin()).sum::<f64>())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_is_exact_for_linear_fields(
        seed in 0u64..1000,
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
        c in -5.0f64..5.0,
    ) {
        let m = jittered(8, 0.2, seed);
        let phi: Vec<f64> = m.positions().iter().map(|p| a * p.x + b * p.y + c).collect();
        for g in gradient(&m, &phi).unwrap().0 {
            prop_assert!((g - Vec3::new(a, b, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn constant_fields_have_no_interior_divergence(seed in 0u64..1000, ax in -3.0f64..3.0, ay in -3.0f64..3.0) {
        let m = jittered(8, 0.2, seed);
        let x = FaceVectorField(vec![Vec3::new(ax, ay, 0.0); m.num_faces()]);
        let d = divergence(&m, &x);
        for v in (0..m.num_vertices()).filter(|&v| !m.is_boundary_vertex(v)) {
            prop_assert!(d[v].abs() < 1e-9, "{}", d[v]);
        }
    }

    #[test]
    fn extracted_curves_are_simple_and_end_on_the_boundary(seed in 0u64..1000, t in 0.05f64..0.95) {
        let m = jittered(12, 0.2, seed);
        let phi = ScalarField::new(&m, waves(&m, seed)).unwrap();
        let level = phi.min() + t * phi.range();
        let curves = extract(&m, &phi, level).unwrap();
        let report = verify_topology(&curves, &m);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
        for c in &curves {
            for p in &c.points {
                prop_assert!((p.interpolate(phi.values()) - level).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn simplification_respects_the_tolerance(seed in 0u64..1000, tol in 1e-4f64..0.05) {
        let m = jittered(16, 0.2, seed);
        let phi = ScalarField::new(&m, waves(&m, seed)).unwrap();
        for c in extract(&m, &phi, phi.min() + 0.5 * phi.range()).unwrap() {
            let s = simplify(&c, tol);
            prop_assert!(s.points.len() <= c.points.len());
            prop_assert!(chord_error(&c, &s).unwrap() <= tol * (1.0 + 1e-12));
            prop_assert!(s.points[0].same_site(&c.points[0]));
            if !c.closed {
                prop_assert!(s.points.last().unwrap().same_site(c.points.last().unwrap()));
            }
        }
    }

    #[test]
    fn schedules_are_increasing_and_in_range(seed in 0u64..1000, h in 0.001f64..0.5, contour in any::<bool>()) {
        let m = jittered(6, 0.2, seed);
        let phi = ScalarField::new(&m, waves(&m, seed)).unwrap();
        let mode = if contour { PlanMode::Contour } else { PlanMode::Direction };
        let s = schedule_iso_scallop(&phi, h, mode).unwrap();
        prop_assert!(!s.levels.is_empty());
        prop_assert!(s.levels.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(s.levels.iter().all(|&l| l > phi.min() && l < phi.max()));
        for d in s.increments() {
            prop_assert!(d <= h.sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn energy_is_nonnegative_and_shift_invariant(seed in 0u64..1000, shift in -10.0f64..10.0, lambda in 0.0f64..5.0) {
        let m = synth::height_field(0.0, 4.0, 0.0, 4.0, 6, 6, |x, y| 0.3 * (x * y).sin());
        let curv = curvature_tensor(&m);
        let cfg = PlannerConfig::new(0.25).with_lambda(lambda);
        let model = EnergyModel::new(&m, &curv, &cfg).unwrap();
        let phi = waves(&m, seed);
        let shifted: Vec<f64> = phi.iter().map(|v| v + shift).collect();
        let a = model.evaluate(&phi).unwrap();
        let b = model.evaluate(&shifted).unwrap();
        prop_assert!(a.e_w >= 0.0 && a.e_kappa >= 0.0);
        prop_assert!((a.e_total - b.e_total).abs() <= 1e-9 * a.e_total.max(1e-12));
    }

    #[test]
    fn histogram_counts_every_sample(samples in prop::collection::vec(0.0f64..1.0, 0..200)) {
        let h = Histogram::new(deviation_bins(), &samples);
        prop_assert_eq!(h.total(), samples.len());
    }
}

#[test]
fn policies_agree_on_energy_and_gradient() {
    let m = synth::wavy(20);
    let curv = curvature_tensor(&m);
    let cfg = PlannerConfig::new(0.25).with_lambda(1.0);
    let phi: Vec<f64> = m.positions().iter().map(|p| 0.2 * p.x + 0.01 * p.y * p.y).collect();
    let seq = EnergyModel::new(&m, &curv, &cfg).unwrap().with_exec(ExecPolicy::Sequential);
    let par = EnergyModel::new(&m, &curv, &cfg).unwrap().with_exec(ExecPolicy::Parallel);
    let (ea, ga) = seq.evaluate_with_gradient(&phi).unwrap();
    let (eb, gb) = par.evaluate_with_gradient(&phi).unwrap();
    assert_eq!(ea.e_total.to_bits(), eb.e_total.to_bits());
    for (a, b) in ga.iter().zip(&gb) {
        assert_relative_eq!(*a, *b, max_relative = 0.0, epsilon = 0.0);
    }
}

