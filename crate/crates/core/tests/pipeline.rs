mod common;

use cphm::geometry::TriangleMesh;
use cphm::linalg::SolverMethod;
use cphm::{cphm_run, CphmConfig, CphmError, Point3, Surface};

use common::*;

#[test]
fn krylov_matches_direct() {
    let surface = Surface::unit_sphere();
    let mut cfg = CphmConfig::new(0.1);
    cfg.solver.method = SolverMethod::SparseDirect;
    let direct = cphm_run(&surface, &[single_source()], &cfg).unwrap();
    cfg.solver.method = SolverMethod::IterativeKrylov;
    let krylov = cphm_run(&surface, &[single_source()], &cfg).unwrap();
    let d = max_diff(&direct.field.phi, &krylov.field.phi);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn sphere_error_falls_with_dx() {
    let surface = Surface::unit_sphere();
    let e: Vec<f64> = [0.2, 0.1]
        .iter()
        .map(|&dx| cphm_run(&surface, &[single_source()], &CphmConfig::new(dx)).unwrap().report.rel_error.unwrap())
        .collect();
    assert!(e[1] < 0.7 * e[0], "{e:?}");
}

#[test]
fn two_sources_leave_a_kink() {
    let (a, b) = (spherical(0.0, 0.0), spherical(1.0, 2.0));
    let run = cphm_run(&Surface::unit_sphere(), &[a, b], &CphmConfig::new(0.1)).unwrap();
    let (l, r) = arc_slopes(&run.field.band, &run.field.phi, 3, &a, &b, 0.5, 0.3);
    assert!(l > 0.7 && r < -0.7, "slopes {l} {r}");
}

#[test]
fn torus_and_mesh_runs_complete() {
    let torus = Surface::torus(Point3::zeros(), 1.0, 0.4).unwrap();
    let run = cphm_run(&torus, &[Point3::new(1.4, 0.0, 0.0)], &CphmConfig::new(0.1)).unwrap();
    assert!(run.report.rel_error.is_none());
    let far = run.field.surface_samples.as_ref().unwrap().iter().map(|s| s.1).fold(0.0, f64::max);
    assert!(far > 3.0 && far < 5.0, "{far}");

    let mesh = Surface::mesh(TriangleMesh::icosphere(Point3::zeros(), 1.0, 3).unwrap());
    let run = cphm_run(&mesh, &[Point3::z()], &CphmConfig::new(0.15)).unwrap();
    assert!(run.field.phi.iter().all(|v| v.is_finite()));
}

#[test]
fn overlapping_sources_are_rejected() {
    let err = cphm_run(
        &Surface::unit_sphere(),
        &[Point3::z(), spherical(0.0, 0.1)],
        &CphmConfig::new(0.1),
    )
    .unwrap_err();
    assert!(err.to_string().contains("overlap"), "{err}");
    assert!(matches!(err, CphmError::Stage { .. }));
}
