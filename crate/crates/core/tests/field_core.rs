use std::f64::consts::PI;
use std::sync::Arc;

use liouville_core::calculus::{
    dirichlet_energy, laplacian, sup_norm, weighted_mass, weighted_mass_with, NodeSet, QuadMode,
};
use liouville_core::poly::Polynomial;
use liouville_core::quadrature::{disk_integral, QuadSettings};
use liouville_core::{DiskGrid, Error, NodeKind, RadialBubble, ScalarField, WeightSpec};
use num_complex::Complex64;

/// `∫_{B_r} |x|^{2α} e^u` for the radial bubble, by the substitution `s = λ² r^{2(1+α)}`.
fn bubble_mass(alpha: u32, lambda: f64, r: f64) -> f64 {
    let a = 1.0 + alpha as f64;
    let s = lambda * lambda * r.powf(2.0 * a);
    8.0 * PI * a * s / (1.0 + s)
}

#[test]
fn disk_weights_sum_to_the_area() {
    let grid = DiskGrid::new(1.0, 65).unwrap();
    for rho in [0.013, 0.37, 0.8, 1.0] {
        let total: f64 = grid.disk_weights(rho).unwrap().iter().map(|w| w.1).sum();
        assert!((total - PI * rho * rho).abs() < 1e-12, "rho {rho}: {total}");
    }
    assert!(matches!(grid.disk_weights(1.5), Err(Error::Domain(_))));
}

#[test]
fn node_kinds_cover_the_disk() {
    let grid = DiskGrid::new(1.0, 33).unwrap();
    for &i in grid.domain() {
        let x = grid.point(i);
        assert!(x[0].hypot(x[1]) < 1.0);
        assert!(grid.kind(i).in_domain());
    }
    assert_eq!(grid.kind(grid.origin()), NodeKind::Interior);
    assert_eq!(grid.point(grid.origin()), [0.0, 0.0]);
}

#[test]
fn too_coarse_grid_is_rejected() {
    assert!(matches!(DiskGrid::new(1.0, 17), Err(Error::Config(_))));
}

#[test]
fn laplacian_of_paraboloid() {
    let grid = DiskGrid::shared(1.0, 65).unwrap();
    let f = ScalarField::from_fn(grid, |x| 3.0 * (x[0] * x[0] + x[1] * x[1]) - x[0]).unwrap();
    let lap = laplacian(&f).unwrap();
    let err = lap.map(|_, v| v - 12.0).unwrap();
    assert!(sup_norm(&err, NodeSet::Domain) < 1e-8);
}

#[test]
fn bubble_mass_matches_closed_form() {
    let grid = DiskGrid::shared(1.0, 65).unwrap();
    for (alpha, lambda) in [(0, 30.0), (1, 200.0), (2, 5e3)] {
        let b = RadialBubble::new(alpha, lambda).unwrap();
        let f = ScalarField::from_closed_form(grid.clone(), Arc::new(b)).unwrap();
        for r in [0.05, 0.3, 1.0] {
            let m = weighted_mass(&f, &b.weight(), r).unwrap();
            let exact = bubble_mass(alpha, lambda, r);
            assert!(
                (m - exact).abs() < 1e-8 * exact,
                "alpha {alpha}, r {r}: {m} vs {exact}"
            );
        }
    }
}

#[test]
fn grid_mass_converges_to_closed_form() {
    let b = RadialBubble::new(0, 3.0).unwrap();
    let exact = bubble_mass(0, 3.0, 0.7);
    let err = |n: usize| {
        let grid = DiskGrid::shared(1.0, n).unwrap();
        let f = ScalarField::from_closed_form(grid, Arc::new(b))
            .unwrap()
            .sampled();
        let i = weighted_mass_with(&f, &b.weight(), 0.7, QuadMode::Grid).unwrap();
        assert_eq!(i.mode, QuadMode::Grid);
        (i.value - exact).abs()
    };
    let (e1, e2) = (err(65), err(129));
    assert!(e2 < 0.3 * e1 && e2 < 1e-3, "{e1} {e2}");
}

#[test]
fn energy_of_linear_field() {
    let grid = DiskGrid::shared(1.0, 65).unwrap();
    let f = ScalarField::from_fn(grid, |x| 2.0 * x[0] - x[1]).unwrap();
    let e = dirichlet_energy(&f, 0.6).unwrap();
    assert!((e - 5.0 * PI * 0.36).abs() < 1e-3, "{e}");
}

#[test]
fn polar_quadrature_of_gaussian() {
    let est = disk_integral(
        |x| (-(x[0] * x[0] + x[1] * x[1]) / 0.01).exp(),
        1.0,
        &[[0.0, 0.0]],
        &QuadSettings::default(),
    );
    let exact = PI * 0.01 * (1.0 - (-100.0f64).exp());
    assert!(est.converged && (est.value - exact).abs() < 1e-12);
}

#[test]
fn polynomial_roots_and_calculus() {
    let roots = [
        (Complex64::new(0.2, -0.1), 2),
        (Complex64::new(-0.5, 0.3), 1),
    ];
    let p = Polynomial::from_roots(&roots);
    assert_eq!(p.degree(), 3);
    for (r, _) in roots {
        assert!(p.eval(r).norm() < 1e-14);
    }
    let back = p.primitive().derivative();
    for (a, b) in back.coeffs().iter().zip(p.coeffs()) {
        assert!((a - b).norm() < 1e-14);
    }
    let mut found = p.roots();
    found.sort_by(|a, b| a.re.total_cmp(&b.re));
    assert!((found[0] - roots[1].0).norm() < 1e-10);
    assert!((found[2] - roots[0].0).norm() < 1e-6);
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("k001");
    let grid = DiskGrid::shared(1.0, 33).unwrap();
    let b = RadialBubble::new(1, 4.0).unwrap();
    let f = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
    f.write(&stem).unwrap();
    let back = ScalarField::read(&stem).unwrap();
    assert!(!back.is_exact());
    for &i in f.grid().domain() {
        assert_eq!(back.value(i), f.value(i));
    }
    assert_eq!(
        back.boundary().map(|b| b.len()),
        f.boundary().map(|b| b.len())
    );
}

#[test]
fn constant_weight_rejects_nonpositive_values() {
    assert!(WeightSpec::constant(0.0).is_err());
    assert!(WeightSpec::constant(-1.0).is_err());
}
