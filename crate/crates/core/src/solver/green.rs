//! Newtonian potential `N = (1/2π) ∫_{B_r} ln(1/|x-y|) W e^ξ dy` and the harmonic remainder.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::calculus::{boundary_min, density, laplacian, sup_norm, NodeSet};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{DiskGrid, NodeKind, Point};
use crate::quadrature::{disk_integral, Estimate, QuadSettings};
use crate::weight::WeightSpec;

use super::lattice::{PotentialKernel, KAPPA};

/// `(node, mass)` pairs: `W e^f` times the node's cell area inside the disk.
pub fn node_masses(f: &ScalarField, w: &WeightSpec) -> Result<Vec<(usize, f64)>> {
    let grid = f.grid();
    let weights = grid.disk_weights(grid.radius())?;
    Ok(weights
        .into_iter()
        .map(|(i, a)| (i, a * density(w.value(grid.point(i)), f.value(i))))
        .collect())
}

/// `(1/2π) ln(1/d)`, with the self term replaced by the mean of the kernel
/// over a disk of one cell's area.
fn kernel(d: f64, h: f64) -> f64 {
    if d == 0.0 {
        let rho = h / PI.sqrt();
        ((1.0 / rho).ln() + 0.5) / (2.0 * PI)
    } else {
        (1.0 / d).ln() / (2.0 * PI)
    }
}

/// Lattice Green function of `-Δ_h` at offset `(di, dj)`, normalized to
/// agree with `(1/2π) ln(1/d)` at large distance.
fn lattice_kernel(a: &PotentialKernel, di: i64, dj: i64, h: f64) -> f64 {
    (1.0 / h).ln() / (2.0 * PI) + 0.25 * (KAPPA - a.get(di, dj))
}

/// Potential of node masses at a grid node using the lattice kernel.
pub fn potential_at_node(grid: &DiskGrid, masses: &[(usize, f64)], node: usize) -> f64 {
    let a = PotentialKernel::shared(grid.n());
    let h = grid.spacing();
    let (i0, j0) = grid.ij(node);
    masses
        .iter()
        .map(|&(idx, m)| {
            let (i, j) = grid.ij(idx);
            m * lattice_kernel(&a, i as i64 - i0 as i64, j as i64 - j0 as i64, h)
        })
        .sum()
}

/// Potential of node masses at an arbitrary point, by direct summation
/// with the continuum kernel.
pub fn potential_direct(grid: &DiskGrid, masses: &[(usize, f64)], x: Point) -> f64 {
    let h = grid.spacing();
    masses
        .iter()
        .map(|&(i, m)| {
            let p = grid.point(i);
            m * kernel((p[0] - x[0]).hypot(p[1] - x[1]), h)
        })
        .sum()
}

/// `N(x)` by adaptive polar quadrature on the closed form, graded toward `x`,
/// the weight zeros and the closed-form hints.
pub fn potential_quadrature(f: &ScalarField, w: &WeightSpec, x: Point) -> Result<Estimate> {
    let c = f.closed_form().ok_or_else(|| {
        Error::Inapplicable("potential quadrature needs a closed-form field".into())
    })?;
    let mut hints = c.hints();
    hints.extend_from_slice(w.poles().poles());
    hints.push(x);
    Ok(disk_integral(
        |y| {
            let d = (y[0] - x[0]).hypot(y[1] - x[1]);
            if d == 0.0 {
                return 0.0;
            }
            (1.0 / d).ln() / (2.0 * PI) * density(w.value(y), c.value(y))
        },
        f.grid().radius(),
        &hints,
        &QuadSettings::default(),
    ))
}

fn fft2(data: &mut [Complex64], l: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(l)
    } else {
        planner.plan_fft_forward(l)
    };
    fft.process(data);
    transpose(data, l);
    fft.process(data);
    transpose(data, l);
}

fn transpose(data: &mut [Complex64], l: usize) {
    for i in 0..l {
        for j in (i + 1)..l {
            data.swap(i * l + j, j * l + i);
        }
    }
}

/// Potential of node masses at every grid node (`NaN` outside the domain):
/// FFT convolution with the lattice Green function, so that
/// `Δ_h N = -m_i / h^2` holds at every node whose stencil stays on the grid.
pub fn potential_on_nodes(grid: &DiskGrid, masses: &[(usize, f64)]) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    let table = PotentialKernel::shared(n);
    let l = (2 * n - 1).next_power_of_two();
    let mut rho = vec![Complex64::new(0.0, 0.0); l * l];
    for &(idx, m) in masses {
        let (i, j) = grid.ij(idx);
        rho[j * l + i] = Complex64::new(m, 0.0);
    }
    let mut ker = vec![Complex64::new(0.0, 0.0); l * l];
    for b in 0..l {
        let dj = if b < n { b as i64 } else { b as i64 - l as i64 };
        if b >= n && b <= l - n {
            continue;
        }
        for a in 0..l {
            if a >= n && a <= l - n {
                continue;
            }
            let di = if a < n { a as i64 } else { a as i64 - l as i64 };
            ker[b * l + a] = Complex64::new(lattice_kernel(&table, di, dj, h), 0.0);
        }
    }
    fft2(&mut rho, l, false);
    fft2(&mut ker, l, false);
    for (r, k) in rho.iter_mut().zip(&ker) {
        *r *= k;
    }
    fft2(&mut rho, l, true);
    let scale = 1.0 / (l * l) as f64;
    let mut out = vec![f64::NAN; grid.len()];
    for &idx in grid.domain() {
        let (i, j) = grid.ij(idx);
        out[idx] = rho[j * l + i].re * scale;
    }
    out
}

/// `f = min_{∂B_r} f + N + ψ`.
#[derive(Clone, Debug)]
pub struct GreenDecomposition {
    pub potential: ScalarField,
    pub remainder: ScalarField,
    pub boundary_min: f64,
    /// Richardson estimate of the quadrature error in `Δ N` (interior nodes).
    pub quadrature_tolerance: f64,
    /// `max |Δψ|` over interior nodes.
    pub harmonic_defect: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSummary {
    pub boundary_min: f64,
    pub quadrature_tolerance: f64,
    pub harmonic_defect: f64,
}

impl GreenDecomposition {
    pub fn summary(&self) -> GreenSummary {
        GreenSummary {
            boundary_min: self.boundary_min,
            quadrature_tolerance: self.quadrature_tolerance,
            harmonic_defect: self.harmonic_defect,
        }
    }
}

pub fn green_decompose(f: &ScalarField, w: &WeightSpec) -> Result<GreenDecomposition> {
    let grid = f.grid().clone();
    let masses = node_masses(f, w)?;
    let nodes = potential_on_nodes(&grid, &masses);
    let crossings: Vec<f64> = grid
        .crossings()
        .iter()
        .map(|c| potential_direct(&grid, &masses, c.point))
        .collect();
    let potential = ScalarField::from_values(grid.clone(), nodes, Some(crossings))?;
    let fmin = boundary_min(f)?;
    let boundary = f.boundary().map(|b| {
        b.iter()
            .zip(potential.boundary().unwrap_or_default())
            .map(|(v, n)| v - fmin - n)
            .collect::<Vec<_>>()
    });
    let mut values = f.values().to_vec();
    for &i in grid.domain() {
        values[i] -= fmin + potential.value(i);
    }
    let remainder = ScalarField::from_values(grid.clone(), values, boundary)?;
    let harmonic_defect = sup_norm(&laplacian(&remainder)?, NodeSet::Interior);
    let quadrature_tolerance = richardson_tolerance(f, w, &potential)?;
    Ok(GreenDecomposition {
        potential,
        remainder,
        boundary_min: fmin,
        quadrature_tolerance,
        harmonic_defect,
    })
}

/// `max |Δ_{2h}(N_h - N_{2h})| / 3` over interior nodes of the coarse companion grid.
fn richardson_tolerance(f: &ScalarField, w: &WeightSpec, fine: &ScalarField) -> Result<f64> {
    let grid = f.grid();
    let coarse = Arc::new(DiskGrid::build(grid.radius(), grid.n().div_ceil(2))?);
    let fc = f.sampled().resample(coarse.clone())?;
    let nc = potential_on_nodes(&coarse, &node_masses(&fc, w)?);
    let mut diff = vec![f64::NAN; coarse.len()];
    for &idx in coarse.domain() {
        let (i, j) = coarse.ij(idx);
        diff[idx] = fine.value(grid.index(2 * i, 2 * j)) - nc[idx];
    }
    let hc = coarse.spacing();
    let mut worst: f64 = 0.0;
    for &idx in coarse.domain() {
        if coarse.kind(idx) != NodeKind::Interior {
            continue;
        }
        let (i, j) = coarse.ij(idx);
        let lap = (diff[coarse.index(i + 1, j)]
            + diff[coarse.index(i - 1, j)]
            + diff[coarse.index(i, j + 1)]
            + diff[coarse.index(i, j - 1)]
            - 4.0 * diff[idx])
            / (hc * hc);
        worst = worst.max(lap.abs());
    }
    Ok(worst / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_summation() {
        let grid = DiskGrid::shared(1.0, 33).unwrap();
        let f =
            ScalarField::from_fn(grid.clone(), |x| -(x[0] - 0.2).powi(2) - x[1] * x[1]).unwrap();
        let w = WeightSpec::constant(1.0).unwrap();
        let masses = node_masses(&f, &w).unwrap();
        let fast = potential_on_nodes(&grid, &masses);
        for &idx in grid.domain().iter().step_by(37) {
            let direct = potential_at_node(&grid, &masses, idx);
            assert!(
                (fast[idx] - direct).abs() < 1e-12,
                "{} vs {direct}",
                fast[idx]
            );
        }
    }

    #[test]
    fn lattice_kernel_approaches_continuum() {
        let a = PotentialKernel::shared(64);
        let h = 0.01;
        let d = h * (40.0f64 * 40.0 + 25.0 * 25.0).sqrt();
        assert!((lattice_kernel(&a, 40, 25, h) - kernel(d, h)).abs() < 1e-4);
    }

    #[test]
    fn boundary_potential_quadrature_obeys_newtons_theorem() {
        // For a radial density on B_r the potential on the circle is (M / 2π) ln(1/r).
        let r = 0.8;
        let grid = DiskGrid::shared(r, 65).unwrap();
        let b = crate::families::RadialBubble::new(0, 4.0).unwrap();
        let f = ScalarField::from_closed_form(grid, std::sync::Arc::new(b)).unwrap();
        let w = b.weight();
        let a = 16.0 * r * r;
        let mass = 8.0 * PI * a / (1.0 + a);
        let expected = mass / (2.0 * PI) * (1.0 / r).ln();
        for k in 0..16 {
            let t = 2.0 * PI * (k as f64 + 0.3) / 16.0;
            let est = potential_quadrature(&f, &w, [r * t.cos(), r * t.sin()]).unwrap();
            assert!(
                (est.value - expected).abs() < 1e-6,
                "{} vs {expected}",
                est.value
            );
        }
    }

    #[test]
    fn decomposition_boundary_potential_converges_to_quadrature() {
        let b = crate::families::RadialBubble::new(0, 2.0).unwrap();
        let w = b.weight();
        let errors: Vec<f64> = [65, 129]
            .iter()
            .map(|&n| {
                let grid = DiskGrid::shared(1.0, n).unwrap();
                let f =
                    ScalarField::from_closed_form(grid.clone(), std::sync::Arc::new(b)).unwrap();
                let g = green_decompose(&f, &w).unwrap();
                let nb = g.potential.boundary().unwrap();
                grid.crossings()
                    .iter()
                    .zip(nb)
                    .step_by(29)
                    .map(|(c, v)| (v - potential_quadrature(&f, &w, c.point).unwrap().value).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        // Cell sums of a log kernel next to the circle converge at first order.
        assert!(
            errors[0] < 1e-3 && errors[1] < errors[0] / 1.8,
            "{errors:?}"
        );
    }

    #[test]
    fn remainder_is_discretely_harmonic_for_exact_bubble() {
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let b = crate::families::RadialBubble::new(0, 3.0).unwrap();
        let f = ScalarField::from_closed_form(grid, std::sync::Arc::new(b)).unwrap();
        let res = sup_norm(
            &crate::calculus::residual(&f, &b.weight()).unwrap(),
            NodeSet::Interior,
        );
        let g = green_decompose(&f, &b.weight()).unwrap();
        assert!(
            (g.harmonic_defect - res).abs() < 1e-8 * (1.0 + res),
            "{} vs {res}",
            g.harmonic_defect
        );
    }
}
