//! Discrete and closed-form calculus on fields: Laplacians, residuals,
//! area integrals and circle functionals.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{DiskGrid, Link, NodeKind, Point, MIN_POINTS};
use crate::quadrature::{circle_trapezoid, disk_integral, QuadSettings};
use crate::weight::WeightSpec;

/// Samples used by circle functionals unless more are needed.
pub const CIRCLE_SAMPLES: usize = 256;

/// How an area integral is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    /// Closed-form quadrature when the field has a closed form, node quadrature otherwise.
    #[default]
    Auto,
    /// Node quadrature with exact cell areas.
    Grid,
    /// Adaptive polar quadrature on the closed form; an error for sampled fields.
    ClosedForm,
}

/// An integral and the error estimate that came with it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    /// Quadrature error estimate (adaptive estimate, or Richardson for grid sums).
    pub tolerance: f64,
    pub mode: QuadMode,
    pub converged: bool,
}

/// Which nodes a norm ranges over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSet {
    /// Nodes whose four neighbours are all grid nodes (standard 5-point stencil).
    #[default]
    Interior,
    /// Interior and boundary-adjacent nodes.
    Domain,
}

impl NodeSet {
    pub fn contains(self, kind: NodeKind) -> bool {
        match self {
            NodeSet::Interior => kind == NodeKind::Interior,
            NodeSet::Domain => kind.in_domain(),
        }
    }
}

fn check_resolution(grid: &DiskGrid) -> Result<()> {
    if grid.n() < MIN_POINTS {
        return Err(Error::Config(format!(
            "grid too coarse: n = {} < {MIN_POINTS}",
            grid.n()
        )));
    }
    Ok(())
}

/// `Δf` at domain nodes: 5-point stencil, Shortley–Weller arms at cut nodes.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    check_resolution(f.grid())?;
    let boundary = f
        .boundary()
        .ok_or_else(|| Error::Data("laplacian needs boundary values".into()))?;
    let values = laplacian_values(f.grid(), f.values(), boundary);
    ScalarField::from_values(f.grid().clone(), values, None)
}

/// Shortley–Weller `Δ` on raw node values; exterior entries are `NaN`.
pub(crate) fn laplacian_values(grid: &DiskGrid, values: &[f64], boundary: &[f64]) -> Vec<f64> {
    let h = grid.spacing();
    let mut out = vec![f64::NAN; grid.len()];
    for &idx in grid.domain() {
        let fp = values[idx];
        let links = grid.links(idx);
        let mut acc = 0.0;
        for axis in 0..2 {
            let (a, fr) = arm(links[2 * axis], h, values, boundary);
            let (b, fl) = arm(links[2 * axis + 1], h, values, boundary);
            acc += 2.0 / (a + b) * ((fr - fp) / a - (fp - fl) / b);
        }
        out[idx] = acc;
    }
    out
}

fn arm(link: Link, h: f64, values: &[f64], boundary: &[f64]) -> (f64, f64) {
    match link {
        Link::Node(k) => (h, values[k]),
        Link::Boundary { crossing, frac } => (frac * h, boundary[crossing]),
    }
}

/// Discrete residual `Δf + W e^f` at domain nodes.
pub fn residual(f: &ScalarField, w: &WeightSpec) -> Result<ScalarField> {
    let lap = laplacian(f)?;
    let grid = f.grid();
    let mut values = lap.values().to_vec();
    for &i in grid.domain() {
        values[i] += density(w.value(grid.point(i)), f.value(i));
    }
    ScalarField::from_values(grid.clone(), values, None)
}

/// `max |f|` over the chosen node set.
pub fn sup_norm(f: &ScalarField, set: NodeSet) -> f64 {
    let grid = f.grid();
    grid.domain()
        .iter()
        .filter(|&&i| set.contains(grid.kind(i)))
        .map(|&i| f.value(i).abs())
        .fold(0.0, f64::max)
}

/// `max |f - g|` over the chosen node set of a shared grid.
pub fn sup_distance(f: &ScalarField, g: &ScalarField, set: NodeSet) -> Result<f64> {
    if !Arc::ptr_eq(f.grid(), g.grid())
        && (f.grid().n() != g.grid().n() || f.grid().radius() != g.grid().radius())
    {
        return Err(Error::Data("fields live on different grids".into()));
    }
    let grid = f.grid();
    Ok(grid
        .domain()
        .iter()
        .filter(|&&i| set.contains(grid.kind(i)))
        .map(|&i| (f.value(i) - g.value(i)).abs())
        .fold(0.0, f64::max))
}

fn check_radius(f: &ScalarField, rho: f64, what: &str) -> Result<()> {
    let r = f.grid().radius();
    if !(rho >= 0.0) || rho > r * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "{what} radius {rho} exceeds grid radius {r}"
        )));
    }
    Ok(())
}

fn hints_for(f: &ScalarField, w: Option<&WeightSpec>) -> Vec<Point> {
    let mut hints = f.closed_form().map(|c| c.hints()).unwrap_or_default();
    if let Some(w) = w {
        hints.extend_from_slice(w.poles().poles());
    }
    hints
}

/// Coarse companion grid (every other node) used for Richardson estimates.
fn coarse_grid(grid: &DiskGrid) -> Result<Arc<DiskGrid>> {
    DiskGrid::build(grid.radius(), grid.n().div_ceil(2)).map(Arc::new)
}

fn node_sum(weights: &[(usize, f64)], g: impl Fn(usize) -> f64) -> f64 {
    weights.iter().map(|&(i, a)| a * g(i)).sum()
}

/// `∫_{B_rho} |∇f|^2`.
pub fn dirichlet_energy(f: &ScalarField, rho: f64) -> Result<f64> {
    dirichlet_energy_with(f, rho, QuadMode::Auto).map(|i| i.value)
}

pub fn dirichlet_energy_with(f: &ScalarField, rho: f64, mode: QuadMode) -> Result<Integral> {
    check_radius(f, rho, "energy")?;
    match (mode, f.closed_form()) {
        (QuadMode::Auto | QuadMode::ClosedForm, Some(c)) => {
            let est = disk_integral(
                |x| {
                    let g = c.gradient(x);
                    g[0] * g[0] + g[1] * g[1]
                },
                rho,
                &hints_for(f, None),
                &QuadSettings::default(),
            );
            Ok(Integral {
                value: est.value,
                tolerance: est.error,
                mode: QuadMode::ClosedForm,
                converged: est.converged,
            })
        }
        (QuadMode::ClosedForm, None) => Err(Error::Inapplicable(
            "closed-form quadrature requested for a sampled field".into(),
        )),
        _ => {
            let grid_energy = |field: &ScalarField| -> Result<f64> {
                let g = field.node_gradients();
                let w = field.grid().disk_weights(rho)?;
                Ok(node_sum(&w, |i| g[i][0] * g[i][0] + g[i][1] * g[i][1]))
            };
            let fine = grid_energy(f)?;
            let coarse = grid_energy(&f.sampled().resample(coarse_grid(f.grid())?)?)?;
            Ok(Integral {
                value: fine,
                tolerance: (fine - coarse).abs() / 3.0,
                mode: QuadMode::Grid,
                converged: true,
            })
        }
    }
}

/// `∫_{B_delta} W e^f`.
pub fn weighted_mass(f: &ScalarField, w: &WeightSpec, delta: f64) -> Result<f64> {
    weighted_mass_with(f, w, delta, QuadMode::Auto).map(|i| i.value)
}

pub fn weighted_mass_with(
    f: &ScalarField,
    w: &WeightSpec,
    delta: f64,
    mode: QuadMode,
) -> Result<Integral> {
    check_radius(f, delta, "mass")?;
    match (mode, f.closed_form()) {
        (QuadMode::Auto | QuadMode::ClosedForm, Some(c)) => {
            let est = disk_integral(
                |x| density(w.value(x), c.value(x)),
                delta,
                &hints_for(f, Some(w)),
                &QuadSettings::default(),
            );
            Ok(Integral {
                value: est.value,
                tolerance: est.error,
                mode: QuadMode::ClosedForm,
                converged: est.converged,
            })
        }
        (QuadMode::ClosedForm, None) => Err(Error::Inapplicable(
            "closed-form quadrature requested for a sampled field".into(),
        )),
        _ => {
            let grid_mass = |field: &ScalarField| -> Result<f64> {
                let grid = field.grid();
                let weights = grid.disk_weights(delta)?;
                Ok(node_sum(&weights, |i| {
                    density(w.value(grid.point(i)), field.value(i))
                }))
            };
            let fine = grid_mass(f)?;
            let coarse = grid_mass(&f.sampled().resample(coarse_grid(f.grid())?)?)?;
            Ok(Integral {
                value: fine,
                tolerance: (fine - coarse).abs() / 3.0,
                mode: QuadMode::Grid,
                converged: true,
            })
        }
    }
}

/// `W e^f`, zero whenever either factor vanishes.
pub(crate) fn density(w: f64, f: f64) -> f64 {
    if w == 0.0 || f == f64::NEG_INFINITY {
        0.0
    } else {
        w * f.exp()
    }
}

/// `rho ∮_{∂B_rho} (|∂_ν f|^2 - |∇f|^2 / 2 + W e^f) dσ`.
pub fn pohozaev_boundary_functional(f: &ScalarField, w: &WeightSpec, rho: f64) -> Result<f64> {
    pohozaev_boundary_functional_with(f, w, rho).map(|i| i.value)
}

/// [`pohozaev_boundary_functional`] with an error estimate: the last
/// refinement step for closed forms, a coarse-grid Richardson estimate for
/// sampled fields.
pub fn pohozaev_boundary_functional_with(
    f: &ScalarField,
    w: &WeightSpec,
    rho: f64,
) -> Result<Integral> {
    let integrand = |g: Point, v: f64, x: Point| {
        let dn = (g[0] * x[0] + g[1] * x[1]) / rho;
        dn * dn - 0.5 * (g[0] * g[0] + g[1] * g[1]) + density(w.value(x), v)
    };
    if let Some(c) = f.closed_form() {
        check_radius(f, rho, "circle")?;
        let (value, err) = refined_circle(|x| integrand(c.gradient(x), c.value(x), x), rho);
        return Ok(Integral {
            value: rho * value,
            tolerance: rho * err,
            mode: QuadMode::ClosedForm,
            converged: true,
        });
    }
    check_sampled_circle(f, rho)?;
    let sampled = |field: &ScalarField, samples: usize| -> f64 {
        let grads = field.node_gradients();
        let grid = field.grid().clone();
        let gx = component(&grads, 0);
        let gy = component(&grads, 1);
        let value = circle_trapezoid(
            |x| {
                let g = [
                    crate::field::interpolate(&grid, &gx, None, x),
                    crate::field::interpolate(&grid, &gy, None, x),
                ];
                integrand(g, field.eval(x), x)
            },
            rho,
            samples,
        );
        rho * value
    };
    let fine = sampled(f, CIRCLE_SAMPLES);
    let coarse = coarse_grid(f.grid())?;
    let tolerance = if check_sampled_circle(&ScalarField::empty(coarse.clone()), rho).is_ok() {
        (fine - sampled(&f.resample(coarse)?, CIRCLE_SAMPLES)).abs() / 3.0
    } else {
        (fine - sampled(f, 2 * CIRCLE_SAMPLES)).abs()
    };
    Ok(Integral {
        value: fine,
        tolerance,
        mode: QuadMode::Grid,
        converged: true,
    })
}

fn component(g: &[Point], axis: usize) -> Vec<f64> {
    g.iter().map(|v| v[axis]).collect()
}

fn check_sampled_circle(f: &ScalarField, rho: f64) -> Result<()> {
    let limit = f.grid().radius() - 1.5 * f.grid().spacing();
    if !(rho > 0.0) || rho > limit {
        return Err(Error::Domain(format!(
            "circle of radius {rho} leaves the interpolation region (limit {limit})"
        )));
    }
    Ok(())
}

/// `∮ g dσ` by the trapezoid rule, doubling the sample count from 256 until
/// successive values agree to 1e-13 relative (at most 2^16 samples).
/// Returns the value and the size of the last refinement step.
pub(crate) fn refined_circle(g: impl Fn(Point) -> f64, rho: f64) -> (f64, f64) {
    let mut m = CIRCLE_SAMPLES;
    let mut prev = circle_trapezoid(&g, rho, m);
    let mut step = f64::NAN;
    while m < 1 << 16 {
        m *= 2;
        let next = circle_trapezoid(&g, rho, m);
        step = (next - prev).abs();
        if step <= 1e-13 * next.abs().max(1e-300) {
            return (next, step.max(f64::EPSILON * next.abs()));
        }
        prev = next;
    }
    (prev, step)
}

/// Field values at `samples` equally spaced points of `∂B_rho`, starting at angle 0.
pub fn circle_values(f: &ScalarField, rho: f64, samples: usize) -> Result<Vec<f64>> {
    if f.is_exact() {
        check_radius(f, rho, "circle")?;
    } else if rho < f.grid().radius() * (1.0 - 1e-12) {
        check_sampled_circle(f, rho.min(f.grid().radius() - 1.5 * f.grid().spacing()))?;
    }
    Ok((0..samples)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / samples as f64;
            f.eval([rho * t.cos(), rho * t.sin()])
        })
        .collect())
}

/// `min_{∂B_r} f` on the grid circle: crossing values for sampled fields,
/// a dense circle scan for closed forms.
pub fn boundary_min(f: &ScalarField) -> Result<f64> {
    if let Some(c) = f.closed_form() {
        let r = f.grid().radius();
        let m = 4096;
        return Ok((0..m)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / m as f64;
                c.value([r * t.cos(), r * t.sin()])
            })
            .fold(f64::INFINITY, f64::min));
    }
    let b = f
        .boundary()
        .ok_or_else(|| Error::Data("field has no boundary values".into()))?;
    Ok(b.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Analytic;

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let f =
            ScalarField::from_fn(g.clone(), |x| x[0] * x[0] + x[1] * x[1] + 3.0 * x[0]).unwrap();
        let lap = laplacian(&f).unwrap();
        for &i in g.domain() {
            assert!((lap.value(i) - 4.0).abs() < 1e-8, "{}", lap.value(i));
        }
    }

    #[test]
    fn laplacian_rejects_coarse_grid() {
        let g = Arc::new(DiskGrid::build(1.0, 17).unwrap());
        let f = ScalarField::from_fn(g, |_| 1.0).unwrap();
        assert!(matches!(laplacian(&f), Err(Error::Config(_))));
    }

    #[test]
    fn energy_of_linear_field() {
        let g = DiskGrid::shared(1.0, 65).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
        let e = dirichlet_energy(&f, 1.0).unwrap();
        assert!((e - PI).abs() < 1e-10);
        let cf = ScalarField::from_closed_form(
            g,
            Arc::new(Analytic::new("x", |x| x[0], |_| [1.0, 0.0])),
        )
        .unwrap();
        assert!((dirichlet_energy(&cf, 0.5).unwrap() - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_pohozaev_functional() {
        let g = DiskGrid::shared(1.0, 65).unwrap();
        let w = WeightSpec::constant(2.0).unwrap();
        let f = ScalarField::constant(g.clone(), 0.5).unwrap();
        let v = pohozaev_boundary_functional(&f, &w, 0.7).unwrap();
        let e = 2.0 * PI * 0.49 * 2.0 * 0.5f64.exp();
        assert!((v - e).abs() < 1e-12 * e);
        let s = f.sampled();
        let vs = pohozaev_boundary_functional(&s, &w, 0.7).unwrap();
        assert!((vs - e).abs() < 1e-10 * e);
        assert!(pohozaev_boundary_functional(&s, &w, 0.999).is_err());
    }

    #[test]
    fn empty_field_has_zero_mass() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let w = WeightSpec::constant(1.0).unwrap();
        let f = ScalarField::empty(g);
        assert_eq!(weighted_mass(&f, &w, 1.0).unwrap(), 0.0);
        assert_eq!(
            weighted_mass_with(&f.sampled(), &w, 0.5, QuadMode::Grid)
                .unwrap()
                .value,
            0.0
        );
    }
}
