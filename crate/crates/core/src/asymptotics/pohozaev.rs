//! Pohozaev relation on annuli and the far-field gradient fit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calculus::{pohozaev_boundary_functional_with, weighted_mass_with, Integral, QuadMode};
use crate::error::{Error, Result};
use crate::field::{gradient_from_nodes, ScalarField};
use crate::grid::{AnnulusSpec, DiskGrid, Point};
use crate::quadrature::{polar_integral, QuadSettings};
use crate::weight::WeightSpec;

/// Both sides of the annulus identity
/// `P(r_out) - P(r_in) = ∫_{r_in<|x|<r_out} (2 + x·∇W/W) W e^ξ`
/// together with the mass-level relation `m² - μ² = 4(1+α)(m - μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevCheck {
    pub r_in: f64,
    pub r_out: f64,
    pub alpha: f64,
    /// `mass(B_{r_out}) / 2π`.
    pub m_hat: f64,
    /// `mass(B_{r_in}) / 2π`.
    pub mu_hat: f64,
    /// `P(r_out) - P(r_in)`.
    pub lhs: f64,
    /// Annulus area term.
    pub rhs: f64,
    pub residual: f64,
    /// Sum of the quadrature error estimates of the three terms.
    pub tolerance: f64,
    /// `m̂² - μ̂² - 4(1+α)(m̂ - μ̂)`.
    pub algebraic_defect: f64,
    pub mode: QuadMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// `m² - μ² - 4(1+α)(m - μ)`.
pub fn algebraic_defect(m: f64, mu: f64, alpha: f64) -> f64 {
    (m - mu) * (m + mu - 4.0 * (1.0 + alpha))
}

/// Moves `rho` by `h/2` if a pole sits on the circle.
fn avoid_poles(rho: f64, grid: &DiskGrid, w: &WeightSpec, notes: &mut Vec<String>) -> f64 {
    let h = grid.spacing();
    let hit = w
        .poles()
        .poles()
        .iter()
        .any(|p| (p[0].hypot(p[1]) - rho).abs() <= 1e-9 * rho.max(h));
    if !hit {
        return rho;
    }
    let moved = if rho + 0.5 * h <= grid.radius() {
        rho + 0.5 * h
    } else {
        rho - 0.5 * h
    };
    notes.push(format!("pole on circle of radius {rho}; moved to {moved}"));
    moved
}

/// `(2 W + x·∇W) e^ξ`, zero at the poles.
fn area_density(w: &WeightSpec, x: Point, xi: f64) -> f64 {
    let wv = w.value(x);
    if wv == 0.0 || xi == f64::NEG_INFINITY {
        return 0.0;
    }
    (2.0 + w.radial_log_derivative(x)) * wv * xi.exp()
}

fn area_term(
    f: &ScalarField,
    w: &WeightSpec,
    annulus: AnnulusSpec,
    mode: QuadMode,
) -> Result<Integral> {
    match (mode, f.closed_form()) {
        (QuadMode::Auto | QuadMode::ClosedForm, Some(c)) => {
            let mut hints = c.hints();
            hints.extend_from_slice(w.poles().poles());
            let est = polar_integral(
                |x| area_density(w, x, c.value(x)),
                annulus.inner,
                annulus.outer,
                &hints,
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
            let on = |field: &ScalarField| -> Result<f64> {
                let grid = field.grid();
                Ok(grid
                    .annulus_weights(&annulus)?
                    .iter()
                    .map(|&(i, a)| a * area_density(w, grid.point(i), field.value(i)))
                    .sum())
            };
            let fine = on(f)?;
            let g = f.grid();
            let coarse = DiskGrid::shared(g.radius(), g.n().div_ceil(2))?;
            let rough = on(&f.sampled().resample(coarse)?)?;
            Ok(Integral {
                value: fine,
                tolerance: (fine - rough).abs() / 3.0,
                mode: QuadMode::Grid,
                converged: true,
            })
        }
    }
}

/// Pohozaev relation between `B_{r_in}` and `B_{r_out}`.
pub fn pohozaev_relation_check(
    f: &ScalarField,
    w: &WeightSpec,
    r_in: f64,
    r_out: f64,
    alpha: f64,
    mode: QuadMode,
) -> Result<PohozaevCheck> {
    let grid = f.grid();
    AnnulusSpec::new(r_in, r_out, grid.radius())?;
    if !(r_in > 0.0) {
        return Err(Error::Domain(format!(
            "inner radius must be positive, got {r_in}"
        )));
    }
    let mut notes = Vec::new();
    let r_in = avoid_poles(r_in, grid, w, &mut notes);
    let r_out = avoid_poles(r_out, grid, w, &mut notes);
    let annulus = AnnulusSpec::new(r_in, r_out, grid.radius())?;
    if mode == QuadMode::Grid && f.is_exact() {
        return pohozaev_relation_check(&f.sampled(), w, r_in, r_out, alpha, QuadMode::Auto);
    }

    let p_out = pohozaev_boundary_functional_with(f, w, r_out)?;
    let p_in = pohozaev_boundary_functional_with(f, w, r_in)?;
    let area = area_term(f, w, annulus, mode)?;
    let m_out = weighted_mass_with(f, w, r_out, mode)?;
    let m_in = weighted_mass_with(f, w, r_in, mode)?;
    if !area.converged || !m_out.converged || !m_in.converged {
        notes.push("an area quadrature did not reach its tolerance".into());
    }
    let lhs = p_out.value - p_in.value;
    let m_hat = m_out.value / (2.0 * PI);
    let mu_hat = m_in.value / (2.0 * PI);
    Ok(PohozaevCheck {
        r_in,
        r_out,
        alpha,
        m_hat,
        mu_hat,
        lhs,
        rhs: area.value,
        residual: lhs - area.value,
        tolerance: p_out.tolerance + p_in.tolerance + area.tolerance,
        algebraic_defect: algebraic_defect(m_hat, mu_hat, alpha),
        mode: area.mode,
        notes,
    })
}

/// Least-squares fit of `∇ξ ≈ -μ̂ x/|x|²` on circles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub radii: Vec<f64>,
    pub mu_hat: f64,
    /// `max |∇ξ + μ̂ x/|x|²| |x|²` over the samples.
    pub defect: f64,
    pub samples_per_circle: usize,
}

const FAR_FIELD_SAMPLES: usize = 64;

pub fn gradient_far_field_check(f: &ScalarField, radii: &[f64]) -> Result<FarField> {
    if radii.is_empty() {
        return Err(Error::Config(
            "far-field fit needs at least one radius".into(),
        ));
    }
    let grid = f.grid();
    let limit = if f.is_exact() {
        grid.radius()
    } else {
        grid.radius() - 1.5 * grid.spacing()
    };
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= limit)) {
        return Err(Error::Domain(format!(
            "far-field radius {r} must lie in (0, {limit}]"
        )));
    }
    let node_grads = (!f.is_exact()).then(|| f.node_gradients());
    let gradient = |x: Point| match (&node_grads, f.closed_form()) {
        (_, Some(c)) => c.gradient(x),
        (Some(g), None) => gradient_from_nodes(grid, g, x),
        (None, None) => unreachable!("sampled fields carry node gradients"),
    };
    let mut samples = Vec::with_capacity(radii.len() * FAR_FIELD_SAMPLES);
    for &r in radii {
        for s in 0..FAR_FIELD_SAMPLES {
            let t = 2.0 * PI * s as f64 / FAR_FIELD_SAMPLES as f64;
            let x = [r * t.cos(), r * t.sin()];
            samples.push((x, gradient(x)));
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (x, g) in &samples {
        let r2 = x[0] * x[0] + x[1] * x[1];
        num -= (g[0] * x[0] + g[1] * x[1]) / r2;
        den += 1.0 / r2;
    }
    let mu_hat = num / den;
    let defect = samples
        .iter()
        .map(|(x, g)| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let e = [g[0] + mu_hat * x[0] / r2, g[1] + mu_hat * x[1] / r2];
            e[0].hypot(e[1]) * r2
        })
        .fold(0.0, f64::max);
    Ok(FarField {
        radii: radii.to_vec(),
        mu_hat,
        defect,
        samples_per_circle: FAR_FIELD_SAMPLES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::RadialBubble;
    use std::sync::Arc;

    #[test]
    fn factored_defect() {
        assert_eq!(algebraic_defect(3.0, 3.0, 1.0), 0.0);
        assert!((algebraic_defect(8.0, 0.0, 1.0)).abs() < 1e-15);
        assert!((algebraic_defect(5.0, 1.0, 0.0) - (25.0 - 1.0 - 16.0)).abs() < 1e-14);
    }

    #[test]
    fn bubble_identity_and_concentration_branch() {
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let b = RadialBubble::new(1, 1e3).unwrap();
        let f = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
        let c = pohozaev_relation_check(&f, &b.weight(), 0.2, 0.5, 1.0, QuadMode::Auto).unwrap();
        assert!(c.residual.abs() < 10.0 * c.tolerance.max(1e-12), "{c:?}");
        assert!((c.m_hat - 8.0).abs() < 1e-3);
    }

    #[test]
    fn harmonic_field_has_no_far_field_charge() {
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let f = ScalarField::from_fn(grid, |x| x[0] * x[0] - x[1] * x[1]).unwrap();
        let fit = gradient_far_field_check(&f, &[0.5, 0.7]).unwrap();
        assert!(fit.mu_hat.abs() < 1e-10, "{fit:?}");
    }
}
