//! Total plane mass of entire solutions and the ladder `∫ e^u = 4π(Σβ_j + 1 + σ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::quadrature::{disk_integral, polar_integral, QuadSettings};

/// The tail counts as negligible once a doubling adds less than this fraction.
pub const TAIL_FRACTION: f64 = 1e-4;

/// Doublings of the radius tried before the tail is declared non-decaying.
const MAX_DOUBLINGS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderVerdict {
    /// `∫_{B_R} e^u`.
    pub total: f64,
    /// Quadrature error plus the last tail increment.
    pub tolerance: f64,
    pub radius: f64,
    pub beta_sum: f64,
    /// `total / 4π - Σβ_j - 1`.
    pub sigma: f64,
    /// Nearest `n` with `total ≈ 8πn`.
    pub n: u64,
    pub on_ladder: bool,
    /// `σ > 1` strictly, as the lemma requires.
    pub sigma_above_one: bool,
    /// `σ = 1` within tolerance (the standard bubble).
    pub boundary_case: bool,
}

/// Integrates `e^u` over growing disks until the tail is below 1e-4 of the
/// total; a tail that does not decay is reported as inapplicable.
pub fn total_mass_ladder_check(
    u: impl Fn(Point) -> f64,
    betas: &[f64],
    hints: &[Point],
) -> Result<LadderVerdict> {
    let density = |x: Point| {
        let v = u(x);
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            v.exp()
        }
    };
    let settings = QuadSettings::default();
    let mut radius = hints
        .iter()
        .map(|p| 2.0 * p[0].hypot(p[1]))
        .fold(1.0, f64::max);
    let core = disk_integral(density, radius, hints, &settings);
    let mut total = core.value;
    let mut error = core.error;
    let mut converged = false;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        let ring = polar_integral(density, radius, 2.0 * radius, hints, &settings);
        total += ring.value;
        error += ring.error;
        radius *= 2.0;
        last = ring.value.abs();
        if !total.is_finite() {
            break;
        }
        if last < TAIL_FRACTION * total.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Inapplicable(format!(
            "e^u is not integrable on the plane: the tail does not decay (last ring {last:.3e}, radius {radius:.3e})"
        )));
    }
    let tolerance = error + last;
    let beta_sum: f64 = betas.iter().sum();
    let sigma = total / (4.0 * PI) - beta_sum - 1.0;
    let quantum = 8.0 * PI;
    let n = (total / quantum).round().max(0.0);
    let slack = (10.0 * tolerance).max(1e-3 * quantum);
    let sigma_slack = slack / (4.0 * PI);
    Ok(LadderVerdict {
        total,
        tolerance,
        radius,
        beta_sum,
        sigma,
        n: n as u64,
        on_ladder: n >= 1.0 && (total - n * quantum).abs() <= slack,
        sigma_above_one: sigma > 1.0 + sigma_slack,
        boundary_case: (sigma - 1.0).abs() <= sigma_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_bubble_is_the_boundary_case() {
        let u = |x: Point| (8.0f64).ln() - 2.0 * (1.0 + x[0] * x[0] + x[1] * x[1]).ln();
        let v = total_mass_ladder_check(u, &[], &[[0.0, 0.0]]).unwrap();
        assert!((v.total - 8.0 * PI).abs() < 1e-2, "{v:?}");
        assert_eq!(v.n, 1);
        assert!(v.on_ladder && v.boundary_case && !v.sigma_above_one);
    }

    #[test]
    fn constant_field_is_not_integrable() {
        assert!(matches!(
            total_mass_ladder_check(|_| 0.0, &[], &[]),
            Err(Error::Inapplicable(_))
        ));
    }
}
