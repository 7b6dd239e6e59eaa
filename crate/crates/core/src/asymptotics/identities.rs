//! Profile, energy, peak/boundary and pointwise estimates for a single member.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    boundary_min, circle_values, dirichlet_energy_with, Integral, QuadMode, CIRCLE_SAMPLES,
};
use crate::error::{Error, Result};
use crate::families::BubbleProfile;
use crate::field::{ClosedForm, ScalarField};
use crate::grid::Point;
use crate::weight::WeightSpec;

use super::{peak, Peak};

fn positive_w0(w: &WeightSpec) -> Result<f64> {
    let w0 = w.at_origin();
    if !(w0 > 0.0) {
        return Err(Error::Inapplicable(format!("W(0) = {w0} is not positive")));
    }
    Ok(w0)
}

/// `min_{∂B_r} ξ`: the grid circle when `r` is the grid radius, 4096 samples otherwise.
pub fn circle_min(f: &ScalarField, r: f64) -> Result<f64> {
    if (r - f.grid().radius()).abs() <= 1e-12 * r {
        return boundary_min(f);
    }
    Ok(circle_values(f, r, 4096)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// `sup |ξ - ln(e^{ξ(0̂)} / (1 + (e^{ξ(0̂)}/8) W0 |x|²)²)|` over domain nodes of
/// `B_r`, skipping nodes within `2h` of the weight zeros.
pub fn profile_residual(f: &ScalarField, w0: f64, r: f64, zeros: &[Point]) -> Result<f64> {
    if !(w0 > 0.0) {
        return Err(Error::Config(format!("W0 must be positive, got {w0}")));
    }
    let grid = f.grid();
    let h = grid.spacing();
    let p = peak(f, zeros)?;
    let profile = BubbleProfile { peak: p.value, w0 };
    let mut worst: f64 = 0.0;
    for &i in grid.domain() {
        let x = grid.point(i);
        if x[0].hypot(x[1]) > r * (1.0 + 1e-12) {
            continue;
        }
        if zeros
            .iter()
            .any(|z| (x[0] - z[0]).hypot(x[1] - z[1]) < 2.0 * h)
        {
            continue;
        }
        worst = worst.max((f.value(i) - profile.value(x)).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDefect {
    pub radius: f64,
    pub energy: Integral,
    pub peak: Peak,
    pub w0: f64,
    /// `∫_{B_r}|∇ξ|² - 16π(ξ(0̂) + ln W(0))`.
    pub defect: f64,
}

pub fn energy_identity_check(
    f: &ScalarField,
    w: &WeightSpec,
    r: f64,
    mode: QuadMode,
) -> Result<EnergyDefect> {
    let w0 = positive_w0(w)?;
    let energy = dirichlet_energy_with(f, r, mode)?;
    let p = peak(f, w.poles().poles())?;
    Ok(EnergyDefect {
        radius: r,
        energy,
        peak: p,
        w0,
        defect: energy.value - 16.0 * std::f64::consts::PI * (p.value + w0.ln()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakBoundary {
    pub radius: f64,
    pub peak: Peak,
    pub boundary_min: f64,
    pub w0: f64,
    /// `ξ(0̂) + min_{∂B_r} ξ + 2 ln W(0)`.
    pub defect: f64,
}

pub fn peak_boundary_relation(f: &ScalarField, w: &WeightSpec, r: f64) -> Result<PeakBoundary> {
    let w0 = positive_w0(w)?;
    let p = peak(f, w.poles().poles())?;
    let bmin = circle_min(f, r)?;
    Ok(PeakBoundary {
        radius: r,
        peak: p,
        boundary_min: bmin,
        w0,
        defect: p.value + bmin + 2.0 * w0.ln(),
    })
}

/// Upper and two-sided logarithmic bounds on `L₀ε_k <= |x| <= r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBound {
    pub eps: f64,
    pub inner: f64,
    pub radius: f64,
    pub nodes: usize,
    /// `max (ξ - min_{∂B_r}ξ - (4+ε) ln(1/|x|))`.
    pub c_star: f64,
    /// `max |ξ - min_{∂B_r}ξ - 4 ln(1/|x|)|`.
    pub two_sided: f64,
    /// Nodes exceeding the supplied constant (zero when none was supplied).
    pub violations: usize,
}

pub fn pointwise_upper_bound_check(
    f: &ScalarField,
    r: f64,
    eps: f64,
    inner: f64,
    constant: Option<f64>,
) -> Result<PointwiseBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1), got {eps}"
        )));
    }
    let grid = f.grid();
    let bmin = circle_min(f, r)?;
    let mut c_star = f64::NEG_INFINITY;
    let mut two_sided: f64 = 0.0;
    let mut nodes = 0;
    let mut violations = 0;
    for &i in grid.domain() {
        let x = grid.point(i);
        let rho = x[0].hypot(x[1]);
        if rho < inner || rho > r * (1.0 + 1e-12) {
            continue;
        }
        nodes += 1;
        let v = f.value(i) - bmin;
        let upper = v - (4.0 + eps) * (1.0 / rho).ln();
        c_star = c_star.max(upper);
        two_sided = two_sided.max((v - 4.0 * (1.0 / rho).ln()).abs());
        if constant.is_some_and(|c| upper > c) {
            violations += 1;
        }
    }
    if nodes == 0 {
        return Err(Error::Inapplicable(format!(
            "no grid nodes with {inner} <= |x| <= {r}"
        )));
    }
    Ok(PointwiseBound {
        eps,
        inner,
        radius: r,
        nodes,
        c_star,
        two_sided,
        violations,
    })
}

/// `max - min` over 256 equally spaced samples of `∂B_rho`.
pub fn boundary_oscillation(f: &ScalarField, rho: f64) -> Result<f64> {
    let v = circle_values(f, rho, CIRCLE_SAMPLES)?;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    Ok(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::RadialBubble;
    use crate::grid::DiskGrid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn constant_field_identities_are_arithmetic() {
        let grid = DiskGrid::shared(1.0, 33).unwrap();
        let f = ScalarField::constant(grid, 0.7).unwrap();
        let w = WeightSpec::constant(2.0).unwrap();
        let e = energy_identity_check(&f, &w, 1.0, QuadMode::Auto).unwrap();
        assert!((e.defect + 16.0 * PI * (0.7 + 2f64.ln())).abs() < 1e-12);
        let pb = peak_boundary_relation(&f, &w, 1.0).unwrap();
        assert!((pb.defect - (1.4 + 2.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_at_origin_is_inapplicable() {
        let grid = DiskGrid::shared(1.0, 33).unwrap();
        let b = RadialBubble::new(1, 10.0).unwrap();
        let f = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
        assert!(matches!(
            energy_identity_check(&f, &b.weight(), 1.0, QuadMode::Auto),
            Err(Error::Inapplicable(_))
        ));
    }

    #[test]
    fn radial_field_does_not_oscillate() {
        let grid = DiskGrid::shared(1.0, 33).unwrap();
        let b = RadialBubble::new(0, 3.0).unwrap();
        let f = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
        assert!(boundary_oscillation(&f, 0.6).unwrap() < 1e-13);
    }

    #[test]
    fn matched_bubble_has_tiny_profile_residual() {
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let b = RadialBubble::new(0, 50.0).unwrap();
        let f = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
        assert!(profile_residual(&f, 1.0, 1.0, &[]).unwrap() < 1e-12);
        assert!(profile_residual(&f, 4.0, 1.0, &[]).unwrap() > 2f64.ln());
    }
}
