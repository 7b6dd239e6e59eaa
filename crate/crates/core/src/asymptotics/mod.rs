//! Diagnostics for blow-up families: mass quantization, Pohozaev and energy
//! identities, least-mass profile estimates and the scale cascade.

pub mod cascade;
pub mod identities;
pub mod ladder;
pub mod mass;
pub mod pohozaev;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{solve3, ScalarField};
use crate::grid::Point;

pub use cascade::{
    detect_cascade, detect_family_cascade, peak_scale_divergence_check, CascadeGroup,
    CascadeReport, DivergenceTrend,
};
pub use identities::{
    boundary_oscillation, circle_min, energy_identity_check, peak_boundary_relation,
    pointwise_upper_bound_check, profile_residual, EnergyDefect, PeakBoundary, PointwiseBound,
};
pub use ladder::{total_mass_ladder_check, LadderVerdict};
pub use mass::{
    estimate_sigma, geometric_deltas, mass_profile, MassEntry, MassInput, MassProfile, MassRow,
    QuantizationVerdict, SigmaSettings, VerdictStatus,
};
pub use pohozaev::{
    algebraic_defect, gradient_far_field_check, pohozaev_relation_check, FarField, PohozaevCheck,
};
pub use report::{
    diagnose, CascadeInput, DiagnosticSettings, DiagnosticsReport, KRow, MemberInput, Tolerances,
    REPORT_SCHEMA,
};

/// Slope threshold below which a fitted sequence counts as bounded.
pub const TREND_THRESHOLD: f64 = 0.05;

/// Least-squares slope of `y` against `x`.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Data(format!(
            "slope fit needs at least two paired samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// A defect sequence and its fitted log-trend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub parameters: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln|values|` against `ln(parameters)`.
    pub slope: f64,
    pub max_abs: f64,
    /// `slope < threshold`: the magnitude does not grow like a power of the parameter.
    pub bounded: bool,
}

/// Fits `ln|v|` against `ln p`. Magnitudes below `1e-12 max|v|` are raised to
/// that floor so that exact zeros do not dominate the fit.
pub fn trend(parameters: &[f64], values: &[f64], threshold: f64) -> Result<Trend> {
    if let Some(p) = parameters.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Data(format!(
            "trend parameters must be positive, got {p}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("trend values must be finite".into()));
    }
    let max_abs = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let x: Vec<f64> = parameters.iter().map(|p| p.ln()).collect();
    let slope = if max_abs == 0.0 {
        lsq_slope(&x, &vec![0.0; values.len()])?
    } else {
        let floor = 1e-12 * max_abs;
        let y: Vec<f64> = values.iter().map(|v| v.abs().max(floor).ln()).collect();
        lsq_slope(&x, &y)?
    };
    Ok(Trend {
        parameters: parameters.to_vec(),
        values: values.to_vec(),
        slope,
        max_abs,
        bounded: slope < threshold,
    })
}

/// Peak data at the node standing in for the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Node nearest to the origin that is not a weight zero.
    pub node: usize,
    pub node_value: f64,
    /// Refined value: exact at the origin for closed forms, otherwise the
    /// maximum of a quadratic fitted on the 3x3 neighbourhood of the node.
    pub value: f64,
}

/// `ξ(0̂)` with the 3x3 quadratic refinement.
pub fn peak(f: &ScalarField, zeros: &[Point]) -> Result<Peak> {
    let grid = f.grid();
    let h = grid.spacing();
    let mut node = grid.origin();
    if zeros.iter().any(|z| {
        (z[0] - grid.point(node)[0]).hypot(z[1] - grid.point(node)[1]) < 1e-12 * h.max(1.0)
    }) {
        // Walk outward to the nearest node that is not a pole.
        let (ci, cj) = grid.ij(node);
        let mut best: Option<(f64, usize)> = None;
        for (di, dj) in [
            (1i64, 0i64),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let idx = grid.index((ci as i64 + di) as usize, (cj as i64 + dj) as usize);
            let x = grid.point(idx);
            if zeros
                .iter()
                .all(|z| (z[0] - x[0]).hypot(z[1] - x[1]) > 1e-12)
            {
                let d = x[0].hypot(x[1]);
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, idx));
                }
            }
        }
        node = best
            .map(|b| b.1)
            .ok_or_else(|| Error::Data("no pole-free node near the origin".into()))?;
    }
    let node_value = f.value(node);
    if let Some(c) = f.closed_form() {
        return Ok(Peak {
            node,
            node_value,
            value: c.value([0.0, 0.0]),
        });
    }
    Ok(Peak {
        node,
        node_value,
        value: refine_peak(f, node).unwrap_or(node_value),
    })
}

/// Fits `a + b x + c y + d x^2 + e y^2 + g x y` on the 3x3 block around
/// `node` and returns its value at the stationary point when that point is a
/// maximum inside the block.
fn refine_peak(f: &ScalarField, node: usize) -> Option<f64> {
    let grid = f.grid();
    let (ci, cj) = grid.ij(node);
    let mut v = [[0.0; 3]; 3];
    for (a, di) in (-1i64..=1).enumerate() {
        for (b, dj) in (-1i64..=1).enumerate() {
            let idx = grid.index((ci as i64 + di) as usize, (cj as i64 + dj) as usize);
            if !grid.kind(idx).in_domain() {
                return None;
            }
            v[a][b] = f.value(idx);
        }
    }
    // Least-squares quadratic on the 3x3 stencil in units of h.
    let mean_row = |a: usize| (v[a][0] + v[a][1] + v[a][2]) / 3.0;
    let mean_col = |b: usize| (v[0][b] + v[1][b] + v[2][b]) / 3.0;
    let fx = (mean_row(2) - mean_row(0)) / 2.0;
    let fy = (mean_col(2) - mean_col(0)) / 2.0;
    let fxx = mean_row(2) - 2.0 * mean_row(1) + mean_row(0);
    let fyy = mean_col(2) - 2.0 * mean_col(1) + mean_col(0);
    let fxy = (v[2][2] - v[2][0] - v[0][2] + v[0][0]) / 4.0;
    let avg: f64 = v.iter().flatten().sum::<f64>() / 9.0;
    // Constant term so that the fit reproduces the block mean: the mean of
    // x^2 over {-1,0,1} is 2/3.
    let c0 = avg - (fxx + fyy) / 3.0;
    let det = fxx * fyy - fxy * fxy;
    if !(fxx < 0.0 && det > 0.0) {
        return None;
    }
    let s = solve3(
        [[fxx, fxy, 0.0], [fxy, fyy, 0.0], [0.0, 0.0, 1.0]],
        [-fx, -fy, 0.0],
    )?;
    let (x, y) = (s[0], s[1]);
    if x.abs() > 1.0 || y.abs() > 1.0 {
        return None;
    }
    Some(c0 + fx * x + fy * y + 0.5 * fxx * x * x + 0.5 * fyy * y * y + fxy * x * y)
}
