//! Aggregated per-family diagnostics with JSON and CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::QuadMode;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Point;
use crate::solver::green::green_decompose;
use crate::weight::WeightSpec;

use super::{
    boundary_oscillation, detect_cascade, energy_identity_check, estimate_sigma, geometric_deltas,
    mass_profile, peak, peak_boundary_relation, peak_scale_divergence_check,
    pohozaev_relation_check, pointwise_upper_bound_check, profile_residual, trend, CascadeReport,
    DivergenceTrend, MassInput, MassProfile, PohozaevCheck, QuantizationVerdict, SigmaSettings,
    Trend,
};

/// Version tag of the report layout and CSV column set.
pub const REPORT_SCHEMA: &str = "liouville-lab/report/1";

/// One family member handed to [`diagnose`].
#[derive(Clone, Copy, Debug)]
pub struct MemberInput<'a> {
    pub k: usize,
    pub tau: f64,
    pub lambda: Option<f64>,
    pub field: &'a ScalarField,
    pub weight: &'a WeightSpec,
}

/// Pole tracks in identity order, for the cascade diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeInput {
    pub tracks: Vec<Vec<Point>>,
    pub multiplicities: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticSettings {
    /// Number of radii `r 2^{-i}` in the mass profile.
    pub delta_levels: usize,
    /// Largest radius of the mass profile (grid radius when absent).
    pub delta_radius: Option<f64>,
    pub sigma: SigmaSettings,
    pub mode: QuadMode,
    /// Pohozaev inner radius in units of `τ_k`; the check is skipped when absent
    /// or when `τ_k = 0`.
    pub pohozaev_inner: Option<f64>,
    /// Pohozaev outer radius as a fraction of the grid radius.
    pub pohozaev_outer: f64,
    /// Multiplicity at the blow-up point (total pole multiplicity when absent).
    pub alpha: Option<f64>,
    /// `ε` of the `(4+ε) ln(1/|x|)` bound.
    pub pointwise_eps: f64,
    pub green: bool,
    pub trend_threshold: f64,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        DiagnosticSettings {
            delta_levels: 10,
            delta_radius: None,
            sigma: SigmaSettings::default(),
            mode: QuadMode::Auto,
            pohozaev_inner: Some(10.0),
            pohozaev_outer: 0.5,
            alpha: None,
            pointwise_eps: 0.5,
            green: true,
            trend_threshold: 0.05,
        }
    }
}

/// Grid and quadrature metadata shared by every number in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub grid_n: usize,
    pub grid_radius: f64,
    pub h: f64,
    pub mode: QuadMode,
    pub slope_threshold: f64,
    pub l0: f64,
    pub pointwise_eps: f64,
}

/// Per-member numbers; `None` marks a diagnostic that was inapplicable or failed
/// (the reason is in `notes`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub tau: f64,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub w0: f64,
    pub peak: Option<f64>,
    pub boundary_min: Option<f64>,
    pub masses: Vec<Option<f64>>,
    pub mass_tolerances: Vec<f64>,
    pub local_mass: Option<f64>,
    pub energy_defect: Option<f64>,
    pub energy_tolerance: Option<f64>,
    pub profile_residual: Option<f64>,
    pub peak_boundary: Option<f64>,
    pub oscillation: Option<f64>,
    pub harmonic_defect: Option<f64>,
    pub green_tolerance: Option<f64>,
    pub pointwise_c_star: Option<f64>,
    pub pointwise_two_sided: Option<f64>,
    pub pointwise_violations: Option<usize>,
    pub pohozaev_residual: Option<f64>,
    pub pohozaev_tolerance: Option<f64>,
    pub algebraic_defect: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema: String,
    pub tolerances: Tolerances,
    pub mass_profile: MassProfile,
    /// `Err` text when the profile could not be assessed.
    pub quantization: std::result::Result<QuantizationVerdict, String>,
    pub pohozaev: Vec<PohozaevCheck>,
    pub energy: Option<Trend>,
    pub profile: Option<Trend>,
    pub peak_boundary: Option<Trend>,
    pub oscillation: Option<Trend>,
    pub pointwise: Option<Trend>,
    pub cascade: Option<CascadeReport>,
    pub divergence: Option<DivergenceTrend>,
    pub rows: Vec<KRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn record<T>(notes: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    }
}

fn member_row(
    m: &MemberInput<'_>,
    eps: Option<f64>,
    settings: &DiagnosticSettings,
) -> (KRow, Option<PohozaevCheck>) {
    let r = m.field.grid().radius();
    let zeros = m.weight.poles().poles();
    let mut notes = Vec::new();
    let w0 = m.weight.at_origin();
    let peak_value = record(&mut notes, "peak", peak(m.field, zeros)).map(|p| p.value);
    let energy = if w0 > 0.0 {
        record(
            &mut notes,
            "energy identity",
            energy_identity_check(m.field, m.weight, r, settings.mode),
        )
    } else {
        None
    };
    let relation = if w0 > 0.0 {
        record(
            &mut notes,
            "peak/boundary relation",
            peak_boundary_relation(m.field, m.weight, r),
        )
    } else {
        None
    };
    let profile = if w0 > 0.0 {
        record(
            &mut notes,
            "profile residual",
            profile_residual(m.field, w0, r, zeros),
        )
    } else {
        notes.push("W(0) = 0: profile, energy and peak relations do not apply".into());
        None
    };
    let oscillation = record(
        &mut notes,
        "boundary oscillation",
        boundary_oscillation(m.field, r),
    );
    let boundary_min = record(
        &mut notes,
        "boundary minimum",
        super::identities::circle_min(m.field, r),
    );
    let green = if settings.green {
        record(
            &mut notes,
            "Green decomposition",
            green_decompose(m.field, m.weight),
        )
    } else {
        None
    };
    let pointwise = eps.and_then(|e| {
        record(
            &mut notes,
            "pointwise bound",
            pointwise_upper_bound_check(
                m.field,
                r,
                settings.pointwise_eps,
                settings.sigma.l0 * e,
                None,
            ),
        )
    });
    let alpha = settings
        .alpha
        .unwrap_or(m.weight.poles().total_multiplicity() as f64);
    let pohozaev = match settings.pohozaev_inner {
        Some(factor) if m.tau > 0.0 => record(
            &mut notes,
            "Pohozaev relation",
            pohozaev_relation_check(
                m.field,
                m.weight,
                factor * m.tau,
                settings.pohozaev_outer * r,
                alpha,
                settings.mode,
            ),
        ),
        _ => None,
    };
    let row = KRow {
        k: m.k,
        tau: m.tau,
        eps,
        lambda: m.lambda,
        w0,
        peak: peak_value,
        boundary_min,
        energy_defect: energy.as_ref().map(|e| e.defect),
        energy_tolerance: energy.as_ref().map(|e| e.energy.tolerance),
        profile_residual: profile,
        peak_boundary: relation.map(|p| p.defect),
        oscillation,
        harmonic_defect: green.as_ref().map(|g| g.harmonic_defect),
        green_tolerance: green.as_ref().map(|g| g.quadrature_tolerance),
        pointwise_c_star: pointwise.as_ref().map(|p| p.c_star),
        pointwise_two_sided: pointwise.as_ref().map(|p| p.two_sided),
        pointwise_violations: pointwise.as_ref().map(|p| p.violations),
        pohozaev_residual: pohozaev.as_ref().map(|p| p.residual),
        pohozaev_tolerance: pohozaev.as_ref().map(|p| p.tolerance),
        algebraic_defect: pohozaev.as_ref().map(|p| p.algebraic_defect),
        notes,
        ..KRow::default()
    };
    (row, pohozaev)
}

/// Trend of a per-k column against `λ_k` (or `k` when some `λ_k` is missing),
/// when every member produced a value.
fn column_trend(
    rows: &[KRow],
    value: impl Fn(&KRow) -> Option<f64>,
    threshold: f64,
) -> Option<Trend> {
    if rows.len() < 2 {
        return None;
    }
    let values: Option<Vec<f64>> = rows.iter().map(&value).collect();
    let params: Vec<f64> = rows
        .iter()
        .map(|r| r.lambda)
        .collect::<Option<Vec<f64>>>()
        .unwrap_or_else(|| rows.iter().map(|r| r.k as f64).collect());
    trend(&params, &values?, threshold).ok()
}

/// Runs every diagnostic on a family of fields on a common grid.
pub fn diagnose(
    members: &[MemberInput<'_>],
    cascade: Option<&CascadeInput>,
    settings: &DiagnosticSettings,
) -> Result<DiagnosticsReport> {
    let first = members
        .first()
        .ok_or_else(|| Error::Data("no family members to diagnose".into()))?;
    let grid = first.field.grid().clone();
    if members
        .iter()
        .any(|m| m.field.grid().n() != grid.n() || m.field.grid().radius() != grid.radius())
    {
        return Err(Error::Data("family members live on different grids".into()));
    }
    let mut notes = Vec::new();
    let (cascade_report, divergence_tracks) = match cascade {
        Some(c) => {
            let ks: Vec<usize> = members.iter().map(|m| m.k).collect();
            (
                record(&mut notes, "cascade", detect_cascade(&c.tracks, &ks)),
                Some(c),
            )
        }
        None => (None, None),
    };

    let radius = settings.delta_radius.unwrap_or(grid.radius());
    let deltas = geometric_deltas(radius, settings.delta_levels);
    let inputs: Vec<MassInput<'_>> = members
        .iter()
        .map(|m| MassInput {
            k: m.k,
            tau: m.tau,
            field: m.field,
            weight: m.weight,
        })
        .collect();
    let profile = mass_profile(&inputs, &deltas, settings.sigma.l0, settings.mode)?;
    let quantization = estimate_sigma(&profile, &settings.sigma).map_err(|e| e.to_string());

    let results: Vec<(KRow, Option<PohozaevCheck>)> = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let eps = cascade_report.as_ref().map(|c| c.eps[i]);
            member_row(m, eps, settings)
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut pohozaev = Vec::new();
    for ((mut row, check), mrow) in results.into_iter().zip(&profile.rows) {
        row.masses = mrow.entries.iter().map(|e| e.mass).collect();
        row.mass_tolerances = mrow.entries.iter().map(|e| e.tolerance).collect();
        row.local_mass = mrow.local.as_ref().and_then(|e| e.mass);
        for e in &mrow.entries {
            if let Some(n) = &e.note {
                row.notes.push(format!("mass at delta = {}: {n}", e.delta));
            }
        }
        pohozaev.extend(check);
        rows.push(row);
    }

    let divergence = match (&cascade_report, divergence_tracks) {
        (Some(report), Some(c)) => {
            let peaks: Option<Vec<f64>> = rows.iter().map(|r| r.peak).collect();
            peaks.and_then(|p| {
                record(
                    &mut notes,
                    "peak/scale divergence",
                    peak_scale_divergence_check(&p, &c.tracks, &c.multiplicities, report),
                )
            })
        }
        _ => None,
    };
    let t = settings.trend_threshold;
    Ok(DiagnosticsReport {
        schema: REPORT_SCHEMA.to_string(),
        tolerances: Tolerances {
            grid_n: grid.n(),
            grid_radius: grid.radius(),
            h: grid.spacing(),
            mode: settings.mode,
            slope_threshold: settings.sigma.slope_threshold,
            l0: settings.sigma.l0,
            pointwise_eps: settings.pointwise_eps,
        },
        energy: column_trend(&rows, |r| r.energy_defect, t),
        profile: column_trend(&rows, |r| r.profile_residual, t),
        peak_boundary: column_trend(&rows, |r| r.peak_boundary, t),
        oscillation: column_trend(&rows, |r| r.oscillation, t),
        pointwise: column_trend(&rows, |r| r.pointwise_c_star, t),
        mass_profile: profile,
        quantization,
        pohozaev,
        cascade: cascade_report,
        divergence,
        rows,
        notes,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

impl DiagnosticsReport {
    /// CSV header; the mass columns are `M_<i>` for the radii in increasing order.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["k", "tau", "eps", "lambda", "w0", "peak", "boundary_min"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((0..self.mass_profile.deltas.len()).map(|i| format!("M_{i}")));
        h.extend(
            [
                "local_mass",
                "sigma_hat",
                "energy_defect",
                "profile_residual",
                "peak_boundary",
                "oscillation",
                "harmonic_defect",
                "green_tolerance",
                "pointwise_c_star",
                "pointwise_two_sided",
                "pohozaev_residual",
                "pohozaev_tolerance",
                "algebraic_defect",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        h
    }

    /// One row per `k`, in the column order of [`DiagnosticsReport::csv_header`].
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(self.csv_header()).map_err(io)?;
        let sigma = self.quantization.as_ref().ok().and_then(|q| q.sigma_hat);
        for r in &self.rows {
            let mut rec = vec![
                r.k.to_string(),
                format!("{:.12e}", r.tau),
                cell(r.eps),
                cell(r.lambda),
                format!("{:.12e}", r.w0),
                cell(r.peak),
                cell(r.boundary_min),
            ];
            rec.extend(r.masses.iter().map(|m| cell(*m)));
            rec.extend(
                [
                    r.local_mass,
                    sigma,
                    r.energy_defect,
                    r.profile_residual,
                    r.peak_boundary,
                    r.oscillation,
                    r.harmonic_defect,
                    r.green_tolerance,
                    r.pointwise_c_star,
                    r.pointwise_two_sided,
                    r.pohozaev_residual,
                    r.pohozaev_tolerance,
                    r.algebraic_defect,
                ]
                .map(cell),
            );
            w.write_record(rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::VerdictStatus;
    use crate::families::{make_family, FamilyRule, LambdaSchedule};
    use crate::grid::DiskGrid;

    #[test]
    fn exact_pair_family_report() {
        let rule = FamilyRule {
            exponents: vec![1.0, 1.0],
            directions: vec![[1.0, 0.0], [-1.0, 0.0]],
            multiplicities: vec![1, 1],
            coefficients: vec![0.05, 0.05],
            lambda: LambdaSchedule::Geometric {
                lambda0: 1.0,
                ratio: 10.0,
            },
            k: 4,
            centering: Default::default(),
        };
        let family = make_family(&rule).unwrap();
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let fields: Vec<ScalarField> = family
            .members
            .iter()
            .map(|m| m.field(grid.clone()).unwrap())
            .collect();
        let weights: Vec<WeightSpec> = family.members.iter().map(|m| m.weight()).collect();
        let members: Vec<MemberInput<'_>> = family
            .members
            .iter()
            .zip(fields.iter().zip(&weights))
            .map(|(m, (f, w))| MemberInput {
                k: m.k,
                tau: m.tau,
                lambda: Some(m.lambda),
                field: f,
                weight: w,
            })
            .collect();
        let cascade = CascadeInput {
            tracks: family.identity_tracks(),
            multiplicities: vec![1, 1],
        };
        let settings = DiagnosticSettings {
            green: false,
            ..Default::default()
        };
        let report = diagnose(&members, Some(&cascade), &settings).unwrap();
        let q = report.quantization.as_ref().unwrap();
        assert_eq!(q.status, VerdictStatus::Plateau, "{q:?}");
        assert_eq!(q.n, Some(3));
        assert_eq!(report.cascade.as_ref().unwrap().s1, 2);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        let json = serde_json::to_string(&report).unwrap();
        let back: DiagnosticsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows.len(), 4);
    }
}
