//! Local masses `M_k(δ) = ∫_{B_δ} W_k e^{ξ_k}` and the plateau estimate of the blow-up mass.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{weighted_mass_with, QuadMode};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::weight::WeightSpec;

use super::lsq_slope;

/// One family member as seen by the mass diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct MassInput<'a> {
    pub k: usize,
    /// Collapse scale `τ_k` (zero when the weight has no poles).
    pub tau: f64,
    pub field: &'a ScalarField,
    pub weight: &'a WeightSpec,
}

/// A single mass evaluation; failed quadratures keep `mass = None` and a note.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEntry {
    pub delta: f64,
    pub mass: Option<f64>,
    pub tolerance: f64,
    pub mode: QuadMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MassEntry {
    fn evaluate(input: &MassInput<'_>, delta: f64, mode: QuadMode) -> MassEntry {
        match weighted_mass_with(input.field, input.weight, delta, mode) {
            Ok(i) if i.converged && i.value.is_finite() => MassEntry {
                delta,
                mass: Some(i.value),
                tolerance: i.tolerance,
                mode: i.mode,
                note: None,
            },
            Ok(i) => MassEntry {
                delta,
                mass: None,
                tolerance: i.tolerance,
                mode: i.mode,
                note: Some(format!("quadrature did not converge (value {})", i.value)),
            },
            Err(e) => MassEntry {
                delta,
                mass: None,
                tolerance: f64::NAN,
                mode,
                note: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub k: usize,
    pub tau: f64,
    /// Entries aligned with [`MassProfile::deltas`].
    pub entries: Vec<MassEntry>,
    /// `μ_k`: mass of `B_{L₀ τ_k}`, when that disk is nondegenerate and inside the grid.
    pub local: Option<MassEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassProfile {
    /// Increasing radii.
    pub deltas: Vec<f64>,
    pub l0: f64,
    pub rows: Vec<MassRow>,
}

/// `r 2^{-i}` for `i = levels-1, ..., 0`, in increasing order.
pub fn geometric_deltas(r: f64, levels: usize) -> Vec<f64> {
    (0..levels)
        .rev()
        .map(|i| r * 0.5f64.powi(i as i32))
        .collect()
}

/// Fills `M_k(δ)` for every member and radius; per-(k, δ) work runs in parallel.
pub fn mass_profile(
    inputs: &[MassInput<'_>],
    deltas: &[f64],
    l0: f64,
    mode: QuadMode,
) -> Result<MassProfile> {
    if deltas.is_empty() {
        return Err(Error::Config(
            "mass profile needs at least one radius".into(),
        ));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Config(format!("radii must be positive, got {d}")));
    }
    if deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    if !(l0 >= 1.0) {
        return Err(Error::Config(format!("L0 must be at least 1, got {l0}")));
    }
    let rows = inputs
        .par_iter()
        .map(|input| {
            let entries: Vec<MassEntry> = deltas
                .par_iter()
                .map(|&d| MassEntry::evaluate(input, d, mode))
                .collect();
            let r = l0 * input.tau;
            let local = (r > 0.0 && r <= input.field.grid().radius())
                .then(|| MassEntry::evaluate(input, r, mode));
            MassRow {
                k: input.k,
                tau: input.tau,
                entries,
                local,
            }
        })
        .collect();
    Ok(MassProfile {
        deltas: deltas.to_vec(),
        l0,
        rows,
    })
}

impl MassProfile {
    /// `(k, δ)` of the first decrease in `M_k(δ)` beyond the combined quadrature tolerance.
    pub fn monotonicity_violation(&self) -> Option<(usize, f64)> {
        for row in &self.rows {
            let known: Vec<&MassEntry> = row.entries.iter().filter(|e| e.mass.is_some()).collect();
            for w in known.windows(2) {
                let (a, b) = (w[0].mass.unwrap_or(0.0), w[1].mass.unwrap_or(0.0));
                let slack = 3.0 * (w[0].tolerance + w[1].tolerance) + 1e-12 * a.abs();
                if b < a - slack {
                    return Some((row.k, w[1].delta));
                }
            }
        }
        None
    }
}

/// Plateau detection parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaSettings {
    /// Bound on `|d ln M / d ln δ|` inside a plateau.
    pub slope_threshold: f64,
    /// Fewest consecutive radii forming a plateau.
    pub min_window: usize,
    /// Radii below `L₀ τ_K` are ignored.
    pub l0: f64,
    /// Without a plateau, a small-radius log-slope at least this large
    /// (mass vanishing as `δ → 0`) together with bounded growth across `k`
    /// yields the no-blow-up verdict.
    pub vanishing_slope: f64,
    /// Largest admissible ratio `M_K(δ_min) / M_1(δ_min)` for that verdict.
    pub growth_ratio: f64,
}

impl Default for SigmaSettings {
    fn default() -> Self {
        SigmaSettings {
            slope_threshold: 0.05,
            min_window: 3,
            l0: 4.0,
            vanishing_slope: 1.5,
            growth_ratio: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    /// A plateau was found and snapped to the ladder.
    Plateau,
    /// No plateau, and the local mass vanishes with `δ` uniformly in `k`.
    NoBlowUp,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationVerdict {
    pub status: VerdictStatus,
    /// Estimated blow-up mass (median of `M_K` over the plateau).
    pub sigma_hat: Option<f64>,
    /// Nearest ladder index: `σ̂ ≈ 8πn`.
    pub n: Option<u64>,
    /// `|σ̂ - 8πn| / (8π)`.
    pub residual: Option<f64>,
    /// Fitted `d ln M / d ln δ` over the plateau window.
    pub plateau_slope: Option<f64>,
    /// Radii of the plateau window.
    pub window: Option<[f64; 2]>,
    pub k: usize,
    /// Log-slopes between consecutive eligible radii of the last member.
    pub slopes: Vec<f64>,
}

/// Plateau estimate of `σ` on the last member, snapped to `8πℕ`.
pub fn estimate_sigma(mp: &MassProfile, settings: &SigmaSettings) -> Result<QuantizationVerdict> {
    if mp.deltas.len() < 4 {
        return Err(Error::Data(format!(
            "quantization needs at least 4 radii, got {}",
            mp.deltas.len()
        )));
    }
    if mp.rows.len() < 4 {
        return Err(Error::Data(format!(
            "quantization needs at least 4 family members, got {}",
            mp.rows.len()
        )));
    }
    if let Some((k, d)) = mp.monotonicity_violation() {
        return Err(Error::Data(format!(
            "mass profile decreases at k = {k}, delta = {d}"
        )));
    }
    let last = mp.rows.last().expect("at least four rows");
    let floor = settings.l0 * last.tau;
    let eligible: Vec<(f64, Option<f64>)> = last
        .entries
        .iter()
        .filter(|e| e.delta >= floor)
        .map(|e| (e.delta, e.mass))
        .collect();
    let slopes: Vec<Option<f64>> = eligible
        .windows(2)
        .map(|w| match (w[0].1, w[1].1) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => {
                Some((b.ln() - a.ln()) / (w[1].0.ln() - w[0].0.ln()))
            }
            _ => None,
        })
        .collect();

    let window = widest_plateau(&slopes, settings);
    let mut verdict = QuantizationVerdict {
        status: VerdictStatus::Inconclusive,
        sigma_hat: None,
        n: None,
        residual: None,
        plateau_slope: None,
        window: None,
        k: last.k,
        slopes: slopes.iter().map(|s| s.unwrap_or(f64::NAN)).collect(),
    };
    verdict.slopes.retain(|s| s.is_finite());
    if let Some((lo, hi)) = window {
        let levels = &eligible[lo..=hi];
        let mut values: Vec<f64> = levels.iter().filter_map(|l| l.1).collect();
        values.sort_by(f64::total_cmp);
        let m = values.len();
        let sigma = if m % 2 == 1 {
            values[m / 2]
        } else {
            0.5 * (values[m / 2 - 1] + values[m / 2])
        };
        let x: Vec<f64> = levels.iter().map(|l| l.0.ln()).collect();
        let y: Vec<f64> = levels.iter().map(|l| l.1.unwrap_or(0.0).ln()).collect();
        let quantum = 8.0 * PI;
        let n = (sigma / quantum).round().max(0.0);
        verdict.status = VerdictStatus::Plateau;
        verdict.sigma_hat = Some(sigma);
        verdict.n = Some(n as u64);
        verdict.residual = Some((sigma - n * quantum).abs() / quantum);
        verdict.plateau_slope = Some(lsq_slope(&x, &y)?);
        verdict.window = Some([levels[0].0, levels[levels.len() - 1].0]);
        return Ok(verdict);
    }
    if vanishing(mp, settings) {
        verdict.status = VerdictStatus::NoBlowUp;
        verdict.sigma_hat = Some(0.0);
        verdict.n = Some(0);
        verdict.residual = Some(0.0);
    }
    Ok(verdict)
}

/// Widest run of consecutive sub-threshold slopes spanning at least
/// `min_window` radii; ties go to the smaller radii. Returns level indices.
fn widest_plateau(slopes: &[Option<f64>], settings: &SigmaSettings) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=slopes.len() {
        let flat = slopes
            .get(i)
            .copied()
            .flatten()
            .is_some_and(|s| s.abs() < settings.slope_threshold);
        match (flat, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                // Slopes s..i-1 join levels s..=i.
                let levels = i - s + 1;
                if levels >= settings.min_window.max(2)
                    && best.is_none_or(|(a, b)| levels > b - a + 1)
                {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Mass vanishing at small radii, uniformly along the family.
fn vanishing(mp: &MassProfile, settings: &SigmaSettings) -> bool {
    let first = &mp.rows[0];
    let last = mp.rows.last().expect("nonempty rows");
    let smallest = |row: &MassRow| -> Option<(f64, f64, f64, f64)> {
        let known: Vec<(f64, f64)> = row
            .entries
            .iter()
            .filter_map(|e| e.mass.map(|m| (e.delta, m)))
            .collect();
        match known.as_slice() {
            [(d0, m0), (d1, m1), ..] => Some((*d0, *m0, *d1, *m1)),
            _ => None,
        }
    };
    let (Some((d0, m0, d1, m1)), Some((_, fm0, _, _))) = (smallest(last), smallest(first)) else {
        return false;
    };
    if m0 == 0.0 && m1 == 0.0 {
        return true;
    }
    if !(m0 > 0.0) {
        return false;
    }
    let slope = (m1.ln() - m0.ln()) / (d1.ln() - d0.ln());
    let growth = if fm0 > 0.0 { m0 / fm0 } else { f64::INFINITY };
    slope >= settings.vanishing_slope && growth <= settings.growth_ratio
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(delta: f64, mass: f64) -> MassEntry {
        MassEntry {
            delta,
            mass: Some(mass),
            tolerance: 0.0,
            mode: QuadMode::ClosedForm,
            note: None,
        }
    }

    fn profile(masses: &[Vec<f64>], deltas: &[f64]) -> MassProfile {
        MassProfile {
            deltas: deltas.to_vec(),
            l0: 4.0,
            rows: masses
                .iter()
                .enumerate()
                .map(|(i, m)| MassRow {
                    k: i + 1,
                    tau: 0.0,
                    entries: deltas.iter().zip(m).map(|(&d, &v)| entry(d, v)).collect(),
                    local: None,
                })
                .collect(),
        }
    }

    #[test]
    fn deltas_are_increasing_powers_of_two() {
        assert_eq!(geometric_deltas(1.0, 3), vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn plateau_snaps_to_ladder() {
        let deltas = geometric_deltas(1.0, 8);
        // Bubble-like mass 8π δ²λ²/(1 + δ²λ²) with λ = 400.
        let m: Vec<f64> = deltas
            .iter()
            .map(|d| {
                let a = (400.0 * d) * (400.0 * d);
                8.0 * PI * a / (1.0 + a)
            })
            .collect();
        let v = estimate_sigma(&profile(&vec![m; 4], &deltas), &SigmaSettings::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Plateau);
        assert_eq!(v.n, Some(1));
        assert!(v.residual.unwrap() < 1e-3);
    }

    #[test]
    fn slowly_varying_mass_is_inconclusive() {
        let deltas = geometric_deltas(1.0, 6);
        let m: Vec<f64> = deltas.iter().map(|d| 30.0 * d.powf(0.3)).collect();
        let v = estimate_sigma(&profile(&vec![m; 4], &deltas), &SigmaSettings::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Inconclusive);
        assert_eq!(v.n, None);
    }

    #[test]
    fn quadratic_mass_means_no_blow_up() {
        let deltas = geometric_deltas(1.0, 6);
        let m: Vec<f64> = deltas.iter().map(|d| PI * d * d).collect();
        let v = estimate_sigma(&profile(&vec![m; 4], &deltas), &SigmaSettings::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::NoBlowUp);
        assert_eq!(v.n, Some(0));
    }

    #[test]
    fn rejects_short_or_decreasing_profiles() {
        let deltas = geometric_deltas(1.0, 4);
        let m = vec![1.0, 2.0, 3.0, 4.0];
        assert!(estimate_sigma(
            &profile(&vec![m.clone(); 3], &deltas),
            &SigmaSettings::default()
        )
        .is_err());
        let bad = vec![1.0, 3.0, 2.0, 4.0];
        let err = estimate_sigma(&profile(&vec![bad; 4], &deltas), &SigmaSettings::default());
        assert!(matches!(err, Err(Error::Data(_))));
    }
}
