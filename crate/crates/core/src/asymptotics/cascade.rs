//! Scale cascade of collapsing poles: grouping by decay rate, the critical
//! scale `ε_k` and the normalized limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::CollapsingFamily;
use crate::grid::Point;

use super::{lsq_slope, TREND_THRESHOLD};

/// Relative change of a modulus ratio over the last two `k` below which the
/// ratio counts as converged.
pub const RATIO_TOLERANCE: f64 = 1e-3;

/// Smallest exponent gap that counts as a separate, diverging scale.
pub const EXPONENT_GAP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeGroup {
    /// Labels (1-based ranks of `|p_{j,K}|`) of the members.
    pub labels: Vec<usize>,
    /// Mean fitted exponent of the members.
    pub exponent: f64,
    /// False when the group boundary was ambiguous.
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadePole {
    pub label: usize,
    /// Index of the pole in the input tracks.
    pub track: usize,
    pub group: usize,
    /// Fitted `ê_j` in `|p_{j,k}| ~ k^{-ê_j}`.
    pub exponent: f64,
    /// `p_{j,K} / ε_K` for members of the first group.
    pub z: Option<Point>,
    /// `p_{j,K} / |p_{s,K}|`.
    pub q: Point,
    /// `|p_{j,K}| / ε_K`.
    pub ratio: f64,
    /// `|p_{j,k}| / ε_k` grows without bound.
    pub diverges: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub ks: Vec<usize>,
    pub s: usize,
    pub s1: usize,
    pub groups: Vec<CascadeGroup>,
    /// Sorted by label.
    pub poles: Vec<CascadePole>,
    /// `ε_k = |p_{s₁,k}|`.
    pub eps: Vec<f64>,
    /// False if any grouping decision was ambiguous.
    pub resolved: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CascadeReport {
    /// Track index of the pole with the given label.
    pub fn track_of(&self, label: usize) -> Option<usize> {
        self.poles
            .iter()
            .find(|p| p.label == label)
            .map(|p| p.track)
    }
}

fn modulus(p: Point) -> f64 {
    p[0].hypot(p[1])
}

/// Detects the cascade from pole tracks: `tracks[k][j]` is pole `j` at `ks[k]`,
/// with `j` following the same pole along the family.
pub fn detect_cascade(tracks: &[Vec<Point>], ks: &[usize]) -> Result<CascadeReport> {
    let levels = tracks.len();
    if levels != ks.len() {
        return Err(Error::Data(format!(
            "{levels} pole tracks for {} values of k",
            ks.len()
        )));
    }
    if levels < 4 {
        return Err(Error::Data(format!(
            "cascade detection needs K >= 4, got {levels}"
        )));
    }
    let s = tracks[0].len();
    if s == 0 {
        return Err(Error::Data(
            "cascade detection needs at least one pole".into(),
        ));
    }
    if tracks.iter().any(|t| t.len() != s) {
        return Err(Error::Data("pole count changes along the family".into()));
    }
    let moduli: Vec<Vec<f64>> = (0..s)
        .map(|j| tracks.iter().map(|t| modulus(t[j])).collect())
        .collect();
    if moduli
        .iter()
        .flatten()
        .any(|m| !(*m > 0.0 && m.is_finite()))
    {
        return Err(Error::Data(
            "pole moduli must be positive and finite".into(),
        ));
    }
    let log_k: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let exponents: Vec<f64> = moduli
        .iter()
        .map(|m| {
            let y: Vec<f64> = m.iter().map(|v| -v.ln()).collect();
            lsq_slope(&log_k, &y)
        })
        .collect::<Result<_>>()?;

    let last = levels - 1;
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| moduli[a][last].total_cmp(&moduli[b][last]).then(a.cmp(&b)));

    let mut notes = Vec::new();
    let mut resolved = true;
    let mut groups: Vec<(Vec<usize>, bool)> = vec![(vec![order[0]], true)];
    for &j in &order[1..] {
        let lead = groups.last().expect("nonempty").0[0];
        let ratio = |i: usize| moduli[j][i] / moduli[lead][i];
        let change = (ratio(last) - ratio(last - 1)).abs() / ratio(last);
        if change < RATIO_TOLERANCE {
            groups.last_mut().expect("nonempty").0.push(j);
        } else if exponents[lead] - exponents[j] >= EXPONENT_GAP {
            groups.push((vec![j], true));
        } else {
            resolved = false;
            notes.push(format!(
                "pole {} neither locks to nor separates from pole {}: ratio change {change:.3e}, exponent gap {:.3}",
                j + 1,
                lead + 1,
                exponents[lead] - exponents[j]
            ));
            groups.push((vec![j], false));
        }
    }

    let label_of = |j: usize| order.iter().position(|&o| o == j).expect("ordered") + 1;
    let s1 = groups[0].0.len();
    if s1 < 2 {
        notes.push("the fastest group has a single pole".into());
    }
    let critical = order[s1 - 1];
    let eps: Vec<f64> = moduli[critical].clone();
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        notes.push("eps_k is not strictly decreasing".into());
    }
    let outer = moduli[order[s - 1]][last];
    let mut poles = Vec::with_capacity(s);
    for (g, (members, _)) in groups.iter().enumerate() {
        for &j in members {
            let p = tracks[last][j];
            let ratios: Vec<f64> = (0..levels).map(|i| moduli[j][i] / eps[i]).collect();
            let growing = ratios.windows(2).rev().take(3).all(|w| w[1] > w[0]);
            poles.push(CascadePole {
                label: label_of(j),
                track: j,
                group: g,
                exponent: exponents[j],
                z: (g == 0).then(|| [p[0] / eps[last], p[1] / eps[last]]),
                q: [p[0] / outer, p[1] / outer],
                ratio: ratios[last],
                diverges: g > 0 && growing && exponents[critical] - exponents[j] >= EXPONENT_GAP,
            });
        }
    }
    poles.sort_by_key(|p| p.label);
    let groups = groups
        .into_iter()
        .map(|(members, ok)| CascadeGroup {
            exponent: members.iter().map(|&j| exponents[j]).sum::<f64>() / members.len() as f64,
            labels: {
                let mut l: Vec<usize> = members.iter().map(|&j| label_of(j)).collect();
                l.sort_unstable();
                l
            },
            resolved: ok,
        })
        .collect();
    Ok(CascadeReport {
        ks: ks.to_vec(),
        s,
        s1,
        groups,
        poles,
        eps,
        resolved,
        notes,
    })
}

pub fn detect_family_cascade(family: &CollapsingFamily) -> Result<CascadeReport> {
    detect_cascade(&family.identity_tracks(), &family.ks())
}

/// Growth of `ξ_k(0) + 2 ln ε_k + 2 Σ α_j ln|p_{j,k}|` along the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTrend {
    pub ks: Vec<usize>,
    pub values: Vec<f64>,
    /// Least-squares slope against `ln k`.
    pub slope: f64,
    pub monotone_increasing: bool,
    /// Monotone increase with a slope above the trend threshold.
    pub diverging: bool,
}

/// `peaks[i]` is `ξ(0̂)` of member `i`; `multiplicities[j]` belongs to track `j`.
pub fn peak_scale_divergence_check(
    peaks: &[f64],
    tracks: &[Vec<Point>],
    multiplicities: &[u32],
    report: &CascadeReport,
) -> Result<DivergenceTrend> {
    let levels = report.ks.len();
    if peaks.len() != levels || tracks.len() != levels {
        return Err(Error::Data(format!(
            "expected {levels} peaks and pole sets, got {} and {}",
            peaks.len(),
            tracks.len()
        )));
    }
    if multiplicities.len() != report.s {
        return Err(Error::Data(format!(
            "expected {} multiplicities, got {}",
            report.s,
            multiplicities.len()
        )));
    }
    let values: Vec<f64> = (0..levels)
        .map(|i| {
            let poles: f64 = tracks[i]
                .iter()
                .zip(multiplicities)
                .map(|(p, &a)| a as f64 * modulus(*p).ln())
                .sum();
            peaks[i] + 2.0 * report.eps[i].ln() + 2.0 * poles
        })
        .collect();
    let log_k: Vec<f64> = report.ks.iter().map(|&k| (k as f64).ln()).collect();
    let slope = lsq_slope(&log_k, &values)?;
    let monotone_increasing = values.windows(2).all(|w| w[1] > w[0]);
    Ok(DivergenceTrend {
        ks: report.ks.clone(),
        values,
        slope,
        monotone_increasing,
        diverging: monotone_increasing && slope > TREND_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracks(rule: &[(f64, Point)], ks: &[usize]) -> Vec<Vec<Point>> {
        ks.iter()
            .map(|&k| {
                rule.iter()
                    .map(|&(e, d)| {
                        let m = (k as f64).powf(-e);
                        [m * d[0], m * d[1]]
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn symmetric_pair_is_one_group() {
        let ks: Vec<usize> = (1..=6).collect();
        let t = tracks(&[(2.0, [1.0, 0.0]), (2.0, [-1.0, 0.0])], &ks);
        let r = detect_cascade(&t, &ks).unwrap();
        assert_eq!(r.s1, 2);
        assert_eq!(r.groups.len(), 1);
        let z: Vec<Point> = r.poles.iter().map(|p| p.z.unwrap()).collect();
        assert!(z.contains(&[1.0, 0.0]) && z.contains(&[-1.0, 0.0]));
    }

    #[test]
    fn slower_pole_diverges() {
        let ks: Vec<usize> = (1..=6).collect();
        let t = tracks(
            &[(2.0, [1.0, 0.0]), (2.0, [-1.0, 0.0]), (1.0, [1.0, 0.0])],
            &ks,
        );
        let r = detect_cascade(&t, &ks).unwrap();
        assert_eq!(r.s1, 2);
        assert_eq!(r.groups.len(), 2);
        let third = &r.poles[2];
        assert!(third.diverges);
        assert!((third.ratio - 6.0).abs() < 1e-12);
        assert!((third.q[0] - 1.0).abs() < 1e-15);
        for (e, k) in r.eps.iter().zip(&ks) {
            assert!((e - (*k as f64).powi(-2)).abs() < 1e-15);
        }
    }

    #[test]
    fn drifting_ratio_is_unresolved() {
        let ks: Vec<usize> = (1..=6).collect();
        let t = tracks(&[(1.0, [1.0, 0.0]), (1.05, [0.0, 1.0])], &ks);
        let r = detect_cascade(&t, &ks).unwrap();
        assert!(!r.resolved);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn constant_peaks_do_not_diverge() {
        let ks: Vec<usize> = (1..=5).collect();
        let t = tracks(&[(1.0, [1.0, 0.0]), (1.0, [-1.0, 0.0])], &ks);
        let r = detect_cascade(&t, &ks).unwrap();
        let d = peak_scale_divergence_check(&[1.0; 5], &t, &[1, 1], &r).unwrap();
        assert!(!d.diverging);
        assert!(d.slope < 0.0);
    }
}
