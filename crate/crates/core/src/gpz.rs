//! Transition-zone location from dimension-normalized radius profiles.
//!
//! The drop between consecutive target layers is
//! `(R̃²_prev − R̃²_cur) / R̃²_prev × 100`. The transition peak `l_TP` is the
//! layer receiving the largest drop and the transition start `l_TS` is the
//! layer with the largest drop strictly before it. When every layer strictly
//! between the two moves by less than `τ · 100` percent the transition is
//! localized at `l_TP`; otherwise the zone spans `l_TS..=l_TP`.
//!
//! Ties go to the shallower layer. Drops whose previous radius is zero are
//! undefined and never selected. If no defined drop precedes `l_TP`, then
//! `l_TS = l_TP` and the report is flagged `no_precursor`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

pub const DEFAULT_TAU: f64 = 0.20;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRadiusProfile {
    /// Position in the target-layer list.
    pub layer_index: usize,
    pub layer_name: String,
    pub d: usize,
    pub r2: f64,
    pub r2_norm: f64,
    /// Drop from the previous profile in percent; `None` for the first
    /// profile and for undefined drops.
    pub drop_pct: Option<f64>,
}

impl LayerRadiusProfile {
    /// Profile from a raw radius; `drop_pct` left empty.
    pub fn new(layer_index: usize, layer_name: impl Into<String>, d: usize, r2: f64) -> Result<Self> {
        let r2_norm = crate::repr_stats::normalized_radius(r2, d)?;
        Ok(Self {
            layer_index,
            layer_name: layer_name.into(),
            d,
            r2,
            r2_norm,
            drop_pct: None,
        })
    }
}

/// Profiles with `d = 1`, so that `r2_norm` is the given value.
pub fn profiles_from_normalized(values: &[f64]) -> Result<Vec<LayerRadiusProfile>> {
    let mut out = values
        .iter()
        .enumerate()
        .map(|(i, &v)| LayerRadiusProfile::new(i, alloc::format!("layer{i}"), 1, v))
        .collect::<Result<Vec<_>>>()?;
    fill_drops(&mut out);
    Ok(out)
}

pub(crate) fn fill_drops(profiles: &mut [LayerRadiusProfile]) {
    let drops = pairwise_drops(profiles);
    if let Some(first) = profiles.first_mut() {
        first.drop_pct = None;
    }
    for (p, d) in profiles.iter_mut().skip(1).zip(drops) {
        p.drop_pct = d;
    }
}

fn pairwise_drops(profiles: &[LayerRadiusProfile]) -> Vec<Option<f64>> {
    profiles
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0].r2_norm, w[1].r2_norm);
            if prev > 0.0 {
                Some((prev - cur) / prev * 100.0)
            } else {
                None
            }
        })
        .collect()
}

/// Signed percentage drops between consecutive profiles (`n − 1` entries).
pub fn drop_percentages(profiles: &[LayerRadiusProfile]) -> Result<Vec<Option<f64>>> {
    if profiles.len() < 2 {
        return Err(invalid("profiles", "at least two layers are needed"));
    }
    Ok(pairwise_drops(profiles))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropEntry {
    pub from: usize,
    pub to: usize,
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpzReport {
    pub l_ts: usize,
    pub l_tp: usize,
    pub zone: Vec<usize>,
    pub localized: bool,
    pub no_precursor: bool,
    /// Whether the peak drop reaches `τ · 100` percent.
    pub peak_above_tau: bool,
    pub tau: f64,
    pub drops: Vec<DropEntry>,
    /// Layer indices of the profiles the report was computed from.
    pub layers: Vec<usize>,
}

fn argmax_first(drops: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in drops.iter().enumerate() {
        if let Some(v) = *d {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn locate(profiles: &[LayerRadiusProfile], tau: f64) -> Result<GpzReport> {
    if profiles.len() < 3 {
        return Err(invalid("profiles", "at least three layers are needed"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(invalid("tau", "must lie in (0, 1]"));
    }
    let drops = pairwise_drops(profiles);
    // drops[j] is the drop into profile j + 1.
    let peak = argmax_first(&drops).ok_or_else(|| invalid("profiles", "every drop is undefined"))?;
    let start = argmax_first(&drops[..peak]);
    let no_precursor = start.is_none();
    let start = start.unwrap_or(peak);

    let threshold = tau * 100.0;
    let localized = drops[(start + 1).min(peak)..peak]
        .iter()
        .all(|d| matches!(d, Some(v) if v.abs() < threshold));
    let peak_above_tau = drops[peak].is_some_and(|v| v >= threshold);

    let idx = |j: usize| profiles[j + 1].layer_index;
    let zone = if localized {
        alloc::vec![idx(peak)]
    } else {
        (start..=peak).map(idx).collect()
    };
    Ok(GpzReport {
        l_ts: idx(start),
        l_tp: idx(peak),
        zone,
        localized,
        no_precursor,
        peak_above_tau,
        tau,
        drops: drops
            .iter()
            .enumerate()
            .map(|(j, &pct)| DropEntry {
                from: profiles[j].layer_index,
                to: profiles[j + 1].layer_index,
                pct,
            })
            .collect(),
        layers: profiles.iter().map(|p| p.layer_index).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    /// Fraction of reports whose zone equals the most common zone.
    pub agreement: f64,
    /// Mean Jaccard index of the zones over all pairs.
    pub mean_jaccard: f64,
}

pub fn stability_check(reports: &[GpzReport]) -> Result<Stability> {
    if reports.len() < 2 {
        return Err(invalid("reports", "at least two reports are needed"));
    }
    if reports.iter().any(|r| r.layers != reports[0].layers) {
        return Err(invalid("reports", "reports cover different layer lists"));
    }
    let mut modal_count = 0;
    for r in reports {
        let count = reports.iter().filter(|o| o.zone == r.zone).count();
        modal_count = modal_count.max(count);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            total += jaccard(&reports[i].zone, &reports[j].zone);
            pairs += 1;
        }
    }
    Ok(Stability {
        agreement: modal_count as f64 / reports.len() as f64,
        mean_jaccard: total / pairs as f64,
    })
}

/// `|A ∩ B| / |A ∪ B|`, 1 for two empty sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.iter().filter(|x| !a.contains(x)).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
