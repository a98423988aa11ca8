use serde::{Deserialize, Serialize};

use super::trajectory::{Phase, Trajectory};
use crate::error::{Error, Result};

/// Per-journey outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyRecord {
    pub index: usize,
    pub seed: u64,
    pub outbound_radius: f64,
    pub return_x: f64,
    pub return_y: f64,
    pub deviation: f64,
    pub looping_radius: f64,
    pub min_looping_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n_journeys: usize,
    pub mean_dx: f64,
    pub mean_dy: f64,
    pub std_dx: f64,
    pub std_dy: f64,
    pub overlap_fraction: f64,
    pub within_1000_fraction: f64,
    pub median_outbound_radius: f64,
    pub mean_return_deviation: f64,
    pub mean_return_deviation_pct: f64,
    pub mean_looping_radius: f64,
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len();
    v.sum::<f64>() / n as f64
}

pub fn journey_record(index: usize, traj: &Trajectory) -> Result<JourneyRecord> {
    let looping: Vec<(f64, f64)> = traj
        .phase_points(Phase::Looping)
        .map(|p| (p.x, p.y))
        .collect();
    if looping.is_empty() {
        return Err(Error::Usage(format!(
            "journey {index} has no looping phase"
        )));
    }
    let outbound = traj
        .phase_points(Phase::Outbound)
        .last()
        .ok_or_else(|| Error::Usage(format!("journey {index} has no outbound phase")))?;
    let cx = mean(looping.iter().map(|p| p.0));
    let cy = mean(looping.iter().map(|p| p.1));
    Ok(JourneyRecord {
        index,
        seed: traj.meta.seed,
        outbound_radius: outbound.x.hypot(outbound.y),
        return_x: cx,
        return_y: cy,
        deviation: cx.hypot(cy),
        looping_radius: mean(looping.iter().map(|p| (p.0 - cx).hypot(p.1 - cy))),
        min_looping_distance: looping
            .iter()
            .map(|p| p.0.hypot(p.1))
            .fold(f64::INFINITY, f64::min),
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Whether a journey counts as overlapping home: its return location lies within
/// 1000 steps and its looping path passes within `d_overlap` of the origin.
pub fn overlaps(r: &JourneyRecord, d_overlap: f64) -> bool {
    r.deviation <= 1000.0 && r.min_looping_distance <= d_overlap
}

pub fn summarize(records: &[JourneyRecord], d_overlap: f64) -> Result<SummaryStats> {
    if records.is_empty() {
        return Err(Error::Usage("summary of an empty batch".into()));
    }
    let n = records.len() as f64;
    let mean_dx = mean(records.iter().map(|r| r.return_x));
    let mean_dy = mean(records.iter().map(|r| r.return_y));
    let sd = |f: &dyn Fn(&JourneyRecord) -> f64, m: f64| {
        if records.len() < 2 {
            0.0
        } else {
            (records.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    };
    let median_outbound_radius = median(
        &mut records
            .iter()
            .map(|r| r.outbound_radius)
            .collect::<Vec<_>>(),
    );
    let mean_return_deviation = mean(records.iter().map(|r| r.deviation));
    Ok(SummaryStats {
        n_journeys: records.len(),
        mean_dx,
        mean_dy,
        std_dx: sd(&|r| r.return_x, mean_dx),
        std_dy: sd(&|r| r.return_y, mean_dy),
        overlap_fraction: records.iter().filter(|r| overlaps(r, d_overlap)).count() as f64 / n,
        within_1000_fraction: records.iter().filter(|r| r.deviation <= 1000.0).count() as f64 / n,
        median_outbound_radius,
        mean_return_deviation,
        mean_return_deviation_pct: 100.0 * mean_return_deviation / median_outbound_radius,
        mean_looping_radius: mean(records.iter().map(|r| r.looping_radius)),
    })
}

pub fn summary_stats(trajectories: &[Trajectory], d_overlap: f64) -> Result<SummaryStats> {
    let records = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| journey_record(i, t))
        .collect::<Result<Vec<_>>>()?;
    summarize(&records, d_overlap)
}

/// Fraction of journeys whose return location lies within `frac` of the median outbound radius.
pub fn fraction_within(records: &[JourneyRecord], frac: f64) -> f64 {
    let med = median(
        &mut records
            .iter()
            .map(|r| r.outbound_radius)
            .collect::<Vec<_>>(),
    );
    records.iter().filter(|r| r.deviation <= frac * med).count() as f64
        / records.len().max(1) as f64
}
