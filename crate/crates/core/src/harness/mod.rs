//! Configuration, journey dispatch, batch statistics and file export.

mod compare;
mod config;
mod stats;
mod trajectory;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use compare::{
    compare_integrators, random_stimulus, CompareReport, StimulusGap, COMPARE_SCHEMA,
};
pub use config::{BatchConfig, Fidelity, JourneyConfig, Mode, RunConfig};
pub use stats::{
    fraction_within, journey_record, median, overlaps, summarize, summary_stats, JourneyRecord,
    SummaryStats,
};
pub use trajectory::{Phase, RecordStatus, Trajectory, TrajectoryMeta, TrajectoryPoint};

use crate::calibration::{self, apply_fixed_pattern_noise, CalibrationTable, OracleProbe};
use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::rate_oracle::run_rate_journey;
use crate::seeds::{self, Stream};
use crate::spiking_core::{self, run_spiking_journey, SpikeRecord};

pub const STATS_SCHEMA: &str = "cxnav-stats/1";

/// Walk seed of journey `index` in a batch with master seed `seed`.
pub fn journey_seed(seed: u64, index: usize) -> u64 {
    seeds::derive(seed, Stream::Journey, index as u64)
}

type CalibrationCache = Mutex<HashMap<(u64, u64, u64), CalibrationTable>>;

fn spiking_cache() -> &'static CalibrationCache {
    static CACHE: OnceLock<CalibrationCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Calibration table for the configured mode and mismatch.
///
/// Rate mode: the ideal rate cells are calibrated and the mismatch is then applied
/// as residual error on top. Spiking mode: the mismatch perturbs the emulated chip
/// and every neuron is calibrated by measurement (cached per chip).
pub fn prepare_calibration(config: &JourneyConfig) -> Result<CalibrationTable> {
    match config.mode {
        Mode::Rate => {
            let table = calibration::calibrate_all(&OracleProbe::ideal(), Mode::Rate)?;
            apply_fixed_pattern_noise(&table, config.noise_cv, config.noise_seed)
        }
        Mode::Spiking => {
            let key = (
                config.noise_cv.to_bits(),
                config.noise_seed,
                config.schedule.dt_neuron_ms.to_bits(),
            );
            if let Some(t) = spiking_cache().lock().expect("cache lock").get(&key) {
                return Ok(t.clone());
            }
            let t = spiking_core::calibrate_chip(config)?;
            spiking_cache()
                .lock()
                .expect("cache lock")
                .insert(key, t.clone());
            Ok(t)
        }
    }
}

#[derive(Debug, Clone)]
pub struct JourneyOutput {
    pub trajectory: Trajectory,
    pub spikes: Option<SpikeRecord>,
}

/// Run one journey in the configured mode with the given walk seed.
pub fn run_journey(
    config: &JourneyConfig,
    genome: &Genome,
    cal: &CalibrationTable,
    walk_seed: u64,
) -> Result<JourneyOutput> {
    let mut cfg = config.clone();
    cfg.seed = walk_seed;
    match cfg.mode {
        Mode::Rate => {
            let mut rng = ChaCha8Rng::seed_from_u64(walk_seed);
            let (trajectory, _) = run_rate_journey(&cfg, genome, cal, &mut rng)?;
            Ok(JourneyOutput {
                trajectory,
                spikes: None,
            })
        }
        Mode::Spiking => {
            let (trajectory, spikes, _) = run_spiking_journey(&cfg, genome, cal, walk_seed)?;
            Ok(JourneyOutput {
                trajectory,
                spikes: cfg.schedule.record_spikes.then_some(spikes),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub stats: SummaryStats,
    pub records: Vec<JourneyRecord>,
    pub trajectories: Vec<Trajectory>,
    /// (journey index, error message) for journeys that failed and were excluded.
    pub failures: Vec<(usize, String)>,
}

pub fn run_batch(
    config: &JourneyConfig,
    genome: &Genome,
    cal: &CalibrationTable,
    n_journeys: usize,
    seed: u64,
) -> Result<BatchResult> {
    if n_journeys == 0 {
        return Err(Error::Usage("a batch needs at least one journey".into()));
    }
    let mut cfg = config.clone();
    cfg.schedule.record_spikes = false;
    let results: Vec<Result<(JourneyRecord, Trajectory)>> = (0..n_journeys)
        .into_par_iter()
        .map(|i| {
            let out = run_journey(&cfg, genome, cal, journey_seed(seed, i))?;
            let rec = journey_record(i, &out.trajectory)?;
            Ok((rec, out.trajectory))
        })
        .collect();
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((rec, t)) => {
                records.push(rec);
                trajectories.push(t);
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::Runtime(format!(
            "all {n_journeys} journeys failed; first: {}",
            failures[0].1
        )));
    }
    let stats = summarize(&records, config.d_overlap())?;
    Ok(BatchResult {
        stats,
        records,
        trajectories,
        failures,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsDocument {
    pub schema: String,
    pub mode: Mode,
    pub seed: u64,
    pub genome_hash: String,
    pub stats: SummaryStats,
    pub within_10pct_fraction: f64,
    pub failures: Vec<(usize, String)>,
    pub journeys: Vec<JourneyRecord>,
}

impl StatsDocument {
    pub fn new(config: &JourneyConfig, genome: &Genome, seed: u64, batch: &BatchResult) -> Self {
        Self {
            schema: STATS_SCHEMA.into(),
            mode: config.mode,
            seed,
            genome_hash: genome.hash(),
            stats: batch.stats.clone(),
            within_10pct_fraction: fraction_within(&batch.records, 0.1),
            failures: batch.failures.clone(),
            journeys: batch.records.clone(),
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    write_file(path, &buf)
}

pub fn write_spikes(path: &Path, s: &SpikeRecord) -> Result<()> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    write_file(path, &buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}
