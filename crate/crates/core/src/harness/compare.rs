//! Side-by-side integrator runs of the spiking network and the rate model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{journey_seed, prepare_calibration, JourneyConfig, Mode};
use crate::agent_world::{self, AgentState, SensorRates};
use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::rate_oracle::{RateNetwork, W_SUP_MAX};
use crate::spiking_core::Simulation;

pub const COMPARE_SCHEMA: &str = "cxnav-compare/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusGap {
    pub index: usize,
    pub seed: u64,
    /// Largest |spiking total - rate accumulator| over cells at the end of the stimulus.
    pub final_max_gap: f64,
    /// Largest gap seen at any update.
    pub peak_gap: f64,
    pub mean_abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema: String,
    pub updates: usize,
    pub full_scale: f64,
    pub stimuli: Vec<StimulusGap>,
    /// Worst final gap as a fraction of full scale.
    pub worst_final_fraction: f64,
}

/// Sensor readings along a random outbound walk.
pub fn random_stimulus(config: &JourneyConfig, seed: u64, updates: usize) -> Vec<SensorRates> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = AgentState::at_home(0.0, config.world.outbound_speed);
    (0..updates)
        .map(|_| {
            agent = agent_world::step_outbound(&agent, &mut rng, &config.world);
            SensorRates::sense(&agent, &config.world)
        })
        .collect()
}

/// Drive both integrator implementations with `n` shared random stimuli of `updates` windows.
pub fn compare_integrators(
    config: &JourneyConfig,
    genome: &Genome,
    n: usize,
    updates: usize,
    seed: u64,
) -> Result<CompareReport> {
    if n == 0 || updates == 0 {
        return Err(Error::Usage(
            "compare needs at least one stimulus of at least one update".into(),
        ));
    }
    let spk_cfg = JourneyConfig {
        mode: Mode::Spiking,
        ..config.clone()
    };
    let rate_cfg = JourneyConfig {
        mode: Mode::Rate,
        ..config.clone()
    };
    let spk_cal = prepare_calibration(&spk_cfg)?;
    let rate_cal = prepare_calibration(&rate_cfg)?;
    let stimuli = (0..n)
        .into_par_iter()
        .map(|i| {
            let s_seed = journey_seed(seed, i);
            let mut sim = Simulation::new(&spk_cfg, genome, &spk_cal, s_seed)?;
            let mut net = RateNetwork::new(genome, &rate_cal, config.h, config.k);
            let (mut peak, mut sum, mut last) = (0.0f64, 0.0, 0.0);
            for s in random_stimulus(config, s_seed, updates) {
                sim.stimulate(&s);
                net.step(&s);
                let totals = sim.cpu4_totals();
                let gaps = (0..8).map(|c| (totals[c] as f64 - net.state.cpu4_state[c]).abs());
                last = gaps.clone().fold(0.0, f64::max);
                sum += gaps.sum::<f64>() / 8.0;
                peak = peak.max(last);
            }
            Ok(StimulusGap {
                index: i,
                seed: s_seed,
                final_max_gap: last,
                peak_gap: peak,
                mean_abs_gap: sum / updates as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = stimuli.iter().map(|s| s.final_max_gap).fold(0.0, f64::max) / W_SUP_MAX;
    Ok(CompareReport {
        schema: COMPARE_SCHEMA.into(),
        updates,
        full_scale: W_SUP_MAX,
        stimuli,
        worst_final_fraction: worst,
    })
}
