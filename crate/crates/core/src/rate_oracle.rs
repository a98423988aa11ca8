//! Analytic rate model of the full steering network.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent_world::{self, tb1_preferred, AgentState, SensorRates};
use crate::calibration::{CalibrationTable, Tuning};
use crate::error::{Error, Result};
use crate::genome::{cell, Genome, Side};
use crate::harness::{JourneyConfig, Phase, Trajectory};

/// Full scale of the integrator accumulator (16 synapses of 63).
pub const W_SUP_MAX: f64 = 1008.0;
/// Accumulator value at the start of a journey.
pub const CPU4_BASELINE: f64 = 504.0;
/// Spike slots per update window; a normalized rate of 1 is this many counts.
pub const COUNTS_PER_WINDOW: f64 = 10.0;
/// Synapse weight (LSB) carrying the reference stimuli during steering-cell calibration.
pub const CPU1_REF_WEIGHT: f64 = 2.0;
/// Motor weight (LSB) giving unit transmission from mean steering rate to motor rate.
pub const MOTOR_UNIT_WEIGHT: f64 = 32.0;
/// Logistic slope and offset that best reproduce `r_exc * (1 - r_inh)` as a function
/// of `r_exc - r_inh` (weighted least squares on the calibration grid).
pub const PRODUCT_FIT_A: f64 = 3.5790;
pub const PRODUCT_FIT_B: f64 = 1.6135;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateNeuronParams {
    pub a: f64,
    pub b: f64,
}

impl RateNeuronParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !b.is_finite() {
            return Err(Error::Usage(format!(
                "logistic needs a > 0 and finite b, got a={a} b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// Steering cell as calibrated, with input in synapse-LSB units.
    pub fn cpu1_nominal() -> Self {
        Self {
            a: PRODUCT_FIT_A / CPU1_REF_WEIGHT,
            b: PRODUCT_FIT_B,
        }
    }

    /// Fold a gain/offset correction on the input into the logistic.
    pub fn tuned(&self, t: Tuning) -> Self {
        Self {
            a: self.a * t.gain,
            b: self.b - self.a * t.offset,
        }
    }
}

pub fn synaptic_input(weights: &[f64], rates: &[f64]) -> Result<f64> {
    if weights.len() != rates.len() {
        return Err(Error::Usage(format!(
            "{} weights for {} rates",
            weights.len(),
            rates.len()
        )));
    }
    Ok(weights.iter().zip(rates).map(|(w, r)| w * r).sum())
}

pub fn logistic_response(input: f64, p: &RateNeuronParams) -> f64 {
    1.0 / (1.0 + (-(p.a * input - p.b)).exp())
}

pub fn cpu4_state_update(i_prev: f64, c_tn: f64, c_tb1: f64, h: f64, k: f64) -> f64 {
    (i_prev + h * (c_tn - c_tb1 - k)).clamp(0.0, W_SUP_MAX)
}

/// Integrator output rate. The nominal cell gives `state / 1008`; a tuning scales
/// deviations around mid-range and shifts the result.
pub fn cpu4_rate(state: f64, t: Tuning) -> f64 {
    (0.5 + t.gain * (state / W_SUP_MAX - 0.5) + t.offset).clamp(0.0, 1.0)
}

/// Compass cell that inhibits integrator cell `j` (the one tuned to the opposite direction).
pub fn cpu4_tb1_source(j: usize) -> usize {
    (j + 2) % 4
}

/// Compass cell inhibiting steering cell `j` of `side`.
pub fn cpu1_tb1_source(side: Side, j: usize) -> usize {
    match side {
        Side::Left => (j + 1) % 4,
        Side::Right => (j + 3) % 4,
    }
}

/// Integrator cell (flat index) inhibiting steering cell `j` of `side`.
pub fn cpu1_inh_source(side: Side, j: usize) -> usize {
    cell(side.other(), (j + 2) % 4)
}

/// Net input of each steering cell, in synapse-LSB times normalized rate.
pub fn cpu1_inputs(cpu4_rates: &[f64; 8], tb1: &[f64; 4], genome: &Genome) -> [f64; 8] {
    let mut out = [0.0; 8];
    for side in Side::BOTH {
        for j in 0..4 {
            out[cell(side, j)] = genome.cpu4_exc(side, j) * cpu4_rates[cell(side, j)]
                - genome.cpu4_inh(side, j) * cpu4_rates[cpu1_inh_source(side, j)]
                - genome.tb1_to_cpu1(side, j) * tb1[cpu1_tb1_source(side, j)];
        }
    }
    out
}

pub fn cpu1_rates(
    cpu4_rates: &[f64; 8],
    tb1: &[f64; 4],
    genome: &Genome,
    params: &[RateNeuronParams; 8],
) -> [f64; 8] {
    let inputs = cpu1_inputs(cpu4_rates, tb1, genome);
    std::array::from_fn(|i| logistic_response(inputs[i], &params[i]))
}

/// Scaled mean of each hemisphere's steering rates, before the motor transfer.
pub fn motor_drive(cpu1_rates: &[f64; 8], genome: &Genome) -> (f64, f64) {
    let side = |s: Side| {
        let mean = cpu1_rates[s.index() * 4..s.index() * 4 + 4]
            .iter()
            .sum::<f64>()
            / 4.0;
        genome.cpu1_to_m(s) / MOTOR_UNIT_WEIGHT * mean
    };
    (side(Side::Left), side(Side::Right))
}

pub fn motor_rates(cpu1_rates: &[f64; 8], genome: &Genome) -> (f64, f64) {
    let (l, r) = motor_drive(cpu1_rates, genome);
    (l.clamp(0.0, 1.0), r.clamp(0.0, 1.0))
}

/// Direction (radians) that integrator cell `j` points home to.
pub fn cpu4_home_direction(j: usize) -> f64 {
    tb1_preferred(j) + PI
}

pub fn decode_home_vector(cpu4_state: &[f64; 8]) -> [f64; 2] {
    cpu4_state
        .iter()
        .enumerate()
        .fold([0.0, 0.0], |[x, y], (i, s)| {
            let d = cpu4_home_direction(i % 4);
            let m = s - CPU4_BASELINE;
            [x + m * d.cos(), y + m * d.sin()]
        })
}

/// Source counts driving integrator cells in the last window: (tn, tb1) per cell.
/// Each hemisphere's integrators take optic flow from the opposite-side sensor.
pub fn cpu4_drive_counts(s: &SensorRates) -> [(f64, f64); 8] {
    std::array::from_fn(|i| {
        let tn = if i < 4 { s.tn_r } else { s.tn_l };
        (
            COUNTS_PER_WINDOW * tn,
            COUNTS_PER_WINDOW * s.tb1[cpu4_tb1_source(i % 4)],
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateNetworkState {
    pub cpu4_state: [f64; 8],
    pub cpu4_rates: [f64; 8],
    pub cpu1_rates: [f64; 8],
    pub motor_rates: (f64, f64),
}

impl Default for RateNetworkState {
    fn default() -> Self {
        Self {
            cpu4_state: [CPU4_BASELINE; 8],
            cpu4_rates: [0.5; 8],
            cpu1_rates: [0.0; 8],
            motor_rates: (0.0, 0.0),
        }
    }
}

/// Rate network with per-cell tunings taken from a calibration table.
#[derive(Debug, Clone)]
pub struct RateNetwork {
    genome: Genome,
    cpu4: [Tuning; 8],
    cpu1: [RateNeuronParams; 8],
    motor: [Tuning; 2],
    h: f64,
    k: f64,
    pub state: RateNetworkState,
}

impl RateNetwork {
    pub fn new(genome: &Genome, cal: &CalibrationTable, h: f64, k: f64) -> Self {
        let base = RateNeuronParams::cpu1_nominal();
        Self {
            genome: genome.materialize(),
            cpu4: std::array::from_fn(|i| cal.cpu4(i)),
            cpu1: std::array::from_fn(|i| base.tuned(cal.cpu1(i))),
            motor: [cal.motor(Side::Left), cal.motor(Side::Right)],
            h,
            k,
            state: RateNetworkState::default(),
        }
    }

    /// Integrate one window of sensory input and recompute all rates.
    pub fn step(&mut self, sensors: &SensorRates) -> (f64, f64) {
        let counts = cpu4_drive_counts(sensors);
        let st = &mut self.state;
        for (i, (c_tn, c_tb1)) in counts.iter().enumerate() {
            st.cpu4_state[i] = cpu4_state_update(st.cpu4_state[i], *c_tn, *c_tb1, self.h, self.k);
            st.cpu4_rates[i] = cpu4_rate(st.cpu4_state[i], self.cpu4[i]);
        }
        st.cpu1_rates = cpu1_rates(&st.cpu4_rates, &sensors.tb1, &self.genome, &self.cpu1);
        let (l, r) = motor_drive(&st.cpu1_rates, &self.genome);
        let m = |x: f64, t: Tuning| (t.gain * x + t.offset).clamp(0.0, 1.0);
        st.motor_rates = (m(l, self.motor[0]), m(r, self.motor[1]));
        st.motor_rates
    }
}

/// Per-update network record of a rate journey.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateLog {
    pub cpu4_state: Vec<[f64; 8]>,
    pub motor_rates: Vec<(f64, f64)>,
}

/// Advance the agent one update: outbound walk before the return switch, motor-driven after.
pub(crate) fn agent_update<R: Rng + ?Sized>(
    agent: &AgentState,
    step: usize,
    n_return: usize,
    motor: (f64, f64),
    rng: &mut R,
    config: &JourneyConfig,
) -> AgentState {
    if step < n_return {
        agent_world::step_outbound(agent, rng, &config.world)
    } else {
        agent_world::apply_motor(agent, motor.0, motor.1, &config.world)
    }
}

pub fn run_rate_journey<R: Rng + ?Sized>(
    config: &JourneyConfig,
    genome: &Genome,
    cal: &CalibrationTable,
    rng: &mut R,
) -> Result<(Trajectory, RateLog)> {
    config.validate()?;
    let n = config.n_updates();
    let n_return = config.n_return();
    let mut net = RateNetwork::new(genome, cal, config.h, config.k);
    let mut agent = AgentState::at_home(0.0, config.world.outbound_speed);
    let mut traj = Trajectory::for_config(config, genome.hash());
    let mut log = RateLog {
        cpu4_state: Vec::with_capacity(n),
        motor_rates: Vec::with_capacity(n),
    };
    let mut motor = (0.0, 0.0);
    for t in 0..n {
        agent = agent_update(&agent, t, n_return, motor, rng, config);
        let sensors = SensorRates::sense(&agent, &config.world);
        motor = net.step(&sensors);
        log.cpu4_state.push(net.state.cpu4_state);
        log.motor_rates.push(motor);
        if traj.wants(t, config.schedule.record_stride) {
            traj.record_position(
                &agent,
                t as u64,
                t as f64 * config.dt_update_ms,
                Phase::of(t, n_return),
            );
        }
    }
    Ok((traj, log))
}
