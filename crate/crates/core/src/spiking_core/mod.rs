//! Clock-driven LIF emulation of the network with quantized integrator synapses.

pub mod connectome;
pub mod lif;
pub mod record;
pub mod source;
pub mod supersynapse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use connectome::{build_network, Connectome, Pre, SynWeight, Synapse};
pub use lif::{deliver_spike, lif_step, LifParams, LifStepper, NeuronState, Sign};
pub use record::{Population as SpikePopulation, SpikeEvent, SpikeRecord};
pub use source::{spike_source_tick, SourceMode, SpikeSource};
pub use supersynapse::Supersynapse;

use crate::agent_world::{AgentState, SensorRates};
use crate::calibration::{
    self, CalibrationTable, FixedPattern, NeuronRecord, Population, Stimulus, TransferProbe,
    Tuning, N_NEURONS,
};
use crate::error::{Error, Result};
use crate::genome::{Genome, Side};
use crate::harness::{JourneyConfig, Mode, Phase, Trajectory};
use crate::rate_oracle::{self, COUNTS_PER_WINDOW, CPU1_REF_WEIGHT, MOTOR_UNIT_WEIGHT};
use crate::seeds::{self, Stream};
use connectome::{background_source, tb1_source, tn_source, N_SOURCES};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub dt_spike_slot_ms: f64,
    pub dt_neuron_ms: f64,
    pub record_stride: usize,
    pub max_records: usize,
    pub source_mode: SourceMode,
    /// Uniform jitter of source spike times, as a fraction of one slot.
    pub jitter: f64,
    pub record_spikes: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            dt_spike_slot_ms: 10.0,
            dt_neuron_ms: 0.1,
            record_stride: 2,
            max_records: 1000,
            source_mode: SourceMode::Periodic,
            jitter: 0.0,
            record_spikes: true,
        }
    }
}

fn divides(small: f64, big: f64) -> Option<usize> {
    let r = big / small;
    let n = r.round();
    (small > 0.0 && (r - n).abs() < 1e-9 && n >= 1.0).then_some(n as usize)
}

impl ScheduleConfig {
    pub fn validate(&self, dt_update_ms: f64) -> Result<()> {
        divides(self.dt_spike_slot_ms, dt_update_ms)
            .ok_or_else(|| Error::Usage("dt_spike_slot must divide dt_update".into()))?;
        divides(self.dt_neuron_ms, self.dt_spike_slot_ms)
            .ok_or_else(|| Error::Usage("dt_neuron must divide dt_spike_slot".into()))?;
        if self.record_stride == 0 || self.max_records == 0 {
            return Err(Error::Usage(
                "record_stride and max_records must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::Usage("jitter must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn slots_per_update(&self, dt_update_ms: f64) -> usize {
        divides(self.dt_spike_slot_ms, dt_update_ms).unwrap_or(1)
    }

    pub fn steps_per_slot(&self) -> usize {
        divides(self.dt_neuron_ms, self.dt_spike_slot_ms).unwrap_or(1)
    }
}

/// Current per synapse LSB, per population, for the unperturbed chip.
pub const CPU4_SYN_GAIN: f64 = 2.2e-4;
pub const CPU1_SYN_GAIN: f64 = 9.45e-2;
pub const MOTOR_SYN_GAIN: f64 = 1.6e-3;
/// Constant current holding a steering cell at its firing threshold, so that balanced
/// excitation and inhibition leave it near the bottom of its operating range.
pub const CPU1_BASE_BIAS: f64 = 5e-3;
/// Constant current worth roughly one maximum-rate drive; unit of the bias correction.
pub const BIAS_UNIT: f64 = 0.1;
/// Threshold mismatch per unit of fixed-pattern offset, as a fraction of the reset-threshold gap.
pub const THRESHOLD_JITTER: f64 = 1.0;

/// Emulated analog parameters of one neuron on a given chip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronModel {
    pub stepper: LifStepper,
    pub syn_gain: f64,
    pub bias: f64,
}

/// LIF parameters, synaptic gain and base bias current of a population.
pub fn population_params(pop: Population) -> (LifParams, f64, f64) {
    match pop {
        Population::Cpu4 => (LifParams::cpu4(), CPU4_SYN_GAIN, 0.0),
        Population::Cpu1 => (LifParams::cpu1(), CPU1_SYN_GAIN, CPU1_BASE_BIAS),
        Population::Motor => (LifParams::motor(), MOTOR_SYN_GAIN, 0.0),
    }
}

impl NeuronModel {
    pub fn new(id: usize, chip: &FixedPattern, tuning: Tuning, dt: f64) -> Self {
        let (mut p, gain, base_bias) = population_params(Population::of(id));
        p.v_th += chip.offset[id] * THRESHOLD_JITTER * (p.v_th - p.v_reset);
        p.v_th = p
            .v_th
            .max(p.v_reset + 0.05 * (p.v_th - p.v_reset).abs().max(1e-3));
        Self {
            stepper: LifStepper::new(p, dt),
            syn_gain: gain * chip.gain[id] * tuning.gain,
            bias: base_bias + tuning.offset * BIAS_UNIT,
        }
    }
}

/// Per-journey output of the spiking simulation beyond the trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpikingLog {
    pub cpu4_totals: Vec<[u16; 8]>,
    pub cpu4_counts: Vec<[u32; 8]>,
    pub cpu1_counts: Vec<[u32; 8]>,
    pub motor_counts: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Copy)]
struct Fan {
    post: usize,
    sign: Sign,
    weight: f64,
}

/// One spiking journey in progress.
pub struct Simulation {
    config: JourneyConfig,
    pub connectome: Connectome,
    models: Vec<NeuronModel>,
    pub neurons: [NeuronState; N_NEURONS],
    sources: [SpikeSource; N_SOURCES],
    source_fan: Vec<Vec<Fan>>,
    neuron_fan: Vec<Vec<Fan>>,
    pub agent: AgentState,
    motor: (f64, f64),
    cycle: usize,
    n_return: usize,
    t_ms: f64,
    walk_rng: ChaCha8Rng,
    neural_rng: ChaCha8Rng,
    pub trajectory: Trajectory,
    pub spikes: SpikeRecord,
    pub log: SpikingLog,
    pending: Vec<usize>,
    source_counts: [u32; N_SOURCES],
}

fn fan_weight(w: SynWeight) -> f64 {
    match w {
        SynWeight::Fixed(w) => w as f64,
        SynWeight::Super(_) => 0.0,
    }
}

impl Simulation {
    /// Set up a journey. The walk uses `walk_seed`; neural randomness (Poisson sources,
    /// jitter) comes from a stream derived from it.
    pub fn new(
        config: &JourneyConfig,
        genome: &Genome,
        cal: &CalibrationTable,
        walk_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let chip = if config.noise_cv > 0.0 {
            FixedPattern::draw(config.noise_cv, config.noise_seed)?
        } else {
            FixedPattern::none()
        };
        let connectome = build_network(genome, cal)?;
        let dt = config.schedule.dt_neuron_ms;
        let models: Vec<NeuronModel> = (0..N_NEURONS)
            .map(|id| NeuronModel::new(id, &chip, connectome.tuning[id], dt))
            .collect();
        let mut source_fan = vec![Vec::new(); N_SOURCES];
        let mut neuron_fan = vec![Vec::new(); N_NEURONS];
        for s in &connectome.synapses {
            for pre in &s.pre {
                let f = Fan {
                    post: s.post,
                    sign: s.sign,
                    weight: fan_weight(s.weight),
                };
                match *pre {
                    Pre::Source(i) => source_fan[i].push(f),
                    Pre::Neuron(i) => neuron_fan[i].push(f),
                }
            }
        }
        let mode = config.schedule.source_mode;
        let mut sources = [SpikeSource::new(0.0, mode); N_SOURCES];
        for i in 0..8 {
            // the background drive is a clock, always periodic
            sources[background_source(i)] = SpikeSource::new(1.0, SourceMode::Periodic);
        }
        let neurons = std::array::from_fn(|id| NeuronState::rest(&models[id].stepper.params));
        Ok(Self {
            config: config.clone(),
            connectome,
            models,
            neurons,
            sources,
            source_fan,
            neuron_fan,
            agent: AgentState::at_home(0.0, config.world.outbound_speed),
            motor: (0.0, 0.0),
            cycle: 0,
            n_return: config.n_return(),
            t_ms: 0.0,
            walk_rng: ChaCha8Rng::seed_from_u64(walk_seed),
            neural_rng: ChaCha8Rng::seed_from_u64(seeds::derive(walk_seed, Stream::Neural, 0)),
            trajectory: Trajectory::for_config(config, genome.hash()),
            spikes: SpikeRecord::default(),
            log: SpikingLog::default(),
            pending: Vec::with_capacity(N_NEURONS),
            source_counts: [0; N_SOURCES],
        })
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn cpu4_totals(&self) -> [u16; 8] {
        std::array::from_fn(|i| self.connectome.supers[i].total())
    }

    /// Subcycle 1: move the agent and load the sensory sources.
    fn advance_agent(&mut self) {
        self.agent = rate_oracle::agent_update(
            &self.agent,
            self.cycle,
            self.n_return,
            self.motor,
            &mut self.walk_rng,
            &self.config,
        );
        let s = SensorRates::sense(&self.agent, &self.config.world);
        self.set_sensors(&s);
    }

    /// Load source rates for the coming window.
    pub fn set_sensors(&mut self, s: &SensorRates) {
        for j in 0..4 {
            self.sources[tb1_source(j)].set_rate(s.tb1[j]);
        }
        self.sources[tn_source(Side::Left)].set_rate(s.tn_l);
        self.sources[tn_source(Side::Right)].set_rate(s.tn_r);
        for src in &mut self.sources {
            src.reset_phase();
        }
    }

    fn spike_population(id: usize) -> SpikePopulation {
        match Population::of(id) {
            Population::Cpu4 => SpikePopulation::Cpu4,
            Population::Cpu1 => SpikePopulation::Cpu1,
            Population::Motor => SpikePopulation::Motor,
        }
    }

    fn source_population(i: usize) -> SpikePopulation {
        match i {
            0..=3 => SpikePopulation::Tb1,
            4 | 5 => SpikePopulation::Tn,
            _ => SpikePopulation::Background,
        }
    }

    fn deliver_source(&mut self, i: usize) {
        for f in &self.source_fan[i] {
            let w = if i >= background_source(0) {
                self.connectome.supers[i - background_source(0)].total() as f64
            } else {
                f.weight
            };
            deliver_spike(
                &mut self.neurons[f.post],
                f.sign,
                w,
                self.models[f.post].syn_gain,
            );
        }
    }

    /// Run the network for one update window with the current source rates.
    pub fn run_window(&mut self) {
        let sched = self.config.schedule.clone();
        let slots = sched.slots_per_update(self.config.dt_update_ms);
        let steps = sched.steps_per_slot();
        let dt = sched.dt_neuron_ms;
        let record = sched.record_spikes;
        let jitter = sched.jitter;
        self.source_counts = [0; N_SOURCES];
        let mut queued: Vec<(usize, usize)> = Vec::with_capacity(N_SOURCES);
        for slot in 0..slots {
            let slot_t = self.t_ms + slot as f64 * sched.dt_spike_slot_ms;
            queued.clear();
            for i in 0..N_SOURCES {
                if self.sources[i].tick(&mut self.neural_rng) {
                    self.source_counts[i] += 1;
                    let offset = if jitter > 0.0 {
                        ((self.neural_rng.random::<f64>() * jitter) * steps as f64) as usize
                    } else {
                        0
                    };
                    queued.push((offset.min(steps - 1), i));
                }
            }
            for step in 0..steps {
                for &(off, i) in &queued {
                    if off == step {
                        self.deliver_source(i);
                        if record {
                            self.spikes.push(
                                slot_t + off as f64 * dt,
                                (N_NEURONS + i) as u16,
                                Self::source_population(i),
                            );
                        }
                    }
                }
                for k in 0..self.pending.len() {
                    let pre = self.pending[k];
                    for f in &self.neuron_fan[pre] {
                        deliver_spike(
                            &mut self.neurons[f.post],
                            f.sign,
                            f.weight,
                            self.models[f.post].syn_gain,
                        );
                    }
                }
                self.pending.clear();
                let t_end = slot_t + (step + 1) as f64 * dt;
                for id in 0..N_NEURONS {
                    let m = &self.models[id];
                    if m.stepper.step(&mut self.neurons[id], m.bias, t_end) {
                        self.pending.push(id);
                        if record {
                            self.spikes
                                .push(t_end, id as u16, Self::spike_population(id));
                        }
                    }
                }
            }
        }
        self.t_ms += slots as f64 * sched.dt_spike_slot_ms;
    }

    /// Subcycles 2 and 3: read counters, update integrator weights, read the motor cells.
    fn read_and_write(&mut self) {
        let counts: [u32; N_NEURONS] = std::array::from_fn(|id| self.neurons[id].take_count());
        self.log
            .cpu4_counts
            .push(std::array::from_fn(|i| counts[i]));
        self.log
            .cpu1_counts
            .push(std::array::from_fn(|i| counts[8 + i]));
        self.log.motor_counts.push([counts[16], counts[17]]);
        let (h, k) = (self.config.h, self.config.k);
        let mut c_tn = [0u32; 8];
        let mut c_tb1 = [0u32; 8];
        for m in &self.connectome.modulations {
            match m.sign {
                Sign::Exc => c_tn[m.target] += self.source_counts[m.source],
                Sign::Inh => c_tb1[m.target] += self.source_counts[m.source],
            }
        }
        for i in 0..8 {
            self.connectome.supers[i].cpu4_weight_update(c_tn[i], c_tb1[i], h, k);
        }
        self.log.cpu4_totals.push(self.cpu4_totals());
        let norm = |c: u32| (c as f64 / COUNTS_PER_WINDOW).min(1.0);
        self.motor = (norm(counts[16]), norm(counts[17]));
    }

    pub fn run_update_cycle(&mut self) {
        self.advance_agent();
        self.run_window();
        self.read_and_write();
        let t = self.cycle;
        if self.trajectory.wants(t, self.config.schedule.record_stride) {
            let phase = Phase::of(t, self.n_return);
            self.trajectory.record_position(
                &self.agent,
                t as u64,
                t as f64 * self.config.dt_update_ms,
                phase,
            );
        }
        self.cycle += 1;
    }

    /// Drive only the integrators with given sensor rates for one window (no agent motion).
    pub fn stimulate(&mut self, s: &SensorRates) {
        self.set_sensors(s);
        self.run_window();
        self.read_and_write();
        self.cycle += 1;
    }
}

pub fn run_spiking_journey(
    config: &JourneyConfig,
    genome: &Genome,
    cal: &CalibrationTable,
    walk_seed: u64,
) -> Result<(Trajectory, SpikeRecord, SpikingLog)> {
    if cal.mode() != Mode::Spiking {
        return Err(Error::Usage(
            "spiking journeys need a spiking calibration table".into(),
        ));
    }
    let mut sim = Simulation::new(config, genome, cal, walk_seed)?;
    for _ in 0..config.n_updates() {
        sim.run_update_cycle();
    }
    Ok((sim.trajectory, sim.spikes, sim.log))
}

/// Isolated-neuron measurements on an emulated chip, used for calibration.
#[derive(Debug, Clone)]
pub struct SpikingProbe {
    pub chip: FixedPattern,
    pub dt: f64,
    pub settle_ms: f64,
    pub measure_ms: f64,
}

impl SpikingProbe {
    pub fn new(chip: FixedPattern) -> Self {
        Self {
            chip,
            dt: 0.1,
            settle_ms: 1000.0,
            measure_ms: 2000.0,
        }
    }

    pub fn for_config(config: &JourneyConfig) -> Result<Self> {
        let chip = if config.noise_cv > 0.0 {
            FixedPattern::draw(config.noise_cv, config.noise_seed)?
        } else {
            FixedPattern::none()
        };
        Ok(Self {
            dt: config.schedule.dt_neuron_ms,
            ..Self::new(chip)
        })
    }

    fn inputs(id: usize, stimulus: Stimulus) -> Vec<(SpikeSource, Sign, f64)> {
        let periodic = |r: f64| SpikeSource::new(r, SourceMode::Periodic);
        match (Population::of(id), stimulus) {
            (Population::Cpu4, Stimulus::Weight(w)) => {
                vec![(periodic(1.0), Sign::Exc, w.round().clamp(0.0, 1008.0))]
            }
            (Population::Cpu1, Stimulus::Pair { r_exc, r_inh }) => vec![
                (periodic(r_exc), Sign::Exc, CPU1_REF_WEIGHT),
                (periodic(r_inh).with_phase(0.0), Sign::Inh, CPU1_REF_WEIGHT),
            ],
            (Population::Motor, Stimulus::Pair { r_exc, .. }) => (0..4)
                .map(|k| {
                    (
                        periodic(r_exc).with_phase(0.5 + k as f64 / 4.0),
                        Sign::Exc,
                        MOTOR_UNIT_WEIGHT,
                    )
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

impl TransferProbe for SpikingProbe {
    fn resolution(&self) -> f64 {
        1e-3
    }

    fn measure(&self, id: usize, stimulus: Stimulus, tuning: Tuning) -> (f64, bool) {
        let model = NeuronModel::new(id, &self.chip, tuning, self.dt);
        let mut inputs = Self::inputs(id, stimulus);
        let mut s = NeuronState::rest(&model.stepper.params);
        let steps_per_slot = (10.0 / self.dt).round() as usize;
        let slots = ((self.settle_ms + self.measure_ms) / 10.0).round() as usize;
        let settle_slots = (self.settle_ms / 10.0).round() as usize;
        let half = settle_slots + (slots - settle_slots) / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0u32; 2];
        let mut t = 0.0;
        for slot in 0..slots {
            for (src, sign, w) in inputs.iter_mut() {
                if src.tick(&mut rng) {
                    deliver_spike(&mut s, *sign, *w, model.syn_gain);
                }
            }
            for _ in 0..steps_per_slot {
                t += self.dt;
                if model.stepper.step(&mut s, model.bias, t) && slot >= settle_slots {
                    counts[usize::from(slot >= half)] += 1;
                }
            }
        }
        let half_ms = self.measure_ms / 2.0;
        let r = |c: u32| c as f64 / (half_ms / 10.0);
        let (a, b) = (r(counts[0]), r(counts[1]));
        let settled = (a - b).abs() <= 0.05 + 2.0 / (half_ms / 10.0);
        ((a + b) / 2.0, settled)
    }
}

/// Calibrate every neuron of the chip described by `config` (noise cv and seed).
pub fn calibrate_chip(config: &JourneyConfig) -> Result<CalibrationTable> {
    let probe = SpikingProbe::for_config(config)?;
    // neurons of one population with identical mismatch share a fit
    let key = |id: usize| {
        (
            Population::of(id),
            probe.chip.gain[id].to_bits(),
            probe.chip.offset[id].to_bits(),
        )
    };
    let mut reps: Vec<usize> = Vec::new();
    for id in 0..N_NEURONS {
        if !reps.iter().any(|&r| key(r) == key(id)) {
            reps.push(id);
        }
    }
    let fitted = reps
        .par_iter()
        .map(|&id| match Population::of(id) {
            Population::Cpu4 => calibration::calibrate_cpu4(&probe, id),
            _ => calibration::calibrate_cpu1_motor(&probe, id),
        })
        .collect::<Result<Vec<_>>>()?;
    let records = (0..N_NEURONS)
        .map(|id| {
            let i = reps
                .iter()
                .position(|&r| key(r) == key(id))
                .expect("representative exists");
            NeuronRecord {
                id,
                ..fitted[i].clone()
            }
        })
        .collect();
    Ok(CalibrationTable::from_records(Mode::Spiking, records)?
        .with_noise(config.noise_cv, config.noise_seed))
}
