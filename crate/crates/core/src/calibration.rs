//! Per-neuron transfer calibration and seeded fixed-pattern mismatch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Side;
use crate::harness::Mode;
use crate::rate_oracle::{self, RateNeuronParams, CPU1_REF_WEIGHT, W_SUP_MAX};

pub const SCHEMA: &str = "cxnav-calibration/1";
pub const N_NEURONS: usize = 18;

/// Linear correction of a neuron's input (or, for integrators, of its output around mid-range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub gain: f64,
    pub offset: f64,
}

impl Tuning {
    pub const IDENTITY: Tuning = Tuning {
        gain: 1.0,
        offset: 0.0,
    };

    /// Apply `self` after `inner`.
    pub fn compose(self, inner: Tuning) -> Tuning {
        Tuning {
            gain: self.gain * inner.gain,
            offset: self.gain * inner.offset + self.offset,
        }
    }
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Cpu4,
    Cpu1,
    Motor,
}

impl Population {
    pub fn of(id: usize) -> Population {
        match id {
            0..=7 => Population::Cpu4,
            8..=15 => Population::Cpu1,
            _ => Population::Motor,
        }
    }

    /// Scale of additive mismatch, in the units the tuning offset acts on.
    pub fn offset_scale(self) -> f64 {
        match self {
            Population::Cpu4 => 0.02,
            Population::Cpu1 => 1.0,
            Population::Motor => 0.05,
        }
    }
}

/// Neuron ids: integrators 0..8, steering cells 8..16, motor 16 (left) and 17 (right).
pub fn cpu4_id(i: usize) -> usize {
    i
}

pub fn cpu1_id(i: usize) -> usize {
    8 + i
}

pub fn motor_id(side: Side) -> usize {
    16 + side.index()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residual {
    /// Largest weighted deviation on the fitting grid.
    pub max: f64,
    pub rms: f64,
    /// Deviation at the operating point (mid-range input).
    pub midpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub id: usize,
    pub population: Population,
    pub tuning: Tuning,
    pub residual: Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    schema: String,
    mode: Mode,
    noise_seed: u64,
    noise_cv: f64,
    neurons: Vec<NeuronRecord>,
}

impl CalibrationTable {
    /// Table with every neuron at its nominal setting.
    pub fn identity(mode: Mode) -> Self {
        let neurons = (0..N_NEURONS)
            .map(|id| NeuronRecord {
                id,
                population: Population::of(id),
                tuning: Tuning::IDENTITY,
                residual: Residual::default(),
            })
            .collect();
        Self {
            schema: SCHEMA.into(),
            mode,
            noise_seed: 0,
            noise_cv: 0.0,
            neurons,
        }
    }

    pub fn from_records(mode: Mode, mut neurons: Vec<NeuronRecord>) -> Result<Self> {
        neurons.sort_by_key(|n| n.id);
        if neurons.len() != N_NEURONS || neurons.iter().enumerate().any(|(i, n)| n.id != i) {
            return Err(Error::Runtime(
                "calibration table must cover neurons 0..18 exactly once".into(),
            ));
        }
        Ok(Self {
            schema: SCHEMA.into(),
            mode,
            noise_seed: 0,
            noise_cv: 0.0,
            neurons,
        })
    }

    /// Tag the table with the mismatch pattern it was measured on.
    pub fn with_noise(mut self, cv: f64, seed: u64) -> Self {
        self.noise_cv = cv;
        self.noise_seed = seed;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn noise(&self) -> (f64, u64) {
        (self.noise_cv, self.noise_seed)
    }

    pub fn records(&self) -> &[NeuronRecord] {
        &self.neurons
    }

    pub fn tuning(&self, id: usize) -> Tuning {
        self.neurons[id].tuning
    }

    pub fn cpu4(&self, i: usize) -> Tuning {
        self.tuning(cpu4_id(i))
    }

    pub fn cpu1(&self, i: usize) -> Tuning {
        self.tuning(cpu1_id(i))
    }

    pub fn motor(&self, side: Side) -> Tuning {
        self.tuning(motor_id(side))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: CalibrationTable = serde_json::from_str(text)?;
        if t.schema != SCHEMA {
            return Err(Error::Format(format!(
                "unsupported calibration schema '{}'",
                t.schema
            )));
        }
        Self::from_records(t.mode, t.neurons).map(|c| Self {
            noise_seed: t.noise_seed,
            noise_cv: t.noise_cv,
            ..c
        })
    }
}

/// Seeded per-neuron mismatch: a multiplicative gain factor and an additive offset
/// in units of the population's offset scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPattern {
    pub gain: [f64; N_NEURONS],
    pub offset: [f64; N_NEURONS],
}

impl FixedPattern {
    pub fn draw(cv: f64, seed: u64) -> Result<Self> {
        if !(cv >= 0.0) {
            return Err(Error::Usage(format!("noise cv must be >= 0, got {cv}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let mut gain = [1.0; N_NEURONS];
        let mut offset = [0.0; N_NEURONS];
        for id in 0..N_NEURONS {
            let (zg, zo): (f64, f64) = (n.sample(&mut rng), n.sample(&mut rng));
            gain[id] = (1.0 + cv * zg).max(0.05);
            offset[id] = cv * zo;
        }
        Ok(Self { gain, offset })
    }

    pub fn none() -> Self {
        Self {
            gain: [1.0; N_NEURONS],
            offset: [0.0; N_NEURONS],
        }
    }

    /// Mismatch of neuron `id` as a tuning in its population's units.
    pub fn tuning(&self, id: usize) -> Tuning {
        Tuning {
            gain: self.gain[id],
            offset: self.offset[id] * Population::of(id).offset_scale(),
        }
    }
}

/// Perturb every neuron of `table` by a seeded fixed pattern.
pub fn apply_fixed_pattern_noise(
    table: &CalibrationTable,
    cv: f64,
    seed: u64,
) -> Result<CalibrationTable> {
    let fp = FixedPattern::draw(cv, seed)?;
    let mut out = table.clone();
    if cv > 0.0 {
        for n in &mut out.neurons {
            n.tuning = fp.tuning(n.id).compose(n.tuning);
        }
    }
    out.noise_cv = cv;
    out.noise_seed = seed;
    Ok(out)
}

/// A stimulus used during calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stimulus {
    /// Integrator weight (0..=1008) on its background synapse.
    Weight(f64),
    /// Excitatory and inhibitory reference input rates, normalized.
    Pair { r_exc: f64, r_inh: f64 },
}

/// Something whose neurons can be driven and measured under a candidate tuning.
pub trait TransferProbe: Sync {
    /// Mean normalized output rate, and whether the response settled.
    fn measure(&self, id: usize, stimulus: Stimulus, tuning: Tuning) -> (f64, bool);

    /// Parameter step below which the fit stops refining.
    fn resolution(&self) -> f64 {
        1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub input: f64,
    pub rate: f64,
    pub settled: bool,
}

pub fn measure_transfer_curve<P: TransferProbe + ?Sized>(
    probe: &P,
    id: usize,
    sweep: &[f64],
    tuning: Tuning,
) -> Result<Vec<CurveSample>> {
    if sweep.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("sweep must be sorted".into()));
    }
    Ok(sweep
        .iter()
        .map(|&w| {
            let (rate, settled) = probe.measure(id, Stimulus::Weight(w), tuning);
            CurveSample {
                input: w,
                rate,
                settled,
            }
        })
        .collect())
}

/// Rate-model neurons with intrinsic mismatch, measured analytically.
#[derive(Debug, Clone)]
pub struct OracleProbe {
    pub intrinsic: FixedPattern,
}

impl OracleProbe {
    pub fn ideal() -> Self {
        Self {
            intrinsic: FixedPattern::none(),
        }
    }
}

impl TransferProbe for OracleProbe {
    fn measure(&self, id: usize, stimulus: Stimulus, tuning: Tuning) -> (f64, bool) {
        let t = tuning.compose(self.intrinsic.tuning(id));
        let r = match (Population::of(id), stimulus) {
            (Population::Cpu4, Stimulus::Weight(w)) => rate_oracle::cpu4_rate(w, t),
            (Population::Cpu1, Stimulus::Pair { r_exc, r_inh }) => {
                let input = CPU1_REF_WEIGHT * (r_exc - r_inh);
                rate_oracle::logistic_response(input, &RateNeuronParams::cpu1_nominal().tuned(t))
            }
            (Population::Motor, Stimulus::Pair { r_exc, r_inh }) => {
                (t.gain * (r_exc - r_inh) + t.offset).clamp(0.0, 1.0)
            }
            _ => f64::NAN,
        };
        (r, true)
    }
}

/// Grid of (input, target, weight) triples for a population.
pub fn fitting_grid(pop: Population) -> Vec<(Stimulus, f64, f64)> {
    match pop {
        Population::Cpu4 => (0..=16)
            .map(|i| {
                let w = W_SUP_MAX * (0.25 + 0.5 * i as f64 / 16.0);
                (Stimulus::Weight(w), w / W_SUP_MAX, 1.0)
            })
            .collect(),
        Population::Cpu1 => {
            let mut g = Vec::with_capacity(121);
            for i in 0..=10 {
                for j in 0..=10 {
                    let (r_exc, r_inh) = (i as f64 / 10.0, j as f64 / 10.0);
                    let target = r_exc * (1.0 - r_inh);
                    let weight = if (target - 0.5).abs() <= 0.125 + 1e-12 {
                        4.0
                    } else {
                        1.0
                    };
                    g.push((Stimulus::Pair { r_exc, r_inh }, target, weight));
                }
            }
            g
        }
        // motor cells only receive excitation
        Population::Motor => (0..=20)
            .map(|i| {
                let r = i as f64 / 20.0;
                let weight = if (r - 0.5).abs() <= 0.125 + 1e-12 {
                    4.0
                } else {
                    1.0
                };
                (
                    Stimulus::Pair {
                        r_exc: r,
                        r_inh: 0.0,
                    },
                    r,
                    weight,
                )
            })
            .collect(),
    }
}

fn residual_of<P: TransferProbe + ?Sized>(
    probe: &P,
    id: usize,
    t: Tuning,
    grid: &[(Stimulus, f64, f64)],
) -> (Residual, bool) {
    let mut max: f64 = 0.0;
    let mut sq = 0.0;
    let mut wsum = 0.0;
    let mut mid = (f64::INFINITY, 0.0);
    let mut settled = true;
    for (stim, target, w) in grid {
        let (r, ok) = probe.measure(id, *stim, t);
        settled &= ok;
        let e = r - target;
        max = max.max(w.sqrt() * e.abs());
        sq += w * e * e;
        wsum += w;
        let dist = (target - 0.5).abs();
        if dist < mid.0 {
            mid = (dist, e.abs());
        }
    }
    (
        Residual {
            max,
            rms: (sq / wsum).sqrt(),
            midpoint: mid.1,
        },
        settled,
    )
}

/// Derivative-free pattern search over (gain, offset), halving the step on failure.
fn pattern_search(
    mut f: impl FnMut(Tuning) -> f64,
    start: Tuning,
    step: (f64, f64),
    tol: f64,
) -> Tuning {
    let mut best = start;
    let mut fb = f(best);
    let (mut sg, mut so) = step;
    let dirs: Vec<(f64, f64)> = (0..16)
        .map(|k| (k as f64 * std::f64::consts::PI / 8.0).sin_cos())
        .map(|(s, c)| (c, s))
        .collect();
    while sg > tol || so > tol {
        let mut improved = false;
        for &(dg, d_o) in &dirs {
            let cand = Tuning {
                gain: (best.gain + dg * sg).max(1e-3),
                offset: best.offset + d_o * so,
            };
            let fc = f(cand);
            if fc < fb {
                best = cand;
                fb = fc;
                improved = true;
                break;
            }
        }
        if !improved {
            sg *= 0.5;
            so *= 0.5;
        }
    }
    best
}

/// Largest acceptable weighted residual before a fit counts as failed.
const FIT_FAILURE: f64 = 0.25;

fn finish(id: usize, tuning: Tuning, residual: Residual, settled: bool) -> Result<NeuronRecord> {
    if !settled || !residual.max.is_finite() || residual.max > FIT_FAILURE {
        return Err(Error::Runtime(format!(
            "calibration of neuron {id} failed: max residual {:.4}, rms {:.4}, settled {settled}",
            residual.max, residual.rms
        )));
    }
    Ok(NeuronRecord {
        id,
        population: Population::of(id),
        tuning,
        residual,
    })
}

/// Minimax fit on the population grid. A least-squares fit supplies the starting
/// point when it beats the identity, since the max objective has ridges.
fn minimax_fit<P: TransferProbe + ?Sized>(
    probe: &P,
    id: usize,
    step: (f64, f64),
) -> Result<NeuronRecord> {
    let grid = fitting_grid(Population::of(id));
    let max_of = |t: Tuning| residual_of(probe, id, t, &grid).0.max;
    let tol = probe.resolution();
    let ls = pattern_search(
        |t| residual_of(probe, id, t, &grid).0.rms,
        Tuning::IDENTITY,
        step,
        tol,
    );
    let start = if max_of(ls) < max_of(Tuning::IDENTITY) {
        ls
    } else {
        Tuning::IDENTITY
    };
    let t = pattern_search(max_of, start, step, tol);
    let (residual, settled) = residual_of(probe, id, t, &grid);
    finish(id, t, residual, settled)
}

/// Fit an integrator so its rate follows `w / 1008` (minimax over the central half-range).
pub fn calibrate_cpu4<P: TransferProbe + ?Sized>(probe: &P, id: usize) -> Result<NeuronRecord> {
    if Population::of(id) != Population::Cpu4 {
        return Err(Error::Usage(format!("neuron {id} is not an integrator")));
    }
    minimax_fit(probe, id, (0.25, 0.05))
}

/// Fit a steering or motor cell to `r_exc * (1 - r_inh)` (weighted minimax).
pub fn calibrate_cpu1_motor<P: TransferProbe + ?Sized>(
    probe: &P,
    id: usize,
) -> Result<NeuronRecord> {
    let pop = Population::of(id);
    if pop == Population::Cpu4 {
        return Err(Error::Usage(format!("neuron {id} is an integrator")));
    }
    minimax_fit(probe, id, (0.25, 0.25 * pop.offset_scale()))
}

/// Calibrate all 18 neurons; the per-neuron fits run concurrently.
pub fn calibrate_all<P: TransferProbe + ?Sized>(probe: &P, mode: Mode) -> Result<CalibrationTable> {
    let records = (0..N_NEURONS)
        .into_par_iter()
        .map(|id| match Population::of(id) {
            Population::Cpu4 => calibrate_cpu4(probe, id),
            _ => calibrate_cpu1_motor(probe, id),
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationTable::from_records(mode, records)
}

/// Maximum weighted deviation of neuron `id` on its fitting grid under `tuning`.
pub fn grid_deviation<P: TransferProbe + ?Sized>(probe: &P, id: usize, tuning: Tuning) -> f64 {
    residual_of(probe, id, tuning, &fitting_grid(Population::of(id)))
        .0
        .max
}
