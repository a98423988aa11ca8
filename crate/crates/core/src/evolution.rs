//! Evolution strategy over the 26 steering weights.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::error::{Error, Result};
use crate::genome::{Genome, GENOME_LEN};
use crate::harness::{run_journey, JourneyConfig, Phase, Trajectory};
use crate::seeds::{self, Stream};

/// Lower bound on |f| before the f^-8 selection weight.
pub const FITNESS_FLOOR: f64 = 1e-6;
pub const SELECTION_EXPONENT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub sigma: f64,
    pub lambda: usize,
    pub generations: usize,
    pub runs_per_eval: usize,
    /// Weight of the new generation's outer-product estimate in the running covariance.
    /// 1 replaces the covariance every generation.
    pub cov_rate: f64,
    pub jitter: f64,
    /// Write a mean-genome snapshot every this many generations (0 disables).
    pub snapshot_every: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            lambda: 15,
            generations: 320,
            runs_per_eval: 3,
            cov_rate: 0.1,
            jitter: 1e-8,
            snapshot_every: 10,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Usage(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.lambda < 2 {
            return Err(Error::Usage("lambda must be at least 2".into()));
        }
        if self.runs_per_eval == 0 {
            return Err(Error::Usage("runs_per_eval must be at least 1".into()));
        }
        if !(self.cov_rate > 0.0 && self.cov_rate <= 1.0) {
            return Err(Error::Usage(format!(
                "cov_rate must be in (0, 1], got {}",
                self.cov_rate
            )));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::Usage("jitter must be positive".into()));
        }
        Ok(())
    }
}

/// Negative time-averaged offset plus spread of the looping phase, averaged over runs.
pub fn fitness(trajectories: &[Trajectory]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Usage("fitness needs at least one trajectory".into()));
    }
    let mut total = 0.0;
    for (i, t) in trajectories.iter().enumerate() {
        let pts: Vec<(f64, f64)> = t.phase_points(Phase::Looping).map(|p| (p.x, p.y)).collect();
        if pts.is_empty() {
            return Err(Error::Usage(format!(
                "trajectory {i} has an empty looping window"
            )));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let vx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
        let vy = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
        total += mx.hypot(my) + vx.sqrt().hypot(vy.sqrt());
    }
    Ok(-total / trajectories.len() as f64)
}

/// Soft selection p_i proportional to |f_i|^-8, computed in log space.
pub fn selection_weights(fitnesses: &[f64]) -> Result<Vec<f64>> {
    if fitnesses.is_empty() {
        return Err(Error::Usage("no fitnesses".into()));
    }
    if let Some(f) = fitnesses.iter().find(|f| !f.is_finite() || **f > 0.0) {
        return Err(Error::Domain(format!(
            "fitness must be finite and non-positive, got {f}"
        )));
    }
    let logs: Vec<f64> = fitnesses
        .iter()
        .map(|f| -SELECTION_EXPONENT * f.abs().max(FITNESS_FLOOR).ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / sum).collect())
}

fn check_weights(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n || n == 0 {
        return Err(Error::Usage(format!("{} weights for {n} genomes", p.len())));
    }
    Ok(())
}

pub fn recombine_mean(p: &[f64], genomes: &[DVector<f64>]) -> Result<DVector<f64>> {
    check_weights(p, genomes.len())?;
    Ok(genomes
        .iter()
        .zip(p)
        .fold(DVector::zeros(genomes[0].len()), |acc, (w, pi)| {
            acc + w * *pi
        }))
}

/// Weighted outer product of the deviations from `mean`, plus `jitter * I`.
pub fn update_covariance(
    p: &[f64],
    genomes: &[DVector<f64>],
    mean: &DVector<f64>,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    check_weights(p, genomes.len())?;
    let n = mean.len();
    let mut cov = DMatrix::identity(n, n) * jitter;
    for (w, pi) in genomes.iter().zip(p) {
        let d = w - mean;
        cov.ger(*pi, &d, &d, 1.0);
    }
    cov.fill_lower_triangle_with_upper_triangle();
    Ok(cov)
}

/// Blend the previous covariance with a fresh estimate.
pub fn accumulate_covariance(
    prev: &DMatrix<f64>,
    estimate: &DMatrix<f64>,
    rate: f64,
) -> DMatrix<f64> {
    prev * (1.0 - rate) + estimate * rate
}

/// Draw `n` samples from N(mean, sigma * cov).
pub fn sample_population<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    sigma: f64,
    n: usize,
    jitter: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let dim = mean.len();
    let scaled = cov * sigma;
    let chol = scaled
        .clone()
        .cholesky()
        .or_else(|| {
            (scaled + DMatrix::identity(dim, dim) * (jitter * sigma).max(f64::MIN_POSITIVE))
                .cholesky()
        })
        .ok_or_else(|| Error::Runtime("covariance is not positive definite".into()))?;
    let l = chol.l();
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + &l * z
        })
        .collect())
}

/// Maps a genome to a fitness. Called concurrently for one generation.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &Genome, generation: usize) -> Result<f64>;
}

impl<F: Fn(&Genome, usize) -> Result<f64> + Sync> Evaluator for F {
    fn evaluate(&self, genome: &Genome, generation: usize) -> Result<f64> {
        self(genome, generation)
    }
}

/// Runs journeys with walk seeds shared by every individual of a generation.
pub struct NetworkEvaluator {
    pub config: JourneyConfig,
    pub calibration: CalibrationTable,
    pub runs: usize,
    pub seed: u64,
}

impl NetworkEvaluator {
    pub fn walk_seeds(&self, generation: usize) -> Vec<u64> {
        let g = seeds::derive(self.seed, Stream::Generation, generation as u64);
        (0..self.runs)
            .map(|r| seeds::derive(g, Stream::Walk, r as u64))
            .collect()
    }
}

impl Evaluator for NetworkEvaluator {
    fn evaluate(&self, genome: &Genome, generation: usize) -> Result<f64> {
        let trajectories = self
            .walk_seeds(generation)
            .into_iter()
            .map(|s| run_journey(&self.config, genome, &self.calibration, s).map(|o| o.trajectory))
            .collect::<Result<Vec<_>>>()?;
        fitness(&trajectories)
    }
}

#[derive(Debug, Clone)]
pub struct EsState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub generation: usize,
    pub population: Vec<(DVector<f64>, f64)>,
}

impl EsState {
    pub fn new(start: &Genome, sigma: f64) -> Self {
        Self {
            mean: DVector::from_column_slice(start.as_slice()),
            sigma,
            cov: DMatrix::identity(GENOME_LEN, GENOME_LEN),
            generation: 0,
            population: Vec::new(),
        }
    }

    pub fn mean_genome(&self) -> Genome {
        to_genome(&self.mean)
    }
}

fn to_genome(v: &DVector<f64>) -> Genome {
    Genome::from_slice(v.as_slice()).expect("vector of genome length")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub mean_genome: Genome,
}

#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub history: Vec<GenerationRecord>,
    pub best: Genome,
    pub best_fitness: f64,
    pub state: EsState,
}

/// One generation: sample around the mean, evaluate, reweight, update mean and covariance.
pub fn step<E: Evaluator + ?Sized>(
    state: &mut EsState,
    config: &EsConfig,
    evaluator: &E,
    seed: u64,
) -> Result<GenerationRecord> {
    let g = state.generation;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, Stream::Sampling, g as u64));
    let samples = sample_population(
        &state.mean,
        &state.cov,
        state.sigma,
        config.lambda,
        config.jitter,
        &mut rng,
    )?;
    let fit = samples
        .par_iter()
        .map(|w| evaluator.evaluate(&to_genome(w), g))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| Error::Runtime(format!("generation {g} aborted: {e}")))?;
    let p = selection_weights(&fit)
        .map_err(|e| Error::Runtime(format!("generation {g} aborted: {e}")))?;
    let mean = recombine_mean(&p, &samples)?;
    let estimate = update_covariance(&p, &samples, &mean, config.jitter)?;
    state.cov = accumulate_covariance(&state.cov, &estimate, config.cov_rate);
    state.mean = mean;
    state.population = samples.into_iter().zip(fit.iter().copied()).collect();
    state.generation += 1;
    Ok(GenerationRecord {
        generation: g,
        best_fitness: fit.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_fitness: fit.iter().sum::<f64>() / fit.len() as f64,
        mean_genome: state.mean_genome(),
    })
}

pub fn evolve<E: Evaluator + ?Sized>(
    config: &EsConfig,
    start: &Genome,
    evaluator: &E,
    seed: u64,
) -> Result<EsOutcome> {
    config.validate()?;
    let mut state = EsState::new(start, config.sigma);
    let mut history = Vec::with_capacity(config.generations);
    let mut best = (start.clone(), f64::NEG_INFINITY);
    for _ in 0..config.generations {
        history.push(step(&mut state, config, evaluator, seed)?);
        for (w, f) in &state.population {
            if *f > best.1 {
                best = (to_genome(w), *f);
            }
        }
    }
    Ok(EsOutcome {
        history,
        best: best.0,
        best_fitness: best.1,
        state,
    })
}

pub fn write_history_csv<W: Write>(history: &[GenerationRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["generation", "best_fitness", "mean_fitness"])?;
    for r in history {
        out.write_record([
            r.generation.to_string(),
            r.best_fitness.to_string(),
            r.mean_fitness.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Generations whose mean genome gets a snapshot file.
pub fn snapshot_generations(
    history: &[GenerationRecord],
    every: usize,
) -> impl Iterator<Item = &GenerationRecord> {
    history
        .iter()
        .filter(move |r| every > 0 && (r.generation + 1) % every == 0)
}
