use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cxnav::evolution::{self, EsConfig, NetworkEvaluator};
use cxnav::harness::{self, Mode, RunConfig, StatsDocument};
use cxnav::{Error, Genome, Result};

#[derive(Parser, Debug)]
#[command(
    name = "cxnav",
    version,
    about = "Path integration with a simulated insect central complex"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["rate", "spiking"])]
    mode: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Genome JSON (array of 26 weights); defaults to the primitive genome.
    #[arg(long)]
    genome: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One journey: trajectory.csv, plus spikes.csv in spiking mode.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Many journeys: stats.json and one trajectory CSV per journey.
    Batch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        journeys: Option<usize>,
    },
    /// Evolution strategy: es_history.csv, genome snapshots and the final genomes.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Calibrate every neuron: calibration.json.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Integrator divergence between the spiking network and the rate model: compare.json.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Number of random stimuli.
        #[arg(long, default_value_t = 20)]
        journeys: usize,
        /// Updates per stimulus.
        #[arg(long, default_value_t = 200)]
        updates: usize,
    },
}

struct Setup {
    config: RunConfig,
    seed: u64,
    genome: Genome,
    out: PathBuf,
}

fn setup(c: &Common) -> Result<Setup> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &c.mode {
        config.journey.mode = m.parse::<Mode>()?;
    }
    if let Some(s) = c.seed {
        config.journey.seed = s;
    }
    let genome = match &c.genome {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Usage(format!("cannot read genome {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Usage(format!("bad genome {}: {e}", p.display())))?
        }
        None => Genome::primitive(),
    };
    Ok(Setup {
        seed: config.journey.seed,
        config,
        genome,
        out: c.out.clone(),
    })
}

fn run(s: Setup) -> Result<()> {
    let cfg = &s.config.journey;
    let cal = harness::prepare_calibration(cfg)?;
    let out = harness::run_journey(cfg, &s.genome, &cal, harness::journey_seed(s.seed, 0))?;
    harness::write_trajectory(&s.out.join("trajectory.csv"), &out.trajectory)?;
    if let Some(spikes) = &out.spikes {
        harness::write_spikes(&s.out.join("spikes.csv"), spikes)?;
    }
    println!(
        "{} points written to {}",
        out.trajectory.points.len(),
        s.out.display()
    );
    Ok(())
}

fn batch(s: Setup, journeys: Option<usize>) -> Result<()> {
    let cfg = &s.config.journey;
    let n = journeys.unwrap_or(s.config.batch.journeys);
    let cal = harness::prepare_calibration(cfg)?;
    let b = harness::run_batch(cfg, &s.genome, &cal, n, s.seed)?;
    harness::write_json(
        &s.out.join("stats.json"),
        &StatsDocument::new(cfg, &s.genome, s.seed, &b),
    )?;
    for (rec, t) in b.records.iter().zip(&b.trajectories) {
        harness::write_trajectory(
            &s.out
                .join("trajectories")
                .join(format!("journey_{:04}.csv", rec.index)),
            t,
        )?;
    }
    for (i, msg) in &b.failures {
        eprintln!("journey {i} failed: {msg}");
    }
    println!(
        "{} journeys: mean deviation {:.1} ({:.2}% of median radius), looping radius {:.1}",
        b.records.len(),
        b.stats.mean_return_deviation,
        b.stats.mean_return_deviation_pct,
        b.stats.mean_looping_radius
    );
    Ok(())
}

fn evolve(s: Setup, generations: Option<usize>) -> Result<()> {
    let cfg = &s.config.journey;
    let es = EsConfig {
        generations: generations.unwrap_or(s.config.evolution.generations),
        ..s.config.evolution.clone()
    };
    let cal = harness::prepare_calibration(cfg)?;
    let evaluator = NetworkEvaluator {
        config: cfg.clone(),
        calibration: cal,
        runs: es.runs_per_eval,
        seed: s.seed,
    };
    let outcome = evolution::evolve(&es, &s.genome, &evaluator, s.seed)?;
    let mut csv = Vec::new();
    evolution::write_history_csv(&outcome.history, &mut csv)?;
    harness::write_file(&s.out.join("es_history.csv"), &csv)?;
    for r in evolution::snapshot_generations(&outcome.history, es.snapshot_every) {
        harness::write_json(
            &s.out
                .join("genomes")
                .join(format!("gen_{:04}.json", r.generation + 1)),
            &r.mean_genome,
        )?;
    }
    harness::write_json(&s.out.join("best_genome.json"), &outcome.best)?;
    harness::write_json(
        &s.out.join("mean_genome.json"),
        &outcome.state.mean_genome(),
    )?;
    println!(
        "{} generations, best fitness {:.1}",
        outcome.history.len(),
        outcome.best_fitness
    );
    Ok(())
}

fn calibrate(s: Setup) -> Result<()> {
    let table = harness::prepare_calibration(&s.config.journey)?;
    let mut text = table.to_json()?;
    text.push('\n');
    harness::write_file(&s.out.join("calibration.json"), text.as_bytes())?;
    println!("{} neurons calibrated", table.records().len());
    Ok(())
}

fn compare(s: Setup, n: usize, updates: usize) -> Result<()> {
    let report = harness::compare_integrators(&s.config.journey, &s.genome, n, updates, s.seed)?;
    harness::write_json(&s.out.join("compare.json"), &report)?;
    println!(
        "worst final divergence {:.2}% of full scale over {n} stimuli",
        100.0 * report.worst_final_fraction
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run { common } => run(setup(&common)?),
        Command::Batch { common, journeys } => batch(setup(&common)?, journeys),
        Command::Evolve {
            common,
            generations,
        } => evolve(setup(&common)?, generations),
        Command::Calibrate { common } => calibrate(setup(&common)?),
        Command::Compare {
            common,
            journeys,
            updates,
        } => compare(setup(&common)?, journeys, updates),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
