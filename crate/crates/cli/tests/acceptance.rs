//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cxnav::agent_world::{self, tb1_rates, tn_rates, AgentState, SensorRates, WorldParams};
use cxnav::evolution::{self, EsConfig, NetworkEvaluator};
use cxnav::genome::GENOME_LEN;
use cxnav::harness::{
    self, compare_integrators, fraction_within, prepare_calibration, Fidelity, JourneyConfig, Mode,
    Phase, Trajectory,
};
use cxnav::rate_oracle::{decode_home_vector, run_rate_journey, RateNetwork, W_SUP_MAX};
use cxnav::spiking_core::supersynapse::{Supersynapse, SUB_SYNAPSES};
use cxnav::Genome;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn encoder_exactness() -> Outcome {
    let world = WorldParams::default();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let phi = -PI + 2.0 * PI * i as f64 / 1000.0;
        let r = tb1_rates(phi);
        for (j, v) in r.iter().enumerate() {
            worst = worst.max((v - 0.5 * (1.0 + (phi + j as f64 * FRAC_PI_2).sin())).abs());
        }
        ensure(
            r[0] + r[2] == 1.0 && r[1] + r[3] == 1.0,
            format!("complement broken at phi {phi}"),
        )?;
        let v = i as f64 / 999.0;
        let dphi = -0.5 + i as f64 / 999.0;
        let (l, rr) = tn_rates(v, dphi, &world);
        let base = v * world.phi_tn.sin();
        worst = worst.max((l - (base + world.rho * dphi).clamp(0.0, 1.0)).abs());
        worst = worst.max((rr - (base - world.rho * dphi).clamp(0.0, 1.0)).abs());
    }
    ensure(worst <= 1e-12, format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.1e}, complement exact"))
}

fn integrator_equivalence() -> Outcome {
    let report = compare_integrators(
        &JourneyConfig::default(),
        &Genome::primitive(),
        20,
        200,
        2024,
    )
    .map_err(|e| e.to_string())?;
    let worst = report.worst_final_fraction;
    ensure(
        worst < 0.05,
        format!("worst gap {:.2}% of full scale", 100.0 * worst),
    )?;
    Ok(format!(
        "worst final gap {:.2}% of full scale over 20 stimuli",
        100.0 * worst
    ))
}

fn outbound_walk(seed: u64, world: &WorldParams) -> Vec<AgentState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = AgentState::at_home(0.0, world.outbound_speed);
    (0..500)
        .map(|_| {
            agent = agent_world::step_outbound(&agent, &mut rng, world);
            agent
        })
        .collect()
}

fn home_vector_fidelity() -> Outcome {
    let cfg = JourneyConfig {
        t_return_ms: 50_000.0,
        t_stop_ms: 50_000.0,
        ..Default::default()
    };
    let cal = prepare_calibration(&cfg).map_err(|e| e.to_string())?;
    let g = Genome::primitive();
    let mut worst_angle = 0.0f64;
    let mut pairs = Vec::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (traj, log) = run_rate_journey(&cfg, &g, &cal, &mut rng).map_err(|e| e.to_string())?;
        let end = traj.points.last().ok_or("empty trajectory")?;
        let [hx, hy] = decode_home_vector(log.cpu4_state.last().ok_or("empty log")?);
        let err = ((hy.atan2(hx) - (-end.y).atan2(-end.x) + PI).rem_euclid(2.0 * PI) - PI).abs();
        worst_angle = worst_angle.max(err.to_degrees());
        pairs.push((end.x.hypot(end.y), hx.hypot(hy)));
    }
    ensure(
        worst_angle < 5.0,
        format!("angle error {worst_angle:.2} deg"),
    )?;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inversions = pairs.windows(2).filter(|w| w[1].1 < w[0].1).count();
    ensure(
        inversions == 0,
        format!("decoded magnitude not monotone in displacement ({inversions} inversions)"),
    )?;

    // rotating every heading by a quarter turn permutes the integrators by one index
    let world = WorldParams::default();
    let rate_cal = cal;
    let mut worst_perm = 0.0f64;
    for seed in 0..10 {
        let walk = outbound_walk(500 + seed, &world);
        let mut a = RateNetwork::new(&g, &rate_cal, cfg.h, cfg.k);
        let mut b = RateNetwork::new(&g, &rate_cal, cfg.h, cfg.k);
        for s in &walk {
            let rot = AgentState {
                phi: s.phi + FRAC_PI_2,
                phi_prev: s.phi_prev + FRAC_PI_2,
                ..*s
            };
            a.step(&SensorRates::sense(s, &world));
            b.step(&SensorRates::sense(&rot, &world));
        }
        for h in 0..2 {
            for j in 0..4 {
                let d =
                    (b.state.cpu4_state[4 * h + j] - a.state.cpu4_state[4 * h + (j + 1) % 4]).abs();
                worst_perm = worst_perm.max(d);
            }
        }
    }
    ensure(
        worst_perm < 1e-9,
        format!("rotated integrators differ by {worst_perm:e}"),
    )?;
    Ok(format!("worst angle error {worst_angle:.3} deg, magnitude monotone, permutation error {worst_perm:.1e}"))
}

fn homing(mode: Mode, frac: f64) -> Result<String, String> {
    let cfg = JourneyConfig {
        mode,
        ..Default::default()
    };
    let cal = prepare_calibration(&cfg).map_err(|e| e.to_string())?;
    let b = harness::run_batch(&cfg, &Genome::primitive(), &cal, 100, cfg.seed)
        .map_err(|e| e.to_string())?;
    let within = fraction_within(&b.records, frac);
    let dev = b.stats.mean_return_deviation / b.stats.median_outbound_radius;
    let line = format!(
        "{mode}: {:.0}% within {:.0}%, mean deviation {:.2}%",
        100.0 * within,
        100.0 * frac,
        100.0 * dev
    );
    ensure(
        b.failures.is_empty() && within >= 0.9 && dev <= frac,
        line.clone(),
    )?;
    Ok(line)
}

fn closed_loop_homing() -> Outcome {
    let rate = homing(Mode::Rate, 0.10);
    let spiking = homing(Mode::Spiking, 0.15);
    match (rate, spiking) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (a, b) => Err(format!(
            "{}; {}",
            a.unwrap_or_else(|e| e),
            b.unwrap_or_else(|e| e)
        )),
    }
}

fn scheduling_fidelity() -> Outcome {
    let cfg = JourneyConfig {
        mode: Mode::Spiking,
        fidelity: Fidelity::Hardware16bit,
        ..Default::default()
    };
    ensure(cfg.t_stop_ms == 200_000.0, "default journey is not 200 s")?;
    let cal = prepare_calibration(&cfg).map_err(|e| e.to_string())?;
    let (traj, _, log) =
        cxnav::spiking_core::run_spiking_journey(&cfg, &Genome::primitive(), &cal, 5)
            .map_err(|e| e.to_string())?;
    ensure(
        log.cpu4_totals.len() == 2000,
        format!("{} update cycles", log.cpu4_totals.len()),
    )?;
    ensure(
        traj.points.len() == 1000,
        format!("{} recorded positions", traj.points.len()),
    )?;
    let meta = traj.meta.clone();
    let mut t = Trajectory::new(meta, Fidelity::Hardware16bit, 1000);
    let at = |x: f64| AgentState {
        x,
        y: 0.0,
        ..AgentState::default()
    };
    let cases = [
        (32767.0, 32767.0, false),
        (32767.4, 32767.0, false),
        (32767.5, 32767.0, true),
        (-32768.0, -32768.0, false),
        (-32768.5, -32768.0, true),
        (40000.0, 32767.0, true),
        (-17309.4, -17309.0, false),
    ];
    for (i, (x, stored, flag)) in cases.iter().enumerate() {
        let before = t.overflow;
        t.overflow = false;
        t.record_position(&at(*x), i as u64, 0.0, Phase::Outbound);
        ensure(
            t.points[i].x == *stored && t.overflow == *flag,
            format!("x = {x} stored {} flag {}", t.points[i].x, t.overflow),
        )?;
        t.overflow |= before;
    }
    Ok("2000 cycles, 1000 positions, 16-bit clamping exact at the boundaries".into())
}

fn quantization() -> Outcome {
    let mut s = Supersynapse::new(0);
    for total in 0..=1008i64 {
        s.write(total);
        ensure(
            s.total() as i64 == total,
            format!("total {total} read back as {}", s.total()),
        )?;
        let base = (total / 16) as u8;
        let high = s.sub_weights.iter().filter(|&&w| w == base + 1).count();
        let low = s.sub_weights.iter().filter(|&&w| w == base).count();
        ensure(
            high == (total % 16) as usize && high + low == SUB_SYNAPSES,
            format!("unbalanced write of {total}"),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut s = Supersynapse::new(504);
        let mut exact = 504.0f64;
        for _ in 0..500 {
            let (tn, tb1) = (rng.random_range(0..=10u32), rng.random_range(0..=10u32));
            s.cpu4_weight_update(tn, tb1, 0.0336, 2.0);
            exact = (exact + 0.0336 * (tn as f64 - tb1 as f64 - 2.0)).clamp(0.0, W_SUP_MAX);
        }
        worst = worst.max((s.total() as f64 - exact).abs());
    }
    ensure(worst < 1.0, format!("residual carry off by {worst} LSB"))?;
    Ok(format!(
        "1009 totals round-trip balanced, carry error {worst:.3} LSB after 500 updates"
    ))
}

fn es_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fits: Vec<f64> = (0..15).map(|_| -rng.random_range(1.0..1000.0)).collect();
    let p = evolution::selection_weights(&fits).map_err(|e| e.to_string())?;
    let sum: f64 = p.iter().sum();
    ensure((sum - 1.0).abs() <= 1e-12, format!("weights sum to {sum}"))?;
    let scaled = evolution::selection_weights(&fits.iter().map(|f| f * 37.5).collect::<Vec<_>>())
        .map_err(|e| e.to_string())?;
    let scale_err = p
        .iter()
        .zip(&scaled)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(
        scale_err <= 1e-12,
        format!("rescaling changes p by {scale_err:e}"),
    )?;

    let genomes: Vec<DVector<f64>> = (0..15)
        .map(|_| DVector::from_fn(GENOME_LEN, |_, _| rng.random_range(-5.0..5.0)))
        .collect();
    let mean = evolution::recombine_mean(&p, &genomes).map_err(|e| e.to_string())?;
    let cov = evolution::update_covariance(&p, &genomes, &mean, 1e-8).map_err(|e| e.to_string())?;
    let mut brute = DMatrix::<f64>::identity(GENOME_LEN, GENOME_LEN) * 1e-8;
    for (pi, g) in p.iter().zip(&genomes) {
        for r in 0..GENOME_LEN {
            for c in 0..GENOME_LEN {
                brute[(r, c)] += pi * (g[r] - mean[r]) * (g[c] - mean[c]);
            }
        }
    }
    let brute_err = (&cov - &brute).amax();
    ensure(
        brute_err <= 1e-12,
        format!("outer product differs by {brute_err:e}"),
    )?;
    ensure(
        cov.clone().cholesky().is_some(),
        "covariance not positive definite",
    )?;

    let target: Vec<f64> = (0..GENOME_LEN).map(|i| 10.0 + 0.5 * i as f64).collect();
    let objective = |g: &Genome, _: usize| -> cxnav::Result<f64> {
        Ok(-g
            .as_slice()
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>())
    };
    let start = Genome::from_slice(&target.iter().map(|t| t - 1.0).collect::<Vec<_>>())
        .map_err(|e| e.to_string())?;
    let es = EsConfig {
        generations: 100,
        lambda: 15,
        sigma: 0.3,
        ..Default::default()
    };
    let out = evolution::evolve(&es, &start, &objective, 11).map_err(|e| e.to_string())?;
    let f100 = out.history[99].best_fitness;
    ensure(
        f100.abs() < 1e-2,
        format!("quadratic at generation 100: {f100:e}"),
    )?;
    Ok(format!("sum error {:.1e}, scale error {scale_err:.1e}, outer-product error {brute_err:.1e}, quadratic |f| = {:.1e}", (sum - 1.0).abs(), f100.abs()))
}

fn es_improvement() -> Outcome {
    let cfg = JourneyConfig {
        noise_cv: 0.1,
        ..Default::default()
    };
    let cal = prepare_calibration(&cfg).map_err(|e| e.to_string())?;
    let es = EsConfig {
        generations: 100,
        lambda: 15,
        ..Default::default()
    };
    let evaluator = NetworkEvaluator {
        config: cfg.clone(),
        calibration: cal.clone(),
        runs: es.runs_per_eval,
        seed: cfg.seed,
    };
    let start = Genome::primitive();
    let out = evolution::evolve(&es, &start, &evaluator, cfg.seed).map_err(|e| e.to_string())?;
    let g0 = out.history[0].mean_fitness;
    let ratio = g0 / out.best_fitness;
    let pre = harness::run_batch(&cfg, &start, &cal, 100, cfg.seed).map_err(|e| e.to_string())?;
    let post = harness::run_batch(&cfg, &out.state.mean_genome(), &cal, 100, cfg.seed)
        .map_err(|e| e.to_string())?;
    let line = format!(
        "best fitness {:.0} vs generation-0 mean {g0:.0} ({ratio:.2}x); deviation {:.0} -> {:.0}; looping radius {:.0} -> {:.0}",
        out.best_fitness, pre.stats.mean_return_deviation, post.stats.mean_return_deviation, pre.stats.mean_looping_radius, post.stats.mean_looping_radius
    );
    ensure(
        ratio >= 2.0
            && post.stats.mean_return_deviation < pre.stats.mean_return_deviation
            && post.stats.mean_looping_radius < pre.stats.mean_looping_radius,
        line.clone(),
    )?;
    Ok(line)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(dir)
                    .expect("inside dir")
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&p).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("short.toml");
    std::fs::write(
        &cfg,
        "[journey]\nt_stop_ms = 20000.0\nt_return_ms = 5000.0\n",
    )
    .map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().ok_or("path")?;
    let commands: [&[&str]; 6] = [
        &["run", "--mode", "spiking", "--config", cfg],
        &["batch", "--journeys", "12", "--config", cfg],
        &[
            "batch",
            "--journeys",
            "4",
            "--mode",
            "spiking",
            "--config",
            cfg,
        ],
        &["evolve", "--generations", "3", "--config", cfg],
        &["calibrate", "--mode", "spiking"],
        &["compare", "--journeys", "3", "--updates", "50"],
    ];
    let mut n_files = 0;
    for (i, args) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "4"] {
            let out = tmp
                .path()
                .join(format!("c{i}_t{threads}_{}", outputs.len()));
            let status = Command::new(env!("CARGO_BIN_EXE_cxnav"))
                .args(["--threads", threads])
                .args(*args)
                .args(["--seed", "77", "--out", out.to_str().ok_or("path")?])
                .output()
                .map_err(|e| e.to_string())?;
            ensure(
                status.status.success(),
                format!(
                    "{args:?} failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            )?;
            outputs.push(files(&out));
        }
        ensure(!outputs[0].is_empty(), format!("{args:?} wrote nothing"))?;
        ensure(
            outputs.windows(2).all(|w| w[0] == w[1]),
            format!("{args:?} output differs between runs"),
        )?;
        n_files += outputs[0].len();
    }
    Ok(format!(
        "{} commands, {n_files} files byte-identical across 1 and 4 workers",
        commands.len()
    ))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "encoder exactness",
            limit: Duration::from_secs(1),
            check: encoder_exactness,
        },
        Criterion {
            id: 2,
            name: "integrator oracle equivalence",
            limit: Duration::from_secs(60),
            check: integrator_equivalence,
        },
        Criterion {
            id: 3,
            name: "home-vector fidelity",
            limit: Duration::from_secs(10),
            check: home_vector_fidelity,
        },
        Criterion {
            id: 4,
            name: "closed-loop homing",
            limit: Duration::from_secs(300),
            check: closed_loop_homing,
        },
        Criterion {
            id: 5,
            name: "scheduling fidelity",
            limit: Duration::from_secs(60),
            check: scheduling_fidelity,
        },
        Criterion {
            id: 6,
            name: "quantization",
            limit: Duration::from_secs(1),
            check: quantization,
        },
        Criterion {
            id: 7,
            name: "ES correctness",
            limit: Duration::from_secs(30),
            check: es_correctness,
        },
        Criterion {
            id: 8,
            name: "ES end-to-end improvement",
            limit: Duration::from_secs(900),
            check: es_improvement,
        },
        Criterion {
            id: 9,
            name: "determinism",
            limit: Duration::from_secs(600),
            check: determinism,
        },
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.id))
    {
        let start = Instant::now();
        let result = (c.check)();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {} ({}): {} [{:.1}s of {}s] {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
