use cxnav::agent_world::{AgentState, SensorRates};
use cxnav::calibration::{CalibrationTable, Stimulus, TransferProbe, Tuning};
use cxnav::harness::{
    compare_integrators, prepare_calibration, Fidelity, JourneyConfig, Mode, Phase,
};
use cxnav::rate_oracle::{RateNetwork, W_SUP_MAX};
use cxnav::spiking_core::{run_spiking_journey, Simulation, SpikingProbe};
use cxnav::Genome;

fn spiking_config() -> JourneyConfig {
    JourneyConfig {
        mode: Mode::Spiking,
        ..Default::default()
    }
}

fn spiking_cal() -> CalibrationTable {
    prepare_calibration(&spiking_config()).unwrap()
}

#[test]
fn integrators_track_the_rate_oracle() {
    let report =
        compare_integrators(&JourneyConfig::default(), &Genome::primitive(), 5, 200, 100).unwrap();
    for s in &report.stimuli {
        assert!(
            s.final_max_gap < 0.05 * W_SUP_MAX,
            "stimulus {}: gap {}",
            s.index,
            s.final_max_gap
        );
    }
}

#[test]
fn straight_east_difference_grows_with_the_oracle() {
    let cfg = spiking_config();
    let cal = spiking_cal();
    let rate_cal = prepare_calibration(&JourneyConfig::default()).unwrap();
    let g = Genome::primitive();
    let mut sim = Simulation::new(&cfg, &g, &cal, 3).unwrap();
    let mut net = RateNetwork::new(&g, &rate_cal, cfg.h, cfg.k);
    let s = SensorRates::sense(&AgentState::at_home(0.0, 1.0), &cfg.world);
    // cell 1 of each hemisphere points home to the west, cell 3 to the east
    let diff = |t: [f64; 8]| (t[1] + t[5]) - (t[3] + t[7]);
    let mut prev = f64::NEG_INFINITY;
    for step in 0..300 {
        sim.stimulate(&s);
        net.step(&s);
        let spk = diff(sim.cpu4_totals().map(f64::from));
        if step % 10 == 9 {
            assert!(spk > prev, "step {step}: {spk} <= {prev}");
            prev = spk;
        }
        let ora = diff(net.state.cpu4_state);
        assert!(
            (spk - ora).abs() < 0.05 * W_SUP_MAX,
            "step {step}: spiking {spk} oracle {ora}"
        );
    }
    assert!(prev > 100.0);
}

#[test]
fn silent_sources_decay_integrators() {
    let cfg = spiking_config();
    let cal = spiking_cal();
    let mut sim = Simulation::new(&cfg, &Genome::primitive(), &cal, 1).unwrap();
    let silent = SensorRates::default();
    for n in 1..=100u32 {
        sim.stimulate(&silent);
        let expect = (504.0 - cfg.h * cfg.k * n as f64).floor();
        for t in sim.cpu4_totals() {
            assert!(
                (t as f64 - expect).abs() <= 1.0,
                "window {n}: total {t} expected {expect}"
            );
        }
        assert_eq!(sim.log.cpu4_totals.len(), n as usize);
    }
    assert_eq!(sim.cpu4_totals()[0], 497);
}

#[test]
fn counters_are_read_once_per_window() {
    let cfg = JourneyConfig {
        t_stop_ms: 2_000.0,
        t_return_ms: 1_000.0,
        ..spiking_config()
    };
    let cal = spiking_cal();
    let (_, spikes, log) = run_spiking_journey(&cfg, &Genome::primitive(), &cal, 9).unwrap();
    assert_eq!(log.cpu4_counts.len(), 20);
    let counted: u64 = log
        .cpu4_counts
        .iter()
        .map(|c| c.iter().map(|&x| x as u64).sum::<u64>())
        .chain(
            log.cpu1_counts
                .iter()
                .map(|c| c.iter().map(|&x| x as u64).sum()),
        )
        .chain(
            log.motor_counts
                .iter()
                .map(|c| c.iter().map(|&x| x as u64).sum()),
        )
        .sum();
    let emitted = spikes
        .events
        .iter()
        .filter(|e| (e.neuron_id as usize) < 18)
        .count() as u64;
    assert_eq!(counted, emitted);
}

#[test]
fn full_journey_records_every_second_position_and_is_deterministic() {
    let cfg = JourneyConfig {
        fidelity: Fidelity::Hardware16bit,
        ..spiking_config()
    };
    let cal = spiking_cal();
    let g = Genome::primitive();
    let (a, sa, log) = run_spiking_journey(&cfg, &g, &cal, 21).unwrap();
    assert_eq!(log.cpu4_counts.len(), 2000);
    assert_eq!(a.points.len(), 1000);
    assert!(log.cpu4_counts.iter().flatten().all(|&c| c <= 10));
    let first_return = a
        .points
        .iter()
        .position(|p| p.phase == Phase::Return)
        .unwrap();
    assert_eq!(a.points[first_return].step, cfg.n_return() as u64);
    let (b, sb, _) = run_spiking_journey(&cfg, &g, &cal, 21).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn integrator_rate_is_linear_in_weight_after_calibration() {
    let cfg = spiking_config();
    let cal = spiking_cal();
    let probe = SpikingProbe::for_config(&cfg).unwrap();
    let tuning: Tuning = cal.cpu4(0);
    let rates: Vec<f64> = (0..=20)
        .map(|k| {
            probe
                .measure(0, Stimulus::Weight(k as f64 * 50.4), tuning)
                .0
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
    for (k, r) in rates
        .iter()
        .enumerate()
        .filter(|(k, _)| (5..=15).contains(k))
    {
        let target = k as f64 / 20.0;
        assert!(
            (r - target).abs() < 0.05,
            "weight {}: rate {r}",
            k as f64 * 50.4
        );
    }
}
