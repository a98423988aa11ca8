use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    #[default]
    Periodic,
    Poisson,
}

/// Virtual spike source that can fire at most once per slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeSource {
    pub rate: f64,
    pub mode: SourceMode,
    phase: f64,
}

impl SpikeSource {
    pub fn new(rate: f64, mode: SourceMode) -> Self {
        Self {
            rate: rate.clamp(0.0, 1.0),
            mode,
            phase: 0.5,
        }
    }

    pub fn set_rate(&mut self, rate: f64) {
        self.rate = rate.clamp(0.0, 1.0);
    }

    /// Restart the phase so the next window holds exactly round(10 r) spikes.
    pub fn reset_phase(&mut self) {
        self.phase = 0.5;
    }

    /// Start the phase at `p` (0..1); used to stagger parallel sources.
    pub fn with_phase(mut self, p: f64) -> Self {
        self.phase = p.rem_euclid(1.0);
        self
    }

    pub fn tick<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        match self.mode {
            SourceMode::Periodic => {
                self.phase += self.rate;
                if self.phase >= 1.0 - 1e-9 {
                    self.phase -= 1.0;
                    true
                } else {
                    false
                }
            }
            SourceMode::Poisson => self.rate > 0.0 && rng.random::<f64>() < self.rate,
        }
    }
}

/// Spike source tick: whether `source` fires in the current slot.
pub fn spike_source_tick<R: Rng + ?Sized>(source: &mut SpikeSource, rng: &mut R) -> bool {
    source.tick(rng)
}
