use serde::{Deserialize, Serialize};

use crate::agent_world::WorldParams;
use crate::error::{Error, Result};
use crate::evolution::EsConfig;
use crate::spiking_core::ScheduleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Rate,
    Spiking,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate" => Ok(Mode::Rate),
            "spiking" => Ok(Mode::Spiking),
            _ => Err(Error::Usage(format!(
                "unknown mode '{s}' (expected rate or spiking)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Rate => "rate",
            Mode::Spiking => "spiking",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    #[default]
    FullPrecision,
    Hardware16bit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JourneyConfig {
    pub t_stop_ms: f64,
    pub t_return_ms: f64,
    pub dt_update_ms: f64,
    pub h: f64,
    pub k: f64,
    pub mode: Mode,
    pub fidelity: Fidelity,
    pub seed: u64,
    /// Relative spread of fixed-pattern mismatch; 0 disables it.
    pub noise_cv: f64,
    /// Seed of the mismatch pattern (one virtual chip per seed).
    pub noise_seed: u64,
    /// Radius for the "overlaps home" statistic; defaults to half a step.
    pub d_overlap: Option<f64>,
    pub world: WorldParams,
    pub schedule: ScheduleConfig,
}

impl Default for JourneyConfig {
    fn default() -> Self {
        Self {
            t_stop_ms: 200_000.0,
            t_return_ms: 50_000.0,
            dt_update_ms: 100.0,
            h: 0.0336,
            k: 2.0,
            mode: Mode::Rate,
            fidelity: Fidelity::FullPrecision,
            seed: 1,
            noise_cv: 0.0,
            noise_seed: 0,
            d_overlap: None,
            world: WorldParams::default(),
            schedule: ScheduleConfig::default(),
        }
    }
}

fn whole_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() < 1e-9 && n >= 1.0).then_some(n as usize)
}

impl JourneyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_update_ms > 0.0) {
            return Err(Error::Usage("dt_update_ms must be positive".into()));
        }
        if !(self.t_return_ms > 0.0 && self.t_return_ms <= self.t_stop_ms) {
            return Err(Error::Usage(format!(
                "need 0 < t_return <= t_stop, got t_return={} t_stop={}",
                self.t_return_ms, self.t_stop_ms
            )));
        }
        whole_ratio(self.t_stop_ms, self.dt_update_ms)
            .ok_or_else(|| Error::Usage("t_stop must be a whole number of updates".into()))?;
        whole_ratio(self.t_return_ms, self.dt_update_ms)
            .ok_or_else(|| Error::Usage("t_return must be a whole number of updates".into()))?;
        if !(self.h.is_finite() && self.k.is_finite()) {
            return Err(Error::Usage("h and k must be finite".into()));
        }
        if !(self.noise_cv >= 0.0) {
            return Err(Error::Usage("noise_cv must be >= 0".into()));
        }
        if let Some(d) = self.d_overlap {
            if !(d >= 0.0) {
                return Err(Error::Usage("d_overlap must be >= 0".into()));
            }
        }
        self.world.validate()?;
        self.schedule.validate(self.dt_update_ms)
    }

    pub fn n_updates(&self) -> usize {
        whole_ratio(self.t_stop_ms, self.dt_update_ms).unwrap_or(0)
    }

    pub fn n_return(&self) -> usize {
        whole_ratio(self.t_return_ms, self.dt_update_ms).unwrap_or(0)
    }

    pub fn d_overlap(&self) -> f64 {
        self.d_overlap.unwrap_or(self.world.v_max / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub journeys: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { journeys: 100 }
    }
}

/// Everything a config file can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub journey: JourneyConfig,
    pub batch: BatchConfig,
    pub evolution: EsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Usage(format!("bad config: {e}")))?;
        cfg.journey.validate()?;
        cfg.evolution.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = JourneyConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_updates(), 2000);
        assert_eq!(c.n_return(), 500);
        assert_eq!(c.d_overlap(), c.world.v_max / 2.0);
    }

    #[test]
    fn rejects_bad_timing() {
        let c = JourneyConfig {
            t_return_ms: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = JourneyConfig {
            t_return_ms: 300_000.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = JourneyConfig {
            t_stop_ms: 200_050.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c = RunConfig::from_toml("[journey]\nmode = \"spiking\"\nseed = 9\n").unwrap();
        assert_eq!(c.journey.mode, Mode::Spiking);
        assert_eq!(c.journey.seed, 9);
        assert_eq!(c.journey.h, 0.0336);
        assert!(RunConfig::from_toml("[journey]\nbogus = 1\nmode = \"x\"").is_err());
    }
}
