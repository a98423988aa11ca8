use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::{Fidelity, JourneyConfig, Mode};
use crate::agent_world::AgentState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Outbound,
    Return,
    Looping,
}

impl Phase {
    /// Phase of update `step` for a return switch at update `n_return`.
    pub fn of(step: usize, n_return: usize) -> Phase {
        if step < n_return {
            Phase::Outbound
        } else if step < 2 * n_return {
            Phase::Return
        } else {
            Phase::Looping
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub t_bio_ms: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub mode: Mode,
    pub genome_hash: String,
}

/// Outcome of storing one position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Stored,
    /// Stored after clamping a coordinate to the 16-bit range.
    Clamped,
    /// Dropped because the store is full.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub meta: TrajectoryMeta,
    pub fidelity: Fidelity,
    pub max_records: usize,
    pub overflow: bool,
    pub capacity_exceeded: bool,
}

fn to_i16(v: f64) -> (f64, bool) {
    let r = v.round();
    if r > i16::MAX as f64 {
        (i16::MAX as f64, true)
    } else if r < i16::MIN as f64 {
        (i16::MIN as f64, true)
    } else {
        (r, false)
    }
}

impl Trajectory {
    pub fn new(meta: TrajectoryMeta, fidelity: Fidelity, max_records: usize) -> Self {
        Self {
            points: Vec::new(),
            meta,
            fidelity,
            max_records,
            overflow: false,
            capacity_exceeded: false,
        }
    }

    pub fn for_config(config: &JourneyConfig, genome_hash: String) -> Self {
        let meta = TrajectoryMeta {
            seed: config.seed,
            mode: config.mode,
            genome_hash,
        };
        Self::new(meta, config.fidelity, config.schedule.max_records)
    }

    /// Whether update `step` is written under this trajectory's fidelity.
    pub fn wants(&self, step: usize, stride: usize) -> bool {
        match self.fidelity {
            Fidelity::FullPrecision => true,
            Fidelity::Hardware16bit => step.is_multiple_of(stride.max(1)),
        }
    }

    pub fn record_position(
        &mut self,
        state: &AgentState,
        step: u64,
        t_bio_ms: f64,
        phase: Phase,
    ) -> RecordStatus {
        let (x, y, clamped) = match self.fidelity {
            Fidelity::FullPrecision => (state.x, state.y, false),
            Fidelity::Hardware16bit => {
                if self.points.len() >= self.max_records {
                    self.capacity_exceeded = true;
                    return RecordStatus::Rejected;
                }
                let (x, cx) = to_i16(state.x);
                let (y, cy) = to_i16(state.y);
                (x, y, cx || cy)
            }
        };
        self.overflow |= clamped;
        self.points.push(TrajectoryPoint {
            step,
            t_bio_ms,
            x,
            y,
            phi: state.phi,
            phase,
        });
        if clamped {
            RecordStatus::Clamped
        } else {
            RecordStatus::Stored
        }
    }

    pub fn phase_points(&self, phase: Phase) -> impl Iterator<Item = &TrajectoryPoint> {
        self.points.iter().filter(move |p| p.phase == phase)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Parse the CSV written by [`Trajectory::write_csv`]; metadata is supplied by the caller.
    pub fn read_csv<R: Read>(
        r: R,
        meta: TrajectoryMeta,
        fidelity: Fidelity,
        max_records: usize,
    ) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let points = rd
            .deserialize()
            .collect::<std::result::Result<Vec<TrajectoryPoint>, _>>()?;
        if fidelity == Fidelity::Hardware16bit && points.len() > max_records {
            return Err(Error::Format("more rows than the record capacity".into()));
        }
        Ok(Self {
            points,
            meta,
            fidelity,
            max_records,
            overflow: false,
            capacity_exceeded: false,
        })
    }
}
