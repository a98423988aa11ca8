use serde::{Deserialize, Serialize};

use crate::rate_oracle::W_SUP_MAX;

pub const SUB_SYNAPSES: usize = 16;
pub const SUB_MAX: u8 = 63;
pub const SUPER_MAX: u16 = 1008;

/// Sixteen ganged 6-bit synapses acting as one weight in 0..=1008, plus the
/// sub-LSB part of pending updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supersynapse {
    pub sub_weights: [u8; SUB_SYNAPSES],
    pub residual: f64,
}

/// Result of a write request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteStatus {
    Exact,
    Clamped,
}

impl Supersynapse {
    pub fn new(total: u16) -> Self {
        let mut s = Self {
            sub_weights: [0; SUB_SYNAPSES],
            residual: 0.0,
        };
        s.write(total as i64);
        s
    }

    pub fn total(&self) -> u16 {
        self.sub_weights.iter().map(|&w| w as u16).sum()
    }

    /// Spread `total` evenly: every sub-weight gets `total / 16`, the first
    /// `total % 16` get one more.
    pub fn write(&mut self, total: i64) -> WriteStatus {
        let clamped = total.clamp(0, SUPER_MAX as i64);
        let base = (clamped / SUB_SYNAPSES as i64) as u8;
        let extra = (clamped % SUB_SYNAPSES as i64) as usize;
        for (i, w) in self.sub_weights.iter_mut().enumerate() {
            *w = base + u8::from(i < extra);
        }
        if clamped == total {
            WriteStatus::Exact
        } else {
            WriteStatus::Clamped
        }
    }

    /// Apply a real-valued increment, storing the integer part and carrying the rest.
    pub fn add(&mut self, delta: f64) {
        let target = (self.total() as f64 + self.residual + delta).clamp(0.0, W_SUP_MAX);
        let whole = target.trunc();
        self.residual = target - whole;
        self.write(whole as i64);
    }

    /// Integrator update from the last window's source counts.
    pub fn cpu4_weight_update(&mut self, c_tn: u32, c_tb1: u32, h: f64, k: f64) {
        self.add(h * (c_tn as f64 - c_tb1 as f64 - k));
    }

    /// Stored weight including the carried fraction.
    pub fn value(&self) -> f64 {
        self.total() as f64 + self.residual
    }
}
