//! The 26 evolvable weights around the steering layer.
//!
//! Layout: `tb1_to_cpu1[8]`, `cpu4_to_cpu1_exc[8]`, `cpu4_to_cpu1_inh[8]`, `cpu1_to_m[2]`.
//! Within each block of eight, entries 0..4 are the left hemisphere and 4..8 the right.
//! Values are in 6-bit synapse units (one LSB of a hardware synapse).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GENOME_LEN: usize = 26;
/// Largest weight a single 6-bit synapse can hold.
pub const WEIGHT_MAX: f64 = 63.0;

const TB1: usize = 0;
const EXC: usize = 8;
const INH: usize = 16;
const MOTOR: usize = 24;

/// Hemisphere of a paired population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Flat index (0..8) of cell `j` in hemisphere `side`.
pub fn cell(side: Side, j: usize) -> usize {
    side.index() * 4 + j % 4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genome([f64; GENOME_LEN]);

impl TryFrom<Vec<f64>> for Genome {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Genome::from_slice(&v)
    }
}

impl From<Genome> for Vec<f64> {
    fn from(g: Genome) -> Self {
        g.0.to_vec()
    }
}

/// Hand-set starting weights.
pub const PRIMITIVE_TB1: f64 = 6.0;
pub const PRIMITIVE_CPU4: f64 = 58.0;
pub const PRIMITIVE_MOTOR: f64 = 63.0;

impl Genome {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; GENOME_LEN] = values.try_into().map_err(|_| {
            Error::Usage(format!(
                "genome needs {GENOME_LEN} values, got {}",
                values.len()
            ))
        })?;
        if let Some(v) = arr.iter().find(|v| !v.is_finite()) {
            return Err(Error::Usage(format!("non-finite genome entry {v}")));
        }
        Ok(Genome(arr))
    }

    pub fn zeros() -> Self {
        Genome([0.0; GENOME_LEN])
    }

    pub fn uniform(tb1: f64, exc: f64, inh: f64, motor: f64) -> Self {
        let mut g = [0.0; GENOME_LEN];
        g[TB1..EXC].fill(tb1);
        g[EXC..INH].fill(exc);
        g[INH..MOTOR].fill(inh);
        g[MOTOR..].fill(motor);
        Genome(g)
    }

    pub fn primitive() -> Self {
        Self::uniform(
            PRIMITIVE_TB1,
            PRIMITIVE_CPU4,
            PRIMITIVE_CPU4,
            PRIMITIVE_MOTOR,
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn tb1_to_cpu1(&self, side: Side, j: usize) -> f64 {
        self.0[TB1 + cell(side, j)]
    }

    pub fn cpu4_exc(&self, side: Side, j: usize) -> f64 {
        self.0[EXC + cell(side, j)]
    }

    pub fn cpu4_inh(&self, side: Side, j: usize) -> f64 {
        self.0[INH + cell(side, j)]
    }

    pub fn cpu1_to_m(&self, side: Side) -> f64 {
        self.0[MOTOR + side.index()]
    }

    /// Copy with every weight clamped to the synapse range.
    pub fn materialize(&self) -> Genome {
        Genome(self.0.map(|w| w.clamp(0.0, WEIGHT_MAX)))
    }

    /// Copy rounded to integer synapse codes, as the hardware stores them.
    pub fn quantize(&self) -> [u8; GENOME_LEN] {
        self.0.map(|w| w.clamp(0.0, WEIGHT_MAX).round() as u8)
    }

    /// Short content hash used to tag outputs.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.0 {
            h.update(w.to_le_bytes());
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl Default for Genome {
    fn default() -> Self {
        Genome::primitive()
    }
}
