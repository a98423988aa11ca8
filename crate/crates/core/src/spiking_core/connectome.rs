use serde::{Deserialize, Serialize};

use super::lif::Sign;
use super::supersynapse::Supersynapse;
use crate::calibration::{cpu1_id, cpu4_id, motor_id, CalibrationTable, Tuning, N_NEURONS};
use crate::error::Result;
use crate::genome::{cell, Genome, Side, GENOME_LEN};
use crate::rate_oracle::{cpu1_inh_source, cpu1_tb1_source, cpu4_tb1_source, CPU4_BASELINE};

/// Virtual spike sources: compass 0..4, optic flow left 4 and right 5, background 6..14.
pub const N_SOURCES: usize = 14;

pub fn tb1_source(j: usize) -> usize {
    j
}

pub fn tn_source(side: Side) -> usize {
    4 + side.index()
}

pub fn background_source(i: usize) -> usize {
    6 + i
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pre {
    Source(usize),
    Neuron(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynWeight {
    /// Single 6-bit synapse.
    Fixed(u8),
    /// Index into the connectome's supersynapses.
    Super(usize),
}

/// One physical synapse row; the motor synapse is shared by four presynaptic cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: Vec<Pre>,
    pub post: usize,
    pub sign: Sign,
    pub weight: SynWeight,
}

/// Axo-axonic modulation of a supersynapse by a source's spike count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modulation {
    pub source: usize,
    pub target: usize,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connectome {
    pub synapses: Vec<Synapse>,
    pub modulations: Vec<Modulation>,
    pub supers: [Supersynapse; 8],
    pub tuning: [Tuning; N_NEURONS],
}

impl Connectome {
    pub fn cpu4_neurons() -> std::ops::Range<usize> {
        0..8
    }

    pub fn cpu1_neurons() -> std::ops::Range<usize> {
        8..16
    }

    pub fn motor_neurons() -> std::ops::Range<usize> {
        16..18
    }

    /// Recover the genome stored in the synapse table.
    pub fn genome(&self) -> Genome {
        let mut g = [0.0; GENOME_LEN];
        for s in &self.synapses {
            let SynWeight::Fixed(w) = s.weight else {
                continue;
            };
            let w = w as f64;
            match (s.pre[0], s.post, s.sign) {
                (Pre::Source(_), post, Sign::Inh) => g[post - 8] = w,
                (Pre::Neuron(pre), post, Sign::Exc) if pre < 8 => g[8 + post - 8] = w,
                (Pre::Neuron(_), post, Sign::Inh) => g[16 + post - 8] = w,
                (Pre::Neuron(_), post, Sign::Exc) => g[24 + post - 16] = w,
                _ => {}
            }
        }
        Genome::from_slice(&g).expect("26 finite weights")
    }

    /// Synapses arriving at `post`.
    pub fn inputs(&self, post: usize) -> impl Iterator<Item = &Synapse> {
        self.synapses.iter().filter(move |s| s.post == post)
    }
}

pub fn build_network(genome: &Genome, cal: &CalibrationTable) -> Result<Connectome> {
    let q = genome.quantize();
    let w = |side: Side, j: usize, block: usize| q[block + cell(side, j)];
    let mut synapses = Vec::new();
    for i in 0..8 {
        synapses.push(Synapse {
            pre: vec![Pre::Source(background_source(i))],
            post: cpu4_id(i),
            sign: Sign::Exc,
            weight: SynWeight::Super(i),
        });
    }
    for side in Side::BOTH {
        for j in 0..4 {
            let post = cpu1_id(cell(side, j));
            synapses.push(Synapse {
                pre: vec![Pre::Source(tb1_source(cpu1_tb1_source(side, j)))],
                post,
                sign: Sign::Inh,
                weight: SynWeight::Fixed(w(side, j, 0)),
            });
            synapses.push(Synapse {
                pre: vec![Pre::Neuron(cpu4_id(cell(side, j)))],
                post,
                sign: Sign::Exc,
                weight: SynWeight::Fixed(w(side, j, 8)),
            });
            synapses.push(Synapse {
                pre: vec![Pre::Neuron(cpu4_id(cpu1_inh_source(side, j)))],
                post,
                sign: Sign::Inh,
                weight: SynWeight::Fixed(w(side, j, 16)),
            });
        }
    }
    for side in Side::BOTH {
        synapses.push(Synapse {
            pre: (0..4)
                .map(|j| Pre::Neuron(cpu1_id(cell(side, j))))
                .collect(),
            post: motor_id(side),
            sign: Sign::Exc,
            weight: SynWeight::Fixed(q[24 + side.index()]),
        });
    }
    let mut modulations = Vec::new();
    for side in Side::BOTH {
        for j in 0..4 {
            let i = cell(side, j);
            // optic flow from the opposite side facilitates, compass input depresses
            modulations.push(Modulation {
                source: tn_source(side.other()),
                target: i,
                sign: Sign::Exc,
            });
            modulations.push(Modulation {
                source: tb1_source(cpu4_tb1_source(j)),
                target: i,
                sign: Sign::Inh,
            });
        }
    }
    Ok(Connectome {
        synapses,
        modulations,
        supers: [Supersynapse::new(CPU4_BASELINE as u16); 8],
        tuning: std::array::from_fn(|id| cal.tuning(id)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mode;

    fn table() -> CalibrationTable {
        CalibrationTable::identity(Mode::Spiking)
    }

    #[test]
    fn zero_genome_keeps_topology() {
        let c = build_network(&Genome::zeros(), &table()).unwrap();
        assert_eq!(c.synapses.len(), 8 + 24 + 2);
        for s in &c.synapses {
            if let SynWeight::Fixed(w) = s.weight {
                assert_eq!(w, 0);
            }
        }
    }

    #[test]
    fn genome_round_trip() {
        let g = Genome::primitive();
        assert_eq!(build_network(&g, &table()).unwrap().genome(), g);
        let v: Vec<f64> = (0..26).map(|i| (i * 2) as f64).collect();
        let g = Genome::from_slice(&v).unwrap();
        assert_eq!(build_network(&g, &table()).unwrap().genome(), g);
    }

    #[test]
    fn adjacency_matches_wiring_table() {
        // independent listing: (pre, post, sign) for the steering layer
        let mut expected = Vec::new();
        for j in 0..4usize {
            expected.push((Pre::Source(tb1_source((j + 1) % 4)), 8 + j, Sign::Inh));
            expected.push((Pre::Neuron(j), 8 + j, Sign::Exc));
            expected.push((Pre::Neuron(4 + (j + 2) % 4), 8 + j, Sign::Inh));
            expected.push((Pre::Source(tb1_source((j + 3) % 4)), 12 + j, Sign::Inh));
            expected.push((Pre::Neuron(4 + j), 12 + j, Sign::Exc));
            expected.push((Pre::Neuron((j + 2) % 4), 12 + j, Sign::Inh));
        }
        let c = build_network(&Genome::primitive(), &table()).unwrap();
        let mut got: Vec<_> = c
            .synapses
            .iter()
            .filter(|s| (8..16).contains(&s.post))
            .map(|s| (s.pre[0], s.post, s.sign))
            .collect();
        let key = |t: &(Pre, usize, Sign)| format!("{t:?}");
        got.sort_by_key(key);
        expected.sort_by_key(key);
        assert_eq!(got, expected);
        // 18 simulated neurons, each motor cell fed by one shared synapse
        let posts: std::collections::BTreeSet<usize> = c.synapses.iter().map(|s| s.post).collect();
        assert_eq!(posts.len(), 18);
        for side in Side::BOTH {
            let m: Vec<_> = c.inputs(motor_id(side)).collect();
            assert_eq!(m.len(), 1);
            assert_eq!(m[0].pre.len(), 4);
        }
        assert_eq!(c.modulations.len(), 16);
    }
}
