use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Tb1,
    Tn,
    Background,
    Cpu4,
    Cpu1,
    Motor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub t_ms_bio: f64,
    pub neuron_id: u16,
    pub population: Population,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikeRecord {
    pub events: Vec<SpikeEvent>,
}

impl SpikeRecord {
    pub fn push(&mut self, t_ms_bio: f64, neuron_id: u16, population: Population) {
        self.events.push(SpikeEvent {
            t_ms_bio,
            neuron_id,
            population,
        });
    }

    pub fn count(&self, population: Population) -> usize {
        self.events
            .iter()
            .filter(|e| e.population == population)
            .count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.events {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut r = SpikeRecord::default();
        r.push(10.5, 3, Population::Cpu4);
        r.push(20.0, 17, Population::Motor);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t_ms_bio,neuron_id,population\n10.5,3,cpu4\n20.0,17,motor\n"
        );
        assert_eq!(r.count(Population::Cpu4), 1);
    }
}
