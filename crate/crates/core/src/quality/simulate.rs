use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{QualityLadder, SatisfactionRecord, SubjectKind};
use crate::error::{Error, Result};
use crate::seed;

/// A simulated population of machine perceivers.
///
/// Machine `m` is satisfied at rung `k` iff `k <= thresholds[m]`; each verdict
/// is then flipped independently with probability `flip_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachinePopulation {
    pub thresholds: Vec<u32>,
    #[serde(default)]
    pub flip_rate: f64,
}

impl MachinePopulation {
    pub fn new(thresholds: Vec<u32>, flip_rate: f64) -> Self {
        MachinePopulation {
            thresholds,
            flip_rate,
        }
    }
}

pub fn machine_id(m: usize) -> String {
    format!("machine_{m:03}")
}

/// Emits one record per (machine, rung), ordered by machine then rung.
/// The flip stream depends only on `seed` and the ladder id.
pub fn simulate_machine_population(
    ladder: &QualityLadder,
    population: &MachinePopulation,
    seed: u64,
) -> Result<Vec<SatisfactionRecord>> {
    let k = ladder.len() as u32;
    if let Some(bad) = population.thresholds.iter().find(|&&t| t > k) {
        return Err(Error::InvalidArgument(format!(
            "machine threshold {bad} outside [0, {k}] for ladder {}",
            ladder.ladder_id
        )));
    }
    if !(0.0..=1.0).contains(&population.flip_rate) {
        return Err(Error::InvalidArgument(format!(
            "flip rate {} outside [0, 1]",
            population.flip_rate
        )));
    }
    let mut rng = seed::rng(seed, &[seed::hash_str(&ladder.ladder_id)]);
    let mut out = Vec::with_capacity(population.thresholds.len() * ladder.len());
    for (m, &threshold) in population.thresholds.iter().enumerate() {
        let subject_id = machine_id(m + 1);
        for rung_index in ladder.rung_indices() {
            let mut satisfied = rung_index <= threshold;
            if population.flip_rate > 0.0 && rng.random::<f64>() < population.flip_rate {
                satisfied = !satisfied;
            }
            out.push(SatisfactionRecord {
                ladder_id: ladder.ladder_id.clone(),
                rung_index,
                subject_id: subject_id.clone(),
                subject_kind: SubjectKind::Machine,
                satisfied,
            });
        }
    }
    Ok(out)
}
