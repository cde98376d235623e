use rand::{Rng, SeedableRng};

use super::GenRng;
use crate::model::{OpType, WorkloadMix};
use crate::Result;

/// Draws operation types with the configured proportions.
#[derive(Clone, Debug)]
pub struct OperationMixSampler {
    cumulative: Vec<(f64, OpType)>,
    rng: GenRng,
}

impl OperationMixSampler {
    pub fn new(mix: &WorkloadMix, seed: u64) -> Result<Self> {
        mix.validate()?;
        let mut acc = 0.0;
        let cumulative = OpType::ALL
            .iter()
            .filter(|&&op| mix.get(op) > 0.0)
            .map(|&op| {
                acc += mix.get(op);
                (acc, op)
            })
            .collect();
        Ok(OperationMixSampler {
            cumulative,
            rng: GenRng::seed_from_u64(seed),
        })
    }

    pub fn next_operation(&mut self) -> OpType {
        if self.cumulative.len() == 1 {
            return self.cumulative[0].1;
        }
        let u: f64 = self.rng.random();
        self.cumulative
            .iter()
            .find(|(c, _)| u < *c)
            .unwrap_or_else(|| self.cumulative.last().unwrap())
            .1
    }
}
