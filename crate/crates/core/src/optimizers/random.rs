//! Uniform random search, the budget-matched baseline.

use super::{random_unqueried, BlackBoxOptimizer, Observation};
use crate::search::FeasibleSet;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub struct RandomSearch {
    rng: ChaCha12Rng,
}

impl RandomSearch {
    pub fn new(seed: u64) -> Self {
        RandomSearch { rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl BlackBoxOptimizer for RandomSearch {
    fn name(&self) -> &'static str {
        "rs"
    }

    fn propose(&mut self, history: &[Observation], q: &FeasibleSet) -> Vec<f64> {
        q.elements[random_unqueried(history, q, &mut self.rng)].clone()
    }

    fn observe(&mut self, _obs: &Observation) {}
}
