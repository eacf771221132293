//! Black-box minimizers over a finite feasible set.
//!
//! Each optimizer proposes points in normalized coordinates; the search loop
//! projects every proposal onto the feasible set before evaluating, so
//! optimizers may emit any vector in [-1,1]^d. Results come back through
//! `observe`, including replays when a proposal lands on an element that was
//! already evaluated.

mod bayes;
mod genetic;
mod random;

pub use bayes::{BayesianOpt, BoConfig};
pub use genetic::{GaConfig, GeneticAlgorithm};
pub use random::RandomSearch;

use crate::search::FeasibleSet;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashSet;

/// One evaluated query: feasible-set index, normalized point, loss.
#[derive(Debug, Clone)]
pub struct Observation {
    pub element: usize,
    pub point: Vec<f64>,
    pub loss: f64,
}

/// Query strategy for the perturbation search. `history` holds every
/// distinct evaluated element in evaluation order.
pub trait BlackBoxOptimizer {
    fn name(&self) -> &'static str;
    fn propose(&mut self, history: &[Observation], q: &FeasibleSet) -> Vec<f64>;
    fn observe(&mut self, obs: &Observation);
}

/// Optimizer selector for configuration and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Rs,
    Ga,
    Bo,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Rs, OptimizerKind::Ga, OptimizerKind::Bo];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Rs => "rs",
            OptimizerKind::Ga => "ga",
            OptimizerKind::Bo => "bo",
        }
    }

    pub fn build(self, seed: u64) -> Box<dyn BlackBoxOptimizer> {
        match self {
            OptimizerKind::Rs => Box::new(RandomSearch::new(seed)),
            OptimizerKind::Ga => Box::new(GeneticAlgorithm::new(GaConfig::default(), seed)),
            OptimizerKind::Bo => Box::new(BayesianOpt::new(BoConfig::default(), seed)),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rs" => Ok(OptimizerKind::Rs),
            "ga" => Ok(OptimizerKind::Ga),
            "bo" => Ok(OptimizerKind::Bo),
            other => Err(format!("unknown optimizer '{other}' (expected rs|ga|bo)")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniformly picks a not-yet-evaluated element; falls back to any element
/// when the whole set has been queried.
pub(crate) fn random_unqueried(
    history: &[Observation],
    q: &FeasibleSet,
    rng: &mut ChaCha12Rng,
) -> usize {
    let queried: HashSet<usize> = history.iter().map(|o| o.element).collect();
    let free: Vec<usize> = (0..q.len()).filter(|i| !queried.contains(i)).collect();
    if free.is_empty() {
        rng.gen_range(0..q.len())
    } else {
        free[rng.gen_range(0..free.len())]
    }
}
