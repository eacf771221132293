//! Generational genetic algorithm over normalized perturbation vectors.
//!
//! Generations keep the best observed genomes unchanged (elitism) and fill
//! the rest with uniform-crossover children of parents drawn by a softmax
//! over negative loss, with per-coordinate mutation clamped to [-1,1].
//! Observations that were never proposed (the forced first query, cache
//! replays) simply join the breeding pool, which tracks the most recent
//! distinct elements; while it holds fewer than two, a generation is sampled
//! uniformly from the feasible set instead of bred, so a lone seed point
//! never collapses the search onto itself.

use super::{BlackBoxOptimizer, Observation};
use crate::search::FeasibleSet;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{HashSet, VecDeque};

#[derive(Debug, Clone)]
pub struct GaConfig {
    pub population: usize,
    /// Best genomes copied unchanged into the next generation.
    pub elites: usize,
    /// Per-coordinate mutation probability.
    pub mutation_prob: f64,
    /// Mutation offset is uniform in [-scale, scale].
    pub mutation_scale: f64,
    /// Softmax temperature for parent selection over negative loss.
    pub selection_temp: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 8,
            elites: 1,
            mutation_prob: 0.1,
            mutation_scale: 0.3,
            selection_temp: 0.1,
        }
    }
}

pub struct GeneticAlgorithm {
    cfg: GaConfig,
    rng: ChaCha12Rng,
    queue: VecDeque<Vec<f64>>,
    observed: Vec<(usize, Vec<f64>, f64)>,
    best: Option<(Vec<f64>, f64)>,
}

impl GeneticAlgorithm {
    pub fn new(cfg: GaConfig, seed: u64) -> Self {
        assert!(cfg.population >= 1, "population must be at least 1");
        assert!(cfg.elites <= cfg.population, "elites cannot exceed the population");
        GeneticAlgorithm {
            cfg,
            rng: ChaCha12Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            observed: Vec::new(),
            best: None,
        }
    }

    /// The best observation seen so far, if any.
    pub fn incumbent(&self) -> Option<&(Vec<f64>, f64)> {
        self.best.as_ref()
    }

    fn pick(&mut self, weights: &[f64], total: f64) -> usize {
        if total <= 0.0 || !total.is_finite() {
            return self.rng.gen_range(0..weights.len());
        }
        let mut u = self.rng.gen_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    fn refill(&mut self, q: &FeasibleSet) {
        // Breeding pool: the most recently seen distinct elements. Cache
        // replays only refresh recency; they never crowd out diversity.
        let mut pool: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut seen: HashSet<usize> = HashSet::new();
        for (element, point, loss) in self.observed.iter().rev() {
            if seen.insert(*element) {
                pool.push((point.clone(), *loss));
                if pool.len() == self.cfg.population {
                    break;
                }
            }
        }
        if pool.len() < 2 {
            for _ in 0..self.cfg.population {
                let idx = self.rng.gen_range(0..q.len());
                self.queue.push_back(q.elements[idx].clone());
            }
            return;
        }
        // The global best is guaranteed a slot.
        if let Some(best) = &self.best {
            if !pool.iter().any(|(_, l)| *l <= best.1) {
                pool.push(best.clone());
            }
        }
        let min_loss = pool.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> =
            pool.iter().map(|p| (-(p.1 - min_loss) / self.cfg.selection_temp).exp()).collect();
        let total: f64 = weights.iter().sum();

        let mut by_loss: Vec<usize> = (0..pool.len()).collect();
        by_loss.sort_by(|&a, &b| pool[a].1.total_cmp(&pool[b].1));
        for &i in by_loss.iter().take(self.cfg.elites.min(pool.len())) {
            self.queue.push_back(pool[i].0.clone());
        }

        let dim = q.dim();
        while self.queue.len() < self.cfg.population {
            let a = self.pick(&weights, total);
            let b = self.pick(&weights, total);
            let mut child: Vec<f64> = (0..dim)
                .map(|j| if self.rng.gen_bool(0.5) { pool[a].0[j] } else { pool[b].0[j] })
                .collect();
            for g in &mut child {
                if self.rng.gen::<f64>() < self.cfg.mutation_prob {
                    let off = self.rng.gen_range(-self.cfg.mutation_scale..=self.cfg.mutation_scale);
                    *g = (*g + off).clamp(-1.0, 1.0);
                }
            }
            self.queue.push_back(child);
        }
    }
}

impl BlackBoxOptimizer for GeneticAlgorithm {
    fn name(&self) -> &'static str {
        "ga"
    }

    fn propose(&mut self, _history: &[Observation], q: &FeasibleSet) -> Vec<f64> {
        if self.queue.is_empty() {
            self.refill(q);
        }
        self.queue.pop_front().expect("refill always enqueues at least one genome")
    }

    fn observe(&mut self, obs: &Observation) {
        self.observed.push((obs.element, obs.point.clone(), obs.loss));
        let better = self.best.as_ref().is_none_or(|(_, l)| obs.loss < *l);
        if better {
            self.best = Some((obs.point.clone(), obs.loss));
        }
    }
}
