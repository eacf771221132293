//! Two-stage adversarial search over scenes.
//!
//! Stage one (collaborator search) scores every intelligent agent's pooled
//! attention importance, converts it to a per-combination weakness, and
//! samples a few ego-containing combinations to evaluate, keeping the worst
//! performer. Stage two (perturbation search) picks occlusion-critical
//! agents, builds a finite feasible set of jointly collision-free pose
//! perturbations, and lets a black-box optimizer walk that set under a query
//! budget. Every candidate the optimizer emits is projected onto the
//! feasible set, so only physically valid scenes are ever evaluated.
//!
//! The unperturbed element is always evaluated first, which makes the final
//! result at least as adversarial as the input scene.

use crate::error::Error;
use crate::evaluation::{adversarial_loss, EvalReport, LossWeights, EVAL_RANGE};
use crate::geometry::{obb_intersects, OrientedBox, Pose2};
use crate::hash::split_seed;
use crate::optimizers::{BlackBoxOptimizer, Observation, OptimizerKind};
use crate::perception::{attention_importance, ModelConfig};
use crate::scene::{apply_perturbation, Perturbation, Scene};
use itertools::Itertools;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

/// The set of collaborating viewpoints; always contains the ego agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollaborationChoice {
    /// Sorted ascending, deduplicated.
    pub members: Vec<u64>,
}

impl CollaborationChoice {
    pub fn new(mut members: Vec<u64>) -> Self {
        members.sort_unstable();
        members.dedup();
        CollaborationChoice { members }
    }

    pub fn contains(&self, id: u64) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// Collaborator-search knobs.
#[derive(Debug, Clone)]
pub struct AcsConfig {
    /// Collaboration size, ego included.
    pub k: usize,
    /// How many combinations to sample and evaluate.
    pub k0: usize,
    /// Softmax temperature over combination weakness.
    pub tau: f64,
}

impl Default for AcsConfig {
    fn default() -> Self {
        AcsConfig { k: 3, k0: 3, tau: 0.03 }
    }
}

/// How collaborator combinations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcsStrategy {
    /// Weakness-guided sampling from attention importance.
    Attention,
    /// Uniform sampling; the comparison baseline.
    Random,
}

/// Per-coordinate perturbation bounds; the normalized search space is
/// [-1,1]^(3m) scaled by these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBounds {
    pub dx_max: f64,
    pub dy_max: f64,
    /// Radians.
    pub dtheta_max: f64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { dx_max: 2.5, dy_max: 2.5, dtheta_max: 45f64.to_radians() }
    }
}

/// Which agents may be chosen as perturbation targets. The ego is never a
/// target under any policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetPolicy {
    /// Only non-intelligent agents (ordinary vehicles).
    #[default]
    NonIntelligent,
    /// Anything outside the collaborator set, except infrastructure.
    NonCollab,
    /// Any non-ego agent, infrastructure included.
    Any,
}

/// Finite set of jointly feasible perturbations for a fixed target list.
/// Element 0 is always the zero perturbation.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub targets: Vec<u64>,
    /// Normalized joint perturbations in [-1,1]^(3m), distinct.
    pub elements: Vec<Vec<f64>>,
    pub bounds: SearchBounds,
}

impl FeasibleSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        3 * self.targets.len()
    }

    fn denormalize_slice(&self, v: &[f64]) -> Perturbation {
        let deltas = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, _)| {
                [
                    v[3 * i] * self.bounds.dx_max,
                    v[3 * i + 1] * self.bounds.dy_max,
                    v[3 * i + 2] * self.bounds.dtheta_max,
                ]
            })
            .collect();
        Perturbation { targets: self.targets.clone(), deltas }
    }

    /// The real-unit perturbation of element `idx`.
    pub fn denormalize(&self, idx: usize) -> Perturbation {
        self.denormalize_slice(&self.elements[idx])
    }
}

/// One evaluated query.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    /// 1-based evaluation counter.
    pub iteration: usize,
    /// Index into the feasible set.
    pub element: usize,
    /// Denormalized perturbation that was applied.
    pub delta: Perturbation,
    pub l_adv: f64,
    pub elapsed_ms: f64,
}

/// Ordered history of evaluated queries.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The record with minimum loss; ties go to the earliest.
    pub fn best(&self) -> Option<&TraceRecord> {
        self.records.iter().reduce(|best, r| if r.l_adv < best.l_adv { r } else { best })
    }

    /// Running minimum of loss per iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.records.len());
        let mut best = f64::INFINITY;
        for r in &self.records {
            best = best.min(r.l_adv);
            out.push(best);
        }
        out
    }
}

fn boundary_samples(fp: &OrientedBox, n: usize) -> Vec<crate::geometry::Point2> {
    let corners = fp.corners();
    let edge_len = [fp.length, fp.width, fp.length, fp.width];
    let perim = 2.0 * (fp.length + fp.width);
    (0..n)
        .map(|i| {
            let mut d = perim * (i as f64 + 0.5) / n as f64;
            let mut e = 0;
            while e < 3 && d > edge_len[e] {
                d -= edge_len[e];
                e += 1;
            }
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            a + (b - a) * (d / edge_len[e]).min(1.0)
        })
        .collect()
}

/// Occlusion criticality per agent, summed over viewpoints.
///
/// From one viewpoint, an agent scores intrinsic 1 when some of 16 rays to
/// its boundary samples are blocked by other entities and some are clear
/// (partially occluded), and extrinsic +1 for every other agent whose view
/// it blocks at least one ray of. Obstacles block rays but are never scored.
pub fn occlusion_scores(scene: &Scene, viewpoints: &[u64]) -> Result<BTreeMap<u64, u64>, Error> {
    if viewpoints.is_empty() {
        return Err(Error::EmptyCandidates("occlusion scoring needs a viewpoint".into()));
    }
    let mut scores: BTreeMap<u64, u64> = scene.agents.iter().map(|a| (a.id, 0)).collect();
    for &v in viewpoints {
        let vp = scene.agent(v).ok_or(Error::UnknownAgent(v))?;
        let sensor = vp.sensor.as_ref().ok_or(Error::NoSensor(v))?;
        let origin = vp.pose.position();
        for target in &scene.agents {
            if target.id == v {
                continue;
            }
            let fp = target.footprint();
            let mut any_blocked = false;
            let mut any_clear = false;
            let mut blockers: BTreeSet<u64> = BTreeSet::new();
            for s in boundary_samples(&fp, 16) {
                let dist = s.dist(origin);
                if dist > sensor.range_m || dist < 1e-9 {
                    continue;
                }
                let ray = crate::geometry::Ray::new(origin, s - origin);
                let cutoff = dist - 1e-9;
                let mut blocked = false;
                for other in &scene.agents {
                    if other.id == v || other.id == target.id {
                        continue;
                    }
                    if ray_hits_before(&ray, &other.footprint(), cutoff) {
                        blocked = true;
                        blockers.insert(other.id);
                    }
                }
                for obs in &scene.obstacles {
                    if ray_hits_before(&ray, obs, cutoff) {
                        blocked = true;
                    }
                }
                if blocked {
                    any_blocked = true;
                } else {
                    any_clear = true;
                }
            }
            if any_blocked && any_clear {
                *scores.get_mut(&target.id).expect("scored agents pre-seeded") += 1;
            }
            for b in blockers {
                *scores.get_mut(&b).expect("scored agents pre-seeded") += 1;
            }
        }
    }
    Ok(scores)
}

fn ray_hits_before(ray: &crate::geometry::Ray, bb: &OrientedBox, cutoff: f64) -> bool {
    crate::geometry::ray_box_hit(ray, bb, cutoff).is_some()
}

/// Picks the `m` most occlusion-critical eligible agents (score descending,
/// ties by ascending id), scored from the collaborators' viewpoints.
pub fn select_targets(
    scene: &Scene,
    collab: &CollaborationChoice,
    m: usize,
    policy: TargetPolicy,
) -> Result<Vec<u64>, Error> {
    let scores = occlusion_scores(scene, &collab.members)?;
    let mut eligible: Vec<u64> = scene
        .agents
        .iter()
        .filter(|a| a.id != scene.ego_id)
        .filter(|a| match policy {
            TargetPolicy::NonIntelligent => !a.intelligent,
            TargetPolicy::NonCollab => !collab.contains(a.id) && !a.fixed_pose,
            TargetPolicy::Any => true,
        })
        .map(|a| a.id)
        .collect();
    if eligible.len() < m {
        return Err(Error::NotEnoughTargets { have: eligible.len(), need: m });
    }
    eligible.sort_by(|&a, &b| scores[&b].cmp(&scores[&a]).then(a.cmp(&b)));
    eligible.truncate(m);
    Ok(eligible)
}

/// Uniformly samples `n_q` joint perturbations in [-1,1]^(3m) and keeps the
/// ones whose application leaves every footprint collision-free, inside the
/// map, and every target center inside the evaluation window around ego.
/// The zero perturbation is always element 0. Deterministic per seed.
pub fn build_feasible_set(
    scene: &Scene,
    targets: &[u64],
    bounds: &SearchBounds,
    n_q: usize,
    seed: u64,
) -> Result<FeasibleSet, Error> {
    if targets.is_empty() {
        return Err(Error::EmptyCandidates("feasible set needs at least one target".into()));
    }
    let mut seen_targets = HashSet::new();
    for &t in targets {
        if !seen_targets.insert(t) {
            return Err(Error::InvariantViolation(format!("duplicate target {t}")));
        }
        if t == scene.ego_id {
            return Err(Error::InvariantViolation("the ego agent cannot be perturbed".into()));
        }
        if scene.agent(t).is_none() {
            return Err(Error::UnknownTarget(t));
        }
    }

    let ego = scene.ego();
    let (ex, ey) = (ego.pose.x, ego.pose.y);
    let (xmin, ymin, xmax, ymax) = scene.map_bounds;
    let target_agents: Vec<_> =
        targets.iter().map(|&t| scene.agent(t).expect("checked above")).collect();
    let fixed: Vec<OrientedBox> = scene
        .agents
        .iter()
        .filter(|a| !targets.contains(&a.id))
        .map(|a| a.footprint())
        .chain(scene.obstacles.iter().copied())
        .collect();

    let dim = 3 * targets.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut elements: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    let mut dedup: HashSet<Vec<u64>> = HashSet::new();
    dedup.insert(elements[0].iter().map(|f| f.to_bits()).collect());

    let feasible = |v: &[f64]| -> bool {
        let moved: Vec<OrientedBox> = target_agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let pose = Pose2::new(
                    a.pose.x + v[3 * i] * bounds.dx_max,
                    a.pose.y + v[3 * i + 1] * bounds.dy_max,
                    a.pose.yaw + v[3 * i + 2] * bounds.dtheta_max,
                );
                OrientedBox::new(pose, a.length, a.width)
            })
            .collect();
        for b in &moved {
            if (b.center.x - ex).abs() > EVAL_RANGE || (b.center.y - ey).abs() > EVAL_RANGE {
                return false;
            }
            for c in b.corners() {
                if c.x < xmin || c.x > xmax || c.y < ymin || c.y > ymax {
                    return false;
                }
            }
            if fixed.iter().any(|f| obb_intersects(b, f)) {
                return false;
            }
        }
        for i in 0..moved.len() {
            for j in (i + 1)..moved.len() {
                if obb_intersects(&moved[i], &moved[j]) {
                    return false;
                }
            }
        }
        true
    };

    for _ in 0..n_q {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if feasible(&v) {
            let bits: Vec<u64> = v.iter().map(|f| f.to_bits()).collect();
            if dedup.insert(bits) {
                elements.push(v);
            }
        }
    }

    Ok(FeasibleSet { targets: targets.to_vec(), elements, bounds: *bounds })
}

/// Index of the feasible element nearest to `candidate` in L2 distance;
/// ties go to the lowest index.
pub fn project(candidate: &[f64], q: &FeasibleSet) -> usize {
    debug_assert_eq!(candidate.len(), q.dim());
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in q.elements.iter().enumerate() {
        let d: f64 = e.iter().zip(candidate).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// All size-k collaborator combinations containing the ego, in lexicographic
/// member order, with their selection probabilities softmax(w/tau) where
/// w = sum of inverse attention importances over members.
pub fn combination_probabilities(
    scene: &Scene,
    k: usize,
    tau: f64,
) -> Result<Vec<(CollaborationChoice, f64)>, Error> {
    let candidates = scene.intelligent_ids();
    if candidates.len() < k {
        return Err(Error::NotEnoughIntelligent { have: candidates.len(), need: k });
    }
    let (_, importance) = attention_importance(scene, &candidates)?;
    let combos = ego_combinations(scene, &candidates, k);
    let weakness: Vec<f64> = combos
        .iter()
        .map(|c| c.members.iter().map(|id| 1.0 / importance.get(*id).expect("scored")).sum())
        .collect();
    let wmax = weakness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = weakness.iter().map(|&w| ((w - wmax) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(combos.into_iter().zip(exps.into_iter().map(|e| e / total)).collect())
}

fn ego_combinations(scene: &Scene, candidates: &[u64], k: usize) -> Vec<CollaborationChoice> {
    let others: Vec<u64> = candidates.iter().copied().filter(|&id| id != scene.ego_id).collect();
    others
        .into_iter()
        .combinations(k - 1)
        .map(|mut c| {
            c.push(scene.ego_id);
            CollaborationChoice::new(c)
        })
        .collect()
}

fn sample_without_replacement(
    probs: &[f64],
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..probs.len()).collect();
    let mut out = Vec::new();
    while out.len() < n && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| probs[i]).sum();
        let pos = if total <= 0.0 {
            rng.gen_range(0..remaining.len())
        } else {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = remaining.len() - 1;
            for (p, &i) in remaining.iter().enumerate() {
                u -= probs[i];
                if u <= 0.0 {
                    chosen = p;
                    break;
                }
            }
            chosen
        };
        out.push(remaining.remove(pos));
    }
    out
}

fn acs_impl(
    scene: &Scene,
    model: &ModelConfig,
    cfg: &AcsConfig,
    weights: &LossWeights,
    seed: u64,
    strategy: AcsStrategy,
) -> Result<(CollaborationChoice, EvalReport, usize), Error> {
    if cfg.k == 0 || cfg.k0 == 0 || cfg.tau <= 0.0 {
        return Err(Error::InvariantViolation(
            "collaborator search needs k >= 1, k0 >= 1, tau > 0".into(),
        ));
    }
    let (combos, probs): (Vec<CollaborationChoice>, Vec<f64>) = match strategy {
        AcsStrategy::Attention => combination_probabilities(scene, cfg.k, cfg.tau)?
            .into_iter()
            .unzip(),
        AcsStrategy::Random => {
            let candidates = scene.intelligent_ids();
            if candidates.len() < cfg.k {
                return Err(Error::NotEnoughIntelligent { have: candidates.len(), need: cfg.k });
            }
            let combos = ego_combinations(scene, &candidates, cfg.k);
            let p = 1.0 / combos.len() as f64;
            let probs = vec![p; combos.len()];
            (combos, probs)
        }
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let picks = if combos.len() <= cfg.k0 {
        (0..combos.len()).collect()
    } else {
        sample_without_replacement(&probs, cfg.k0, &mut rng)
    };

    let mut best: Option<(CollaborationChoice, EvalReport)> = None;
    let evaluated = picks.len();
    for idx in picks {
        let choice = combos[idx].clone();
        let report = adversarial_loss(scene, &choice, model, weights)?;
        let better = best.as_ref().is_none_or(|(_, b)| report.l_adv < b.l_adv);
        if better {
            best = Some((choice, report));
        }
    }
    let (choice, report) =
        best.ok_or_else(|| Error::EmptyCandidates("no collaborator combinations".into()))?;
    Ok((choice, report, evaluated))
}

/// Adversarial collaborator search: samples `k0` ego-containing combinations
/// without replacement, weighted by attention weakness, and returns the one
/// with the lowest adversarial loss (ties keep the first sampled).
pub fn acs(
    scene: &Scene,
    model: &ModelConfig,
    cfg: &AcsConfig,
    weights: &LossWeights,
    seed: u64,
) -> Result<(CollaborationChoice, EvalReport), Error> {
    let (c, r, _) = acs_impl(scene, model, cfg, weights, seed, AcsStrategy::Attention)?;
    Ok((c, r))
}

/// Baseline collaborator search with uniform combination sampling.
pub fn acs_random(
    scene: &Scene,
    model: &ModelConfig,
    cfg: &AcsConfig,
    weights: &LossWeights,
    seed: u64,
) -> Result<(CollaborationChoice, EvalReport), Error> {
    let (c, r, _) = acs_impl(scene, model, cfg, weights, seed, AcsStrategy::Random)?;
    Ok((c, r))
}

/// Perturbation-search knobs.
#[derive(Debug, Clone)]
pub struct ApsConfig {
    /// Query budget: number of scene evaluations allowed.
    pub budget: usize,
    pub bounds: SearchBounds,
    /// How many agents to perturb.
    pub m_targets: usize,
    /// Uniform samples drawn when building the feasible set.
    pub n_q: usize,
    pub policy: TargetPolicy,
}

impl Default for ApsConfig {
    fn default() -> Self {
        ApsConfig {
            budget: 50,
            bounds: SearchBounds::default(),
            m_targets: 3,
            n_q: 1000,
            policy: TargetPolicy::default(),
        }
    }
}

/// Proposals that keep landing on already-queried elements before giving up.
const APS_STALL_LIMIT: usize = 10_000;

/// Adversarial perturbation search: picks targets, builds the feasible set,
/// and runs the optimizer loop. Proposals are projected onto the set;
/// repeated elements are answered from cache without consuming budget. The
/// zero element is evaluated first, so the best found never regresses below
/// the unperturbed scene. Returns the best perturbation and the full trace.
pub fn aps(
    scene: &Scene,
    collab: &CollaborationChoice,
    model: &ModelConfig,
    weights: &LossWeights,
    optimizer: &mut dyn BlackBoxOptimizer,
    cfg: &ApsConfig,
    seed: u64,
) -> Result<(Perturbation, SearchTrace), Error> {
    if cfg.budget == 0 {
        return Err(Error::InvariantViolation("perturbation search needs budget >= 1".into()));
    }
    let targets = select_targets(scene, collab, cfg.m_targets, cfg.policy)?;
    let q = build_feasible_set(scene, &targets, &cfg.bounds, cfg.n_q, split_seed(seed, 0))?;

    let mut history: Vec<Observation> = Vec::new();
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut trace = SearchTrace::default();
    let mut stall = 0usize;
    let mut first = true;

    while trace.len() < cfg.budget && cache.len() < q.len() {
        let idx = if first {
            first = false;
            0
        } else {
            project(&optimizer.propose(&history, &q), &q)
        };
        if let Some(&loss) = cache.get(&idx) {
            optimizer.observe(&Observation {
                element: idx,
                point: q.elements[idx].clone(),
                loss,
            });
            stall += 1;
            if stall >= APS_STALL_LIMIT {
                break;
            }
            continue;
        }
        let started = Instant::now();
        let delta = q.denormalize(idx);
        let perturbed = apply_perturbation(scene, &delta)?;
        let report = adversarial_loss(&perturbed, collab, model, weights)?;
        let obs = Observation { element: idx, point: q.elements[idx].clone(), loss: report.l_adv };
        optimizer.observe(&obs);
        history.push(obs);
        cache.insert(idx, report.l_adv);
        trace.records.push(TraceRecord {
            iteration: trace.len() + 1,
            element: idx,
            delta,
            l_adv: report.l_adv,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        stall = 0;
    }

    let best = trace.best().expect("budget >= 1 evaluates at least the zero element");
    Ok((best.delta.clone(), trace))
}

/// End-to-end configuration for [`generate_challenging`].
#[derive(Debug, Clone)]
pub struct ChallengeConfig {
    pub acs: AcsConfig,
    pub aps: ApsConfig,
    pub optimizer: OptimizerKind,
    pub weights: LossWeights,
}

impl Default for ChallengeConfig {
    fn default() -> Self {
        ChallengeConfig {
            acs: AcsConfig::default(),
            aps: ApsConfig::default(),
            optimizer: OptimizerKind::Bo,
            weights: LossWeights::default(),
        }
    }
}

/// Everything produced by one end-to-end attack on one scene.
#[derive(Debug, Clone)]
pub struct ChallengeOutcome {
    pub adversarial: Scene,
    pub collab: CollaborationChoice,
    pub perturbation: Perturbation,
    /// Scored with the default (nearest-neighbor) collaboration.
    pub original: EvalReport,
    /// Scored with the searched collaboration (never above `original`).
    pub post_acs: EvalReport,
    /// Scored on the perturbed scene (never above `post_acs`).
    pub post_aps: EvalReport,
    pub trace: SearchTrace,
    /// Scene evaluations spent by the collaborator stage.
    pub acs_evaluations: usize,
}

/// The non-adversarial reference collaboration: ego plus the k-1 nearest
/// intelligent agents (ties by ascending id).
pub fn default_collab(scene: &Scene, k: usize) -> Result<CollaborationChoice, Error> {
    let candidates = scene.intelligent_ids();
    if candidates.len() < k {
        return Err(Error::NotEnoughIntelligent { have: candidates.len(), need: k });
    }
    let ego = scene.ego();
    let mut others: Vec<u64> = candidates.into_iter().filter(|&id| id != scene.ego_id).collect();
    others.sort_by(|&a, &b| {
        let da = scene.agent(a).unwrap().pose.position().dist(ego.pose.position());
        let db = scene.agent(b).unwrap().pose.position().dist(ego.pose.position());
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut members = vec![scene.ego_id];
    members.extend(others.into_iter().take(k - 1));
    Ok(CollaborationChoice::new(members))
}

/// Runs the full two-stage attack: collaborator search, then perturbation
/// search with the chosen collaboration fixed. The collaborator stage keeps
/// the default collaboration when the searched one is not actually worse, so
/// original >= post_acs >= post_aps holds structurally.
pub fn generate_challenging(
    scene: &Scene,
    model: &ModelConfig,
    cfg: &ChallengeConfig,
    seed: u64,
) -> Result<ChallengeOutcome, Error> {
    let baseline = default_collab(scene, cfg.acs.k)?;
    let original = adversarial_loss(scene, &baseline, model, &cfg.weights)?;

    let (acs_choice, acs_report, acs_evaluations) =
        acs_impl(scene, model, &cfg.acs, &cfg.weights, split_seed(seed, 1), AcsStrategy::Attention)?;
    let (collab, post_acs) = if acs_report.l_adv <= original.l_adv {
        (acs_choice, acs_report)
    } else {
        (baseline, original.clone())
    };

    let mut optimizer = cfg.optimizer.build(split_seed(seed, 2));
    let (perturbation, trace) =
        aps(scene, &collab, model, &cfg.weights, optimizer.as_mut(), &cfg.aps, split_seed(seed, 3))?;
    let adversarial = apply_perturbation(scene, &perturbation)?;
    let post_aps = adversarial_loss(&adversarial, &collab, model, &cfg.weights)?;

    Ok(ChallengeOutcome {
        adversarial,
        collab,
        perturbation,
        original,
        post_acs,
        post_aps,
        trace,
        acs_evaluations,
    })
}
