//! Surrogate cooperative detectors and attention-style agent importance.
//!
//! Instead of a trained network, detection quality is a deterministic
//! function of scan geometry: an agent's detection confidence grows with the
//! number of LiDAR returns on it, and its predicted box is corrupted by a
//! center offset and yaw error that shrink as confidence and edge coverage
//! grow. The corruption direction is hashed from (scene seed, agent id), so
//! the objective is a fixed, smooth-ish function of agent poses, the way a
//! frozen trained detector would be.
//!
//! Four fusion strategies are modeled: ego-only, late (per-viewpoint
//! detection + NMS), early (pooled points), and an attention surrogate whose
//! detections equal early fusion but which additionally exports per-agent
//! importance used by the collaborator search.

use crate::error::Error;
use crate::evaluation::EVAL_RANGE;
use crate::geometry::{obb_iou, normalize_angle, OrientedBox, Point2, Pose2};
use crate::hash::hash64;
use crate::lidar::{scan, scan_with, HitKind, LidarPoint};
use crate::scene::{Scene, SensorSpec};
use crate::search::CollaborationChoice;
use std::collections::BTreeMap;

/// How collaborator observations are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Ego scan only; collaborators are ignored.
    NoFusion,
    /// Detect per collaborator, then non-maximum suppression.
    LateFusion,
    /// Pool all collaborator points before detection.
    EarlyFusion,
    /// Same detections as early fusion; additionally exports attention.
    AttSurrogate,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::NoFusion => "no-fusion",
            FusionMode::LateFusion => "late",
            FusionMode::EarlyFusion => "early",
            FusionMode::AttSurrogate => "att",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "no-fusion" => Ok(FusionMode::NoFusion),
            "late" => Ok(FusionMode::LateFusion),
            "early" => Ok(FusionMode::EarlyFusion),
            "att" => Ok(FusionMode::AttSurrogate),
            other => Err(format!("unknown model '{other}' (expected no-fusion|late|early|att)")),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tunables of the surrogate detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Minimum returns on an agent before it is detected at all.
    pub n_min: u32,
    /// Confidence saturation scale: confidence = 1 - exp(-n / n_sat).
    pub n_sat: f64,
    /// Maximum center error in meters (at zero confidence, zero coverage).
    pub eps_max: f64,
    /// Maximum yaw error in radians.
    pub theta_max: f64,
    /// Late-fusion suppression threshold.
    pub nms_iou: f64,
    /// Whether obstacles with enough returns produce false-positive boxes.
    pub fp_enabled: bool,
    /// Confidence scale of those false positives.
    pub fp_conf_scale: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            n_min: 3,
            n_sat: 20.0,
            eps_max: 0.8,
            theta_max: 10f64.to_radians(),
            nms_iou: 0.15,
            fp_enabled: true,
            fp_conf_scale: 0.3,
        }
    }
}

/// A fusion mode plus detector tunables and evaluation toggles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: FusionMode,
    pub params: DetectorParams,
    /// Whether collaborator vehicles can appear in the detection output
    /// (they are always invisible to their own scan).
    pub collab_detectable: bool,
    /// Whether collaborator vehicles count as ground truth when scoring.
    /// Off by default: perception benchmarks score surrounding objects.
    pub collab_in_gt: bool,
}

impl ModelConfig {
    pub fn new(mode: FusionMode) -> Self {
        ModelConfig {
            mode,
            params: DetectorParams::default(),
            collab_detectable: true,
            collab_in_gt: false,
        }
    }
}

/// One predicted box.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    /// In (0, 1].
    pub confidence: f64,
}

/// Per-cell, per-candidate attention weights on a square grid centered on
/// the ego agent. Each cell's weights sum to 1 across candidates.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub h: usize,
    pub w: usize,
    pub cell_m: f64,
    /// World position of the grid's (0, 0) cell corner.
    pub origin: Point2,
    pub candidates: Vec<u64>,
    /// weights[cell][k] for cell = row * w + col and candidates[k].
    pub weights: Vec<Vec<f64>>,
}

/// Pooled per-agent importance: mean attention weight over all cells.
#[derive(Debug, Clone)]
pub struct AgentImportance {
    pub scores: BTreeMap<u64, f64>,
}

impl AgentImportance {
    pub fn get(&self, id: u64) -> Option<f64> {
        self.scores.get(&id).copied()
    }
}

/// Grid resolution of the attention surrogate: 24 x 24 cells of 4 m cover
/// the [-48, 48] evaluation window.
pub const ATT_GRID: usize = 24;
pub const ATT_CELL_M: f64 = 4.0;

fn direction_hash(seed: u64, id: u64) -> (f64, f64) {
    let h = hash64(&[seed, id]);
    let phi = std::f64::consts::TAU * (h as f64) / (u64::MAX as f64 + 1.0);
    let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
    (phi, sign)
}

/// Which of the four box edges a boundary point lies on: 0 front, 1 left,
/// 2 rear, 3 right (in the box frame).
fn edge_index(fp: &OrientedBox, p: Point2) -> usize {
    let l = fp.center.to_local(p);
    let hl = fp.length * 0.5;
    let hw = fp.width * 0.5;
    let d = [(l.x - hl).abs(), (l.y - hw).abs(), (l.x + hl).abs(), (l.y + hw).abs()];
    let mut best = 0;
    for i in 1..4 {
        if d[i] < d[best] {
            best = i;
        }
    }
    best
}

/// Core single/pooled detector over a flat point list. The caller decides
/// which agents are eligible detection targets.
fn detect_from_points(
    scene: &Scene,
    points: &[LidarPoint],
    skip: &dyn Fn(u64) -> bool,
    params: &DetectorParams,
) -> Vec<Detection> {
    let mut per_agent: BTreeMap<u64, Vec<Point2>> = BTreeMap::new();
    let mut per_obstacle: BTreeMap<usize, Vec<Point2>> = BTreeMap::new();
    for p in points {
        match p.hit_kind {
            HitKind::Agent(id) => per_agent.entry(id).or_default().push(p.position),
            HitKind::Obstacle(i) => per_obstacle.entry(i).or_default().push(p.position),
        }
    }

    let mut out = Vec::new();
    // Agents in scene declaration order for a deterministic output sequence.
    for agent in &scene.agents {
        if skip(agent.id) {
            continue;
        }
        let Some(hits) = per_agent.get(&agent.id) else { continue };
        let n = hits.len() as u32;
        if n < params.n_min {
            continue;
        }
        let fp = agent.footprint();
        let mut edges = [false; 4];
        for &p in hits {
            edges[edge_index(&fp, p)] = true;
        }
        let coverage = edges.iter().filter(|&&e| e).count() as f64 / 4.0;
        let confidence = 1.0 - (-(n as f64) / params.n_sat).exp();
        let eps = params.eps_max * (1.0 - confidence) * (1.0 - 0.5 * coverage);
        let (phi, sign) = direction_hash(scene.seed, agent.id);
        let yaw_err = params.theta_max * (1.0 - confidence) * sign;
        let center = Pose2::new(
            agent.pose.x + eps * phi.cos(),
            agent.pose.y + eps * phi.sin(),
            normalize_angle(agent.pose.yaw + yaw_err),
        );
        out.push(Detection {
            bbox: OrientedBox::new(center, agent.length, agent.width),
            confidence,
        });
    }

    if params.fp_enabled {
        for (idx, hits) in &per_obstacle {
            let n = hits.len() as u32;
            if n < params.n_min {
                continue;
            }
            let mut cx = 0.0;
            let mut cy = 0.0;
            for p in hits {
                cx += p.x;
                cy += p.y;
            }
            cx /= hits.len() as f64;
            cy /= hits.len() as f64;
            let yaw = scene.obstacles[*idx].center.yaw;
            let confidence = params.fp_conf_scale * (1.0 - (-(n as f64) / params.n_sat).exp());
            out.push(Detection {
                bbox: OrientedBox::from_parts(cx, cy, yaw, 4.4, 1.8),
                confidence,
            });
        }
    }
    out
}

/// Greedy non-maximum suppression: keep by descending confidence (ties by
/// insertion order), drop anything overlapping a kept box at `iou_thr` or
/// more.
fn nms(dets: Vec<Detection>, iou_thr: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j].confidence.total_cmp(&dets[i].confidence).then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        if kept.iter().all(|&k| obb_iou(&dets[k].bbox, &dets[idx].bbox) < iou_thr) {
            kept.push(idx);
        }
    }
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

fn validate_collab(scene: &Scene, collab: &CollaborationChoice) -> Result<(), Error> {
    if !collab.members.contains(&scene.ego_id) {
        return Err(Error::EgoNotInCollab(scene.ego_id));
    }
    for &id in &collab.members {
        let agent = scene.agent(id).ok_or(Error::UnknownAgent(id))?;
        if !agent.intelligent {
            return Err(Error::NonIntelligentMember(id));
        }
    }
    Ok(())
}

/// Runs the configured cooperative detector. Deterministic in all inputs.
pub fn detect(
    scene: &Scene,
    collab: &CollaborationChoice,
    model: &ModelConfig,
) -> Result<Vec<Detection>, Error> {
    validate_collab(scene, collab)?;
    let params = &model.params;
    let skip: Box<dyn Fn(u64) -> bool> = if model.collab_detectable {
        Box::new(|_| false)
    } else {
        let members = collab.members.clone();
        Box::new(move |id| members.contains(&id))
    };

    match model.mode {
        FusionMode::NoFusion => {
            let cloud = scan(scene, scene.ego_id)?;
            Ok(detect_from_points(scene, &cloud.points, &skip, params))
        }
        FusionMode::EarlyFusion | FusionMode::AttSurrogate => {
            let mut pooled = Vec::new();
            for &m in &collab.members {
                pooled.extend(scan(scene, m)?.points);
            }
            Ok(detect_from_points(scene, &pooled, &skip, params))
        }
        FusionMode::LateFusion => {
            let mut all = Vec::new();
            for &m in &collab.members {
                let cloud = scan(scene, m)?;
                all.extend(detect_from_points(scene, &cloud.points, &skip, params));
            }
            Ok(nms(all, params.nms_iou))
        }
    }
}

/// Computes the attention surrogate over `candidates`: per grid cell, a
/// softmax across candidates of log(1 + point count); importance s_j is the
/// mean of a candidate's weight over all cells. Candidates without a sensor
/// are granted the default vehicle sensor for their probe scan.
pub fn attention_importance(
    scene: &Scene,
    candidates: &[u64],
) -> Result<(AttentionMap, AgentImportance), Error> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates("attention needs at least one candidate".into()));
    }
    let mut cands: Vec<u64> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    for &id in &cands {
        if scene.agent(id).is_none() {
            return Err(Error::UnknownAgent(id));
        }
    }

    let ego = scene.ego();
    let origin = Point2::new(ego.pose.x - EVAL_RANGE, ego.pose.y - EVAL_RANGE);
    let cells = ATT_GRID * ATT_GRID;
    let n = cands.len();

    // counts[cell][k]
    let mut counts = vec![vec![0u32; n]; cells];
    let default_sensor = SensorSpec::default_vehicle();
    for (k, &id) in cands.iter().enumerate() {
        let agent = scene.agent(id).expect("checked above");
        let cloud = match &agent.sensor {
            Some(s) => scan_with(scene, id, s),
            None => scan_with(scene, id, &default_sensor),
        };
        for p in cloud.points {
            let gx = ((p.position.x - origin.x) / ATT_CELL_M).floor();
            let gy = ((p.position.y - origin.y) / ATT_CELL_M).floor();
            if gx < 0.0 || gy < 0.0 {
                continue;
            }
            let (gx, gy) = (gx as usize, gy as usize);
            if gx >= ATT_GRID || gy >= ATT_GRID {
                continue;
            }
            counts[gy * ATT_GRID + gx][k] += 1;
        }
    }

    let mut weights = vec![vec![0.0f64; n]; cells];
    let mut sums = vec![0.0f64; n];
    for (cell, row) in counts.iter().enumerate() {
        let feats: Vec<f64> = row.iter().map(|&c| (1.0 + c as f64).ln()).collect();
        let maxf = feats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = feats.iter().map(|&f| (f - maxf).exp()).collect();
        let total: f64 = exps.iter().sum();
        for k in 0..n {
            let w = exps[k] / total;
            weights[cell][k] = w;
            sums[k] += w;
        }
    }
    let scores: BTreeMap<u64, f64> =
        cands.iter().enumerate().map(|(k, &id)| (id, sums[k] / cells as f64)).collect();

    Ok((
        AttentionMap {
            h: ATT_GRID,
            w: ATT_GRID,
            cell_m: ATT_CELL_M,
            origin,
            candidates: cands,
            weights,
        },
        AgentImportance { scores },
    ))
}
