//! Scene data model, procedural generation, perturbation, serialization.
//!
//! A scene is a single static frame: agents (some intelligent, i.e. sensor
//! equipped) and passive obstacle boxes on a bounded plane. Scenes are
//! immutable values; perturbation returns a new scene.
//!
//! The on-disk format is UTF-8 JSON with a fixed key set (unknown keys are
//! rejected) and a canonical writer: saving a loaded scene reproduces the
//! input text byte for byte. Yaw is serialized in degrees (quantized to 1e-9
//! degrees, which makes the degree/radian round trip a fixpoint) and held in
//! radians internally.

use crate::error::Error;
use crate::geometry::{obb_intersects, OrientedBox, Pose2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::Value;
use std::fmt::Write as _;

/// Current scene schema version.
pub const SCENE_VERSION: u64 = 1;

/// Whether a sensor sits on a vehicle or on roadside infrastructure. Label
/// only: it never changes sensing behavior and is not serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightClass {
    Vehicle,
    Infrastructure,
}

/// LiDAR parameters for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub range_m: f64,
    pub beams: u32,
    pub height_class: HeightClass,
}

impl SensorSpec {
    /// Default vehicle sensor: enough beams that a nearby car collects tens
    /// of points, making point-count thresholds meaningful.
    pub fn default_vehicle() -> Self {
        SensorSpec { range_m: 60.0, beams: 720, height_class: HeightClass::Vehicle }
    }
}

/// One agent: a rectangular footprint plus an optional sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: u64,
    pub pose: Pose2,
    pub length: f64,
    pub width: f64,
    pub intelligent: bool,
    /// Generation-time marker for roadside infrastructure; such agents are
    /// never chosen as perturbation targets under the default policies.
    /// In-memory only: reloaded scenes treat every agent as mobile.
    pub fixed_pose: bool,
    pub sensor: Option<SensorSpec>,
}

impl Agent {
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.pose, self.length, self.width)
    }
}

/// A full static scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub version: u64,
    pub seed: u64,
    /// (xmin, ymin, xmax, ymax) in meters.
    pub map_bounds: (f64, f64, f64, f64),
    pub ego_id: u64,
    pub agents: Vec<Agent>,
    pub obstacles: Vec<OrientedBox>,
}

impl Scene {
    pub fn agent(&self, id: u64) -> Option<&Agent> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// The ego agent. Panics on a scene that failed validation.
    pub fn ego(&self) -> &Agent {
        self.agent(self.ego_id).expect("validated scene has an ego agent")
    }

    /// Ids of all intelligent agents, ascending.
    pub fn intelligent_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> =
            self.agents.iter().filter(|a| a.intelligent).map(|a| a.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Checks every structural invariant: ego present and intelligent,
    /// unique ids, sensors on intelligent agents, finite positive extents,
    /// footprints inside map bounds, and pairwise non-intersection across
    /// all agents and obstacles.
    pub fn validate(&self) -> Result<(), Error> {
        let (xmin, ymin, xmax, ymax) = self.map_bounds;
        if !(xmin.is_finite() && ymin.is_finite() && xmax.is_finite() && ymax.is_finite()) {
            return Err(Error::InvariantViolation("map bounds must be finite".into()));
        }
        if xmin >= xmax || ymin >= ymax {
            return Err(Error::InvariantViolation("map bounds must have positive extent".into()));
        }

        let mut seen = std::collections::HashSet::new();
        for a in &self.agents {
            if !seen.insert(a.id) {
                return Err(Error::InvariantViolation(format!("duplicate agent id {}", a.id)));
            }
            if !(a.length > 0.0 && a.width > 0.0 && a.length.is_finite() && a.width.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "agent {} extents must be positive and finite",
                    a.id
                )));
            }
            if !(a.pose.x.is_finite() && a.pose.y.is_finite() && a.pose.yaw.is_finite()) {
                return Err(Error::InvariantViolation(format!("agent {} pose must be finite", a.id)));
            }
            if a.intelligent && a.sensor.is_none() {
                return Err(Error::InvariantViolation(format!(
                    "intelligent agent {} has no sensor",
                    a.id
                )));
            }
            if let Some(s) = &a.sensor {
                if !(s.range_m > 0.0 && s.range_m.is_finite()) {
                    return Err(Error::InvariantViolation(format!(
                        "agent {} sensor range must be positive",
                        a.id
                    )));
                }
                if s.beams < 8 {
                    return Err(Error::InvariantViolation(format!(
                        "agent {} sensor needs at least 8 beams",
                        a.id
                    )));
                }
            }
        }

        match self.agent(self.ego_id) {
            None => {
                return Err(Error::InvariantViolation(format!(
                    "ego_id {} does not name an agent",
                    self.ego_id
                )))
            }
            Some(ego) if !ego.intelligent => {
                return Err(Error::InvariantViolation(format!(
                    "ego agent {} must be intelligent",
                    self.ego_id
                )))
            }
            Some(_) => {}
        }

        for o in &self.obstacles {
            if !(o.length > 0.0 && o.width > 0.0 && o.length.is_finite() && o.width.is_finite()) {
                return Err(Error::InvariantViolation("obstacle extents must be positive".into()));
            }
        }

        let footprints = self.all_footprints();
        for (name, fp) in &footprints {
            for c in fp.corners() {
                if c.x < xmin || c.x > xmax || c.y < ymin || c.y > ymax {
                    return Err(Error::InvariantViolation(format!(
                        "{name} footprint leaves the map bounds"
                    )));
                }
            }
        }
        for i in 0..footprints.len() {
            for j in (i + 1)..footprints.len() {
                if obb_intersects(&footprints[i].1, &footprints[j].1) {
                    return Err(Error::InvariantViolation(format!(
                        "{} and {} footprints intersect",
                        footprints[i].0, footprints[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    fn all_footprints(&self) -> Vec<(String, OrientedBox)> {
        let mut out = Vec::with_capacity(self.agents.len() + self.obstacles.len());
        for a in &self.agents {
            out.push((format!("agent {}", a.id), a.footprint()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            out.push((format!("obstacle {i}"), *o));
        }
        out
    }
}

/// Pose deltas for a set of target agents. `deltas[i]` is
/// (dx meters, dy meters, dtheta radians) for `targets[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub targets: Vec<u64>,
    pub deltas: Vec<[f64; 3]>,
}

impl Perturbation {
    pub fn zero(targets: Vec<u64>) -> Self {
        let deltas = vec![[0.0; 3]; targets.len()];
        Perturbation { targets, deltas }
    }

    pub fn negated(&self) -> Self {
        Perturbation {
            targets: self.targets.clone(),
            deltas: self.deltas.iter().map(|d| [-d[0], -d[1], -d[2]]).collect(),
        }
    }
}

/// Applies pose deltas to the target agents, returning a new scene. The
/// result is NOT re-validated: callers screening candidate perturbations
/// (e.g. feasible-set construction) need to apply and inspect colliding
/// configurations.
pub fn apply_perturbation(scene: &Scene, p: &Perturbation) -> Result<Scene, Error> {
    if p.targets.len() != p.deltas.len() {
        return Err(Error::InvariantViolation(format!(
            "perturbation has {} targets but {} deltas",
            p.targets.len(),
            p.deltas.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for &t in &p.targets {
        if !seen.insert(t) {
            return Err(Error::InvariantViolation(format!("duplicate perturbation target {t}")));
        }
    }
    let mut out = scene.clone();
    for (&t, d) in p.targets.iter().zip(&p.deltas) {
        let agent = out.agents.iter_mut().find(|a| a.id == t).ok_or(Error::UnknownTarget(t))?;
        agent.pose =
            Pose2::new(agent.pose.x + d[0], agent.pose.y + d[1], agent.pose.yaw + d[2]);
    }
    Ok(out)
}

/// Scene layout families for procedural generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Agents scattered uniformly over the map.
    UniformField,
    /// Two opposing lanes of traffic along the x axis with roadside clutter.
    TwoLaneCorridor,
}

/// Knobs for [`generate_scene`].
#[derive(Debug, Clone)]
pub struct SceneGenConfig {
    pub layout: Layout,
    /// Total agents, ego and infrastructure included. 1..=40.
    pub n_agents: usize,
    /// How many agents are intelligent (ego and infrastructure included).
    pub n_intelligent: usize,
    /// How many of the intelligent agents are roadside infrastructure.
    pub n_infrastructure: usize,
    pub n_obstacles: usize,
    /// (xmin, ymin, xmax, ymax); at least 20 m on each side.
    pub map_bounds: (f64, f64, f64, f64),
    pub sensor_range: f64,
    pub sensor_beams: u32,
    /// If set, the last non-ego intelligent vehicle gets this sensor range
    /// instead of `sensor_range`. Used to plant a weak collaborator.
    pub weak_sensor_range: Option<f64>,
    /// Extra clearance demanded between footprints at placement time.
    pub min_gap: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            layout: Layout::UniformField,
            n_agents: 12,
            n_intelligent: 4,
            n_infrastructure: 0,
            n_obstacles: 4,
            map_bounds: (-40.0, -40.0, 40.0, 40.0),
            sensor_range: 60.0,
            sensor_beams: 720,
            weak_sensor_range: None,
            min_gap: 0.3,
        }
    }
}

/// Total placement attempts before generation gives up. Exhausting it means
/// the configuration is too dense for the map.
const MAX_PLACEMENT_ATTEMPTS: u32 = 10_000;

struct Placer {
    placed: Vec<OrientedBox>,
    attempts: u32,
    min_gap: f64,
    bounds: (f64, f64, f64, f64),
}

impl Placer {
    /// Tries to admit a footprint: it must sit inside the map and keep
    /// `min_gap` clearance from everything placed so far.
    fn admit(&mut self, fp: &OrientedBox) -> Result<bool, Error> {
        self.attempts += 1;
        if self.attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::GenerationFailed(format!(
                "exhausted {MAX_PLACEMENT_ATTEMPTS} placement attempts; configuration too dense"
            )));
        }
        let (xmin, ymin, xmax, ymax) = self.bounds;
        for c in fp.corners() {
            if c.x < xmin || c.x > xmax || c.y < ymin || c.y > ymax {
                return Ok(false);
            }
        }
        // Clearance via an inflated probe box.
        let probe =
            OrientedBox::new(fp.center, fp.length + 2.0 * self.min_gap, fp.width + 2.0 * self.min_gap);
        if self.placed.iter().any(|other| obb_intersects(&probe, other)) {
            return Ok(false);
        }
        self.placed.push(*fp);
        Ok(true)
    }
}

/// Generates a collision-free scene. Deterministic per (config, seed).
pub fn generate_scene(config: &SceneGenConfig, seed: u64) -> Result<Scene, Error> {
    if config.n_agents == 0 || config.n_agents > 40 {
        return Err(Error::GenerationFailed(format!(
            "n_agents must be in 1..=40, got {}",
            config.n_agents
        )));
    }
    if config.n_intelligent == 0 || config.n_intelligent > config.n_agents {
        return Err(Error::GenerationFailed(format!(
            "n_intelligent must be in 1..={}, got {}",
            config.n_agents, config.n_intelligent
        )));
    }
    if config.n_infrastructure >= config.n_intelligent {
        return Err(Error::GenerationFailed(
            "n_infrastructure must leave at least the ego among intelligent vehicles".into(),
        ));
    }
    let (xmin, ymin, xmax, ymax) = config.map_bounds;
    if xmax - xmin < 20.0 || ymax - ymin < 20.0 {
        return Err(Error::GenerationFailed("map bounds must be at least 20 x 20 m".into()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut placer = Placer {
        placed: Vec::new(),
        attempts: 0,
        min_gap: config.min_gap,
        bounds: config.map_bounds,
    };
    let cx = (xmin + xmax) * 0.5;
    let cy = (ymin + ymax) * 0.5;

    let n_intel_vehicles = config.n_intelligent - config.n_infrastructure;
    let n_dumb = config.n_agents - config.n_intelligent;
    let mut agents: Vec<Agent> = Vec::with_capacity(config.n_agents);
    let mut next_id: u64 = 0;

    let lane_half_gap = 1.75;
    let vehicle_dims = |rng: &mut ChaCha12Rng| -> (f64, f64) {
        (4.2 + rng.gen_range(0.0..0.8), 1.8 + rng.gen_range(0.0..0.2))
    };

    // Ego first, anchored at the map center.
    {
        let (len, wid) = vehicle_dims(&mut rng);
        let pose = match config.layout {
            Layout::UniformField => Pose2::new(cx, cy, 0.0),
            Layout::TwoLaneCorridor => Pose2::new(cx, cy + lane_half_gap, 0.0),
        };
        let fp = OrientedBox::new(pose, len, wid);
        if !placer.admit(&fp)? {
            return Err(Error::GenerationFailed("ego placement failed".into()));
        }
        agents.push(Agent {
            id: next_id,
            pose,
            length: len,
            width: wid,
            intelligent: true,
            fixed_pose: false,
            sensor: Some(SensorSpec {
                range_m: config.sensor_range,
                beams: config.sensor_beams,
                height_class: HeightClass::Vehicle,
            }),
        });
        next_id += 1;
    }

    let sample_vehicle_pose = |rng: &mut ChaCha12Rng, len: f64, wid: f64| -> Pose2 {
        match config.layout {
            Layout::UniformField => {
                let margin = 0.5 * (len * len + wid * wid).sqrt() + 0.05;
                Pose2::new(
                    rng.gen_range(xmin + margin..xmax - margin),
                    rng.gen_range(ymin + margin..ymax - margin),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            }
            Layout::TwoLaneCorridor => {
                let margin = 0.5 * len + 0.5;
                let forward: bool = rng.gen();
                let lane_y = if forward { cy + lane_half_gap } else { cy - lane_half_gap };
                let base_yaw = if forward { 0.0 } else { std::f64::consts::PI };
                Pose2::new(
                    rng.gen_range(xmin + margin..xmax - margin),
                    lane_y + rng.gen_range(-0.3..0.3),
                    base_yaw + rng.gen_range(-0.05..0.05),
                )
            }
        }
    };

    // Remaining intelligent vehicles, then infrastructure, then plain
    // vehicles; ids stay contiguous in that order.
    for i in 1..n_intel_vehicles {
        let (len, wid) = vehicle_dims(&mut rng);
        loop {
            let pose = sample_vehicle_pose(&mut rng, len, wid);
            if placer.admit(&OrientedBox::new(pose, len, wid))? {
                let is_weak_slot = i == n_intel_vehicles - 1;
                let range = match config.weak_sensor_range {
                    Some(weak) if is_weak_slot => weak,
                    _ => config.sensor_range,
                };
                agents.push(Agent {
                    id: next_id,
                    pose,
                    length: len,
                    width: wid,
                    intelligent: true,
                    fixed_pose: false,
                    sensor: Some(SensorSpec {
                        range_m: range,
                        beams: config.sensor_beams,
                        height_class: HeightClass::Vehicle,
                    }),
                });
                next_id += 1;
                break;
            }
        }
    }

    for _ in 0..config.n_infrastructure {
        let (len, wid) = (1.2, 1.2);
        loop {
            let pose = match config.layout {
                Layout::UniformField => {
                    // Hug one of the map edges, like a roadside unit.
                    let margin = 1.2;
                    let side: u8 = rng.gen_range(0..4);
                    let (x, y) = match side {
                        0 => (rng.gen_range(xmin + margin..xmax - margin), ymin + margin),
                        1 => (rng.gen_range(xmin + margin..xmax - margin), ymax - margin),
                        2 => (xmin + margin, rng.gen_range(ymin + margin..ymax - margin)),
                        _ => (xmax - margin, rng.gen_range(ymin + margin..ymax - margin)),
                    };
                    Pose2::new(x, y, 0.0)
                }
                Layout::TwoLaneCorridor => {
                    let off = lane_half_gap + rng.gen_range(4.0..7.0);
                    let side = if rng.gen() { off } else { -off };
                    Pose2::new(rng.gen_range(xmin + 2.0..xmax - 2.0), cy + side, 0.0)
                }
            };
            if placer.admit(&OrientedBox::new(pose, len, wid))? {
                agents.push(Agent {
                    id: next_id,
                    pose,
                    length: len,
                    width: wid,
                    intelligent: true,
                    fixed_pose: true,
                    sensor: Some(SensorSpec {
                        range_m: config.sensor_range,
                        beams: config.sensor_beams,
                        height_class: HeightClass::Infrastructure,
                    }),
                });
                next_id += 1;
                break;
            }
        }
    }

    for _ in 0..n_dumb {
        let (len, wid) = vehicle_dims(&mut rng);
        loop {
            let pose = sample_vehicle_pose(&mut rng, len, wid);
            if placer.admit(&OrientedBox::new(pose, len, wid))? {
                agents.push(Agent {
                    id: next_id,
                    pose,
                    length: len,
                    width: wid,
                    intelligent: false,
                    fixed_pose: false,
                    sensor: None,
                });
                next_id += 1;
                break;
            }
        }
    }

    let mut obstacles = Vec::with_capacity(config.n_obstacles);
    for _ in 0..config.n_obstacles {
        let len: f64 = rng.gen_range(1.0..5.0);
        let wid: f64 = rng.gen_range(0.6..2.0);
        loop {
            let pose = match config.layout {
                Layout::UniformField => {
                    let margin = 0.5 * (len * len + wid * wid).sqrt() + 0.05;
                    Pose2::new(
                        rng.gen_range(xmin + margin..xmax - margin),
                        rng.gen_range(ymin + margin..ymax - margin),
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    )
                }
                Layout::TwoLaneCorridor => {
                    let off = lane_half_gap + rng.gen_range(2.5..8.0);
                    let side = if rng.gen() { off } else { -off };
                    Pose2::new(
                        rng.gen_range(xmin + 3.0..xmax - 3.0),
                        cy + side,
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    )
                }
            };
            let fp = OrientedBox::new(pose, len, wid);
            if placer.admit(&fp)? {
                obstacles.push(fp);
                break;
            }
        }
    }

    let scene = Scene {
        version: SCENE_VERSION,
        seed,
        map_bounds: config.map_bounds,
        ego_id: 0,
        agents,
        obstacles,
    };
    scene.validate()?;
    Ok(scene)
}

/// Quantizes a degree value to 1e-9 degrees. At this grid the
/// degrees -> radians -> degrees round trip reproduces the same value, so
/// canonical serialization is a fixpoint.
fn quantize_deg(d: f64) -> f64 {
    (d * 1e9).round() / 1e9
}

fn fmt_num(v: f64) -> String {
    debug_assert!(v.is_finite(), "scene fields must be finite");
    format!("{v}")
}

/// Serializes a scene to canonical JSON text. save(load(save(s))) == save(s).
pub fn save_scene(scene: &Scene) -> String {
    let mut out = String::new();
    let (xmin, ymin, xmax, ymax) = scene.map_bounds;
    out.push_str("{\n");
    let _ = writeln!(out, "  \"version\": {},", scene.version);
    let _ = writeln!(out, "  \"seed\": {},", scene.seed);
    let _ = writeln!(
        out,
        "  \"map_bounds\": [{}, {}, {}, {}],",
        fmt_num(xmin),
        fmt_num(ymin),
        fmt_num(xmax),
        fmt_num(ymax)
    );
    let _ = writeln!(out, "  \"ego_id\": {},", scene.ego_id);
    if scene.agents.is_empty() {
        out.push_str("  \"agents\": [],\n");
    } else {
        out.push_str("  \"agents\": [\n");
        for (i, a) in scene.agents.iter().enumerate() {
            let sensor = match &a.sensor {
                None => "null".to_string(),
                Some(s) => format!(
                    "{{\"range_m\": {}, \"beams\": {}}}",
                    fmt_num(s.range_m),
                    s.beams
                ),
            };
            let _ = write!(
                out,
                "    {{\"id\": {}, \"x\": {}, \"y\": {}, \"yaw_deg\": {}, \"length\": {}, \"width\": {}, \"intelligent\": {}, \"sensor\": {}}}",
                a.id,
                fmt_num(a.pose.x),
                fmt_num(a.pose.y),
                fmt_num(quantize_deg(a.pose.yaw.to_degrees())),
                fmt_num(a.length),
                fmt_num(a.width),
                a.intelligent,
                sensor
            );
            out.push_str(if i + 1 < scene.agents.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ],\n");
    }
    if scene.obstacles.is_empty() {
        out.push_str("  \"obstacles\": []\n");
    } else {
        out.push_str("  \"obstacles\": [\n");
        for (i, o) in scene.obstacles.iter().enumerate() {
            let _ = write!(
                out,
                "    {{\"x\": {}, \"y\": {}, \"yaw_deg\": {}, \"length\": {}, \"width\": {}}}",
                fmt_num(o.center.x),
                fmt_num(o.center.y),
                fmt_num(quantize_deg(o.center.yaw.to_degrees())),
                fmt_num(o.length),
                fmt_num(o.width)
            );
            out.push_str(if i + 1 < scene.obstacles.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ]\n");
    }
    out.push_str("}\n");
    out
}

fn want_obj<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>, Error> {
    v.as_object().ok_or_else(|| Error::parse(path, "expected an object"))
}

fn reject_unknown(
    obj: &serde_json::Map<String, Value>,
    allowed: &[&str],
    path: &str,
) -> Result<(), Error> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::parse(format!("{path}.{key}"), "unknown key"));
        }
    }
    Ok(())
}

fn get_field<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, Error> {
    obj.get(key).ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing key"))
}

fn want_f64(v: &Value, path: &str) -> Result<f64, Error> {
    let f = v.as_f64().ok_or_else(|| Error::parse(path, "expected a number"))?;
    if !f.is_finite() {
        return Err(Error::parse(path, "number must be finite"));
    }
    Ok(f)
}

fn want_u64(v: &Value, path: &str) -> Result<u64, Error> {
    v.as_u64().ok_or_else(|| Error::parse(path, "expected a non-negative integer"))
}

fn want_bool(v: &Value, path: &str) -> Result<bool, Error> {
    v.as_bool().ok_or_else(|| Error::parse(path, "expected a boolean"))
}

fn want_positive(v: f64, path: &str) -> Result<f64, Error> {
    if v <= 0.0 {
        return Err(Error::parse(path, "must be positive"));
    }
    Ok(v)
}

/// Parses and validates a scene document. Errors carry the JSON path of the
/// offending field; structural violations (collisions, bad ego) surface as
/// `InvariantViolation`.
pub fn load_scene(text: &str) -> Result<Scene, Error> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
    let root = want_obj(&doc, "$")?;
    reject_unknown(root, &["version", "seed", "map_bounds", "ego_id", "agents", "obstacles"], "$")?;

    let version = want_u64(get_field(root, "version", "$")?, "$.version")?;
    if version != SCENE_VERSION {
        return Err(Error::parse("$.version", format!("unsupported version {version}")));
    }
    let seed = want_u64(get_field(root, "seed", "$")?, "$.seed")?;

    let mb = get_field(root, "map_bounds", "$")?
        .as_array()
        .ok_or_else(|| Error::parse("$.map_bounds", "expected an array of 4 numbers"))?;
    if mb.len() != 4 {
        return Err(Error::parse("$.map_bounds", "expected exactly 4 numbers"));
    }
    let mut bounds = [0.0; 4];
    for (i, v) in mb.iter().enumerate() {
        bounds[i] = want_f64(v, &format!("$.map_bounds[{i}]"))?;
    }
    if bounds[0] >= bounds[2] || bounds[1] >= bounds[3] {
        return Err(Error::parse("$.map_bounds", "min must be below max on both axes"));
    }

    let ego_id = want_u64(get_field(root, "ego_id", "$")?, "$.ego_id")?;

    let agents_v = get_field(root, "agents", "$")?
        .as_array()
        .ok_or_else(|| Error::parse("$.agents", "expected an array"))?;
    let mut agents = Vec::with_capacity(agents_v.len());
    for (i, av) in agents_v.iter().enumerate() {
        let path = format!("$.agents[{i}]");
        let obj = want_obj(av, &path)?;
        reject_unknown(
            obj,
            &["id", "x", "y", "yaw_deg", "length", "width", "intelligent", "sensor"],
            &path,
        )?;
        let id = want_u64(get_field(obj, "id", &path)?, &format!("{path}.id"))?;
        let x = want_f64(get_field(obj, "x", &path)?, &format!("{path}.x"))?;
        let y = want_f64(get_field(obj, "y", &path)?, &format!("{path}.y"))?;
        let yaw_deg = want_f64(get_field(obj, "yaw_deg", &path)?, &format!("{path}.yaw_deg"))?;
        let length =
            want_positive(want_f64(get_field(obj, "length", &path)?, &format!("{path}.length"))?, &format!("{path}.length"))?;
        let width =
            want_positive(want_f64(get_field(obj, "width", &path)?, &format!("{path}.width"))?, &format!("{path}.width"))?;
        let intelligent =
            want_bool(get_field(obj, "intelligent", &path)?, &format!("{path}.intelligent"))?;
        let sensor_v = get_field(obj, "sensor", &path)?;
        let sensor = if sensor_v.is_null() {
            None
        } else {
            let spath = format!("{path}.sensor");
            let sobj = want_obj(sensor_v, &spath)?;
            reject_unknown(sobj, &["range_m", "beams"], &spath)?;
            let range_m = want_positive(
                want_f64(get_field(sobj, "range_m", &spath)?, &format!("{spath}.range_m"))?,
                &format!("{spath}.range_m"),
            )?;
            let beams_u = want_u64(get_field(sobj, "beams", &spath)?, &format!("{spath}.beams"))?;
            if beams_u < 8 || beams_u > u32::MAX as u64 {
                return Err(Error::parse(format!("{spath}.beams"), "expected 8..=4294967295"));
            }
            Some(SensorSpec { range_m, beams: beams_u as u32, height_class: HeightClass::Vehicle })
        };
        agents.push(Agent {
            id,
            pose: Pose2::new(x, y, yaw_deg.to_radians()),
            length,
            width,
            intelligent,
            fixed_pose: false,
            sensor,
        });
    }

    let obstacles_v = get_field(root, "obstacles", "$")?
        .as_array()
        .ok_or_else(|| Error::parse("$.obstacles", "expected an array"))?;
    let mut obstacles = Vec::with_capacity(obstacles_v.len());
    for (i, ov) in obstacles_v.iter().enumerate() {
        let path = format!("$.obstacles[{i}]");
        let obj = want_obj(ov, &path)?;
        reject_unknown(obj, &["x", "y", "yaw_deg", "length", "width"], &path)?;
        let x = want_f64(get_field(obj, "x", &path)?, &format!("{path}.x"))?;
        let y = want_f64(get_field(obj, "y", &path)?, &format!("{path}.y"))?;
        let yaw_deg = want_f64(get_field(obj, "yaw_deg", &path)?, &format!("{path}.yaw_deg"))?;
        let length =
            want_positive(want_f64(get_field(obj, "length", &path)?, &format!("{path}.length"))?, &format!("{path}.length"))?;
        let width =
            want_positive(want_f64(get_field(obj, "width", &path)?, &format!("{path}.width"))?, &format!("{path}.width"))?;
        obstacles.push(OrientedBox::from_parts(x, y, yaw_deg.to_radians(), length, width));
    }

    let scene = Scene {
        version,
        seed,
        map_bounds: (bounds[0], bounds[1], bounds[2], bounds[3]),
        ego_id,
        agents,
        obstacles,
    };
    scene.validate()?;
    Ok(scene)
}
