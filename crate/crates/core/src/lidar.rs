//! Deterministic planar LiDAR raycaster.
//!
//! A scan casts `beams` rays at uniform angles starting from the sensing
//! agent's world yaw, so rotating an agent rotates its scan pattern. Each ray
//! reports the nearest boundary hit among all other agents' footprints and
//! all obstacles, within sensor range, with zero noise.

use crate::error::Error;
use crate::geometry::{ray_box_hit, OrientedBox, Point2, Ray};
use crate::scene::{Scene, SensorSpec};

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitKind {
    Agent(u64),
    /// Index into `Scene::obstacles`.
    Obstacle(usize),
}

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point2,
    pub source_agent: u64,
    pub hit_kind: HitKind,
}

/// All returns of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub viewpoint: u64,
    pub points: Vec<LidarPoint>,
}

/// Scans the scene from `viewpoint` with that agent's own sensor.
pub fn scan(scene: &Scene, viewpoint: u64) -> Result<PointCloud, Error> {
    let agent = scene.agent(viewpoint).ok_or(Error::UnknownAgent(viewpoint))?;
    let sensor = agent.sensor.as_ref().ok_or(Error::NoSensor(viewpoint))?;
    Ok(scan_with(scene, viewpoint, sensor))
}

/// Scans from `viewpoint` using an explicit sensor spec. Lets callers grant
/// a sensor to an agent that has none (attention probing does this).
pub(crate) fn scan_with(scene: &Scene, viewpoint: u64, sensor: &SensorSpec) -> PointCloud {
    let agent = scene.agent(viewpoint).expect("viewpoint must exist");
    let origin = agent.pose.position();
    let n = sensor.beams;

    // Target list in a fixed order: agents as declared, then obstacles.
    let targets: Vec<(HitKind, OrientedBox)> = scene
        .agents
        .iter()
        .filter(|a| a.id != viewpoint)
        .map(|a| (HitKind::Agent(a.id), a.footprint()))
        .chain(scene.obstacles.iter().enumerate().map(|(i, o)| (HitKind::Obstacle(i), *o)))
        .collect();

    let mut points = Vec::new();
    for beam in 0..n {
        let angle = agent.pose.yaw + std::f64::consts::TAU * (beam as f64) / (n as f64);
        let ray = Ray::from_angle(origin, angle);
        let mut best: Option<(f64, Point2, HitKind)> = None;
        for (kind, bb) in &targets {
            if let Some((t, p)) = ray_box_hit(&ray, bb, sensor.range_m) {
                if best.as_ref().is_none_or(|(bt, _, _)| t < *bt) {
                    best = Some((t, p, *kind));
                }
            }
        }
        if let Some((_, position, hit_kind)) = best {
            points.push(LidarPoint { position, source_agent: viewpoint, hit_kind });
        }
    }
    PointCloud { viewpoint, points }
}

/// Mean number of aggregated returns per non-viewpoint agent, across all
/// given viewpoints. Agents collecting zero returns still count in the mean;
/// a scene with no non-viewpoint agents yields 0.
pub fn avg_points_per_box(scene: &Scene, viewpoints: &[u64]) -> Result<f64, Error> {
    let mut counts: std::collections::HashMap<u64, usize> = scene
        .agents
        .iter()
        .filter(|a| !viewpoints.contains(&a.id))
        .map(|a| (a.id, 0))
        .collect();
    if counts.is_empty() {
        // Still surface NoSensor for bad viewpoints.
        for &v in viewpoints {
            scan(scene, v)?;
        }
        return Ok(0.0);
    }
    for &v in viewpoints {
        let cloud = scan(scene, v)?;
        for p in &cloud.points {
            if let HitKind::Agent(id) = p.hit_kind {
                if let Some(c) = counts.get_mut(&id) {
                    *c += 1;
                }
            }
        }
    }
    let total: usize = counts.values().sum();
    Ok(total as f64 / counts.len() as f64)
}
