//! Adversarial scene search for cooperative LiDAR perception.
//!
//! This crate simulates multi-agent driving scenes on a 2D plane, scans them
//! with a deterministic planar LiDAR, runs surrogate cooperative detectors
//! (no fusion / late / early / attention-weighted), scores them with a
//! weighted average-precision objective, and searches for challenging
//! configurations in two stages:
//!
//! 1. **Collaborator search**: pick the combination of intelligent agents
//!    whose pooled viewpoints perform worst, guided by attention-derived
//!    per-agent importance.
//! 2. **Perturbation search**: perturb the poses of a few occlusion-critical
//!    agents within physical bounds, restricted to a finite collision-free
//!    feasible set, driven by a pluggable black-box optimizer (random search,
//!    genetic algorithm, or Gaussian-process Bayesian optimization).
//!
//! Everything is a pure function of its inputs plus explicit seeds, so whole
//! experiments are reproducible bit-for-bit.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod hash;
pub mod lidar;
pub mod optimizers;
pub mod perception;
pub mod scene;
pub mod search;

pub use error::Error;
pub use evaluation::{
    adversarial_loss, ap_from_labels, average_precision, match_detections, report_for, EvalReport,
    LossWeights, EVAL_RANGE,
};
pub use geometry::{OrientedBox, Point2, Pose2, Ray};
pub use lidar::{avg_points_per_box, scan, HitKind, LidarPoint, PointCloud};
pub use optimizers::{
    BayesianOpt, BlackBoxOptimizer, BoConfig, GaConfig, GeneticAlgorithm, Observation,
    OptimizerKind, RandomSearch,
};
pub use perception::{
    attention_importance, detect, AgentImportance, AttentionMap, Detection, DetectorParams,
    FusionMode, ModelConfig,
};
pub use scene::{
    apply_perturbation, generate_scene, load_scene, save_scene, Agent, HeightClass, Layout,
    Perturbation, Scene, SceneGenConfig, SensorSpec,
};
pub use search::{
    acs, acs_random, aps, build_feasible_set, combination_probabilities, default_collab,
    generate_challenging, occlusion_scores, project, select_targets, AcsConfig, AcsStrategy,
    ApsConfig, ChallengeConfig, ChallengeOutcome, CollaborationChoice, FeasibleSet, SearchBounds,
    SearchTrace, TargetPolicy, TraceRecord,
};
