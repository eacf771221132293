//! Error type shared across the crate.

use thiserror::Error;

/// Failures surfaced by scene construction, model evaluation, and search.
#[derive(Debug, Error)]
pub enum Error {
    /// Scene generation exhausted its rejection-sampling budget without
    /// placing every requested entity collision-free.
    #[error("scene generation failed: {0}")]
    GenerationFailed(String),

    /// A scene file or JSON document violated the schema.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    /// A structural invariant of a loaded or constructed scene is broken.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    /// An operation referenced an agent id that does not exist in the scene.
    #[error("unknown agent id {0}")]
    UnknownAgent(u64),

    /// A perturbation targeted an agent id not present in the scene.
    #[error("unknown perturbation target {0}")]
    UnknownTarget(u64),

    /// A collaborating viewpoint has no sensor.
    #[error("agent {0} has no sensor and cannot be a viewpoint")]
    NoSensor(u64),

    /// A collaborator set must contain the ego vehicle.
    #[error("collaborator set does not contain ego agent {0}")]
    EgoNotInCollab(u64),

    /// Only intelligent agents may join a collaborator set.
    #[error("agent {0} is not intelligent and cannot collaborate")]
    NonIntelligentMember(u64),

    /// A search was asked to choose from an empty candidate pool.
    #[error("no candidates available: {0}")]
    EmptyCandidates(String),

    /// The scene has fewer intelligent agents than the collaboration needs.
    #[error("scene has {have} intelligent agents, need at least {need}")]
    NotEnoughIntelligent { have: usize, need: usize },

    /// The scene has fewer eligible perturbation targets than requested.
    #[error("scene has {have} eligible targets, need {need}")]
    NotEnoughTargets { have: usize, need: usize },

    /// An I/O failure while reading or writing scene or report files.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience constructor for schema violations.
    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }

    /// Convenience constructor wrapping `std::io::Error` with its file path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
