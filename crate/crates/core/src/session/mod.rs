//! Headless sessions: the simulated player drives the game and mini-games,
//! EEG is synthesized for everything that happened, the result is archived,
//! analyzed into a report bundle, and checked against the acceptance
//! criteria.

mod analyze;
mod config;
mod criteria;
mod simulate;

pub use analyze::{analyze_archive, analyze_session, AnalysisStatus, ReportBundle};
pub use config::{standard_rounds, MinigameQuota, RoundSpec, SessionConfig};
pub use criteria::{
    determinism, dsp_bounds, errp_injection_rate, mi_chain, nback_statistics, rsvp_statistics,
    run_validation, shot_clock, write_results, Criteria, CriterionResult, CRITERIA, RESULTS_CSV,
    RESULTS_JSON, VALIDATION_SEED,
};
pub use simulate::{
    derive_seed, run_session, simulate_session, EEG_STREAM, GAME_STREAM, UI_CLOCK, UI_STREAM,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::dsp::DspError;
use crate::game::GameError;
use crate::minigames::MinigameError;
use crate::synth::SynthError;
use crate::timeline::TimelineError;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("output directory {} is not empty", .0.display())]
    OutputNotEmpty(PathBuf),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Minigame(#[from] MinigameError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("archive has no `{0}` stream")]
    MissingStream(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_owned(),
        source,
    }
}
