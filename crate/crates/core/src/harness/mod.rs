//! Episode loop, configuration, batch runs and report export.

pub mod batch;
pub mod config;
pub mod episode;
pub mod export;

pub use batch::{parse_seeds, run_batch, run_batch_in, summarize, BatchSummary, EpisodeSummary};
pub use config::EpisodeConfig;
pub use episode::{run_episode, run_episode_in, EpisodeReport, ObservedGeometry, StepRecord};
pub use export::{export_artifacts, load_report, render_svg};
