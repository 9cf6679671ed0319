//! Experiment definitions, manifests and the command implementations.

mod commands;
mod config;
mod manifest;

pub use commands::{
    cmd_analyze, cmd_ensemble, cmd_schedule, cmd_simulate, cmd_thresholds, cmd_verify_lemmas, frame_file, load_run,
    transport_rows, LemmaRun, LoadedRun, RunArtifacts, ThresholdParams, ANALYSIS_FILE, TIMES_FILE, TRANSPORT_FILE,
};
pub use config::{
    parse_config, AnalysisSettings, ExperimentConfig, GridSettings, ModelSettings, NoiseKindSetting, NoiseSettings,
    RunSettings, SchemeSetting, SECTIONS,
};
pub use manifest::{
    digest_file, load_config, read_manifest, sha256_hex, verify_outputs, ExperimentManifest, FileDigest, RunDir,
    CONFIG_FILE, MANIFEST_FILE,
};
