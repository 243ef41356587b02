//! Experiment orchestration: configuration, presets, replicate runs and
//! their on-disk artifacts.

mod assemble;
mod config;
mod presets;
mod run;

pub use assemble::{
    assemble, build_model, initial_theta, manufactured_problem, stiffness_truth, truth_stress, unfold_initial_network,
    Assembled,
};
pub use config::{
    apply_override, config_with_overrides, DataSource, ExperimentConfig, ExportConfig, FourierConfig, LdList,
    Loading, NetworkConfig, NoiseConfig, Parametrization,
};
pub use presets::{preset, presets, Preset};
pub use run::{
    aggregate, chosen_theta, envelope, evaluate_checkpoint, ld_label, predict_fields, region_ratio_field,
    region_ratio_scalars, replicate_dir, run_experiment, run_replicate, truth_fields, Envelope,
    FieldPoint, FieldRecord, ReplicateReport, RunSummary, TrainedCheckpoint, FIELD_HEADER,
};
