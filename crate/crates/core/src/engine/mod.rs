//! Exact event-driven simulation of the linear system and its dual.

pub mod config;
pub mod ensemble;
pub mod observe;
pub mod state;
pub mod update;

pub use config::Configuration;
pub use ensemble::{
    run_ensemble, run_ensemble_with, write_trajectory_csv, EnsembleConfig, EnsembleOutput, EnsembleSummary,
    ObservableStats, PairProductProbe, Probe, ReplicaRecords, SiteMassProbe, TimeSummary,
};
pub use observe::{observables, scaled_position, ObservableRecord};
pub use state::{init_state, ProcessState};
pub use update::{rule_for, update_rule, DualRule, PrimalRule, UpdateRule, UPDATE_RULES};
