//! Experiment drivers: basin maps and trajectory dumps, tournaments with
//! side handling, extortion snapshots, the ablation grid and the self-test.

mod ablation;
mod basin;
mod config;
mod extortion;
mod selftest;
mod tournament;

pub use ablation::{median, run_ablation, variant_config, AblationReport, AblationRow, AblationSpec, VARIANTS};
pub use basin::{
    basin_map, grid_axis, run_basin, run_trajectories, write_trajectories_csv, BasinCell, BasinLabel, BasinMap,
    BasinSpec, TrajectoryRow, TrajectorySpec,
};
pub use config::{ConfigFile, Settings};
pub use extortion::{run_extortion, write_extortion_csv, ExtortionSpec, Snapshot};
pub use selftest::{selftest, write_selftest_csv, SelfTestRow};
pub use tournament::{
    model_path, opponent_class, pair_inits, run_tournament, MatchResult, MeanStderr, ModelSide, Statistic,
    TournamentResult, TournamentSpec,
};
