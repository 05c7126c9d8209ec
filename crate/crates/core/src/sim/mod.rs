//! Discrete-event ground truth.

pub mod empirical;
pub mod network;
pub mod scenario;
pub mod station;
pub mod stream;

pub use empirical::{empirical_descriptors, empirical_moments};
pub use scenario::{
    draw_system1_scenario, draw_system2_scenario, system1_grid, system2_grid, StreamClass, System1Scenario,
    System2Scenario,
};
pub use network::{run_system1, run_system2, service_for_utilization, SimConfig, System1Run, System2Run};
pub use station::{mm1_distribution, run_station, StationRun, SteadyStateHistogram};
pub use stream::{interarrivals, merge_streams, simulate_map_stream, simulate_map_stream_with, MapSampler};
