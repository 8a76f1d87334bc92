//! Grid-world laboratory for multi-object navigation: scenes, the episode
//! environment, geodesic solvers, rewards, scripted agents and metrics.

pub mod agents;
pub mod env;
pub mod geodesy;
pub mod metrics;
pub mod reward;
pub mod scene;
