//! Coordination of truck platooning on a road network.
//!
//! The crate models trucks with fixed transport assignments on a weighted
//! directed road network, computes fuel-optimal pairwise speed plans that
//! let one truck (the coordination follower) catch up to another (the
//! coordination leader) and platoon over the shared part of their routes,
//! collects the per-pair fuel savings in a coordination graph, and selects
//! a set of leaders with a medoids-style local-search clustering.
//! A Monte Carlo experiment harness compares coordinated platooning with
//! spontaneous, uncoordinated platooning and emits plot-ready CSV data.
//!
//! The heavy inner loops (all-pairs plan evaluation, experiment replicates)
//! run data-parallel on rayon when the default `parallel` feature is
//! enabled; disabling it falls back to the sequential implementations.

pub mod clustering;
pub mod coordination;
pub mod experiments;
pub mod pairwise;
pub mod road_network;
pub mod trucking;

mod parallel;

pub use coordination::{CoordEdge, CoordinationGraph, LeaderSet};
pub use pairwise::{PairwisePlan, PlanError};
pub use road_network::{NetworkError, NodeId, Path, PathOverlap, PathPosition, RoadNetwork};
pub use trucking::{
    DriveRole, FuelParams, SpeedBand, SpeedProfile, TransportAssignment, TruckId, TruckingError,
};
