//! Host-side simulation: checkpoints, signal sources, sampling devices,
//! sensor nodes and their network.

pub mod checkpoint;
pub mod device;
pub mod signal;
pub mod config;
pub mod node;
pub mod network;
