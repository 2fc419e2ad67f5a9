//! Closed-loop mobility-on-demand simulation: lane-graph routing, fleet
//! dispatch, bird's-eye-view context for model dispatchers, and cooperative
//! multi-vehicle trajectory planning with dual consensus ADMM.

pub mod dynamics;
pub mod geometry;
pub mod road;
pub mod bev;
pub mod fleet;
pub mod dispatch;
pub mod planner;
pub mod sim;
