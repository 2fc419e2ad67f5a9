//! Lane maps, routing and reference paths.

pub mod graph;
pub mod kdtree;
pub mod map_spec;
pub mod path;
pub mod route;
pub mod savgol;
pub mod synthetic;

pub use graph::{build_lane_graph, Edge, EdgeKind, LaneGraph, LaneInfo, Waypoint};
pub use kdtree::{nearest_waypoint, KdTree, PathIndex};
pub use map_spec::{LaneSpec, MapError, MapSpec, MAP_SCHEMA_VERSION};
pub use path::{densify_path, smooth_path, PathError, Smoothed, WaypointPath};
pub use route::{astar_nodes, astar_route, edge_cost, NoRoute, NoRouteReason, NodeRoute, RouteOptions};
