use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAP_SCHEMA_VERSION: u32 = 1;

/// Declarative road map: a set of lanes given as centreline polylines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub schema_version: u32,
    #[serde(rename = "lane", default)]
    pub lanes: Vec<LaneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: String,
    /// Centreline vertices in driving order.
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_lane_width")]
    pub width: f64,
    /// Waypoint spacing along the centreline, m.
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    /// Lanes entered from the end of this lane.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub successors: Vec<String>,
}

fn default_lane_width() -> f64 {
    3.5
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map file could not be read: {0}")]
    Io(String),
    #[error("map file is not valid: {0}")]
    Parse(String),
    #[error("unsupported map schema version {0} (expected {MAP_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("map declares no lanes")]
    Empty,
    #[error("lane '{0}' is declared more than once")]
    DuplicateLane(String),
    #[error("lane '{lane}' references unknown lane '{reference}'")]
    UnknownLane { lane: String, reference: String },
    #[error("lane '{0}' has zero length")]
    ZeroLength(String),
    #[error("lane '{0}' crosses itself")]
    SelfCrossing(String),
    #[error("lane '{lane}' has invalid {field}: {value}")]
    InvalidValue {
        lane: String,
        field: &'static str,
        value: f64,
    },
    #[error("lane '{lane}' has conflicting neighbor declarations with '{other}'")]
    NeighborConflict { lane: String, other: String },
    #[error("lane '{0}' is not connected to the rest of the map")]
    Disconnected(String),
}

impl MapSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, MapError> {
        let spec: MapSpec = toml::from_str(text).map_err(|e| MapError::Parse(e.to_string()))?;
        if spec.schema_version != MAP_SCHEMA_VERSION {
            return Err(MapError::UnsupportedVersion(spec.schema_version));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path).map_err(|e| MapError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("map spec serializes")
    }

    /// Structural checks that do not need the built graph.
    pub fn validate(&self) -> Result<(), MapError> {
        if self.lanes.is_empty() {
            return Err(MapError::Empty);
        }
        let mut ids = BTreeSet::new();
        for lane in &self.lanes {
            if !ids.insert(lane.id.as_str()) {
                return Err(MapError::DuplicateLane(lane.id.clone()));
            }
        }
        for lane in &self.lanes {
            if !(lane.spacing > 0.0) || !lane.spacing.is_finite() {
                return Err(MapError::InvalidValue {
                    lane: lane.id.clone(),
                    field: "spacing",
                    value: lane.spacing,
                });
            }
            if !(lane.width > 0.0) || !lane.width.is_finite() {
                return Err(MapError::InvalidValue {
                    lane: lane.id.clone(),
                    field: "width",
                    value: lane.width,
                });
            }
            let refs = lane
                .left
                .iter()
                .chain(lane.right.iter())
                .chain(lane.successors.iter());
            for r in refs {
                if !ids.contains(r.as_str()) {
                    return Err(MapError::UnknownLane {
                        lane: lane.id.clone(),
                        reference: r.clone(),
                    });
                }
            }
            if lane.points.iter().flatten().any(|c| !c.is_finite()) {
                return Err(MapError::InvalidValue {
                    lane: lane.id.clone(),
                    field: "points",
                    value: f64::NAN,
                });
            }
        }
        Ok(())
    }
}
