//! Partitioning active vehicles into independently planned subgraphs.

use std::collections::{BTreeMap, BTreeSet};

use crate::bev::{compose_human_message, MessagePurpose, MessageSettings, RgbImage};
use crate::dispatch::{decode_groups_response, ChatClient, ChatRequest, ChatTurn, Role};
use crate::dynamics::VehicleState;
use crate::fleet::{FleetSnapshot, VehicleId};
use crate::geometry::distance;

pub const GROUPING_SYSTEM_MESSAGE: &str = "You assess collision risk between autonomous vehicles. The image is a \
bird's-eye view; sky-blue rectangles are the vehicles to analyse, labelled V<id>, with white arrows for headings. \
For each vehicle consider nearby vehicles, driving directions, distances and relative speeds. Group vehicles that \
could conflict within the next few seconds. Answer with <groups>[[id, ...], ...]</groups>.";

/// A connected set of vehicles planned together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    /// Sorted ascending.
    pub members: Vec<VehicleId>,
    /// Each edge stored once as (smaller, larger), sorted.
    pub edges: Vec<(VehicleId, VehicleId)>,
}

impl Subgraph {
    pub fn singleton(id: VehicleId) -> Self {
        Self { members: vec![id], edges: Vec::new() }
    }

    pub fn neighbors(&self, id: VehicleId) -> Vec<VehicleId> {
        let mut out: Vec<VehicleId> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    pub fn degree(&self, id: VehicleId) -> usize {
        self.neighbors(id).len()
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    /// Edges join distinct members and the subgraph is connected.
    pub fn is_valid(&self) -> bool {
        let sorted = self.members.windows(2).all(|w| w[0] < w[1]);
        let edges_ok = self.edges.iter().all(|&(a, b)| a < b && self.contains(a) && self.contains(b));
        sorted && edges_ok && !self.members.is_empty() && components(&self.members, &self.edges).len() == 1
    }
}

/// Connected components of an undirected graph, each as sorted members
/// with the edges inside it; ordered by smallest member.
fn components(nodes: &[VehicleId], edges: &[(VehicleId, VehicleId)]) -> Vec<Subgraph> {
    let index: BTreeMap<VehicleId, usize> = nodes.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, index[a]), find(&mut parent, index[b]));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Subgraph> = BTreeMap::new();
    for (i, v) in nodes.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_insert_with(|| Subgraph { members: Vec::new(), edges: Vec::new() }).members.push(*v);
    }
    for &(a, b) in edges {
        let root = find(&mut parent, index[&a]);
        groups.get_mut(&root).expect("root exists").edges.push((a, b));
    }
    let mut out: Vec<Subgraph> = groups.into_values().collect();
    for g in &mut out {
        g.members.sort();
        g.edges.sort();
        g.edges.dedup();
    }
    out.sort_by_key(|g| g.members[0]);
    out
}

/// Edges between all pairs closer than `r_tele`; subgraphs are the
/// connected components.
pub fn build_groups_threshold(states: &BTreeMap<VehicleId, VehicleState>, r_tele: f64) -> Vec<Subgraph> {
    let ids: Vec<VehicleId> = states.keys().copied().collect();
    let mut edges = Vec::new();
    for (k, a) in ids.iter().enumerate() {
        for b in &ids[k + 1..] {
            if distance(states[a].position(), states[b].position()) < r_tele {
                edges.push((*a, *b));
            }
        }
    }
    components(&ids, &edges)
}

/// Cliques over each list, unioned where lists overlap. Unknown ids are
/// dropped; vehicles absent from every list become singletons.
pub fn build_groups_from_lists(vehicles: &BTreeSet<VehicleId>, lists: &[Vec<VehicleId>]) -> Vec<Subgraph> {
    let mut edges = BTreeSet::new();
    for list in lists {
        let known: BTreeSet<VehicleId> = list
            .iter()
            .copied()
            .filter(|id| {
                let ok = vehicles.contains(id);
                if !ok {
                    log::warn!("grouping answer names unknown vehicle {id}; ignored");
                }
                ok
            })
            .collect();
        let known: Vec<VehicleId> = known.into_iter().collect();
        for (k, a) in known.iter().enumerate() {
            for b in &known[k + 1..] {
                edges.insert((*a, *b));
            }
        }
    }
    let nodes: Vec<VehicleId> = vehicles.iter().copied().collect();
    let edges: Vec<_> = edges.into_iter().collect();
    components(&nodes, &edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingOutcome {
    pub groups: Vec<Subgraph>,
    pub reasoning: String,
    /// Set when the model path failed and threshold grouping decided.
    pub fallback: Option<String>,
}

/// Asks the model for risk groups over `states`; falls back to
/// [`build_groups_threshold`] on transport or decoding failure.
pub fn build_groups_via_model(
    snapshot: &FleetSnapshot,
    states: &BTreeMap<VehicleId, VehicleState>,
    bev: &RgbImage,
    client: &dyn ChatClient,
    settings: &MessageSettings,
    r_tele: f64,
) -> GroupingOutcome {
    let human = compose_human_message(snapshot, None, MessagePurpose::Grouping, settings);
    let request = ChatRequest {
        system: GROUPING_SYSTEM_MESSAGE.to_string(),
        turns: vec![ChatTurn { role: Role::User, text: human, image: Some(bev.clone()) }],
    };
    let fallback = |reason: String| {
        log::warn!("grouping fell back to threshold rule: {reason}");
        GroupingOutcome {
            groups: build_groups_threshold(states, r_tele),
            reasoning: String::new(),
            fallback: Some(reason),
        }
    };
    let text = match client.complete(&request) {
        Ok(t) => t,
        Err(e) => return fallback(e.to_string()),
    };
    match decode_groups_response(&text) {
        Ok(lists) => {
            let vehicles: BTreeSet<VehicleId> = states.keys().copied().collect();
            GroupingOutcome {
                groups: build_groups_from_lists(&vehicles, &lists),
                reasoning: text,
                fallback: None,
            }
        }
        Err(e) => fallback(e.to_string()),
    }
}
