//! Language-model dispatcher with few-shot memories and rule-based fallback.

use std::collections::BTreeSet;

use super::chat::{ChatClient, ChatRequest, ChatTurn, Role};
use super::decode::decode_assignment_response;
use super::embed::Embedder;
use super::memory::{MemoryContainer, MemoryItem};
use super::rules::dispatch_mixed_first;
use super::{DispatchDecision, DispatchOutcome};
use crate::bev::{compose_human_message, MessagePurpose, MessageSettings, RgbImage};
use crate::fleet::{distance_matrix, FleetSnapshot, RequestId, VehicleId};

pub const DISPATCH_SYSTEM_MESSAGE: &str = "You dispatch autonomous taxis. The image is a bird's-eye view of the road \
network: red squares are waiting passenger requests, green rectangles are free vehicles, yellow rectangles are \
occupied vehicles, and white arrows show headings. Labels R<id> and V<id> name requests and vehicles. Reason step \
by step about distances along the lanes, vehicle headings and how long each passenger has waited. Then give your \
final answer as <pairs>[[vehicle_id, request_id], ...]</pairs>. Each vehicle and each request may appear at most once.";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Number of memories retrieved as few-shot examples.
    pub k: usize,
    /// Weight of the image channel in retrieval similarity.
    pub omega: f64,
    /// Waiting limit of the fallback rule.
    pub t_max: f64,
    pub system_message: String,
    pub message: MessageSettings,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            k: 3,
            omega: 0.5,
            t_max: 40.0,
            system_message: DISPATCH_SYSTEM_MESSAGE.into(),
            message: MessageSettings::default(),
        }
    }
}

/// Drops pairs naming unknown, busy or already-used vehicles and requests.
pub fn filter_valid_pairs(snapshot: &FleetSnapshot, pairs: &[(VehicleId, RequestId)]) -> Vec<(VehicleId, RequestId)> {
    let mut used_v = BTreeSet::new();
    let mut used_r = BTreeSet::new();
    pairs
        .iter()
        .copied()
        .filter(|(v, r)| {
            let free = snapshot.vehicles.get(v).is_some_and(|rec| rec.free);
            let pending = snapshot.requests.get(r).is_some_and(|req| req.is_pending());
            free && pending && used_v.insert(*v) && used_r.insert(*r)
        })
        .collect()
}

/// Builds the chat request: memories as alternating user/assistant turns,
/// then the current scene.
pub fn build_request(system: &str, memories: &[&MemoryItem], bev: &RgbImage, human: &str) -> ChatRequest {
    let mut turns = Vec::with_capacity(2 * memories.len() + 1);
    for m in memories {
        turns.push(ChatTurn { role: Role::User, text: m.human_message.clone(), image: Some(m.bev.clone()) });
        turns.push(ChatTurn { role: Role::Assistant, text: m.ai_message.clone(), image: None });
    }
    turns.push(ChatTurn { role: Role::User, text: human.to_string(), image: Some(bev.clone()) });
    ChatRequest { system: system.to_string(), turns }
}

/// One model exchange. Transport or decoding failures fall back to
/// `dispatch_mixed_first`; only decoded exchanges are stored in memory.
pub fn dispatch_via_model(
    snapshot: &FleetSnapshot,
    bev: &RgbImage,
    client: &dyn ChatClient,
    memory: &mut MemoryContainer,
    embedder: &dyn Embedder,
    params: &ModelParams,
) -> DispatchOutcome {
    let matrix = distance_matrix(snapshot).ok();
    let human = compose_human_message(snapshot, matrix.as_ref(), MessagePurpose::Dispatch, &params.message);
    let query = embedder.embed_scene(bev, &human);
    let retrieved = match memory.retrieve(&query, params.k, params.omega) {
        Ok(r) => r.into_iter().map(|r| r.item).collect(),
        Err(e) => {
            log::warn!("memory retrieval skipped: {e}");
            Vec::new()
        }
    };
    let request = build_request(&params.system_message, &retrieved, bev, &human);

    let fallback = |reason: String| DispatchOutcome {
        decision: dispatch_mixed_first(snapshot, params.t_max),
        fallback: Some(reason),
    };
    let text = match client.complete(&request) {
        Ok(t) => t,
        Err(e) => return fallback(e.to_string()),
    };
    let pairs = match decode_assignment_response(&text) {
        Ok(p) => p,
        Err(e) => return fallback(e.to_string()),
    };
    let item = MemoryItem {
        bev: bev.clone(),
        human_message: human,
        ai_message: text.clone(),
        embedding: query,
    };
    if let Err(e) = memory.push(item) {
        log::warn!("exchange not stored in memory: {e}");
    }
    DispatchOutcome {
        decision: DispatchDecision {
            pairs: filter_valid_pairs(snapshot, &pairs),
            reasoning: text,
        },
        fallback: None,
    }
}

/// Owns the client, embedder and memory across dispatch calls.
pub struct ModelDispatcher {
    pub client: Box<dyn ChatClient>,
    pub embedder: Box<dyn Embedder>,
    pub memory: MemoryContainer,
    pub params: ModelParams,
}

impl ModelDispatcher {
    pub fn dispatch(&mut self, snapshot: &FleetSnapshot, bev: &RgbImage) -> DispatchOutcome {
        dispatch_via_model(snapshot, bev, self.client.as_ref(), &mut self.memory, self.embedder.as_ref(), &self.params)
    }
}
