//! Matching free vehicles to pending requests.

pub mod chat;
pub mod decode;
pub mod embed;
pub mod memory;
pub mod model;
pub mod rules;

use std::collections::BTreeSet;

use crate::fleet::{RequestId, VehicleId};

pub use chat::{ChatClient, ChatError, ChatRequest, ChatTurn, HttpChatClient, Role, ScriptedChatClient, ScriptedResponse};
pub use decode::{decode_assignment_response, decode_groups_response, ParseFailure};
pub use embed::{Embedder, HashEmbedder};
pub use memory::{retrieve_top_k, similarity, EmbeddingError, MemoryContainer, MemoryError, MemoryItem, SceneEmbedding};
pub use model::{dispatch_via_model, filter_valid_pairs, ModelDispatcher, ModelParams, DISPATCH_SYSTEM_MESSAGE};
pub use rules::{dispatch_distance_first, dispatch_fcfs, dispatch_idle_first, dispatch_mixed_first, DispatchRule};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchDecision {
    pub pairs: Vec<(VehicleId, RequestId)>,
    /// Full model response; empty for rule-based dispatch.
    pub reasoning: String,
}

impl DispatchDecision {
    /// True if no vehicle or request appears twice.
    pub fn is_distinct(&self) -> bool {
        let v: BTreeSet<_> = self.pairs.iter().map(|p| p.0).collect();
        let r: BTreeSet<_> = self.pairs.iter().map(|p| p.1).collect();
        v.len() == self.pairs.len() && r.len() == self.pairs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutcome {
    pub decision: DispatchDecision,
    /// Set when the model path failed and the fallback rule decided.
    pub fallback: Option<String>,
}
