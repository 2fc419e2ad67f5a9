//! Extraction of delimited answers from model responses.

use thiserror::Error;

use crate::fleet::{RequestId, VehicleId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not decode model response: {reason}")]
pub struct ParseFailure {
    pub reason: String,
    pub raw: String,
}

impl ParseFailure {
    fn new(reason: impl Into<String>, raw: &str) -> Self {
        Self {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// Contents of the last `<tag>…</tag>` block.
fn last_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let end = text.rfind(&close)?;
    let start = text[..end].rfind(&open)? + open.len();
    Some(&text[start..end])
}

fn id_lists(text: &str, tag: &str) -> Result<Vec<Vec<u32>>, ParseFailure> {
    let block = last_block(text, tag).ok_or_else(|| ParseFailure::new(format!("no <{tag}> block"), text))?;
    let value: serde_json::Value =
        serde_json::from_str(block.trim()).map_err(|e| ParseFailure::new(format!("block is not a list: {e}"), text))?;
    let outer = value
        .as_array()
        .ok_or_else(|| ParseFailure::new("block is not a list of lists", text))?;
    outer
        .iter()
        .map(|inner| {
            let items = inner
                .as_array()
                .ok_or_else(|| ParseFailure::new("block is not a list of lists", text))?;
            items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .and_then(|n| u32::try_from(n).ok())
                        .ok_or_else(|| ParseFailure::new(format!("'{v}' is not a valid id"), text))
                })
                .collect()
        })
        .collect()
}

/// Reads the final `<pairs>[[vehicle, request], ...]</pairs>` block.
pub fn decode_assignment_response(text: &str) -> Result<Vec<(VehicleId, RequestId)>, ParseFailure> {
    id_lists(text, "pairs")?
        .into_iter()
        .map(|pair| match pair[..] {
            [v, r] => Ok((VehicleId(v), RequestId(r))),
            _ => Err(ParseFailure::new("each pair needs exactly two ids", text)),
        })
        .collect()
}

/// Reads the final `<groups>[[id, ...], ...]</groups>` block.
pub fn decode_groups_response(text: &str) -> Result<Vec<Vec<VehicleId>>, ParseFailure> {
    Ok(id_lists(text, "groups")?
        .into_iter()
        .map(|g| g.into_iter().map(VehicleId).collect())
        .collect())
}
