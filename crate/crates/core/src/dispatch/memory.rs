//! Stored dialogue exchanges and similarity-based retrieval.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::bev::{ImageError, RgbImage};

const EMBEDDING_MAGIC: &[u8; 8] = b"AMODEMB\0";
const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("embedding has zero norm")]
    DegenerateEmbedding,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding is not unit norm (norm {0})")]
    NotUnitNorm(String),
}

/// Image and text embeddings describing one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEmbedding {
    pub image: Vec<f64>,
    pub text: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub bev: RgbImage,
    pub human_message: String,
    pub ai_message: String,
    pub embedding: SceneEmbedding,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::DegenerateEmbedding);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `ω·cos(image) + (1−ω)·cos(text)`.
pub fn similarity(a: &SceneEmbedding, b: &SceneEmbedding, omega: f64) -> Result<f64, EmbeddingError> {
    Ok(omega * cosine(&a.image, &b.image)? + (1.0 - omega) * cosine(&a.text, &b.text)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved<'a> {
    /// Storage position in the container.
    pub index: usize,
    pub score: f64,
    pub item: &'a MemoryItem,
}

/// The `k` most similar items, best first; earlier-stored items win ties.
pub fn retrieve_top_k<'a>(
    items: &'a [MemoryItem],
    query: &SceneEmbedding,
    k: usize,
    omega: f64,
) -> Result<Vec<Retrieved<'a>>, EmbeddingError> {
    let mut scored = items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            Ok(Retrieved {
                index,
                score: similarity(query, &item.embedding, omega)?,
                item,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory i/o failed: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("bad embedding file {file}: {reason}")]
    BadEmbeddingFile { file: String, reason: String },
}

/// Append-only memory of dispatch exchanges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryContainer {
    items: Vec<MemoryItem>,
}

impl MemoryContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Adds an item after checking unit norms and matching dimensions.
    pub fn push(&mut self, item: MemoryItem) -> Result<(), EmbeddingError> {
        for v in [&item.embedding.image, &item.embedding.text] {
            let n = norm(v);
            if n == 0.0 {
                return Err(EmbeddingError::DegenerateEmbedding);
            }
            if (n - 1.0).abs() > 1e-6 {
                return Err(EmbeddingError::NotUnitNorm(format!("{n}")));
            }
        }
        if let Some(first) = self.items.first() {
            for (have, got) in [
                (first.embedding.image.len(), item.embedding.image.len()),
                (first.embedding.text.len(), item.embedding.text.len()),
            ] {
                if have != got {
                    return Err(EmbeddingError::DimensionMismatch(have, got));
                }
            }
        }
        self.items.push(item);
        Ok(())
    }

    pub fn retrieve(&self, query: &SceneEmbedding, k: usize, omega: f64) -> Result<Vec<Retrieved<'_>>, EmbeddingError> {
        retrieve_top_k(&self.items, query, k, omega)
    }

    /// Writes one sub-directory per item: `bev.png`, `human.txt`, `ai.txt`,
    /// `image_embedding.bin`, `text_embedding.bin`.
    pub fn save(&self, dir: &Path) -> Result<(), MemoryError> {
        fs::create_dir_all(dir)?;
        for (i, item) in self.items.iter().enumerate() {
            let d = dir.join(format!("item_{i:05}"));
            fs::create_dir_all(&d)?;
            fs::write(d.join("bev.png"), item.bev.to_png()?)?;
            fs::write(d.join("human.txt"), &item.human_message)?;
            fs::write(d.join("ai.txt"), &item.ai_message)?;
            fs::write(d.join("image_embedding.bin"), encode_embedding(&item.embedding.image))?;
            fs::write(d.join("text_embedding.bin"), encode_embedding(&item.embedding.text))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, MemoryError> {
        let mut dirs: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut out = Self::new();
        for d in dirs {
            let read_emb = |name: &str| -> Result<Vec<f64>, MemoryError> {
                let path = d.join(name);
                decode_embedding(&fs::read(&path)?).map_err(|reason| MemoryError::BadEmbeddingFile {
                    file: path.display().to_string(),
                    reason,
                })
            };
            out.push(MemoryItem {
                bev: RgbImage::from_png(&fs::read(d.join("bev.png"))?)?,
                human_message: fs::read_to_string(d.join("human.txt"))?,
                ai_message: fs::read_to_string(d.join("ai.txt"))?,
                embedding: SceneEmbedding {
                    image: read_emb("image_embedding.bin")?,
                    text: read_emb("text_embedding.bin")?,
                },
            })?;
        }
        Ok(out)
    }
}

/// 16-byte header (magic, version u32 LE, dimension u32 LE) then f64 LE values.
pub fn encode_embedding(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * v.len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Vec<f64>, String> {
    if bytes.len() < 16 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err("missing header".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 16 + 8 * dim {
        return Err(format!("expected {dim} values, found {} bytes of payload", bytes.len() - 16));
    }
    Ok(bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
