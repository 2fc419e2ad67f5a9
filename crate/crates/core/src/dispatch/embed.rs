//! Embedding providers for memory retrieval.

use super::memory::SceneEmbedding;
use crate::bev::RgbImage;

pub trait Embedder: Send + Sync {
    fn embed_image(&self, image: &RgbImage) -> Vec<f64>;
    fn embed_text(&self, text: &str) -> Vec<f64>;

    fn embed_scene(&self, image: &RgbImage, text: &str) -> SceneEmbedding {
        SceneEmbedding {
            image: self.embed_image(image),
            text: self.embed_text(text),
        }
    }
}

/// Deterministic stand-in for learned encoders: feature hashing into a
/// fixed number of buckets, normalised to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    /// Coarse grid resolution for images (cells per side).
    pub grid: u32,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64, grid: 8 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    fn add(&self, v: &mut [f64], key: &[u8], weight: f64) {
        let h = fnv1a(key);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign * weight;
    }

    fn finish(&self, mut v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            // Empty input still needs a valid direction.
            v[0] = 1.0;
            return v;
        }
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.add(&mut v, tok.to_lowercase().as_bytes(), 1.0);
        }
        self.finish(v)
    }

    fn embed_image(&self, image: &RgbImage) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let (w, h) = (image.width().max(1), image.height().max(1));
        let g = self.grid.max(1);
        let mut sums = vec![[0.0f64; 3]; (g * g) as usize];
        let mut counts = vec![0.0f64; (g * g) as usize];
        for r in 0..image.height() {
            for c in 0..image.width() {
                let cell = ((r * g / h) * g + c * g / w) as usize;
                let px = image.get(c, r);
                for k in 0..3 {
                    sums[cell][k] += px[k] as f64;
                }
                counts[cell] += 1.0;
            }
        }
        for (cell, (s, n)) in sums.iter().zip(&counts).enumerate() {
            if *n == 0.0 {
                continue;
            }
            for (k, total) in s.iter().enumerate() {
                let key = [(cell as u32).to_le_bytes(), (k as u32).to_le_bytes()].concat();
                self.add(&mut v, &key, total / n / 255.0);
            }
        }
        self.finish(v)
    }
}
