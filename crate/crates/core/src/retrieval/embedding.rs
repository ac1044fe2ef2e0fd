//! Deterministic offline text embedding.

use crate::catalog::EventRecord;
use crate::Embedding;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Embedding;
}

/// L2-normalized hashed bag of words. Words are lowercase alphanumeric runs;
/// each word adds 1 to bucket `fnv1a(word) mod dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    pub dim: usize,
}

pub const DEFAULT_DIM: usize = 256;

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords { dim: DEFAULT_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
}

impl Embedder for HashedBagOfWords {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Embedding {
        let mut v = vec![0.0f32; self.dim];
        for w in words(text) {
            v[(fnv1a(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

/// Text an event is embedded from: title, category and description.
pub fn event_text(e: &EventRecord) -> String {
    let mut t = format!("{} {}", e.title, e.category.label());
    if let Some(d) = &e.description {
        t.push(' ');
        t.push_str(d);
    }
    t
}
