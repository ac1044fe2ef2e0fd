//! Exhaustive cosine-similarity index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::embedding::{event_text, Embedder};
use crate::catalog::Catalog;
use crate::scalar::{cosine, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexItem<T> {
    pub id: String,
    pub vector: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex<T> {
    dim: usize,
    items: Vec<IndexItem<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("vector for `{id}` has dimension {got}, index has {expected}")]
    Dimension { id: String, got: usize, expected: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId<T> {
    pub id: String,
    pub score: T,
}

/// Descending score, then ascending id.
pub(crate) fn rank_order<T: PartialOrd>(a: (&T, &str), b: (&T, &str)) -> Ordering {
    b.0.partial_cmp(a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

impl<T: Real> VectorIndex<T> {
    pub fn new(dim: usize) -> Self {
        VectorIndex { dim, items: Vec::new() }
    }

    /// Embed every catalog event.
    pub fn build(catalog: &Catalog, embedder: &dyn Embedder) -> Self {
        let mut index = VectorIndex::new(embedder.dim());
        for e in catalog.events() {
            let v = embedder.embed(&event_text(e)).into_iter().map(|x| T::lit(f64::from(x))).collect();
            index.insert(&e.id, v).expect("catalog ids are unique and dimensions fixed");
        }
        index
    }

    pub fn insert(&mut self, id: &str, vector: Vec<T>) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::Dimension { id: id.into(), got: vector.len(), expected: self.dim });
        }
        if self.items.iter().any(|i| i.id == id) {
            return Err(IndexError::DuplicateId(id.into()));
        }
        self.items.push(IndexItem { id: id.into(), vector });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[T]> {
        self.items.iter().find(|i| i.id == id).map(|i| i.vector.as_slice())
    }

    /// Top `k` items passing `filter` by cosine similarity, ties by id.
    pub fn search(&self, query: &[T], k: usize, filter: impl Fn(&str) -> bool) -> Vec<ScoredId<T>> {
        let mut scored: Vec<ScoredId<T>> = self
            .items
            .iter()
            .filter(|i| filter(&i.id))
            .map(|i| ScoredId { id: i.id.clone(), score: cosine(query, &i.vector) })
            .collect();
        scored.sort_by(|a, b| rank_order((&a.score, &a.id), (&b.score, &b.id)));
        scored.truncate(k);
        scored
    }
}

pub fn vector_search<T: Real>(
    index: &VectorIndex<T>,
    query_embedding: &[T],
    k: usize,
    filter: impl Fn(&str) -> bool,
) -> Vec<ScoredId<T>> {
    index.search(query_embedding, k, filter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_ranks_first() {
        let mut idx = VectorIndex::<f64>::new(3);
        idx.insert("a", vec![1.0, 0.0, 0.0]).unwrap();
        idx.insert("b", vec![0.6, 0.8, 0.0]).unwrap();
        let hits = idx.search(&[0.6, 0.8, 0.0], 2, |_| true);
        assert_eq!(hits[0].id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_by_id_and_filters() {
        let mut idx = VectorIndex::<f32>::new(2);
        for id in ["c", "a", "b"] {
            idx.insert(id, vec![1.0, 0.0]).unwrap();
        }
        let ids: Vec<_> = idx.search(&[1.0, 0.0], 10, |_| true).into_iter().map(|s| s.id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(idx.search(&[1.0, 0.0], 10, |_| false).is_empty());
        assert!(matches!(idx.insert("a", vec![0.0, 1.0]), Err(IndexError::DuplicateId(_))));
        assert!(matches!(idx.insert("z", vec![0.0]), Err(IndexError::Dimension { .. })));
    }

    #[test]
    fn persists_as_json() {
        let mut idx = VectorIndex::<f32>::new(2);
        idx.insert("a", vec![0.5, 0.25]).unwrap();
        let text = serde_json::to_string(&idx).unwrap();
        assert_eq!(serde_json::from_str::<VectorIndex<f32>>(&text).unwrap(), idx);
    }
}
