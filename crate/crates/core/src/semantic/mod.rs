//! Code embeddings, whitening, squared-L2 distance and the first-stage scan.

pub mod format;
mod whitening;

use std::collections::HashMap;

pub use format::{load_embeddings, load_whitening, save_embeddings, save_whitening};
pub use whitening::{fit_whitening, WhiteningModel, EIGENVALUE_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum SemanticError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("embedding contains NaN or infinite values")]
    NonFinite,
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("whitening needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("cannot reduce to {requested} dimensions from {available}")]
    InvalidDimension { requested: usize, available: usize },
    #[error("degenerate covariance: usable rank {usable_rank} is below the requested {requested} dimensions")]
    DegenerateCovariance { usable_rank: usize, requested: usize },
}

/// `N x D` single-precision embeddings with one id per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self, SemanticError> {
        if data.len() != ids.len() * dim {
            return Err(SemanticError::LengthMismatch {
                expected: ids.len() * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SemanticError::NonFinite);
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(SemanticError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, dim, data, index })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f32>)>) -> Result<Self, SemanticError> {
        let dim = rows.first().map_or(0, |(_, r)| r.len());
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(SemanticError::LengthMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            ids.push(id);
            data.extend(row);
        }
        Self::new(ids, dim, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; a zero-width matrix has no meaningful rows.
        self.data.chunks_exact(self.dim.max(1)).take(self.ids.len())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Rows for `ids`, in that order.
    pub fn select<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<EmbeddingMatrix, String> {
        let mut rows = Vec::new();
        for id in ids {
            let row = self.get(id).ok_or_else(|| id.to_owned())?;
            rows.push((id.to_owned(), row.to_vec()));
        }
        let dim = self.dim;
        let mut out = Self::from_rows(rows).map_err(|e| e.to_string())?;
        out.dim = dim;
        Ok(out)
    }
}

/// A vector in the whitened (or, for ablations, raw) comparison space.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenedVector(pub Vec<f64>);

impl WhitenedVector {
    pub fn from_f32(values: &[f32]) -> Self {
        Self(values.iter().map(|&v| v as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sum of squared coordinate differences. Smaller means more similar.
pub fn semantic_distance(a: &WhitenedVector, b: &WhitenedVector) -> Result<f64, SemanticError> {
    if a.len() != b.len() {
        return Err(SemanticError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(squared_l2(&a.0, &b.0))
}

#[inline]
fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// Dense vectors searched by exhaustive scan.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorIndex {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            ids: Vec::new(),
            dim,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &WhitenedVector) -> Result<(), SemanticError> {
        if vector.len() != self.dim {
            return Err(SemanticError::LengthMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.ids.push(id.into());
        self.data.extend_from_slice(&vector.0);
        Ok(())
    }

    /// Raw rows, without whitening.
    pub fn from_matrix(matrix: &EmbeddingMatrix) -> Self {
        Self {
            ids: matrix.ids().to_vec(),
            dim: matrix.dim(),
            data: matrix.data().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Rows whitened with `model`.
    pub fn whitened(matrix: &EmbeddingMatrix, model: &WhiteningModel) -> Result<Self, SemanticError> {
        let mut index = Self::new(model.output_dim());
        for (id, row) in matrix.ids().iter().zip(matrix.rows()) {
            index.push(id.clone(), &model.apply(row)?)?;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// The `n` rows closest to `query`, ascending by distance then id.
    pub fn top_n(&self, query: &WhitenedVector, n: usize) -> Result<Vec<Neighbor>, SemanticError> {
        self.top_n_filtered(query, n, |_| true)
    }

    /// Like [`top_n`](Self::top_n) but only over rows whose id passes `keep`.
    pub fn top_n_filtered(
        &self,
        query: &WhitenedVector,
        n: usize,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Vec<Neighbor>, SemanticError> {
        if query.len() != self.dim {
            return Err(SemanticError::LengthMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let mut scored: Vec<(f64, &str)> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| keep(id))
            .map(|(i, id)| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                (squared_l2(&query.0, row), id.as_str())
            })
            .collect();
        let cmp = |a: &(f64, &str), b: &(f64, &str)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1));
        if n < scored.len() {
            scored.select_nth_unstable_by(n, cmp);
            scored.truncate(n);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(distance, id)| Neighbor {
                id: id.to_owned(),
                distance,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> WhitenedVector {
        WhitenedVector(xs.to_vec())
    }

    #[test]
    fn distance_values() {
        assert_eq!(semantic_distance(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(semantic_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 2.0);
        // 9 + 16 + 0
        assert_eq!(semantic_distance(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 6.0, 3.0])).unwrap(), 25.0);
        assert!(semantic_distance(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative(
            a in prop::collection::vec(-1e3f64..1e3, 6),
            b in prop::collection::vec(-1e3f64..1e3, 6),
        ) {
            let (a, b) = (v(&a), v(&b));
            let ab = semantic_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, semantic_distance(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
        }
    }

    #[test]
    fn embedding_matrix_invariants() {
        assert!(matches!(
            EmbeddingMatrix::new(vec!["a".into()], 2, vec![f32::NAN, 0.0]),
            Err(SemanticError::NonFinite)
        ));
        assert!(matches!(
            EmbeddingMatrix::new(vec!["a".into(), "a".into()], 1, vec![0.0, 1.0]),
            Err(SemanticError::DuplicateId(_))
        ));
        assert!(EmbeddingMatrix::new(vec!["a".into()], 2, vec![0.0]).is_err());
    }

    fn index_of(rows: &[(&str, &[f64])]) -> VectorIndex {
        let mut index = VectorIndex::new(rows[0].1.len());
        for (id, r) in rows {
            index.push(*id, &v(r)).unwrap();
        }
        index
    }

    #[test]
    fn exact_match_ranks_first() {
        let index = index_of(&[("a", &[0.0, 0.0]), ("b", &[1.0, 1.0]), ("c", &[5.0, 5.0])]);
        let hits = index.top_n(&v(&[1.0, 1.0]), 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].id, "b");
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn ties_break_by_id() {
        let index = index_of(&[("z", &[1.0]), ("m", &[-1.0]), ("a", &[1.0])]);
        let ids: Vec<_> = index.top_n(&v(&[0.0]), 2).unwrap().into_iter().map(|n| n.id).collect();
        assert_eq!(ids, ["a", "m"]);
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rows: Vec<(String, Vec<f64>)> = (0..50)
                .map(|i| (format!("id{:02}", (i * 37) % 50), (0..4).map(|_| rng.gen_range(-2..3) as f64).collect()))
                .collect();
            let mut index = VectorIndex::new(4);
            for (id, r) in &rows {
                index.push(id.clone(), &v(r)).unwrap();
            }
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-2..3) as f64).collect();

            let mut oracle: Vec<(f64, String)> = rows
                .iter()
                .map(|(id, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), id.clone()))
                .collect();
            oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

            let got: Vec<(f64, String)> = index
                .top_n(&v(&q), 10)
                .unwrap()
                .into_iter()
                .map(|n| (n.distance, n.id))
                .collect();
            assert_eq!(got, oracle[..10].to_vec());
        }
    }
}
