use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, Split};

/// Train/validation/test proportions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, CorpusError> {
        let ratios = Self {
            train,
            validation,
            test,
        };
        let all = [train, validation, test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) || ((train + validation + test) - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(all));
        }
        Ok(ratios)
    }

    /// `(train, validation, test)` sizes for `n` pairs. Validation and test are
    /// floored; the remainder goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let validation = floor(self.validation).min(n);
        let test = floor(self.test).min(n - validation);
        (n - validation - test, validation, test)
    }
}

/// Assigns every pair to exactly one split.
///
/// Ids are sorted before the seeded shuffle, so the assignment depends only on
/// the set of ids and the seed, not on the input order.
pub fn split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<Corpus, CorpusError> {
    SplitRatios::new(ratios.train, ratios.validation, ratios.test)?;
    if corpus.len() < 3 {
        return Err(CorpusError::TooSmall(corpus.len()));
    }

    let mut ids: Vec<&str> = corpus.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let (n_train, n_validation, _) = ratios.sizes(ids.len());
    let assignment: std::collections::HashMap<&str, Split> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_validation {
                Split::Validation
            } else {
                Split::Test
            };
            (*id, split)
        })
        .collect();

    let pairs = corpus
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.split = Some(assignment[p.id.as_str()]);
            p
        })
        .collect();
    Corpus::from_pairs(pairs)
}
