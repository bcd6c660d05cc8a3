//! Sample sizing, blinded questionnaires and rating aggregation for the human study.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::CodeCommentPair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeParams {
    /// Population size.
    pub size: u64,
    /// Margin of error.
    pub e: f64,
    /// Confidence score.
    pub z: f64,
}

impl Default for SampleSizeParams {
    fn default() -> Self {
        Self {
            size: 1,
            e: 0.05,
            z: 1.96,
        }
    }
}

impl SampleSizeParams {
    /// Initial size for an infinite population at maximal variance (p = 0.5).
    pub fn n0(&self) -> f64 {
        self.z * self.z * 0.25 / (self.e * self.e)
    }
}

/// `n0 / (1 + (n0 - 1) / size)`, rounded to the nearest integer.
pub fn sample_size(params: SampleSizeParams) -> Result<u64, EvalError> {
    let SampleSizeParams { size, e, z } = params;
    if size < 1 {
        return Err(EvalError::InvalidParams(format!("size must be >= 1, got {size}")));
    }
    if !(e > 0.0 && e < 1.0) {
        return Err(EvalError::InvalidParams(format!("e must lie in (0, 1), got {e}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(EvalError::InvalidParams(format!("z must be positive, got {z}")));
    }
    let n0 = params.n0();
    Ok((n0 / (1.0 + (n0 - 1.0) / size as f64)).round() as u64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedComment {
    /// Slot label shown to raters ("A", "B", ...).
    pub slot: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewForm {
    pub item_id: String,
    pub code: String,
    pub ground_truth: String,
    pub comments: Vec<BlindedComment>,
}

/// Slot-to-approach mapping per item, kept away from raters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap(pub BTreeMap<String, BTreeMap<String, String>>);

impl LabelMap {
    pub fn approach(&self, item_id: &str, slot: &str) -> Option<&str> {
        self.0.get(item_id)?.get(slot).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Questionnaire {
    pub forms: Vec<ReviewForm>,
    pub labels: LabelMap,
}

fn slot_name(i: usize) -> String {
    let mut name = String::new();
    let mut i = i;
    loop {
        name.insert(0, (b'A' + (i % 26) as u8) as char);
        if i < 26 {
            return name;
        }
        i = i / 26 - 1;
    }
}

/// Draws `count` test items with `seed` and lays out each approach's output in
/// a per-item shuffled order. `outputs` maps approach name to id-keyed comments.
pub fn export_questionnaire(
    test: &[CodeCommentPair],
    outputs: &BTreeMap<String, HashMap<String, String>>,
    count: usize,
    seed: u64,
) -> Result<Questionnaire, EvalError> {
    if count > test.len() {
        return Err(EvalError::SampleTooLarge {
            requested: count,
            available: test.len(),
        });
    }
    let mut items: Vec<&CodeCommentPair> = test.iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, items.len(), count).into_vec();
    picked.sort_unstable();

    let approaches: Vec<&String> = outputs.keys().collect();
    let mut forms = Vec::with_capacity(count);
    let mut labels = LabelMap::default();
    for idx in picked {
        let item = items[idx];
        let mut order = approaches.clone();
        order.shuffle(&mut rng);
        let mut comments = Vec::with_capacity(order.len());
        let mut slots = BTreeMap::new();
        for (i, approach) in order.into_iter().enumerate() {
            let text = outputs[approach].get(&item.id).ok_or_else(|| EvalError::MissingOutput {
                approach: approach.clone(),
                id: item.id.clone(),
            })?;
            let slot = slot_name(i);
            slots.insert(slot.clone(), approach.clone());
            comments.push(BlindedComment {
                slot,
                text: text.clone(),
            });
        }
        labels.0.insert(item.id.clone(), slots);
        forms.push(ReviewForm {
            item_id: item.id.clone(),
            code: item.code.clone(),
            ground_truth: item.comment.clone(),
            comments,
        });
    }
    Ok(Questionnaire { forms, labels })
}

/// One rater's scores for one comment. `approach` holds the blinded slot
/// until [`unblind`] replaces it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub approach: String,
    pub similarity: u8,
    pub naturalness: u8,
    pub informativeness: u8,
}

/// Replaces slot labels in `records` with approach names.
pub fn unblind(records: &[RatingRecord], labels: &LabelMap) -> Result<Vec<RatingRecord>, EvalError> {
    records
        .iter()
        .map(|r| {
            let approach = labels
                .approach(&r.item_id, &r.approach)
                .ok_or_else(|| EvalError::UnknownSlot {
                    item_id: r.item_id.clone(),
                    slot: r.approach.clone(),
                })?;
            Ok(RatingRecord {
                approach: approach.to_owned(),
                ..r.clone()
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub similarity: f64,
    pub naturalness: f64,
    pub informativeness: f64,
    pub count: usize,
}

/// Mean score per approach for each perspective.
pub fn aggregate_ratings(records: &[RatingRecord]) -> Result<BTreeMap<String, RatingSummary>, EvalError> {
    let mut sums: BTreeMap<String, [u64; 4]> = BTreeMap::new();
    for r in records {
        for (field, value) in [
            ("similarity", r.similarity),
            ("naturalness", r.naturalness),
            ("informativeness", r.informativeness),
        ] {
            if !(1..=5).contains(&value) {
                return Err(EvalError::ScoreOutOfRange {
                    item_id: r.item_id.clone(),
                    field,
                    value,
                });
            }
        }
        let s = sums.entry(r.approach.clone()).or_default();
        s[0] += r.similarity as u64;
        s[1] += r.naturalness as u64;
        s[2] += r.informativeness as u64;
        s[3] += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(approach, [sim, nat, inf, n])| {
            let n_f = n as f64;
            (
                approach,
                RatingSummary {
                    similarity: sim as f64 / n_f,
                    naturalness: nat as f64 / n_f,
                    informativeness: inf as f64 / n_f,
                    count: n as usize,
                },
            )
        })
        .collect())
}

/// Plain-text table of the means, two decimals.
pub fn format_ratings(summary: &BTreeMap<String, RatingSummary>) -> String {
    let width = summary.keys().map(String::len).max().unwrap_or(0).max("approach".len());
    let mut out = format!(
        "{:<width$}  {:>10}  {:>11}  {:>15}\n",
        "approach", "similarity", "naturalness", "informativeness"
    );
    for (approach, s) in summary {
        out.push_str(&format!(
            "{:<width$}  {:>10.2}  {:>11.2}  {:>15.2}\n",
            approach, s.similarity, s.naturalness, s.informativeness
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(size: u64) -> SampleSizeParams {
        SampleSizeParams {
            size,
            ..Default::default()
        }
    }

    #[test]
    fn sample_size_values() {
        assert_eq!(sample_size(params(2972)).unwrap(), 340);
        assert_eq!(sample_size(params(1)).unwrap(), 1);
        assert!(sample_size(params(0)).is_err());
        assert!(sample_size(SampleSizeParams { e: 1.0, ..params(10) }).is_err());
        assert!(sample_size(SampleSizeParams { z: 0.0, ..params(10) }).is_err());
    }

    #[test]
    fn slot_names() {
        assert_eq!(slot_name(0), "A");
        assert_eq!(slot_name(25), "Z");
        assert_eq!(slot_name(26), "AA");
    }

    fn record(approach: &str, s: u8, n: u8, i: u8) -> RatingRecord {
        RatingRecord {
            item_id: "x".into(),
            approach: approach.into(),
            similarity: s,
            naturalness: n,
            informativeness: i,
        }
    }

    #[test]
    fn aggregate() {
        let one = aggregate_ratings(&[record("m", 3, 4, 5)]).unwrap();
        assert_eq!((one["m"].similarity, one["m"].naturalness, one["m"].informativeness), (3.0, 4.0, 5.0));
        let two = aggregate_ratings(&[record("m", 1, 1, 1), record("m", 5, 5, 5)]).unwrap();
        assert_eq!((two["m"].similarity, two["m"].naturalness, two["m"].informativeness), (3.0, 3.0, 3.0));
        assert!(matches!(
            aggregate_ratings(&[record("m", 6, 1, 1)]),
            Err(EvalError::ScoreOutOfRange { value: 6, .. })
        ));
        assert!(format_ratings(&two).contains("3.00"));
    }
}
