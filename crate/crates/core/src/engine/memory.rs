use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::feedback::FeedbackRecord;

/// Bounded FIFO pool of feedback records; inserting into a full pool evicts the oldest record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    records: VecDeque<FeedbackRecord>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            records: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn from_records(capacity: usize, records: impl IntoIterator<Item = FeedbackRecord>) -> Self {
        let mut m = Self::new(capacity);
        for r in records {
            m.insert(r);
        }
        m
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: FeedbackRecord) {
        if self.capacity == 0 {
            return;
        }
        while self.records.len() >= self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn records(&self) -> impl Iterator<Item = &FeedbackRecord> {
        self.records.iter()
    }

    /// Stored features, oldest first, as `[len, feature_dim]`.
    pub fn features(&self, feature_dim: usize) -> Array2<f64> {
        let mut x = Array2::zeros((self.records.len(), feature_dim));
        for (mut row, r) in x.rows_mut().into_iter().zip(&self.records) {
            row.assign(&ndarray::ArrayView1::from(&r.features[..]));
        }
        x
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.predicted_label).collect()
    }
}

/// The correct-feedback and incorrect-feedback pools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Memories {
    pub correct: ReplayMemory,
    pub incorrect: ReplayMemory,
}

impl Memories {
    pub fn new(capacity: usize) -> Self {
        Self {
            correct: ReplayMemory::new(capacity),
            incorrect: ReplayMemory::new(capacity),
        }
    }

    /// Route a record by its feedback.
    pub fn insert(&mut self, record: FeedbackRecord) {
        match record.feedback {
            super::feedback::Feedback::Correct => self.correct.insert(record),
            super::feedback::Feedback::Incorrect => self.incorrect.insert(record),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::feedback::{Feedback, SampleId};
    use proptest::prelude::*;

    fn rec(id: u64) -> FeedbackRecord {
        FeedbackRecord {
            sample_id: SampleId(id),
            features: vec![id as f64],
            predicted_label: 0,
            feedback: Feedback::Correct,
        }
    }

    fn ids(m: &ReplayMemory) -> Vec<u64> {
        m.records().map(|r| r.sample_id.0).collect()
    }

    #[test]
    fn fifo_eviction() {
        let m = ReplayMemory::from_records(2, [rec(1), rec(2), rec(3)]);
        assert_eq!(ids(&m), [2, 3]);
        let m = ReplayMemory::from_records(4, [rec(1)]);
        assert_eq!(ids(&m), [1]);
        let m = ReplayMemory::from_records(0, [rec(1), rec(2)]);
        assert!(m.is_empty());
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity_and_keeps_newest(capacity in 0usize..10, n in 0u64..40) {
            let mut m = ReplayMemory::new(capacity);
            for i in 0..n {
                m.insert(rec(i));
                prop_assert!(m.len() <= capacity);
            }
            let keep = (n as usize).min(capacity) as u64;
            prop_assert_eq!(ids(&m), (n - keep..n).collect::<Vec<_>>());
        }
    }
}
