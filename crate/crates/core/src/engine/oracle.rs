use super::feedback::{Feedback, SampleId};
use crate::error::Result;

/// One feedback request.
#[derive(Clone, Debug, PartialEq)]
pub struct Query<'a> {
    pub sample_id: SampleId,
    pub features: &'a [f64],
    pub predicted_label: usize,
    pub confidence: f64,
}

/// Source of binary feedback: a simulated annotator, a replayed script, or a human.
///
/// Implementations answer synchronously or fail; a failure aborts the current batch.
pub trait FeedbackOracle {
    fn query(&mut self, sample_id: SampleId, features: &[f64], predicted_label: usize) -> Result<Feedback>;

    /// Answer a whole batch of queries. Transports that present queries together override this.
    fn query_batch(&mut self, batch_index: usize, queries: &[Query<'_>]) -> Result<Vec<Feedback>> {
        let _ = batch_index;
        queries
            .iter()
            .map(|q| self.query(q.sample_id, q.features, q.predicted_label))
            .collect()
    }
}

impl<T: FeedbackOracle + ?Sized> FeedbackOracle for &mut T {
    fn query(&mut self, sample_id: SampleId, features: &[f64], predicted_label: usize) -> Result<Feedback> {
        (**self).query(sample_id, features, predicted_label)
    }

    fn query_batch(&mut self, batch_index: usize, queries: &[Query<'_>]) -> Result<Vec<Feedback>> {
        (**self).query_batch(batch_index, queries)
    }
}
