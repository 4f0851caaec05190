use std::collections::HashMap;

use super::generate::StreamBatch;
use super::spec::OracleSpec;
use crate::engine::feedback::{Feedback, SampleId};
use crate::engine::oracle::FeedbackOracle;
use crate::error::{Error, Result};
use crate::seed::{derive, tag, unit_f64};

/// Truthful answer, flipped with probability `error_rate` by a coin keyed on the sample id.
pub fn oracle_answer(spec: &OracleSpec, hidden_label: usize, predicted_label: usize, sample_id: SampleId) -> Feedback {
    let truth = Feedback::from_correct(hidden_label == predicted_label);
    let coin = unit_f64(derive(spec.seed, &[tag::ORACLE, sample_id.0]));
    if coin < spec.error_rate {
        truth.flipped()
    } else {
        truth
    }
}

/// Annotator simulated from the hidden labels of a stream.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    spec: OracleSpec,
    labels: HashMap<SampleId, usize>,
    queries: usize,
}

impl SimulatedOracle {
    pub fn new<'a>(spec: OracleSpec, batches: impl IntoIterator<Item = &'a StreamBatch>) -> Result<Self> {
        spec.validate()?;
        let mut labels = HashMap::new();
        for b in batches {
            for (id, &y) in b.sample_ids.iter().zip(b.labels().reveal()) {
                labels.insert(*id, y);
            }
        }
        Ok(Self {
            spec,
            labels,
            queries: 0,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn queries_answered(&self) -> usize {
        self.queries
    }

    pub fn knows(&self, id: SampleId) -> bool {
        self.labels.contains_key(&id)
    }
}

impl FeedbackOracle for SimulatedOracle {
    fn query(&mut self, sample_id: SampleId, _features: &[f64], predicted_label: usize) -> Result<Feedback> {
        let &label = self
            .labels
            .get(&sample_id)
            .ok_or_else(|| Error::Oracle(format!("unknown sample {sample_id}")))?;
        self.queries += 1;
        Ok(oracle_answer(&self.spec, label, predicted_label, sample_id))
    }
}
