use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// Rigid rotation by `s` radians in each of `d / 2` planes of a random orthonormal basis.
    Rotation,
    /// Additive isotropic noise with standard deviation `s`.
    GaussianNoise,
    /// Per-feature multiplicative factor `exp(s * u_j)`, `u_j ~ U[-1, 1]`.
    Scaling,
    /// Per-feature offset `s * d_j`, `d_j ~ N(0, 1)`.
    MeanShift,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [
        CorruptionKind::Rotation,
        CorruptionKind::GaussianNoise,
        CorruptionKind::Scaling,
        CorruptionKind::MeanShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Rotation => "rotation",
            CorruptionKind::GaussianNoise => "gaussian-noise",
            CorruptionKind::Scaling => "scaling",
            CorruptionKind::MeanShift => "mean-shift",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub severity: f64,
}

/// Order in which shifted samples arrive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Ordering {
    /// Segments one after another.
    Continual,
    /// All samples of all segments shuffled together.
    Mixed,
    /// Within each segment samples are ordered by `correlation * label + (1 - correlation) * noise`,
    /// so `1` sorts strictly by label and `0` leaves the order random.
    NonIid { correlation: f64 },
    /// Continual order with one sample per batch.
    SingleSample,
}

/// Synthetic benchmark definition.
///
/// Class prototypes and corruption parameters are fixed by `geometry_seed`; the per-run
/// seed passed to the generators only draws samples, noise and orderings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub geometry_seed: u64,
    /// Standard deviation of the class prototypes around the origin.
    pub class_spread: f64,
    /// Within-class standard deviation.
    pub within_std: f64,
    pub segments: Vec<Corruption>,
    pub batch_size: usize,
    pub batches_per_segment: usize,
    pub ordering: Ordering,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.batch_size == 0 || self.batches_per_segment == 0 {
            return bad("batch size and batches per segment must be positive".into());
        }
        if self.segments.is_empty() {
            return bad("at least one segment is required".into());
        }
        if let Some(c) = self.segments.iter().find(|c| !(c.severity >= 0.0) || !c.severity.is_finite()) {
            return bad(format!("severity must be >= 0, got {}", c.severity));
        }
        if !(self.class_spread > 0.0 && self.within_std > 0.0) {
            return bad("class_spread and within_std must be positive".into());
        }
        if let Ordering::NonIid { correlation } = self.ordering {
            if !(0.0..=1.0).contains(&correlation) {
                return bad(format!("non-iid correlation must lie in [0, 1], got {correlation}"));
            }
        }
        Ok(())
    }

    /// Batch size actually emitted (single-sample ordering forces 1).
    pub fn effective_batch_size(&self) -> usize {
        match self.ordering {
            Ordering::SingleSample => 1,
            _ => self.batch_size,
        }
    }

    pub fn samples_per_segment(&self) -> usize {
        self.batch_size * self.batches_per_segment
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_segment() * self.segments.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes).map(|c| format!("class-{c}")).collect()
    }

    /// Same geometry with every severity set to zero.
    pub fn clean(&self) -> Self {
        let mut s = self.clone();
        for c in &mut s.segments {
            c.severity = 0.0;
        }
        s
    }

    /// Desk benchmark: 8 classes in 16 dimensions, 15 corrupted segments of 20 batches of 64.
    pub fn desk_benchmark() -> Self {
        use CorruptionKind::*;
        let plan: [(CorruptionKind, f64); 15] = [
            (GaussianNoise, 2.0),
            (Rotation, 0.9),
            (Scaling, 3.0),
            (MeanShift, 2.0),
            (Rotation, 1.0),
            (GaussianNoise, 2.4),
            (Scaling, 3.5),
            (Rotation, 0.9),
            (MeanShift, 2.1),
            (GaussianNoise, 1.8),
            (Scaling, 3.2),
            (Rotation, 0.9),
            (MeanShift, 1.0),
            (GaussianNoise, 2.2),
            (Rotation, 1.0),
        ];
        Self {
            n_classes: 8,
            feature_dim: 16,
            geometry_seed: 2024,
            class_spread: 1.0,
            within_std: 1.0,
            segments: plan
                .iter()
                .map(|&(kind, severity)| Corruption { kind, severity })
                .collect(),
            batch_size: 64,
            batches_per_segment: 20,
            ordering: Ordering::Continual,
        }
    }
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self::desk_benchmark()
    }
}

/// Simulated annotator: truthful answers flipped independently with probability `error_rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub error_rate: f64,
    pub seed: u64,
}

impl OracleSpec {
    pub fn new(error_rate: f64, seed: u64) -> Result<Self> {
        let spec = Self { error_rate, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::InvalidArgument(format!(
                "oracle error rate must lie in [0, 1], got {}",
                self.error_rate
            )));
        }
        Ok(())
    }
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            error_rate: 0.0,
            seed: 0,
        }
    }
}
