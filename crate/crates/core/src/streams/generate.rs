use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::spec::{CorruptionKind, Ordering, StreamSpec};
use crate::engine::adapt::BatchView;
use crate::engine::feedback::SampleId;
use crate::error::Result;
use crate::seed::{derive, tag};

/// Labeled training data (source domain only).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Ground-truth labels of a test batch.
///
/// Outside the stream module the labels can only be used to score predictions; nothing on
/// the adaptation path can read them.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-sample correctness of `predictions`.
    pub fn score(&self, predictions: &[usize]) -> Vec<bool> {
        assert_eq!(predictions.len(), self.0.len(), "one prediction per sample");
        predictions.iter().zip(&self.0).map(|(p, y)| p == y).collect()
    }

    pub fn accuracy(&self, predictions: &[usize]) -> f64 {
        let hits = self.score(predictions).iter().filter(|&&c| c).count();
        hits as f64 / self.0.len().max(1) as f64
    }

    pub(in crate::streams) fn reveal(&self) -> &[usize] {
        &self.0
    }
}

/// One test batch: features in arrival order plus gated labels.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamBatch {
    pub index: usize,
    /// Segment by stream position; for mixed orderings see `sample_segments`.
    pub segment: usize,
    pub sample_ids: Vec<SampleId>,
    pub sample_segments: Vec<usize>,
    pub features: Array2<f64>,
    labels: HiddenLabels,
}

impl StreamBatch {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn labels(&self) -> &HiddenLabels {
        &self.labels
    }

    /// Copy of the batch carrying different ground truth.
    pub fn relabeled(&self, labels: Vec<usize>) -> StreamBatch {
        assert_eq!(labels.len(), self.len(), "one label per sample");
        StreamBatch {
            labels: HiddenLabels(labels),
            ..self.clone()
        }
    }

    /// The label-free view handed to adaptation methods.
    pub fn view(&self) -> BatchView<'_> {
        BatchView {
            index: self.index,
            sample_ids: &self.sample_ids,
            features: &self.features,
        }
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        let row = self.features.row(i);
        row.to_slice().expect("row-major features")
    }
}

/// Class prototypes of the benchmark, `[classes, features]`.
pub fn prototypes(spec: &StreamSpec) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.geometry_seed, &[tag::INIT]));
    Array2::from_shape_fn((spec.n_classes, spec.feature_dim), |_| {
        spec.class_spread * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Fixed orthonormal `2 x features` projection used to draw samples in a plane.
pub fn projection_2d(spec: &StreamSpec) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.geometry_seed, &[tag::PROJECT]));
    let d = spec.feature_dim;
    let q = random_orthogonal(d, &mut rng);
    Array2::from_shape_fn((2, d), |(i, j)| if i < d { q[[j, i]] } else { 0.0 })
}

fn draw(spec: &StreamSpec, protos: &Array2<f64>, labels: &[usize], rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::zeros((labels.len(), spec.feature_dim));
    for (mut row, &y) in x.rows_mut().into_iter().zip(labels) {
        for (v, &mu) in row.iter_mut().zip(protos.row(y)) {
            *v = mu + spec.within_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    x
}

/// Balanced label vector in shuffled order: counts differ by at most one.
fn balanced_labels(n: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    labels.shuffle(rng);
    labels
}

/// Clean source-domain samples with balanced labels.
pub fn make_source_dataset(spec: &StreamSpec, n_samples: usize, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    if n_samples < spec.n_classes {
        return Err(crate::error::Error::InvalidArgument(format!(
            "need at least {} samples, got {n_samples}",
            spec.n_classes
        )));
    }
    let protos = prototypes(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag::STREAM, u64::MAX]));
    let labels = balanced_labels(n_samples, spec.n_classes, &mut rng);
    let features = draw(spec, &protos, &labels, &mut rng);
    Ok(LabeledDataset { features, labels })
}

/// Fixed parameters of one segment's corruption.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentTransform {
    pub kind: CorruptionKind,
    pub severity: f64,
    matrix: Option<Array2<f64>>,
    scale: Option<Array1<f64>>,
    shift: Option<Array1<f64>>,
}

impl SegmentTransform {
    pub fn for_segment(spec: &StreamSpec, segment: usize) -> Self {
        let c = spec.segments[segment];
        let d = spec.feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(
            spec.geometry_seed,
            &[tag::CORRUPT, segment as u64],
        ));
        let s = c.severity;
        let (mut matrix, mut scale, mut shift) = (None, None, None);
        match c.kind {
            CorruptionKind::Rotation => {
                matrix = Some(plane_rotation(d, s, &mut rng));
            }
            CorruptionKind::Scaling => {
                scale = Some(Array1::from_shape_fn(d, |_| (s * rng.random_range(-1.0..=1.0)).exp()));
            }
            CorruptionKind::MeanShift => {
                shift = Some(Array1::from_shape_fn(d, |_| s * rng.sample::<f64, _>(StandardNormal)));
            }
            CorruptionKind::GaussianNoise => {}
        }
        Self {
            kind: c.kind,
            severity: s,
            matrix,
            scale,
            shift,
        }
    }

    /// Corrupt rows of `x` in place; `rng` supplies per-sample noise.
    pub fn apply(&self, x: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
        if self.severity == 0.0 {
            return;
        }
        if let Some(m) = &self.matrix {
            *x = x.dot(&m.t());
        }
        if let Some(sc) = &self.scale {
            *x *= sc;
        }
        if let Some(sh) = &self.shift {
            *x += sh;
        }
        if self.kind == CorruptionKind::GaussianNoise {
            x.mapv_inplace(|v| v + self.severity * rng.sample::<f64, _>(StandardNormal));
        }
    }
}

/// Rotation by `angle` radians in each of `d / 2` orthogonal planes of a random basis.
fn plane_rotation(d: usize, angle: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let basis = random_orthogonal(d, rng);
    let mut r = Array2::<f64>::eye(d);
    let (sin, cos) = angle.sin_cos();
    for p in 0..d / 2 {
        let (i, j) = (2 * p, 2 * p + 1);
        r[[i, i]] = cos;
        r[[i, j]] = -sin;
        r[[j, i]] = sin;
        r[[j, j]] = cos;
    }
    basis.dot(&r).dot(&basis.t())
}

/// Haar-ish random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, d));
    let mut j = 0;
    while j < d {
        let mut v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        for k in 0..j {
            let col = q.column(k);
            let proj = col.dot(&v);
            v.scaled_add(-proj, &col);
        }
        let norm = v.dot(&v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        q.column_mut(j).assign(&(v / norm));
        j += 1;
    }
    q
}

struct Sample {
    id: SampleId,
    segment: usize,
    label: usize,
    features: Vec<f64>,
}

/// The shifted test stream, in arrival order.
pub fn make_shift_stream(spec: &StreamSpec, seed: u64) -> Result<Vec<StreamBatch>> {
    spec.validate()?;
    let protos = prototypes(spec);
    let per_segment = spec.samples_per_segment();
    let mut samples = Vec::with_capacity(spec.total_samples());
    for segment in 0..spec.segments.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag::STREAM, segment as u64]));
        let labels = balanced_labels(per_segment, spec.n_classes, &mut rng);
        let mut x = draw(spec, &protos, &labels, &mut rng);
        SegmentTransform::for_segment(spec, segment).apply(&mut x, &mut rng);
        let mut seg_samples: Vec<Sample> = labels
            .iter()
            .zip(x.rows())
            .enumerate()
            .map(|(i, (&label, row))| Sample {
                id: SampleId((segment * per_segment + i) as u64),
                segment,
                label,
                features: row.to_vec(),
            })
            .collect();
        if let Ordering::NonIid { correlation } = spec.ordering {
            let c = spec.n_classes as f64;
            let mut keyed: Vec<(f64, Sample)> = seg_samples
                .into_iter()
                .map(|s| {
                    let key = correlation * s.label as f64 + (1.0 - correlation) * c * rng.random::<f64>();
                    (key, s)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
            seg_samples = keyed.into_iter().map(|(_, s)| s).collect();
        }
        samples.extend(seg_samples);
    }
    if spec.ordering == Ordering::Mixed {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag::SHUFFLE]));
        samples.shuffle(&mut rng);
    }
    let batch_size = spec.effective_batch_size();
    let per_segment_batches = per_segment / batch_size;
    Ok(samples
        .chunks(batch_size)
        .enumerate()
        .map(|(index, chunk)| {
            let mut features = Array2::zeros((chunk.len(), spec.feature_dim));
            for (mut row, s) in features.rows_mut().into_iter().zip(chunk) {
                row.assign(&ndarray::ArrayView1::from(&s.features[..]));
            }
            StreamBatch {
                index,
                segment: (index / per_segment_batches).min(spec.segments.len() - 1),
                sample_ids: chunk.iter().map(|s| s.id).collect(),
                sample_segments: chunk.iter().map(|s| s.segment).collect(),
                features,
                labels: HiddenLabels(chunk.iter().map(|s| s.label).collect()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::spec::Corruption;

    fn small(ordering: Ordering) -> StreamSpec {
        StreamSpec {
            n_classes: 3,
            feature_dim: 4,
            geometry_seed: 5,
            class_spread: 1.0,
            within_std: 1.0,
            segments: vec![
                Corruption { kind: CorruptionKind::Rotation, severity: 0.5 },
                Corruption { kind: CorruptionKind::GaussianNoise, severity: 1.0 },
                Corruption { kind: CorruptionKind::MeanShift, severity: 2.0 },
            ],
            batch_size: 8,
            batches_per_segment: 5,
            ordering,
        }
    }

    fn multiset(stream: &[StreamBatch]) -> Vec<(u64, usize, Vec<u64>)> {
        let mut out: Vec<_> = stream
            .iter()
            .flat_map(|b| {
                (0..b.len()).map(move |i| {
                    (
                        b.sample_ids[i].0,
                        b.labels().reveal()[i],
                        b.feature_row(i).iter().map(|v| v.to_bits()).collect(),
                    )
                })
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn continual_layout() {
        let s = make_shift_stream(&small(Ordering::Continual), 1).unwrap();
        assert_eq!(s.len(), 15);
        let segs: Vec<usize> = s.iter().map(|b| b.segment).collect();
        assert_eq!(segs, [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert!(s.iter().all(|b| b.sample_segments.iter().all(|&g| g == b.segment)));
    }

    #[test]
    fn mixed_and_single_sample_are_permutations() {
        let cont = make_shift_stream(&small(Ordering::Continual), 1).unwrap();
        let mixed = make_shift_stream(&small(Ordering::Mixed), 1).unwrap();
        let single = make_shift_stream(&small(Ordering::SingleSample), 1).unwrap();
        let noniid = make_shift_stream(&small(Ordering::NonIid { correlation: 1.0 }), 1).unwrap();
        assert_eq!(multiset(&cont), multiset(&mixed));
        assert_eq!(multiset(&cont), multiset(&single));
        assert_eq!(multiset(&cont), multiset(&noniid));
        assert_eq!(single.len(), 120);
        assert!(single.iter().all(|b| b.len() == 1));
        assert_ne!(
            cont.iter().flat_map(|b| b.sample_ids.clone()).collect::<Vec<_>>(),
            mixed.iter().flat_map(|b| b.sample_ids.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn fully_correlated_noniid_sorts_labels_within_segments() {
        let s = make_shift_stream(&small(Ordering::NonIid { correlation: 1.0 }), 2).unwrap();
        for seg in 0..3 {
            let labels: Vec<usize> = s
                .iter()
                .filter(|b| b.segment == seg)
                .flat_map(|b| b.labels().reveal().to_vec())
                .collect();
            assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn source_dataset_is_balanced_and_seeded() {
        let spec = small(Ordering::Continual);
        let d = make_source_dataset(&spec, 100, 3).unwrap();
        let mut hist = [0usize; 3];
        for &y in &d.labels {
            hist[y] += 1;
        }
        assert!(hist.iter().max().unwrap() - hist.iter().min().unwrap() <= 1);
        assert_eq!(d, make_source_dataset(&spec, 100, 3).unwrap());
        assert!(make_source_dataset(&spec, 2, 3).is_err());
    }

    #[test]
    fn zero_severity_matches_source_distribution() {
        // With severity zero the stream samples are drawn exactly like source samples.
        let spec = small(Ordering::Continual).clean();
        let stream = make_shift_stream(&spec, 4).unwrap();
        let protos = prototypes(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(derive(4, &[tag::STREAM, 0]));
        let labels = balanced_labels(40, 3, &mut rng);
        let x = draw(&spec, &protos, &labels, &mut rng);
        assert_eq!(stream[0].features, x.slice(ndarray::s![0..8, ..]));
    }

    #[test]
    fn orthogonal_factor_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = random_orthogonal(6, &mut rng);
        let qtq = q.t().dot(&q);
        for ((i, j), v) in qtq.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_rotation_is_a_rotation_by_the_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let angle = 0.4;
        let m = plane_rotation(6, angle, &mut rng);
        let mtm = m.t().dot(&m);
        for ((i, j), v) in mtm.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
        // Every plane turns by the same angle, so the trace is d * cos(angle).
        assert!((m.diag().sum() - 6.0 * angle.cos()).abs() < 1e-12);
    }
}
