//! Synthetic objectives, offline dataset generators and the discrete-input
//! encoding.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::training::OfflineDataset;

/// Known optimum of the negated Branin function.
pub const BRANIN_MAX: f64 = -0.397887;

/// The three global maximizers of the negated Branin function.
pub const BRANIN_MAXIMIZERS: [[f64; 2]; 3] = [[-PI, 12.275], [PI, 2.275], [9.42478, 2.475]];

/// Negated Branin–Hoo function, `-a(x₂ − b x₁² + c x₁ − r)² − s(1 − t)cos x₁ − s`.
pub fn branin(x: &[f64]) -> f64 {
    let (a, b, c) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    let (x1, x2) = (x[0], x[1]);
    let inner = x2 - b * x1 * x1 + c * x1 - r;
    -a * inner * inner - s * (1.0 - t) * x1.cos() - s
}

/// A black-box objective with an axis-aligned box domain. Maximized.
pub trait Objective {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// `(lower, upper)` per dimension.
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn evaluate(&self, x: &[f64]) -> f64;
    /// Points where the global maximum is attained, when known.
    fn maximizers(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Branin,
}

impl Task {
    pub const ALL: [Task; 1] = [Task::Branin];
}

impl Objective for Task {
    fn name(&self) -> &str {
        match self {
            Task::Branin => "branin",
        }
    }

    fn dim(&self) -> usize {
        match self {
            Task::Branin => 2,
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Task::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
        }
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Task::Branin => branin(x),
        }
    }

    fn maximizers(&self) -> Vec<Vec<f64>> {
        match self {
            Task::Branin => BRANIN_MAXIMIZERS.iter().map(|m| m.to_vec()).collect(),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branin" => Ok(Task::Branin),
            other => Err(Error::Unknown {
                kind: "task",
                name: other.to_string(),
                available: "branin".into(),
            }),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Equal-weight mixture of unit-covariance Gaussians at the maximizers.
    Gmm,
    /// Uniform over the task's box.
    Uniform,
    /// Uniform, then the top `percentile` % of values removed.
    UniformTruncated,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(DatasetKind::Gmm),
            "uniform" => Ok(DatasetKind::Uniform),
            "uniform_truncated" | "uniform-truncated" => Ok(DatasetKind::UniformTruncated),
            other => Err(Error::Unknown {
                kind: "dataset kind",
                name: other.to_string(),
                available: "gmm, uniform, uniform_truncated".into(),
            }),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Gmm => "gmm",
            DatasetKind::Uniform => "uniform",
            DatasetKind::UniformTruncated => "uniform_truncated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
    /// Share of the best values removed by `UniformTruncated`, in percent.
    pub percentile: f64,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: usize, seed: u64) -> Self {
        DatasetSpec {
            kind,
            n,
            seed,
            percentile: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dataset size must be positive"));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::invalid(format!(
                "truncation percentile must lie in (0, 100), got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

/// Percentile by linear interpolation between order statistics: the `p`-th
/// percentile of sorted `v` sits at rank `p/100 · (n − 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn uniform_points(task: &impl Objective, n: usize, rng: &mut Rng) -> Matrix {
    let bounds = task.bounds();
    let mut data = Vec::with_capacity(n * bounds.len());
    for _ in 0..n {
        for &(lo, hi) in &bounds {
            data.push(rng.uniform_range(lo, hi));
        }
    }
    Matrix::new(n, bounds.len(), data).expect("sized by construction")
}

/// Mixture samples with the component label of each row.
fn gmm_points(task: &impl Objective, n: usize, rng: &mut Rng) -> Result<(Matrix, Vec<usize>)> {
    let centers = task.maximizers();
    if centers.is_empty() {
        return Err(Error::invalid(format!("task {} has no known maximizers", task.name())));
    }
    let d = task.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.below(centers.len());
        labels.push(k);
        for c in &centers[k] {
            data.push(c + rng.normal());
        }
    }
    Ok((Matrix::new(n, d, data)?, labels))
}

fn label(task: &impl Objective, points: Matrix) -> Result<OfflineDataset> {
    let values = points.iter_rows().map(|x| task.evaluate(x)).collect();
    OfflineDataset::new(points, values)
}

/// Generates a labelled offline dataset. Mixture samples are not clipped to
/// the task's box.
pub fn gen_dataset(spec: &DatasetSpec, task: &impl Objective) -> Result<OfflineDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    match spec.kind {
        DatasetKind::Gmm => {
            let (points, _) = gmm_points(task, spec.n, &mut rng)?;
            label(task, points)
        }
        DatasetKind::Uniform => label(task, uniform_points(task, spec.n, &mut rng)),
        DatasetKind::UniformTruncated => {
            let full = label(task, uniform_points(task, spec.n, &mut rng))?;
            truncate_top(&full, spec.percentile)
        }
    }
}

/// Drops every point whose value exceeds the `(100 − p)`-th percentile.
/// Points equal to the threshold are kept.
pub fn truncate_top(dataset: &OfflineDataset, p: f64) -> Result<OfflineDataset> {
    let threshold = percentile(dataset.values(), 100.0 - p)?;
    let keep: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.values()[i] <= threshold)
        .collect();
    if keep.len() < 2 {
        return Err(Error::invalid(format!(
            "truncating the top {p}% leaves {} point(s)",
            keep.len()
        )));
    }
    dataset.subset(&keep)
}

/// Subsamples `dataset` so that `low_share` of the kept points have values
/// below the median, keeping as many points as possible.
pub fn skew_low(dataset: &OfflineDataset, low_share: f64, rng: &mut Rng) -> Result<OfflineDataset> {
    if !(low_share > 0.0 && low_share < 1.0) {
        return Err(Error::invalid("low share must lie in (0, 1)"));
    }
    let median = percentile(dataset.values(), 50.0)?;
    let mut low: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.values()[i] < median).collect();
    let mut high: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.values()[i] >= median).collect();
    rng.shuffle(&mut high);
    let n_high = ((low.len() as f64) * (1.0 - low_share) / low_share).round() as usize;
    high.truncate(n_high.min(high.len()));
    low.extend(high);
    low.sort_unstable();
    dataset.subset(&low)
}

/// Discrete sequences as soft logits: each position becomes
/// `log(mix · one_hot + (1 − mix) / c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteEncoding {
    pub categories: usize,
    pub length: usize,
    pub mix: f64,
}

pub const DEFAULT_MIX: f64 = 0.6;

impl DiscreteEncoding {
    pub fn new(categories: usize, length: usize) -> Result<Self> {
        if categories == 0 || length == 0 {
            return Err(Error::invalid("category count and length must be positive"));
        }
        Ok(DiscreteEncoding {
            categories,
            length,
            mix: DEFAULT_MIX,
        })
    }

    pub fn encoded_len(&self) -> usize {
        self.categories * self.length
    }

    /// Encodes a `length × categories` one-hot matrix.
    pub fn encode(&self, one_hot: &Matrix) -> Result<Vec<f64>> {
        if one_hot.shape() != (self.length, self.categories) {
            return Err(Error::ShapeMismatch {
                op: "encode_discrete",
                left: one_hot.shape(),
                right: (self.length, self.categories),
            });
        }
        let mut indices = Vec::with_capacity(self.length);
        for (pos, row) in one_hot.iter_rows().enumerate() {
            let ones = row.iter().filter(|v| **v == 1.0).count();
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::invalid(format!("position {pos} is not one-hot")));
            }
            indices.push(row.iter().position(|v| *v == 1.0).expect("checked"));
        }
        self.encode_indices(&indices)
    }

    pub fn encode_indices(&self, indices: &[usize]) -> Result<Vec<f64>> {
        if indices.len() != self.length {
            return Err(Error::invalid(format!(
                "sequence of length {} for an encoding of length {}",
                indices.len(),
                self.length
            )));
        }
        let base = (1.0 - self.mix) / self.categories as f64;
        let mut out = Vec::with_capacity(self.encoded_len());
        for &hot in indices {
            if hot >= self.categories {
                return Err(Error::invalid(format!(
                    "category {hot} out of range for {} categories",
                    self.categories
                )));
            }
            for c in 0..self.categories {
                let p = if c == hot { self.mix + base } else { base };
                out.push(p.ln());
            }
        }
        Ok(out)
    }

    /// Per-position argmax; ties go to the lowest index.
    pub fn decode(&self, logits: &[f64]) -> Result<Vec<usize>> {
        if logits.len() != self.encoded_len() {
            return Err(Error::invalid(format!(
                "expected {} logits, got {}",
                self.encoded_len(),
                logits.len()
            )));
        }
        Ok(logits
            .chunks_exact(self.categories)
            .map(|chunk| {
                let mut best = 0;
                for (i, v) in chunk.iter().enumerate() {
                    if *v > chunk[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

/// Encodes one-hot rows, reading the category count off the row width.
pub fn encode_discrete(one_hot: &Matrix) -> Result<Vec<f64>> {
    DiscreteEncoding::new(one_hot.cols(), one_hot.rows())?.encode(one_hot)
}

pub fn decode_discrete(logits: &[f64], categories: usize, length: usize) -> Result<Vec<usize>> {
    DiscreteEncoding::new(categories, length)?.decode(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Normalizer;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    #[test]
    fn branin_maxima() {
        for m in BRANIN_MAXIMIZERS {
            assert!((branin(&m) - BRANIN_MAX).abs() < 1e-5, "{m:?}: {}", branin(&m));
        }
    }

    #[test]
    fn branin_at_origin() {
        let t = 1.0 / (8.0 * PI);
        let expected = -36.0 - 10.0 * (1.0 - t) - 10.0;
        assert!((branin(&[0.0, 0.0]) - expected).abs() < 1e-12);
        assert!((branin(&[0.0, 0.0]) + 55.602).abs() < 1e-3);
    }

    #[test]
    fn no_point_beats_the_maximum() {
        let mut rng = Rng::new(0);
        let pts = uniform_points(&Task::Branin, 10_000, &mut rng);
        for x in pts.iter_rows() {
            assert!(branin(x) < BRANIN_MAX + 1e-6);
        }
    }

    #[test]
    fn gmm_components_center_on_maximizers() {
        let n = 300_000;
        let (pts, labels) = gmm_points(&Task::Branin, n, &mut Rng::new(1)).unwrap();
        for (k, center) in BRANIN_MAXIMIZERS.iter().enumerate() {
            let rows: Vec<&[f64]> = pts.iter_rows().zip(&labels).filter(|(_, l)| **l == k).map(|(r, _)| r).collect();
            let m = rows.len() as f64;
            assert!((m / n as f64 - 1.0 / 3.0).abs() < 0.01);
            for d in 0..2 {
                let mean = rows.iter().map(|r| r[d]).sum::<f64>() / m;
                assert!((mean - center[d]).abs() < 3.0 / (n as f64 / 3.0).sqrt());
            }
        }
    }

    #[test]
    fn truncation_caps_at_percentile() {
        let spec = DatasetSpec::new(DatasetKind::Uniform, 2000, 3);
        let full = gen_dataset(&spec, &Task::Branin).unwrap();
        let trunc = gen_dataset(
            &DatasetSpec {
                kind: DatasetKind::UniformTruncated,
                ..spec
            },
            &Task::Branin,
        )
        .unwrap();
        let mut sorted = full.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = percentile(full.values(), 90.0).unwrap();
        assert!(trunc.best_value() <= q);
        let rank = (0.9 * (sorted.len() - 1) as f64).floor() as usize;
        assert!(trunc.best_value() >= sorted[rank - 1]);
        assert!(trunc.best_value() < full.best_value());
        assert!((trunc.len() as f64 - 0.9 * 2000.0).abs() <= 2.0);
    }

    #[test]
    fn truncation_needs_two_survivors() {
        let ds = OfflineDataset::new(Matrix::zeros(3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        assert!(truncate_top(&ds, 90.0).is_err());
        assert_eq!(truncate_top(&ds, 40.0).unwrap().len(), 2);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 4.0);
        assert!((percentile(&v, 50.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [DatasetKind::Gmm, DatasetKind::Uniform, DatasetKind::UniformTruncated] {
            let spec = DatasetSpec::new(kind, 500, 11);
            assert_eq!(gen_dataset(&spec, &Task::Branin).unwrap(), gen_dataset(&spec, &Task::Branin).unwrap());
        }
        assert!(gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 0, 0), &Task::Branin).is_err());
    }

    #[test]
    fn uniform_points_stay_in_the_box() {
        let ds = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 1000, 2), &Task::Branin).unwrap();
        for r in ds.points().iter_rows() {
            assert!((-5.0..=10.0).contains(&r[0]) && (0.0..=15.0).contains(&r[1]));
        }
    }

    #[test]
    fn normalization_round_trip_on_generated_data() {
        let ds = gen_dataset(&DatasetSpec::new(DatasetKind::Gmm, 1000, 4), &Task::Branin).unwrap();
        let norm = Normalizer::fit(&ds);
        let back = norm.denormalize_points(&norm.normalize_points(ds.points()).unwrap()).unwrap();
        for (a, b) in back.as_slice().iter().zip(ds.points().as_slice()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn skewing_puts_most_points_low() {
        let ds = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 2000, 5), &Task::Branin).unwrap();
        let median = percentile(ds.values(), 50.0).unwrap();
        let skewed = skew_low(&ds, 0.9, &mut Rng::new(0)).unwrap();
        let low = skewed.values().iter().filter(|v| **v < median).count();
        assert!((low as f64 / skewed.len() as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn encoding_examples() {
        let enc = DiscreteEncoding::new(2, 1).unwrap();
        let v = enc.encode_indices(&[0]).unwrap();
        assert!((v[0] - 0.8f64.ln()).abs() < 1e-15);
        assert!((v[1] - 0.2f64.ln()).abs() < 1e-15);

        let enc = DiscreteEncoding::new(4, 1).unwrap();
        let p: Vec<f64> = enc.encode_indices(&[2]).unwrap().iter().map(|l| l.exp()).collect();
        for (a, b) in p.iter().zip([0.1, 0.1, 0.7, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }

        let one_hot = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(decode_discrete(&encode_discrete(&one_hot).unwrap(), 3, 2).unwrap(), vec![1, 0]);
        let bad = Matrix::from_rows(&[vec![0.5, 0.5, 0.0]]).unwrap();
        assert!(encode_discrete(&bad).is_err());
        let two_hot = Matrix::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
        assert!(encode_discrete(&two_hot).is_err());
    }

    #[test]
    fn decoding_ties_and_lengths() {
        assert_eq!(decode_discrete(&[0.3, 0.3, 0.3, 1.0, 2.0, 2.0], 3, 2).unwrap(), vec![0, 1]);
        assert!(decode_discrete(&[0.0; 5], 3, 2).is_err());
    }

    #[test]
    fn round_trip_across_category_counts() {
        let mut rng = Rng::new(6);
        for &c in &[2usize, 4, 20] {
            let enc = DiscreteEncoding::new(c, 8).unwrap();
            for _ in 0..1000 {
                let seq: Vec<usize> = (0..8).map(|_| rng.below(c)).collect();
                assert_eq!(enc.decode(&enc.encode_indices(&seq).unwrap()).unwrap(), seq);
            }
        }
    }

    proptest! {
        #[test]
        fn small_logit_noise_preserves_decoding(
            seq in prop::collection::vec(0usize..4, 1..10),
            noise in prop::collection::vec(-1.0f64..1.0, 40),
        ) {
            let enc = DiscreteEncoding::new(4, seq.len()).unwrap();
            let mut logits = enc.encode_indices(&seq).unwrap();
            // log 0.7 − log 0.1 is the margin; stay strictly under half of it
            let half_gap = 0.5 * (0.7f64.ln() - 0.1f64.ln());
            for (l, n) in logits.iter_mut().zip(&noise) {
                *l += 0.999 * half_gap * n;
            }
            prop_assert_eq!(enc.decode(&logits).unwrap(), seq);
        }
    }
}
