//! Faithfulness metrics: Deletion, Insertion, AUC, SRG, per-step logit
//! energy (information removal) and 1-NN feature-space OOD distances, AUC
//! concentration, and the baseline classification check.

use crate::baseline::{apply, BaselineContext};
use crate::error::{Error, Result};
use crate::attribution::Explanation;
use crate::model::Model;
use crate::tensor::{norm, softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Softmax probability of the tracked class (bounded, default).
    Softmax,
    /// Raw logit of the tracked class (the mode the linear theory uses).
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Deletion,
    Insertion,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Deletion => "deletion",
            MetricKind::Insertion => "insertion",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub score_mode: ScoreMode,
    /// Number of equal-size replacement steps; `None` is exact per-feature
    /// mode (k = d).
    pub steps: Option<usize>,
    pub record_energy: bool,
    pub record_ood: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            score_mode: ScoreMode::Softmax,
            steps: None,
            record_energy: true,
            record_ood: false,
        }
    }
}

impl MetricConfig {
    fn steps_for(&self, d: usize) -> Result<usize> {
        let k = self.steps.unwrap_or(d);
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!(
                "step count {k} outside 1..={d}"
            )));
        }
        Ok(k)
    }
}

/// Per-step record of one Deletion or Insertion run. The trace has k+1
/// entries; fractions increase strictly from 0 to 1.
#[derive(Debug, Clone)]
pub struct MetricTrace {
    pub metric: MetricKind,
    pub score_mode: ScoreMode,
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    /// L2 norm of the logit vector per step (empty if not recorded).
    pub energies: Vec<f64>,
    /// 1-NN feature distance per step (empty if not recorded).
    pub ood_raw: Vec<f64>,
    /// Same, normalized by the index reference scale.
    pub ood_normalized: Vec<f64>,
    pub auc: f64,
}

impl MetricTrace {
    /// Sum of the scores at steps 1..=k (the step-sum the linear theory
    /// works with; excludes the unperturbed/empty endpoint at step 0).
    pub fn perturbed_step_sum(&self) -> f64 {
        self.scores[1..].iter().sum()
    }
}

/// Penultimate features of the training set with a reference scale for
/// normalization. Nearest-neighbor queries are exact: candidates are
/// scanned outward from the query norm and pruned with the reverse
/// triangle inequality.
#[derive(Debug, Clone)]
pub struct FeatureIndex {
    features: Vec<Vec<f64>>,
    norms: Vec<f64>,
    reference_scale: f64,
}

impl FeatureIndex {
    pub fn build(model: &Model, train_images: &[Tensor]) -> Result<Self> {
        if train_images.is_empty() {
            return Err(Error::InvalidArgument("empty feature index".into()));
        }
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(train_images.len());
        for image in train_images {
            let f = model.penultimate(image.data())?;
            pairs.push((norm(&f), f));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let norms: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let features: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.1).collect();

        let mut index = Self {
            features,
            norms,
            reference_scale: 1.0,
        };
        if index.features.len() > 1 {
            let mut nn: Vec<f64> = (0..index.features.len())
                .map(|i| index.nearest_excluding(&index.features[i], Some(i)))
                .collect();
            nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if nn.len() % 2 == 1 {
                nn[nn.len() / 2]
            } else {
                0.5 * (nn[nn.len() / 2 - 1] + nn[nn.len() / 2])
            };
            if median <= 0.0 {
                return Err(Error::InvalidArgument(
                    "degenerate feature index: median train-train 1-NN distance is zero".into(),
                ));
            }
            index.reference_scale = median;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Median train-to-train 1-NN distance.
    pub fn reference_scale(&self) -> f64 {
        self.reference_scale
    }

    /// Exact nearest-neighbor distance to the stored features.
    pub fn nearest_distance(&self, query: &[f64]) -> f64 {
        self.nearest_excluding(query, None)
    }

    fn nearest_excluding(&self, query: &[f64], skip: Option<usize>) -> f64 {
        let qn = norm(query);
        let start = self.norms.partition_point(|&n| n < qn);
        let mut best = f64::INFINITY;
        let (mut lo, mut hi) = (start as isize - 1, start);
        loop {
            let lo_gap = if lo >= 0 {
                (qn - self.norms[lo as usize]).abs()
            } else {
                f64::INFINITY
            };
            let hi_gap = if hi < self.features.len() {
                (self.norms[hi] - qn).abs()
            } else {
                f64::INFINITY
            };
            if lo_gap >= best && hi_gap >= best {
                break;
            }
            let idx = if lo_gap <= hi_gap {
                let i = lo as usize;
                lo -= 1;
                i
            } else {
                let i = hi;
                hi += 1;
                i
            };
            if skip == Some(idx) {
                continue;
            }
            let dist = euclidean(query, &self.features[idx]);
            if dist < best {
                best = dist;
            }
        }
        best
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// 1-NN OOD distance of an image in the model's penultimate feature space.
/// Returns (raw, normalized-by-reference-scale).
pub fn ood_1nn(index: &FeatureIndex, model: &Model, image: &[f64]) -> Result<(f64, f64)> {
    if index.is_empty() {
        return Err(Error::InvalidArgument("empty feature index".into()));
    }
    let features = model.penultimate(image)?;
    let raw = index.nearest_distance(&features);
    Ok((raw, raw / index.reference_scale))
}

/// L2 norm of the logit vector; lower after perturbation means more
/// information removed.
pub fn info_removal_energy(model: &Model, image: &[f64]) -> Result<f64> {
    Ok(norm(&model.logits(image)?))
}

fn check_permutation(ordering: &[usize], d: usize) -> Result<()> {
    if ordering.len() != d {
        return Err(Error::NotAPermutation(d));
    }
    let mut seen = vec![false; d];
    for &i in ordering {
        if i >= d || seen[i] {
            return Err(Error::NotAPermutation(d));
        }
        seen[i] = true;
    }
    Ok(())
}

fn trace_impl(
    model: &Model,
    x: &Tensor,
    explanation: &Explanation,
    ctx: &BaselineContext,
    cfg: &MetricConfig,
    index: Option<&FeatureIndex>,
    metric: MetricKind,
) -> Result<MetricTrace> {
    let d = x.len();
    check_permutation(explanation.ordering(), d)?;
    let k = cfg.steps_for(d)?;
    let tracked = model.predicted_class(x.data())?;
    let ordering = explanation.ordering();

    let mut fractions = Vec::with_capacity(k + 1);
    let mut scores = Vec::with_capacity(k + 1);
    let mut energies = Vec::new();
    let mut ood_raw = Vec::new();
    let mut ood_normalized = Vec::new();

    for i in 0..=k {
        let count = (i * d).div_ceil(k);
        let image = match metric {
            // Step i deletes the top `count` features.
            MetricKind::Deletion => apply(x, &ordering[..count], ctx)?,
            // Step i restores the top `count` features into the baseline.
            MetricKind::Insertion => apply(x, &ordering[count..], ctx)?,
        };
        let fraction = count as f64 / d as f64;
        let (logits, features) = model.logits_with_features(image.data())?;
        let score = match cfg.score_mode {
            ScoreMode::Softmax => softmax(&logits)[tracked],
            ScoreMode::Logit => logits[tracked],
        };
        fractions.push(fraction);
        scores.push(score);
        if cfg.record_energy {
            energies.push(norm(&logits));
        }
        if cfg.record_ood {
            if let Some(index) = index {
                let raw = index.nearest_distance(&features);
                ood_raw.push(raw);
                ood_normalized.push(raw / index.reference_scale);
            }
        }
    }
    let auc = auc_of(&fractions, &scores);
    Ok(MetricTrace {
        metric,
        score_mode: cfg.score_mode,
        fractions,
        scores,
        energies,
        ood_raw,
        ood_normalized,
        auc,
    })
}

/// Deletion: step i replaces the `ceil(i*d/k)` highest-attribution features
/// with the baseline; step 0 is the unperturbed image.
pub fn deletion_trace(
    model: &Model,
    x: &Tensor,
    explanation: &Explanation,
    ctx: &BaselineContext,
    cfg: &MetricConfig,
    index: Option<&FeatureIndex>,
) -> Result<MetricTrace> {
    trace_impl(model, x, explanation, ctx, cfg, index, MetricKind::Deletion)
}

/// Insertion: step 0 is the fully baselined image; step i restores the
/// `ceil(i*d/k)` highest-attribution features.
pub fn insertion_trace(
    model: &Model,
    x: &Tensor,
    explanation: &Explanation,
    ctx: &BaselineContext,
    cfg: &MetricConfig,
    index: Option<&FeatureIndex>,
) -> Result<MetricTrace> {
    trace_impl(model, x, explanation, ctx, cfg, index, MetricKind::Insertion)
}

/// Trapezoid area under (fraction, score); with fractions spanning [0, 1]
/// this is already the normalized AUC, in score units.
pub fn auc_of(fractions: &[f64], scores: &[f64]) -> f64 {
    fractions
        .windows(2)
        .zip(scores.windows(2))
        .map(|(f, s)| (f[1] - f[0]) * 0.5 * (s[0] + s[1]))
        .sum()
}

/// Symmetric Relevance Gain: Insertion AUC minus Deletion AUC.
pub fn srg(insertion_auc: f64, deletion_auc: f64) -> f64 {
    insertion_auc - deletion_auc
}

#[derive(Debug, Clone, Copy)]
pub struct Concentration {
    /// Smallest step fraction s with AUC over [0, s] >= 80% of the total.
    pub fraction: f64,
    /// Set when the trace is all-zero and the fraction defaulted to 1.
    pub degenerate: bool,
}

/// AUC concentration, defined for non-negative (softmax-mode) traces.
/// Within the crossing segment the trapezoid quadratic is solved exactly.
pub fn auc_concentration(trace: &MetricTrace) -> Result<Concentration> {
    if trace.score_mode != ScoreMode::Softmax {
        return Err(Error::InvalidArgument(
            "auc_concentration requires softmax-mode scores".into(),
        ));
    }
    if trace.scores.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidArgument(
            "auc_concentration requires non-negative scores".into(),
        ));
    }
    let total = trace.auc;
    if total <= 0.0 {
        return Ok(Concentration {
            fraction: 1.0,
            degenerate: true,
        });
    }
    let target = 0.8 * total;
    let mut cumulative = 0.0;
    for (f, s) in trace.fractions.windows(2).zip(trace.scores.windows(2)) {
        let len = f[1] - f[0];
        let slope = (s[1] - s[0]) / len;
        let segment = len * 0.5 * (s[0] + s[1]);
        if cumulative + segment >= target {
            let need = target - cumulative;
            let t = if need <= 0.0 {
                0.0
            } else {
                // Solve s0*t + slope*t^2/2 = need for the root in [0, len].
                let root = (s[0] * s[0] + 2.0 * slope * need).max(0.0).sqrt();
                if s[0] + root > 0.0 {
                    2.0 * need / (s[0] + root)
                } else {
                    len // flat zero segment carrying the remaining area edge case
                }
            };
            return Ok(Concentration {
                fraction: (f[0] + t.min(len)).min(1.0),
                degenerate: false,
            });
        }
        cumulative += segment;
    }
    Ok(Concentration {
        fraction: 1.0,
        degenerate: false,
    })
}

/// Top-k classes by softmax score, descending, ties broken by ascending
/// class index.
pub fn classify_topk(model: &Model, image: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    let logits = model.logits(image)?;
    if k > logits.len() {
        return Err(Error::InvalidArgument(format!(
            "top-{k} requested but model has {} classes",
            logits.len()
        )));
    }
    let probs = softmax(&logits);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&i, &j| probs[j].partial_cmp(&probs[i]).unwrap().then(i.cmp(&j)));
    Ok(order.into_iter().take(k).map(|i| (i, probs[i])).collect())
}
