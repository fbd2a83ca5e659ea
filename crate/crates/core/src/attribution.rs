//! Attribution methods: Saliency, Gradient-Input, SmoothGrad, Integrated
//! Gradients, Occlusion, and RISE, plus their closed forms on linear models
//! for oracle testing.
//!
//! All methods score the logit of the class predicted on the unperturbed
//! input, return raw signed scores (an absolute-value mode exists behind a
//! config flag), and are deterministic given (model, input, config seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::seeding::derive_seed;
use crate::tensor::pairwise_mean;

/// Per-feature scores plus the induced deletion ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    scores: Vec<f64>,
    ordering: Vec<usize>,
}

impl Explanation {
    /// Sorts descending by score, breaking ties by ascending index.
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if !scores.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Explanation::new".into()));
        }
        let mut ordering: Vec<usize> = (0..scores.len()).collect();
        ordering.sort_by(|&i, &j| {
            scores[j]
                .partial_cmp(&scores[i])
                .expect("scores are finite")
                .then(i.cmp(&j))
        });
        Ok(Self { scores, ordering })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Feature indices in removal order (most important first).
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Saliency,
    GradientInput,
    SmoothGrad,
    IntegratedGradients,
    Occlusion,
    Rise,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Saliency,
        Method::GradientInput,
        Method::SmoothGrad,
        Method::IntegratedGradients,
        Method::Occlusion,
        Method::Rise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::GradientInput => "gradient_input",
            Method::SmoothGrad => "smoothgrad",
            Method::IntegratedGradients => "integrated_gradients",
            Method::Occlusion => "occlusion",
            Method::Rise => "rise",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attribution method '{name}'")))
    }

    fn stream_id(&self) -> u64 {
        match self {
            Method::Saliency => 1,
            Method::GradientInput => 2,
            Method::SmoothGrad => 3,
            Method::IntegratedGradients => 4,
            Method::Occlusion => 5,
            Method::Rise => 6,
        }
    }
}

/// Quadrature rule for the Integrated Gradients path integral. The left
/// Riemann variant exists for testing against analytic Riemann sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgRule {
    Trapezoid,
    LeftRiemann,
}

#[derive(Debug, Clone)]
pub struct AttributionConfig {
    /// SmoothGrad noise standard deviation, in input units.
    pub smoothgrad_sigma: f64,
    pub smoothgrad_samples: usize,
    pub ig_steps: usize,
    /// Integration reference point; defaults to the zero image.
    pub ig_reference: Option<Vec<f64>>,
    pub ig_rule: IgRule,
    /// Occlusion patch side; ragged edge patches are allowed and smaller.
    pub occlusion_patch: usize,
    pub occlusion_fill: f64,
    /// RISE per-feature inclusion probability.
    pub rise_probability: f64,
    pub rise_masks: usize,
    pub seed: u64,
    /// Return |scores| instead of signed scores (image-use convenience; the
    /// linear theory holds for the signed default).
    pub absolute_values: bool,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            smoothgrad_sigma: 0.1,
            smoothgrad_samples: 64,
            ig_steps: 32,
            ig_reference: None,
            ig_rule: IgRule::Trapezoid,
            occlusion_patch: 1,
            occlusion_fill: 0.0,
            rise_probability: 0.5,
            rise_masks: 4000,
            seed: 0,
            absolute_values: false,
        }
    }
}

impl AttributionConfig {
    fn validate(&self) -> Result<()> {
        if self.smoothgrad_samples == 0 || self.ig_steps == 0 || self.rise_masks == 0 {
            return Err(Error::InvalidArgument(
                "sample and step counts must be >= 1".into(),
            ));
        }
        if self.occlusion_patch == 0 {
            return Err(Error::InvalidArgument("patch side must be >= 1".into()));
        }
        if !(self.rise_probability > 0.0 && self.rise_probability < 1.0) {
            return Err(Error::InvalidArgument(
                "rise probability must lie in (0, 1)".into(),
            ));
        }
        if self.smoothgrad_sigma < 0.0 {
            return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    fn rng_for(&self, method: Method) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[method.stream_id()]))
    }
}

fn finish(scores: Vec<f64>, cfg: &AttributionConfig) -> Result<Explanation> {
    if cfg.absolute_values {
        Explanation::new(scores.iter().map(|v| v.abs()).collect())
    } else {
        Explanation::new(scores)
    }
}

/// Raw gradient of the predicted-class logit.
pub fn saliency(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    let target = model.predicted_class(x)?;
    finish(model.input_gradient(x, target)?, cfg)
}

/// Gradient times input.
pub fn gradient_input(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    let target = model.predicted_class(x)?;
    let grad = model.input_gradient(x, target)?;
    finish(grad.iter().zip(x).map(|(g, xi)| g * xi).collect(), cfg)
}

/// Mean gradient under Gaussian input noise. The mean is a pairwise tree
/// sum, so for a power-of-two sample count the average of identical sample
/// gradients (the linear-model case) is bitwise exact.
pub fn smoothgrad(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    if cfg.smoothgrad_sigma == 0.0 {
        return saliency(model, x, cfg);
    }
    let target = model.predicted_class(x)?;
    let mut rng = cfg.rng_for(Method::SmoothGrad);
    let mut grads = Vec::with_capacity(cfg.smoothgrad_samples);
    let mut sample = vec![0.0; x.len()];
    for _ in 0..cfg.smoothgrad_samples {
        for (s, &xi) in sample.iter_mut().zip(x) {
            let noise: f64 = rng.sample(StandardNormal);
            *s = xi + cfg.smoothgrad_sigma * noise;
        }
        grads.push(model.input_gradient(&sample, target)?);
    }
    finish(pairwise_mean(&grads), cfg)
}

/// Path-integrated gradient of the composition `alpha -> f(x0 + alpha*(x - x0))`,
/// multiplied by `(x - x0)`.
pub fn integrated_gradients(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    let d = x.len();
    let reference = match &cfg.ig_reference {
        Some(r) => {
            if r.len() != d {
                return Err(Error::ShapeMismatch {
                    context: "ig reference".into(),
                    expected: format!("{d}"),
                    got: format!("{}", r.len()),
                });
            }
            r.clone()
        }
        None => vec![0.0; d],
    };
    let target = model.predicted_class(x)?;
    let m = cfg.ig_steps;
    let mut acc = vec![0.0; d];
    let mut point = vec![0.0; d];
    let upper = match cfg.ig_rule {
        IgRule::Trapezoid => m,
        IgRule::LeftRiemann => m - 1,
    };
    for j in 0..=upper {
        let alpha = j as f64 / m as f64;
        for (p, (&xi, &ri)) in point.iter_mut().zip(x.iter().zip(&reference)) {
            *p = ri + alpha * (xi - ri);
        }
        let grad = model.input_gradient(&point, target)?;
        let weight = match cfg.ig_rule {
            IgRule::Trapezoid if j == 0 || j == m => 0.5,
            _ => 1.0,
        };
        // d/dx f(path(alpha)) = alpha * grad(path(alpha)).
        for (a, g) in acc.iter_mut().zip(&grad) {
            *a += weight * alpha * g;
        }
    }
    let inv_m = 1.0 / m as f64;
    finish(
        acc.iter()
            .zip(x.iter().zip(&reference))
            .map(|(a, (&xi, &ri))| (xi - ri) * a * inv_m)
            .collect(),
        cfg,
    )
}

/// Score drop when the patch containing each feature is filled with a
/// constant. Features in the same patch share the patch score.
pub fn occlusion(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    let (h, w) = model.input_shape();
    if x.len() != h * w {
        return Err(Error::ShapeMismatch {
            context: "occlusion".into(),
            expected: format!("{}", h * w),
            got: format!("{}", x.len()),
        });
    }
    let target = model.predicted_class(x)?;
    let base = model.logits(x)?[target];
    let p = cfg.occlusion_patch;
    let mut scores = vec![0.0; x.len()];
    let mut patched = x.to_vec();
    for top in (0..h).step_by(p) {
        for left in (0..w).step_by(p) {
            let rows = top..(top + p).min(h);
            let cols = left..(left + p).min(w);
            for r in rows.clone() {
                for c in cols.clone() {
                    patched[r * w + c] = cfg.occlusion_fill;
                }
            }
            let score = base - model.logits(&patched)?[target];
            for r in rows.clone() {
                for c in cols.clone() {
                    scores[r * w + c] = score;
                    patched[r * w + c] = x[r * w + c];
                }
            }
        }
    }
    finish(scores, cfg)
}

/// Monte-Carlo estimate of `E[f(x * mask) | mask_i = 1]` with per-feature
/// Bernoulli masks. Features that no mask ever includes score zero (a
/// warning is logged).
pub fn rise(model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    cfg.validate()?;
    let d = x.len();
    let target = model.predicted_class(x)?;
    let mut rng = cfg.rng_for(Method::Rise);
    let mut sums = vec![0.0; d];
    let mut counts = vec![0u64; d];
    let mut masked = vec![0.0; d];
    let mut included = Vec::with_capacity(d);
    for _ in 0..cfg.rise_masks {
        included.clear();
        for i in 0..d {
            if rng.gen_range(0.0..1.0) < cfg.rise_probability {
                masked[i] = x[i];
                included.push(i);
            } else {
                masked[i] = 0.0;
            }
        }
        let value = model.logits(&masked)?[target];
        for &i in &included {
            sums[i] += value;
            counts[i] += 1;
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (&s, &c))| {
            if c == 0 {
                log::warn!("rise: feature {i} never included in {} masks", cfg.rise_masks);
                0.0
            } else {
                s / c as f64
            }
        })
        .collect();
    finish(scores, cfg)
}

pub fn attribute(method: Method, model: &Model, x: &[f64], cfg: &AttributionConfig) -> Result<Explanation> {
    match method {
        Method::Saliency => saliency(model, x, cfg),
        Method::GradientInput => gradient_input(model, x, cfg),
        Method::SmoothGrad => smoothgrad(model, x, cfg),
        Method::IntegratedGradients => integrated_gradients(model, x, cfg),
        Method::Occlusion => occlusion(model, x, cfg),
        Method::Rise => rise(model, x, cfg),
    }
}

/// Exact closed forms on `f(x) = x.w + b`: Saliency and SmoothGrad return
/// `w`; Gradient-Input and Occlusion return `x * w`; Integrated Gradients
/// returns `x * w / 2`; RISE returns `b + (x.w + x_i w_i) / 2` per feature.
pub fn linear_closed_form(method: Method, w: &[f64], b: f64, x: &[f64]) -> Result<Explanation> {
    if w.len() != x.len() {
        return Err(Error::ShapeMismatch {
            context: "linear_closed_form".into(),
            expected: format!("{}", w.len()),
            got: format!("{}", x.len()),
        });
    }
    let scores: Vec<f64> = match method {
        Method::Saliency | Method::SmoothGrad => w.to_vec(),
        Method::GradientInput | Method::Occlusion => {
            x.iter().zip(w).map(|(xi, wi)| xi * wi).collect()
        }
        Method::IntegratedGradients => x.iter().zip(w).map(|(xi, wi)| 0.5 * (xi * wi)).collect(),
        Method::Rise => {
            let xw = crate::tensor::dot(x, w);
            x.iter()
                .zip(w)
                .map(|(xi, wi)| b + 0.5 * (xw + xi * wi))
                .collect()
        }
    };
    Explanation::new(scores)
}
