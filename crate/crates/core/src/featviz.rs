//! Model-dependent baseline synthesis: optimize the Fourier phase of a
//! magnitude-constrained image so the penultimate activations vanish. The
//! magnitudes come from the training set's mean spectrum; only the phase
//! field is free, so the image stays real with full spectral energy by
//! construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DiffProgram, NodeId};
use crate::error::{Error, Result};
use crate::fft::{irfft2, phase_spectrum, rfft2, SpectrumMagnitude};
use crate::model::{Activation, MlpModel};
use crate::tensor::{squared_norm, Tensor};

#[derive(Debug, Clone)]
pub struct FeatVizConfig {
    pub max_steps: usize,
    /// Phase step size, radians per unit gradient.
    pub learning_rate: f64,
    /// Stop when the relative objective decrease falls below this.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for FeatVizConfig {
    fn default() -> Self {
        Self {
            max_steps: 512,
            learning_rate: 0.05,
            threshold: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatVizResult {
    /// Optimized phase field over the half plane.
    pub phase: Vec<f64>,
    /// Reconstructed baseline image, clipped to [0, 1].
    pub image: Tensor,
    /// Objective value per accepted step, starting at the initial phase.
    pub objective_trace: Vec<f64>,
    /// Share of pixels that fell outside [0, 1] before clipping.
    pub clip_fraction: f64,
}

/// Elementwise mean of `|rfft2(x)|` over the dataset.
pub fn mean_magnitude_spectrum(images: &[Tensor]) -> Result<SpectrumMagnitude> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let (h, w) = first.image_dims();
    let mut acc = vec![0.0; h * (w / 2 + 1)];
    for image in images {
        if image.image_dims() != (h, w) {
            return Err(Error::ShapeMismatch {
                context: "mean_magnitude_spectrum".into(),
                expected: format!("{h}x{w}"),
                got: format!("{:?}", image.shape()),
            });
        }
        let spec = rfft2(image)?;
        for (a, c) in acc.iter_mut().zip(spec.coeffs()) {
            *a += c.norm();
        }
    }
    let inv = 1.0 / images.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(SpectrumMagnitude {
        height: h,
        width: w,
        values: acc,
    })
}

/// The Eq.-style objective `||f_l(irfft2(r e^{i phase}))||^2` as a
/// differentiable program over the phase leaf.
pub fn objective_program(
    model: &MlpModel,
    magnitude: &SpectrumMagnitude,
) -> Result<(DiffProgram, NodeId)> {
    let (h, w) = model.input_shape();
    if (magnitude.height, magnitude.width) != (h, w) {
        return Err(Error::ShapeMismatch {
            context: "objective_program".into(),
            expected: format!("{h}x{w} magnitudes"),
            got: format!("{}x{}", magnitude.height, magnitude.width),
        });
    }
    let mut p = DiffProgram::new();
    let phase = p.leaf("phase", vec![h, magnitude.spectral_width()]);
    let mut node = p.irfft_phase(phase, magnitude.clone())?;
    for layer in model.hidden_layers() {
        node = p.affine(node, layer.weights.clone(), layer.bias.clone())?;
        if layer.activation == Activation::Relu {
            node = p.relu(node);
        }
    }
    let out = p.squared_norm(node);
    p.set_output(out);
    Ok((p, phase))
}

/// Squared norm of the penultimate activations at a phase point.
pub fn objective(model: &MlpModel, magnitude: &SpectrumMagnitude, phase: &[f64]) -> Result<f64> {
    let (program, _) = objective_program(model, magnitude)?;
    let t = Tensor::new(
        vec![magnitude.height, magnitude.spectral_width()],
        phase.to_vec(),
    )?;
    program.evaluate(&[&t])?.item()
}

/// Penultimate feature energy of an ordinary image (for comparing the
/// optimized baseline against reference points like the dataset mean).
pub fn feature_energy(model: &MlpModel, image: &[f64]) -> Result<f64> {
    let (_, features) = model.forward_with_features(image)?;
    Ok(squared_norm(&features))
}

/// Gradient descent on the phase field with backtracking halving: a step
/// that would increase the objective is retried at half the size, at most
/// 20 times; the accepted trace is therefore non-increasing.
pub fn optimize_baseline(
    model: &MlpModel,
    magnitude: &SpectrumMagnitude,
    cfg: &FeatVizConfig,
) -> Result<FeatVizResult> {
    if cfg.max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be > 0".into()));
    }
    let (program, leaf) = objective_program(model, magnitude)?;
    let slots = magnitude.height * magnitude.spectral_width();
    let shape = vec![magnitude.height, magnitude.spectral_width()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut phase: Vec<f64> = (0..slots)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();

    let eval = |phase: &[f64]| -> Result<f64> {
        let t = Tensor::new(shape.clone(), phase.to_vec())?;
        let value = program.evaluate(&[&t])?.item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite("featviz objective".into()));
        }
        Ok(value)
    };

    let mut current = eval(&phase)?;
    let mut trace = vec![current];
    for _ in 0..cfg.max_steps {
        let t = Tensor::new(shape.clone(), phase.clone())?;
        let grad = program.gradient(&[&t], leaf, None)?.into_data();
        let mut accepted = None;
        let mut step = cfg.learning_rate;
        for _ in 0..=20 {
            let candidate: Vec<f64> = phase
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - step * g)
                .collect();
            let value = eval(&candidate)?;
            if value <= current {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, value)) = accepted else {
            break; // local minimum at the sampled step resolution
        };
        let decrease = (current - value) / current.max(f64::MIN_POSITIVE);
        phase = candidate;
        current = value;
        trace.push(current);
        if decrease < cfg.threshold {
            break;
        }
    }

    let raw = irfft2(&phase_spectrum(magnitude, &phase)?);
    let outside = raw
        .data()
        .iter()
        .filter(|&&v| !(0.0..=1.0).contains(&v))
        .count();
    let clip_fraction = outside as f64 / raw.len() as f64;
    let image = raw.map(|v| v.clamp(0.0, 1.0))?;
    Ok(FeatVizResult {
        phase,
        image,
        objective_trace: trace,
        clip_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DenseLayer;
    use crate::tensor::norm;

    fn identity_penultimate_model(h: usize, w: usize, classes: usize) -> MlpModel {
        // No hidden layer: the final dense layer's input is the image itself.
        MlpModel::new(
            vec![DenseLayer {
                weights: Tensor::zeros(vec![classes, h * w]),
                bias: vec![0.0; classes],
                activation: Activation::None,
            }],
            (h, w),
            classes,
        )
        .unwrap()
    }

    fn small_mlp(seed: u64, h: usize, w: usize, hidden: usize, classes: usize) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = h * w;
        let w1: Vec<f64> = (0..hidden * d).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let w2: Vec<f64> = (0..classes * hidden).map(|_| rng.gen_range(-0.8..0.8)).collect();
        MlpModel::new(
            vec![
                DenseLayer {
                    weights: Tensor::new(vec![hidden, d], w1).unwrap(),
                    bias: (0..hidden).map(|_| rng.gen_range(-0.3..0.3)).collect(),
                    activation: Activation::Relu,
                },
                DenseLayer {
                    weights: Tensor::new(vec![classes, hidden], w2).unwrap(),
                    bias: (0..classes).map(|_| rng.gen_range(-0.3..0.3)).collect(),
                    activation: Activation::None,
                },
            ],
            (h, w),
            classes,
        )
        .unwrap()
    }

    fn magnitude_from(seed: u64, h: usize, w: usize) -> SpectrumMagnitude {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img =
            Tensor::new(vec![h, w], (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        mean_magnitude_spectrum(&[img]).unwrap()
    }

    #[test]
    fn constant_image_spectrum_concentrates_at_dc() {
        let c = 0.2;
        let img = Tensor::filled(vec![4, 4], c).unwrap();
        let mag = mean_magnitude_spectrum(&[img]).unwrap();
        assert!((mag.values[0] - 16.0 * c).abs() < 1e-12);
        assert!(mag.values[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn singleton_mean_is_the_image_spectrum() {
        let img = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64) / 12.0).collect()).unwrap();
        let mag = mean_magnitude_spectrum(&[img.clone()]).unwrap();
        let direct = rfft2(&img).unwrap().magnitudes();
        assert_eq!(mag, direct);
    }

    #[test]
    fn dc_entry_equals_pixel_count_times_global_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let images: Vec<Tensor> = (0..5)
            .map(|_| {
                Tensor::new(
                    vec![6, 6],
                    (0..36).map(|_| rng.gen_range(0.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        let total: f64 = images.iter().flat_map(|t| t.data()).sum();
        let global_mean = total / (36.0 * images.len() as f64);
        let mag = mean_magnitude_spectrum(&images).unwrap();
        assert!((mag.values[0] - 36.0 * global_mean).abs() < 1e-6);
    }

    #[test]
    fn identity_penultimate_objective_is_constant_with_zero_gradient() {
        let model = identity_penultimate_model(4, 4, 3);
        let mag = magnitude_from(1, 4, 4);
        // Full-plane spectral energy over H*W is the Parseval constant.
        let full_energy: f64 = {
            let layout = crate::fft::Layout::new(4, 4);
            let k = layout.spectral_width();
            (0..4)
                .flat_map(|ky| (0..k).map(move |kx| (ky, kx)))
                .map(|(ky, kx)| layout.alpha(kx) * mag.values[ky * k + kx].powi(2))
                .sum::<f64>()
                / 16.0
        };
        let (program, leaf) = objective_program(&model, &mag).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let phase: Vec<f64> = (0..mag.values.len())
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect();
            let t = Tensor::new(vec![4, 3], phase).unwrap();
            let value = program.evaluate(&[&t]).unwrap().item().unwrap();
            assert!((value - full_energy).abs() < 1e-9, "{value} vs {full_energy}");
            let grad = program.gradient(&[&t], leaf, None).unwrap();
            assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn dead_hidden_layer_gives_zero_objective() {
        let d = 16;
        let model = MlpModel::new(
            vec![
                DenseLayer {
                    weights: Tensor::filled(vec![4, d], 1e-3).unwrap(),
                    bias: vec![-10.0; 4],
                    activation: Activation::Relu,
                },
                DenseLayer {
                    weights: Tensor::zeros(vec![2, 4]),
                    bias: vec![0.0, 0.0],
                    activation: Activation::None,
                },
            ],
            (4, 4),
            2,
        )
        .unwrap();
        let mag = magnitude_from(3, 4, 4);
        let phase = vec![0.5; mag.values.len()];
        assert_eq!(objective(&model, &mag, &phase).unwrap(), 0.0);
    }

    #[test]
    fn phase_gradient_matches_central_differences() {
        let model = small_mlp(5, 4, 4, 6, 3);
        let mag = magnitude_from(6, 4, 4);
        let (program, leaf) = objective_program(&model, &mag).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phase: Vec<f64> = (0..mag.values.len())
            .map(|_| rng.gen_range(-3.0..3.0))
            .collect();
        let t = Tensor::new(vec![4, 3], phase).unwrap();
        let exact = program.gradient(&[&t], leaf, None).unwrap();
        let fd = program
            .central_difference_gradient(&[&t], leaf, 1e-6, None)
            .unwrap();
        for (e, f) in exact.data().iter().zip(fd.data()) {
            let tol = 1e-4 * f.abs().max(1e-3);
            assert!((e - f).abs() <= tol, "{e} vs {f}");
        }
    }

    #[test]
    fn identity_model_exits_immediately() {
        let model = identity_penultimate_model(4, 4, 2);
        let mag = magnitude_from(9, 4, 4);
        let result = optimize_baseline(&model, &mag, &FeatVizConfig::default()).unwrap();
        // Constant objective: one accepted zero-decrease step, then stop.
        assert!(result.objective_trace.len() <= 2);
        let first = result.objective_trace[0];
        for v in &result.objective_trace {
            assert!((v - first).abs() < 1e-9);
        }
    }

    #[test]
    fn optimizer_trace_is_monotone_and_deterministic() {
        let model = small_mlp(11, 4, 4, 8, 3);
        let mag = magnitude_from(12, 4, 4);
        let cfg = FeatVizConfig {
            max_steps: 60,
            seed: 21,
            ..FeatVizConfig::default()
        };
        let a = optimize_baseline(&model, &mag, &cfg).unwrap();
        let b = optimize_baseline(&model, &mag, &cfg).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.phase, b.phase);
        for pair in a.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(a.objective_trace.last().unwrap() <= &a.objective_trace[0]);
        assert!(a.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn logits_stay_within_weight_norm_of_bias() {
        let model = small_mlp(14, 4, 4, 8, 3);
        let mag = magnitude_from(15, 4, 4);
        let result = optimize_baseline(&model, &mag, &FeatVizConfig::default()).unwrap();
        let (logits, features) = model.forward_with_features(result.image.data()).unwrap();
        let final_layer = model.final_layer();
        let drift: f64 = norm(
            &logits
                .iter()
                .zip(&final_layer.bias)
                .map(|(z, b)| z - b)
                .collect::<Vec<_>>(),
        );
        let weight_norm = norm(final_layer.weights.data());
        assert!(drift <= weight_norm * norm(&features) + 1e-12);
    }
}
