//! Baseline functions: the rule that puts selected input indices into a
//! "removed" state.
//!
//! Every kind materializes one replacement image per (input, seed) when its
//! context is built; applying a subset is then a pure pointwise substitution.
//! Sampling noise once per image (rather than per deletion step) is what
//! makes the perturbation chain monotone-nested and the metric AUCs
//! deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::{irfft2, rfft2, Layout, Spectrum};
use crate::seeding::derive_seed;
use crate::tensor::Tensor;

/// The replacement scheme vocabulary. `featviz` carries the precomputed
/// model-dependent baseline image.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineKind {
    Zero,
    RandomColor,
    Uniform,
    Normal,
    Mean,
    LocalMean,
    Median,
    Permutation,
    LocalPermutation,
    ScrambleMagnitude,
    ScramblePhase,
    FeatViz(Tensor),
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Zero => "zero",
            BaselineKind::RandomColor => "random_color",
            BaselineKind::Uniform => "uniform",
            BaselineKind::Normal => "normal",
            BaselineKind::Mean => "mean",
            BaselineKind::LocalMean => "local_mean",
            BaselineKind::Median => "median",
            BaselineKind::Permutation => "permutation",
            BaselineKind::LocalPermutation => "local_permutation",
            BaselineKind::ScrambleMagnitude => "scramble_magnitude",
            BaselineKind::ScramblePhase => "scramble_phase",
            BaselineKind::FeatViz(_) => "featviz",
        }
    }

    /// Parses a CLI/config name. `featviz` requires the precomputed image.
    pub fn from_name(name: &str, featviz_image: Option<Tensor>) -> Result<Self> {
        Ok(match name {
            "zero" => BaselineKind::Zero,
            "random_color" => BaselineKind::RandomColor,
            "uniform" => BaselineKind::Uniform,
            "normal" => BaselineKind::Normal,
            "mean" => BaselineKind::Mean,
            "local_mean" => BaselineKind::LocalMean,
            "median" => BaselineKind::Median,
            "permutation" => BaselineKind::Permutation,
            "local_permutation" => BaselineKind::LocalPermutation,
            "scramble_magnitude" => BaselineKind::ScrambleMagnitude,
            "scramble_phase" => BaselineKind::ScramblePhase,
            "featviz" => BaselineKind::FeatViz(featviz_image.ok_or_else(|| {
                Error::InvalidArgument("featviz baseline needs a precomputed image".into())
            })?),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown baseline kind '{other}'"
                )))
            }
        })
    }

    /// All static (model-independent) kind names.
    pub const STATIC_NAMES: [&'static str; 11] = [
        "zero",
        "random_color",
        "uniform",
        "normal",
        "mean",
        "local_mean",
        "median",
        "permutation",
        "local_permutation",
        "scramble_magnitude",
        "scramble_phase",
    ];

    fn stream_id(&self) -> u64 {
        match self {
            BaselineKind::Zero => 10,
            BaselineKind::RandomColor => 11,
            BaselineKind::Uniform => 12,
            BaselineKind::Normal => 13,
            BaselineKind::Mean => 14,
            BaselineKind::LocalMean => 15,
            BaselineKind::Median => 16,
            BaselineKind::Permutation => 17,
            BaselineKind::LocalPermutation => 18,
            BaselineKind::ScrambleMagnitude => 19,
            BaselineKind::ScramblePhase => 20,
            BaselineKind::FeatViz(_) => 21,
        }
    }
}

/// Per-channel pixel statistics of the training set.
#[derive(Debug, Clone, Copy)]
pub struct DatasetStats {
    pub mean: f64,
    pub median: f64,
}

impl DatasetStats {
    pub fn from_images(images: &[Tensor]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let mut all: Vec<f64> = images.iter().flat_map(|t| t.data().iter().copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if all.len() % 2 == 1 {
            all[all.len() / 2]
        } else {
            0.5 * (all[all.len() / 2 - 1] + all[all.len() / 2])
        };
        Ok(Self { mean, median })
    }
}

/// Side of the shuffle window for `local_permutation`.
pub const LOCAL_WINDOW: usize = 4;

/// A fully materialized replacement image; applying a subset of indices is
/// deterministic pointwise substitution.
#[derive(Debug, Clone)]
pub struct BaselineContext {
    kind_name: &'static str,
    shape: Vec<usize>,
    replacement: Vec<f64>,
    pub window: usize,
    pub seed: u64,
}

impl BaselineContext {
    pub fn kind_name(&self) -> &'static str {
        self.kind_name
    }

    /// The image with every index replaced.
    pub fn replacement(&self) -> &[f64] {
        &self.replacement
    }
}

/// Materializes the replacement image for a (kind, input, stats, seed)
/// quadruple.
pub fn build_context(
    kind: &BaselineKind,
    x: &Tensor,
    stats: &DatasetStats,
    seed: u64,
) -> Result<BaselineContext> {
    let d = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[kind.stream_id()]));
    let replacement: Vec<f64> = match kind {
        BaselineKind::Zero => vec![0.0; d],
        BaselineKind::RandomColor => vec![rng.gen_range(0.0..1.0); d],
        BaselineKind::Uniform => (0..d).map(|_| rng.gen_range(0.0..1.0)).collect(),
        BaselineKind::Normal => (0..d)
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                v.clamp(0.0, 1.0)
            })
            .collect(),
        BaselineKind::Mean => vec![stats.mean; d],
        BaselineKind::Median => vec![stats.median; d],
        BaselineKind::LocalMean => {
            let mean = x.data().iter().sum::<f64>() / d as f64;
            vec![mean; d]
        }
        BaselineKind::Permutation => {
            let mut data = x.data().to_vec();
            shuffle(&mut data, &mut rng);
            data
        }
        BaselineKind::LocalPermutation => {
            let (h, w) = x.image_dims();
            let mut data = x.data().to_vec();
            let mut window_values = Vec::with_capacity(LOCAL_WINDOW * LOCAL_WINDOW);
            for top in (0..h).step_by(LOCAL_WINDOW) {
                for left in (0..w).step_by(LOCAL_WINDOW) {
                    window_values.clear();
                    for r in top..(top + LOCAL_WINDOW).min(h) {
                        for c in left..(left + LOCAL_WINDOW).min(w) {
                            window_values.push(data[r * w + c]);
                        }
                    }
                    shuffle(&mut window_values, &mut rng);
                    let mut it = window_values.iter();
                    for r in top..(top + LOCAL_WINDOW).min(h) {
                        for c in left..(left + LOCAL_WINDOW).min(w) {
                            data[r * w + c] = *it.next().unwrap();
                        }
                    }
                }
            }
            data
        }
        BaselineKind::ScrambleMagnitude => scramble_magnitude_image(x, &mut rng)?
            .into_data()
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect(),
        BaselineKind::ScramblePhase => scramble_phase_image(x, &mut rng)?
            .into_data()
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect(),
        BaselineKind::FeatViz(image) => {
            if image.shape() != x.shape() && image.len() != x.len() {
                return Err(Error::ShapeMismatch {
                    context: "featviz baseline".into(),
                    expected: format!("{:?}", x.shape()),
                    got: format!("{:?}", image.shape()),
                });
            }
            if !image.data().iter().all(|&v| (0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(
                    "featviz baseline image must lie in [0, 1]".into(),
                ));
            }
            image.data().to_vec()
        }
    };
    Ok(BaselineContext {
        kind_name: kind.name(),
        shape: x.shape().to_vec(),
        replacement,
        window: LOCAL_WINDOW,
        seed,
    })
}

fn shuffle<T>(values: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..values.len()).rev() {
        let j = rng.gen_range(0..=i);
        values.swap(i, j);
    }
}

/// Canonical half-plane slots: every slot of an interior column plus the
/// lower half of the shared columns. Spectral scrambles permute values over
/// these representatives and mirror the shared columns, which keeps the
/// spectrum Hermitian-consistent and the reconstruction real with no
/// projection loss.
fn canonical_slots(layout: Layout) -> Vec<(usize, usize)> {
    let k = layout.spectral_width();
    let mut slots = Vec::new();
    for ky in 0..layout.height {
        for kx in 0..k {
            if layout.is_canonical(ky, kx) {
                slots.push((ky, kx));
            }
        }
    }
    slots
}

fn rebuild(layout: Layout, spec: &Spectrum, values: Vec<((usize, usize), num_complex::Complex64)>) -> Result<Spectrum> {
    let k = layout.spectral_width();
    let mut coeffs = spec.coeffs().to_vec();
    for ((ky, kx), value) in values {
        coeffs[ky * k + kx] = value;
        if layout.is_shared_col(kx) && !layout.is_self_conjugate(ky, kx) {
            coeffs[layout.partner_row(ky) * k + kx] = value.conj();
        }
    }
    Spectrum::from_coeffs(layout.height, layout.width, coeffs)
}

/// Reconstruction after permuting the magnitude multiset (phases kept).
/// Returned without [0,1] clipping so spectral invariants can be tested.
pub fn scramble_magnitude_image(x: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let spec = rfft2(x)?;
    let layout = Layout::new(spec.height(), spec.width());
    let slots = canonical_slots(layout);
    let mut mags: Vec<f64> = slots.iter().map(|&(ky, kx)| spec.magnitude(ky, kx)).collect();
    shuffle(&mut mags, rng);
    let values = slots
        .iter()
        .zip(mags)
        .map(|(&(ky, kx), mag)| {
            let value = if layout.is_self_conjugate(ky, kx) {
                // Keep the slot exactly real, preserving the sign.
                let sign = if spec.coeff(ky, kx).re < 0.0 { -1.0 } else { 1.0 };
                num_complex::Complex64::new(sign * mag, 0.0)
            } else {
                num_complex::Complex64::from_polar(mag, spec.phase(ky, kx))
            };
            ((ky, kx), value)
        })
        .collect();
    Ok(irfft2(&rebuild(layout, &spec, values)?))
}

/// Reconstruction after permuting phases among non-self-conjugate canonical
/// slots (magnitudes kept; self-conjugate slots stay real). Returned without
/// [0,1] clipping.
pub fn scramble_phase_image(x: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let spec = rfft2(x)?;
    let layout = Layout::new(spec.height(), spec.width());
    let slots: Vec<(usize, usize)> = canonical_slots(layout)
        .into_iter()
        .filter(|&(ky, kx)| !layout.is_self_conjugate(ky, kx))
        .collect();
    let mut phases: Vec<f64> = slots.iter().map(|&(ky, kx)| spec.phase(ky, kx)).collect();
    shuffle(&mut phases, rng);
    let values = slots
        .iter()
        .zip(phases)
        .map(|(&(ky, kx), phase)| {
            let value = num_complex::Complex64::from_polar(spec.magnitude(ky, kx), phase);
            ((ky, kx), value)
        })
        .collect();
    Ok(irfft2(&rebuild(layout, &spec, values)?))
}

/// `result[i] = replacement[i]` for `i` in the subset, `x[i]` otherwise.
pub fn apply(x: &Tensor, subset: &[usize], ctx: &BaselineContext) -> Result<Tensor> {
    if x.len() != ctx.replacement.len() {
        return Err(Error::ShapeMismatch {
            context: "baseline apply".into(),
            expected: format!("{} elements", ctx.replacement.len()),
            got: format!("{}", x.len()),
        });
    }
    let mut data = x.data().to_vec();
    for &i in subset {
        if i >= data.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: data.len(),
            });
        }
        data[i] = ctx.replacement[i];
    }
    Ok(Tensor::from_parts(ctx.shape.clone(), data))
}

/// Checks that consecutive prefixes of the ordering change the image only at
/// the newly replaced index (the sequence semantics every static kind must
/// satisfy once its context is fixed).
pub fn monotone_nesting_check(x: &Tensor, ordering: &[usize], ctx: &BaselineContext) -> Result<bool> {
    let d = x.len();
    let mut seen = vec![false; d];
    for &i in ordering {
        if i >= d || seen[i] {
            return Err(Error::NotAPermutation(d));
        }
        seen[i] = true;
    }
    if ordering.len() != d {
        return Err(Error::NotAPermutation(d));
    }
    for i in 0..d {
        let shorter = apply(x, &ordering[..i], ctx)?;
        let longer = apply(x, &ordering[..i + 1], ctx)?;
        let changed = ordering[i];
        for j in 0..d {
            if j != changed && shorter.data()[j] != longer.data()[j] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> DatasetStats {
        DatasetStats {
            mean: 0.5,
            median: 0.4,
        }
    }

    fn all_kinds(x: &Tensor) -> Vec<BaselineKind> {
        let featviz = Tensor::filled(x.shape().to_vec(), 0.25).unwrap();
        vec![
            BaselineKind::Zero,
            BaselineKind::RandomColor,
            BaselineKind::Uniform,
            BaselineKind::Normal,
            BaselineKind::Mean,
            BaselineKind::LocalMean,
            BaselineKind::Median,
            BaselineKind::Permutation,
            BaselineKind::LocalPermutation,
            BaselineKind::ScrambleMagnitude,
            BaselineKind::ScramblePhase,
            BaselineKind::FeatViz(featviz),
        ]
    }

    #[test]
    fn zero_replacement_is_zero() {
        let x = Tensor::from_vec(vec![0.2, 0.7]).unwrap();
        let ctx = build_context(&BaselineKind::Zero, &x, &stats(), 0).unwrap();
        assert_eq!(ctx.replacement(), &[0.0, 0.0]);
        let out = apply(&x, &[1], &ctx).unwrap();
        assert_eq!(out.data(), &[0.2, 0.0]);
    }

    #[test]
    fn mean_baseline_uses_dataset_mean() {
        let x = Tensor::from_vec(vec![0.2, 0.7]).unwrap();
        let ctx = build_context(&BaselineKind::Mean, &x, &stats(), 0).unwrap();
        let out = apply(&x, &[0], &ctx).unwrap();
        assert_eq!(out.data(), &[0.5, 0.7]);
    }

    #[test]
    fn local_mean_uses_the_image_mean() {
        let x = Tensor::from_vec(vec![0.37; 6]).unwrap();
        let ctx = build_context(&BaselineKind::LocalMean, &x, &stats(), 0).unwrap();
        for &v in ctx.replacement() {
            assert!((v - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_of_constant_image_is_identity() {
        let x = Tensor::filled(vec![4, 4], 0.6).unwrap();
        let ctx = build_context(&BaselineKind::Permutation, &x, &stats(), 9).unwrap();
        assert_eq!(ctx.replacement(), x.data());
    }

    #[test]
    fn boundary_subsets() {
        let x = Tensor::from_vec(vec![0.1, 0.5, 0.9]).unwrap();
        let ctx = build_context(&BaselineKind::Uniform, &x, &stats(), 3).unwrap();
        assert_eq!(apply(&x, &[], &ctx).unwrap().data(), x.data());
        let full: Vec<usize> = (0..3).collect();
        assert_eq!(apply(&x, &full, &ctx).unwrap().data(), ctx.replacement());
    }

    #[test]
    fn apply_is_idempotent() {
        let x = Tensor::from_vec(vec![0.1, 0.5, 0.9, 0.3]).unwrap();
        for kind in all_kinds(&x) {
            let ctx = build_context(&kind, &x, &stats(), 5).unwrap();
            let once = apply(&x, &[0, 2], &ctx).unwrap();
            let twice = apply(&once, &[0, 2], &ctx).unwrap();
            assert_eq!(once.data(), twice.data(), "{}", kind.name());
        }
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let x = Tensor::from_vec(vec![0.1, 0.5]).unwrap();
        let ctx = build_context(&BaselineKind::Zero, &x, &stats(), 0).unwrap();
        assert!(apply(&x, &[2], &ctx).is_err());
    }

    #[test]
    fn nesting_holds_for_every_kind() {
        let x = Tensor::new(vec![4, 4], (0..16).map(|i| i as f64 / 16.0).collect()).unwrap();
        let ordering: Vec<usize> = (0..16).rev().collect();
        for kind in all_kinds(&x) {
            let ctx = build_context(&kind, &x, &stats(), 2).unwrap();
            assert!(
                monotone_nesting_check(&x, &ordering, &ctx).unwrap(),
                "{}",
                kind.name()
            );
        }
    }

    #[test]
    fn fresh_noise_per_step_breaks_nesting() {
        // The rejected design: resampling noise at every application. With a
        // changing replacement image, consecutive prefixes differ at already
        // replaced indices, so the chain is not nested.
        let x = Tensor::from_vec(vec![0.1, 0.5, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut fresh_apply = |subset: &[usize]| -> Vec<f64> {
            let mut data = x.data().to_vec();
            for &i in subset {
                data[i] = rng.gen_range(0.0..1.0);
            }
            data
        };
        let one = fresh_apply(&[0]);
        let two = fresh_apply(&[0, 1]);
        // Index 0 was already replaced but its value changed again.
        assert_ne!(one[0], two[0]);
    }

    #[test]
    fn contexts_are_seed_deterministic() {
        let x = Tensor::new(vec![4, 4], (0..16).map(|i| (i as f64).sin().abs()).collect()).unwrap();
        for kind in all_kinds(&x) {
            let a = build_context(&kind, &x, &stats(), 42).unwrap();
            let b = build_context(&kind, &x, &stats(), 42).unwrap();
            assert_eq!(a.replacement(), b.replacement(), "{}", kind.name());
        }
    }

    #[test]
    fn noise_baselines_stay_in_unit_range() {
        let x = Tensor::zeros(vec![8, 8]);
        for kind in [BaselineKind::Uniform, BaselineKind::Normal] {
            let ctx = build_context(&kind, &x, &stats(), 1).unwrap();
            assert!(ctx
                .replacement()
                .iter()
                .all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn scramble_phase_preserves_magnitude_multiset() {
        let x = Tensor::new(
            vec![6, 6],
            (0..36).map(|i| ((i * 7 % 13) as f64) / 13.0).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scrambled = scramble_phase_image(&x, &mut rng).unwrap();
        let mut before: Vec<f64> = rfft2(&x)
            .unwrap()
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .collect();
        let mut after: Vec<f64> = rfft2(&scrambled)
            .unwrap()
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .collect();
        before.sort_by(|a, b| a.partial_cmp(b).unwrap());
        after.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn scramble_magnitude_preserves_phases() {
        let x = Tensor::new(
            vec![6, 6],
            (0..36).map(|i| ((i * 5 % 17) as f64) / 17.0).collect(),
        )
        .unwrap();
        let original = rfft2(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scrambled = scramble_magnitude_image(&x, &mut rng).unwrap();
        let after = rfft2(&scrambled).unwrap();
        let layout = Layout::new(6, 6);
        for ky in 0..6 {
            for kx in 0..layout.spectral_width() {
                if after.magnitude(ky, kx) < 1e-9 || layout.is_self_conjugate(ky, kx) {
                    continue;
                }
                let diff = (after.phase(ky, kx) - original.phase(ky, kx)).abs();
                let wrapped = diff.min((diff - 2.0 * std::f64::consts::PI).abs());
                assert!(wrapped < 1e-6, "phase moved at ({ky},{kx}): {wrapped}");
            }
        }
    }

    #[test]
    fn featviz_kind_validates_range_and_shape() {
        let x = Tensor::zeros(vec![2, 2]);
        let bad_range = Tensor::new(vec![2, 2], vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!(build_context(&BaselineKind::FeatViz(bad_range), &x, &stats(), 0).is_err());
        let bad_shape = Tensor::zeros(vec![3, 3]);
        assert!(build_context(&BaselineKind::FeatViz(bad_shape), &x, &stats(), 0).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for name in BaselineKind::STATIC_NAMES {
            assert_eq!(BaselineKind::from_name(name, None).unwrap().name(), name);
        }
        assert!(BaselineKind::from_name("featviz", None).is_err());
        assert!(BaselineKind::from_name("blur", None).is_err());
    }
}
