//! Deterministic synthetic glyph dataset at MNIST scale: ten geometric
//! stroke classes on 28x28 grayscale images with positional jitter,
//! intensity jitter, and background noise. Stands in for handwritten-digit
//! data in offline test environments.

use faithbench_core::model::Dataset;
use faithbench_core::seeding::derive_seed;
use faithbench_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

fn draw(class: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let jitter_r = rng.gen_range(-3i32..=3);
    let jitter_c = rng.gen_range(-3i32..=3);
    let thickness = rng.gen_range(3i32..=5);
    let intensity = rng.gen_range(0.7..1.0);
    let radius = rng.gen_range(7.0..10.0);
    let noise_scale = rng.gen_range(0.02..0.06);

    let center_r = 13.5 + jitter_r as f64;
    let center_c = 13.5 + jitter_c as f64;
    let half = thickness as f64 / 2.0;
    let span = |v: f64, c: f64| (v - c).abs() <= half;

    let mut data = Vec::with_capacity(SIDE * SIDE);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (rf, cf) = (r as f64, c as f64);
            let in_margin = (4..24).contains(&r) || (4..24).contains(&c);
            let horizontal = span(rf, center_r) && (4..24).contains(&c);
            let vertical = span(cf, center_c) && (4..24).contains(&r);
            let diag = ((rf - cf) - (center_r - center_c)).abs() <= half && in_margin;
            let anti = ((rf + cf) - (center_r + center_c)).abs() <= half && in_margin;
            let dist = ((rf - center_r).powi(2) + (cf - center_c).powi(2)).sqrt();
            let ring = (dist - radius).abs() <= half;
            let disk = dist <= radius;
            let top_bar = span(rf, center_r - 6.0) && (4..24).contains(&c);
            let left_bar = span(cf, center_c - 6.0) && (4..24).contains(&r);
            let bottom_bar = span(rf, center_r + 6.0) && (4..24).contains(&c);

            let on = match class {
                0 => horizontal,
                1 => vertical,
                2 => diag,
                3 => anti,
                4 => horizontal || vertical,
                5 => diag || anti,
                6 => ring,
                7 => disk,
                8 => top_bar || vertical,
                9 => left_bar || bottom_bar,
                _ => unreachable!("class out of range"),
            };
            let noise = rng.gen_range(0.0..noise_scale);
            let value = if on { intensity } else { 0.0 } + noise;
            data.push(value.clamp(0.0, 1.0));
        }
    }
    Tensor::from_parts(vec![SIDE, SIDE], data)
}

/// Balanced dataset of `count` images; image i is deterministic given
/// (seed, i).
pub fn synth_dataset(count: usize, seed: u64) -> Dataset {
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % CLASSES;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[31, i as u64]));
        images.push(draw(class, &mut rng));
        labels.push(class);
    }
    Dataset::new(images, labels).expect("generated images and labels are aligned")
}
