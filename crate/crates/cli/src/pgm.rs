//! Binary PGM (P5, maxval 255) export for image dumps.

use std::path::Path;

use faithbench_core::tensor::Tensor;

pub fn pgm_bytes(image: &Tensor) -> Vec<u8> {
    let (h, w) = image.image_dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(path: &Path, image: &Tensor) -> std::io::Result<()> {
    std::fs::write(path, pgm_bytes(image))
}
