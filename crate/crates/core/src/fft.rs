//! Real 2-D discrete Fourier transforms with a half-plane layout.
//!
//! Convention: the forward transform is unnormalized, the inverse is scaled
//! by 1/(H*W). A real H x W image maps to H x (W/2 + 1) complex coefficients;
//! the missing half plane is the Hermitian mirror. The inverse transform is
//! real by construction for *any* half-plane input: coefficients that would
//! violate Hermitian symmetry in the shared columns (kx = 0 and, for even
//! W, kx = W/2) are implicitly projected, exactly as a c2r transform does.
//!
//! Sizes here are desk scale (tests go up to 32 x 32), so the transforms are
//! direct separable DFTs rather than an FFT; the payoff is full control of
//! the layout and an exact, hand-derived adjoint for the phase
//! parameterization used by the feature-visualization optimizer.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Complex coefficients of a real image in half-plane layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    coeffs: Vec<Complex64>,
}

/// Non-negative magnitudes in the same half-plane layout, retaining the
/// originating image size (needed because W is not recoverable from the
/// stored column count alone).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMagnitude {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of stored columns: W/2 + 1.
    pub fn spectral_width(&self) -> usize {
        self.width / 2 + 1
    }

    pub fn coeff(&self, ky: usize, kx: usize) -> Complex64 {
        self.coeffs[ky * self.spectral_width() + kx]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn magnitude(&self, ky: usize, kx: usize) -> f64 {
        self.coeff(ky, kx).norm()
    }

    pub fn phase(&self, ky: usize, kx: usize) -> f64 {
        let c = self.coeff(ky, kx);
        c.im.atan2(c.re)
    }

    pub fn magnitudes(&self) -> SpectrumMagnitude {
        SpectrumMagnitude {
            height: self.height,
            width: self.width,
            values: self.coeffs.iter().map(|c| c.norm()).collect(),
        }
    }

    /// Full-plane spectral energy: shared columns count once, interior
    /// columns twice. Parseval under this crate's convention reads
    /// `sum(x^2) == energy() / (H*W)`.
    pub fn energy(&self) -> f64 {
        let layout = Layout::new(self.height, self.width);
        let k = layout.spectral_width();
        let mut total = 0.0;
        for ky in 0..self.height {
            for kx in 0..k {
                total += layout.alpha(kx) * self.coeffs[ky * k + kx].norm_sqr();
            }
        }
        total
    }

    pub fn from_coeffs(height: usize, width: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = height * (width / 2 + 1);
        if coeffs.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "Spectrum::from_coeffs".into(),
                expected: format!("{expected} coefficients for {height}x{width}"),
                got: format!("{}", coeffs.len()),
            });
        }
        Ok(Self {
            height,
            width,
            coeffs,
        })
    }
}

impl SpectrumMagnitude {
    pub fn spectral_width(&self) -> usize {
        self.width / 2 + 1
    }
}

/// Half-plane index arithmetic shared by the transforms, the spectral
/// scramble baselines, and the phase parameterization.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub height: usize,
    pub width: usize,
}

impl Layout {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn spectral_width(&self) -> usize {
        self.width / 2 + 1
    }

    /// Columns whose Hermitian mirror falls inside the stored half plane.
    pub fn is_shared_col(&self, kx: usize) -> bool {
        kx == 0 || (self.width % 2 == 0 && kx == self.width / 2)
    }

    /// Multiplicity of a stored column in the full plane.
    pub fn alpha(&self, kx: usize) -> f64 {
        if self.is_shared_col(kx) {
            1.0
        } else {
            2.0
        }
    }

    /// Hermitian partner row within a shared column.
    pub fn partner_row(&self, ky: usize) -> usize {
        (self.height - ky) % self.height
    }

    /// A slot is its own Hermitian partner: its coefficient must be real.
    pub fn is_self_conjugate(&self, ky: usize, kx: usize) -> bool {
        self.is_shared_col(kx) && self.partner_row(ky) == ky
    }

    /// Representative slots: interior columns entirely, and the lower half
    /// of shared columns. Canonical slots parameterize the spectrum; the
    /// rest are mirrors.
    pub fn is_canonical(&self, ky: usize, kx: usize) -> bool {
        !self.is_shared_col(kx) || 2 * ky <= self.height
    }
}

fn twiddle_table(n: usize) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..n)
        .map(|j| {
            let t = step * j as f64;
            (t.cos(), t.sin())
        })
        .unzip()
}

/// Forward transform of a real image (unnormalized).
pub fn rfft2(image: &Tensor) -> Result<Spectrum> {
    let (h, w) = image.image_dims();
    if h * w != image.len() {
        return Err(Error::ShapeMismatch {
            context: "rfft2".into(),
            expected: "2-d image".into(),
            got: format!("shape {:?}", image.shape()),
        });
    }
    let k = w / 2 + 1;
    let x = image.data();
    let (cos_w, sin_w) = twiddle_table(w);
    let (cos_h, sin_h) = twiddle_table(h);

    // Row pass: real -> half-plane complex.
    let mut rows = vec![Complex64::new(0.0, 0.0); h * k];
    for m in 0..h {
        for kx in 0..k {
            let mut re = 0.0;
            let mut im = 0.0;
            for n in 0..w {
                let idx = (kx * n) % w;
                let v = x[m * w + n];
                re += v * cos_w[idx];
                im -= v * sin_w[idx];
            }
            rows[m * k + kx] = Complex64::new(re, im);
        }
    }

    // Column pass: complex DFT along ky.
    let mut coeffs = vec![Complex64::new(0.0, 0.0); h * k];
    for kx in 0..k {
        for ky in 0..h {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..h {
                let idx = (ky * m) % h;
                let t = Complex64::new(cos_h[idx], -sin_h[idx]);
                acc += rows[m * k + kx] * t;
            }
            coeffs[ky * k + kx] = acc;
        }
    }
    Spectrum::from_coeffs(h, w, coeffs)
}

/// Inverse transform, scaled by 1/(H*W). Output is real for any input; see
/// the module docs for the projection semantics in the shared columns.
pub fn irfft2(spectrum: &Spectrum) -> Tensor {
    let h = spectrum.height;
    let w = spectrum.width;
    let layout = Layout::new(h, w);
    let k = layout.spectral_width();
    let (cos_h, sin_h) = twiddle_table(h);
    let (cos_w, sin_w) = twiddle_table(w);

    // Stage 1: inverse complex DFT along ky, normalized by 1/H.
    let mut mid = vec![Complex64::new(0.0, 0.0); h * k];
    let inv_h = 1.0 / h as f64;
    for kx in 0..k {
        for m in 0..h {
            let mut acc = Complex64::new(0.0, 0.0);
            for ky in 0..h {
                let idx = (ky * m) % h;
                let t = Complex64::new(cos_h[idx], sin_h[idx]);
                acc += spectrum.coeffs[ky * k + kx] * t;
            }
            mid[m * k + kx] = acc * inv_h;
        }
    }

    // Stage 2: c2r along kx, normalized by 1/W. Imaginary parts of the
    // shared columns do not contribute (the projection).
    let mut out = vec![0.0; h * w];
    let inv_w = 1.0 / w as f64;
    for m in 0..h {
        for n in 0..w {
            let mut acc = 0.0;
            for kx in 0..k {
                let idx = (kx * n) % w;
                let b = mid[m * k + kx];
                if layout.is_shared_col(kx) {
                    acc += b.re * cos_w[idx];
                } else {
                    acc += 2.0 * (b.re * cos_w[idx] - b.im * sin_w[idx]);
                }
            }
            out[m * w + n] = acc * inv_w;
        }
    }
    Tensor::from_parts(vec![h, w], out)
}

/// Adjoint of `irfft2` as a real-linear map from half-plane (re, im) pairs
/// to the image: given a cotangent over the image, returns cotangents for
/// the stored real and imaginary parts.
pub(crate) fn irfft2_adjoint(layout: Layout, g_image: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = layout.height;
    let w = layout.width;
    let k = layout.spectral_width();
    let (cos_h, sin_h) = twiddle_table(h);
    let (cos_w, sin_w) = twiddle_table(w);

    // Adjoint of stage 2.
    let inv_w = 1.0 / w as f64;
    let mut g_mid_re = vec![0.0; h * k];
    let mut g_mid_im = vec![0.0; h * k];
    for m in 0..h {
        for kx in 0..k {
            let mut re = 0.0;
            let mut im = 0.0;
            for n in 0..w {
                let idx = (kx * n) % w;
                let g = g_image[m * w + n];
                re += g * cos_w[idx];
                im -= g * sin_w[idx];
            }
            let scale = layout.alpha(kx) * inv_w;
            g_mid_re[m * k + kx] = re * scale;
            g_mid_im[m * k + kx] = if layout.is_shared_col(kx) {
                0.0
            } else {
                im * scale
            };
        }
    }

    // Adjoint of stage 1.
    let inv_h = 1.0 / h as f64;
    let mut g_re = vec![0.0; h * k];
    let mut g_im = vec![0.0; h * k];
    for kx in 0..k {
        for ky in 0..h {
            let mut re = 0.0;
            let mut im = 0.0;
            for m in 0..h {
                let idx = (ky * m) % h;
                let (c, s) = (cos_h[idx], sin_h[idx]);
                let (gr, gi) = (g_mid_re[m * k + kx], g_mid_im[m * k + kx]);
                re += gr * c + gi * s;
                im += -gr * s + gi * c;
            }
            g_re[ky * k + kx] = re * inv_h;
            g_im[ky * k + kx] = im * inv_h;
        }
    }
    (g_re, g_im)
}

/// Builds a Hermitian-consistent spectrum `r * exp(i*phase)` from magnitudes
/// and a phase field over the half plane. Phases at mirror slots and at
/// self-conjugate slots are inert: mirrors are completed by conjugation from
/// the canonical slot, and self-conjugate slots take the real value `+r`.
/// The inverse transform of the result is therefore real with full spectral
/// energy, with no projection loss.
pub fn phase_spectrum(magnitude: &SpectrumMagnitude, phase: &[f64]) -> Result<Spectrum> {
    let layout = Layout::new(magnitude.height, magnitude.width);
    let k = layout.spectral_width();
    if phase.len() != magnitude.values.len() || phase.len() != layout.height * k {
        return Err(Error::ShapeMismatch {
            context: "phase_spectrum".into(),
            expected: format!("{} phase values", layout.height * k),
            got: format!("{}", phase.len()),
        });
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); layout.height * k];
    for ky in 0..layout.height {
        for kx in 0..k {
            let slot = ky * k + kx;
            if !layout.is_canonical(ky, kx) {
                continue;
            }
            let r = magnitude.values[slot];
            if layout.is_self_conjugate(ky, kx) {
                coeffs[slot] = Complex64::new(r, 0.0);
            } else {
                let value = Complex64::from_polar(r, phase[slot]);
                coeffs[slot] = value;
                if layout.is_shared_col(kx) {
                    let mirror = layout.partner_row(ky) * k + kx;
                    coeffs[mirror] = value.conj();
                }
            }
        }
    }
    Spectrum::from_coeffs(layout.height, layout.width, coeffs)
}

/// Vector-Jacobian product of `irfft2(phase_spectrum(r, phase))` with
/// respect to the phase field. Inert slots receive zero gradient.
pub(crate) fn phase_spectrum_vjp(
    magnitude: &SpectrumMagnitude,
    phase: &[f64],
    g_image: &[f64],
) -> Vec<f64> {
    let layout = Layout::new(magnitude.height, magnitude.width);
    let k = layout.spectral_width();
    let (g_re, g_im) = irfft2_adjoint(layout, g_image);
    let mut g_phase = vec![0.0; phase.len()];
    for ky in 0..layout.height {
        for kx in 0..k {
            let slot = ky * k + kx;
            if !layout.is_canonical(ky, kx) || layout.is_self_conjugate(ky, kx) {
                continue;
            }
            let r = magnitude.values[slot];
            let (sin_p, cos_p) = phase[slot].sin_cos();
            let mut grad = g_re[slot] * (-r * sin_p) + g_im[slot] * (r * cos_p);
            if layout.is_shared_col(kx) {
                // Mirror slot carries the conjugate value.
                let mirror = layout.partner_row(ky) * k + kx;
                grad += g_re[mirror] * (-r * sin_p) + g_im[mirror] * (-r * cos_p);
            }
            g_phase[slot] = grad;
        }
    }
    g_phase
}
