//! Central finite differences as the independent oracle for every
//! reverse-mode primitive: affine, relu, mul, sum, squared norm, softmax,
//! the phase-parameterized inverse FFT, and their compositions.

use faithbench_core::autodiff::DiffProgram;
use faithbench_core::featviz::{mean_magnitude_spectrum, objective_program};
use faithbench_core::model::{Activation, DenseLayer, MlpModel};
use faithbench_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-4;

fn assert_close(exact: &[f64], fd: &[f64], context: &str) {
    for (i, (e, f)) in exact.iter().zip(fd).enumerate() {
        let tol = REL_TOL * f.abs().max(1.0);
        assert!(
            (e - f).abs() <= tol,
            "{context}: component {i}: exact {e} vs fd {f}"
        );
    }
}

fn check(program: &DiffProgram, inputs: &[&Tensor], wrt: faithbench_core::autodiff::NodeId, component: Option<usize>, context: &str) {
    let exact = program.gradient(inputs, wrt, component).unwrap();
    let fd = program
        .central_difference_gradient(inputs, wrt, 1e-6, component)
        .unwrap();
    assert_close(exact.data(), fd.data(), context);
}

#[test]
fn affine_component_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for probe in 0..20 {
        let d = rng.gen_range(2..8);
        let rows = rng.gen_range(1..5);
        let w: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![d]);
        let y = p.affine(x, Tensor::new(vec![rows, d], w).unwrap(), b).unwrap();
        p.set_output(y);
        let input = Tensor::from_vec((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let c = rng.gen_range(0..rows);
        check(&p, &[&input], x, Some(c), &format!("affine probe {probe}"));
    }
}

#[test]
fn relu_sum_gradients_away_from_the_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for probe in 0..20 {
        let d = rng.gen_range(2..10);
        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![d]);
        let r = p.relu(x);
        let s = p.sum(r);
        p.set_output(s);
        // Keep probes off the kink so the quotient is well defined.
        let input = Tensor::from_vec(
            (0..d)
                .map(|_| {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    sign * rng.gen_range(0.01..2.0)
                })
                .collect(),
        )
        .unwrap();
        check(&p, &[&input], x, None, &format!("relu probe {probe}"));
    }
}

#[test]
fn mul_gradients_for_both_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for probe in 0..10 {
        let d = rng.gen_range(2..8);
        let mut p = DiffProgram::new();
        let a = p.leaf("a", vec![d]);
        let b = p.leaf("b", vec![d]);
        let m = p.mul(a, b).unwrap();
        let s = p.sum(m);
        p.set_output(s);
        let va = Tensor::from_vec((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let vb = Tensor::from_vec((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        check(&p, &[&va, &vb], a, None, &format!("mul/a probe {probe}"));
        check(&p, &[&va, &vb], b, None, &format!("mul/b probe {probe}"));
    }
}

#[test]
fn squared_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for probe in 0..10 {
        let d = rng.gen_range(2..10);
        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![d]);
        let s = p.squared_norm(x);
        p.set_output(s);
        let input = Tensor::from_vec((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        check(&p, &[&input], x, None, &format!("sqnorm probe {probe}"));
    }
}

#[test]
fn softmax_component_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for probe in 0..20 {
        let d = rng.gen_range(2..8);
        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![d]);
        let y = p.softmax(x);
        p.set_output(y);
        let input = Tensor::from_vec((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let c = rng.gen_range(0..d);
        check(&p, &[&input], x, Some(c), &format!("softmax probe {probe}"));
    }
}

#[test]
fn irfft_phase_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for probe in 0..10 {
        let h = rng.gen_range(2..6);
        let w = rng.gen_range(2..6);
        let img = Tensor::new(
            vec![h, w],
            (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let mag = mean_magnitude_spectrum(&[img]).unwrap();
        let slots = mag.values.len();
        let mut p = DiffProgram::new();
        let phase = p.leaf("phase", vec![h, w / 2 + 1]);
        let image = p.irfft_phase(phase, mag).unwrap();
        let s = p.squared_norm(image);
        p.set_output(s);
        let input = Tensor::new(
            vec![h, w / 2 + 1],
            (0..slots).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        check(&p, &[&input], phase, None, &format!("irfft probe {probe}"));
    }
}

/// A 2-layer MLP with softmax head: the composition the attribution methods
/// differentiate. Probes are resampled when a hidden pre-activation sits
/// within finite-difference reach of the ReLU kink.
#[test]
fn mlp_composition_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let d = 8;
    let hidden = 6;
    let classes = 3;
    for probe in 0..10 {
        let w1: Vec<f64> = (0..hidden * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b1: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w2: Vec<f64> = (0..classes * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b2: Vec<f64> = (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect();

        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![d]);
        let h1 = p
            .affine(x, Tensor::new(vec![hidden, d], w1.clone()).unwrap(), b1.clone())
            .unwrap();
        let a1 = p.relu(h1);
        let z = p
            .affine(a1, Tensor::new(vec![classes, hidden], w2).unwrap(), b2)
            .unwrap();
        let y = p.softmax(z);
        p.set_output(y);

        let input = loop {
            let candidate: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let safe = (0..hidden).all(|i| {
                let pre: f64 = (0..d).map(|j| w1[i * d + j] * candidate[j]).sum::<f64>() + b1[i];
                pre.abs() > 1e-4
            });
            if safe {
                break Tensor::from_vec(candidate).unwrap();
            }
        };
        let c = rng.gen_range(0..classes);
        check(&p, &[&input], x, Some(c), &format!("mlp probe {probe}"));
    }
}

/// The phase objective on a real model: gradient of
/// `||f_l(irfft2(r e^{i phase}))||^2` against the oracle.
#[test]
fn featviz_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (h, w) = (4, 5);
    let hidden = 5;
    let d = h * w;
    let model = MlpModel::new(
        vec![
            DenseLayer {
                weights: Tensor::new(
                    vec![hidden, d],
                    (0..hidden * d).map(|_| rng.gen_range(-0.6..0.6)).collect(),
                )
                .unwrap(),
                bias: (0..hidden).map(|_| rng.gen_range(-0.2..0.2)).collect(),
                activation: Activation::Relu,
            },
            DenseLayer {
                weights: Tensor::new(
                    vec![2, hidden],
                    (0..2 * hidden).map(|_| rng.gen_range(-0.6..0.6)).collect(),
                )
                .unwrap(),
                bias: vec![0.0, 0.0],
                activation: Activation::None,
            },
        ],
        (h, w),
        2,
    )
    .unwrap();
    let img = Tensor::new(vec![h, w], (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let mag = mean_magnitude_spectrum(&[img]).unwrap();
    let (program, leaf) = objective_program(&model, &mag).unwrap();
    for probe in 0..10 {
        let phase = Tensor::new(
            vec![h, w / 2 + 1],
            (0..mag.values.len())
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect(),
        )
        .unwrap();
        check(&program, &[&phase], leaf, None, &format!("objective probe {probe}"));
    }
}
