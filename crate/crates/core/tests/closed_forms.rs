//! The closed-form equivalence suite: on random linear models, each
//! numerical attribution method must reproduce its analytic form.
//!
//! Saliency, SmoothGrad (power-of-two sample count), and Gradient-Input are
//! bitwise equal by construction. Occlusion and Integrated Gradients reach
//! the closed form through different floating-point operation orders, so
//! they are compared at roundoff tolerance. RISE is a Monte-Carlo estimator
//! and is compared within three analytic standard errors.

use faithbench_core::attribution::{
    gradient_input, integrated_gradients, linear_closed_form, occlusion, rise, saliency,
    smoothgrad, AttributionConfig, Method,
};
use faithbench_core::model::{LinearModel, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROUNDOFF_REL: f64 = 1e-12;
const RISE_MASKS: usize = 20_000;

struct Instance {
    model: Model,
    w: Vec<f64>,
    b: f64,
    x: Vec<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.gen_range(2..=16usize);
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b = rng.gen_range(-1.0..1.0);
    Instance {
        model: Model::Linear(LinearModel::new(w.clone(), b).unwrap()),
        w,
        b,
        x,
    }
}

fn assert_roundoff(got: &[f64], want: &[f64], context: &str) {
    let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (g, w) in got.iter().zip(want) {
        assert!(
            (g - w).abs() <= ROUNDOFF_REL * scale,
            "{context}: {g} vs {w}"
        );
    }
}

#[test]
fn hundred_random_linear_models_match_closed_forms() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let inst = random_instance(&mut rng);
        let cfg = AttributionConfig {
            smoothgrad_sigma: 0.3,
            smoothgrad_samples: 64,
            ig_steps: rng.gen_range(1..=64),
            rise_masks: RISE_MASKS,
            rise_probability: 0.5,
            seed: 15_000 + trial,
            ..AttributionConfig::default()
        };

        let sal = saliency(&inst.model, &inst.x, &cfg).unwrap();
        let sal_cf = linear_closed_form(Method::Saliency, &inst.w, inst.b, &inst.x).unwrap();
        assert_eq!(sal.scores(), sal_cf.scores(), "saliency trial {trial}");

        let sg = smoothgrad(&inst.model, &inst.x, &cfg).unwrap();
        assert_eq!(sg.scores(), sal_cf.scores(), "smoothgrad trial {trial}");

        let gi = gradient_input(&inst.model, &inst.x, &cfg).unwrap();
        let gi_cf = linear_closed_form(Method::GradientInput, &inst.w, inst.b, &inst.x).unwrap();
        assert_eq!(gi.scores(), gi_cf.scores(), "gradient_input trial {trial}");

        let oc = occlusion(&inst.model, &inst.x, &cfg).unwrap();
        assert_roundoff(oc.scores(), gi_cf.scores(), &format!("occlusion trial {trial}"));

        let ig = integrated_gradients(&inst.model, &inst.x, &cfg).unwrap();
        let ig_cf =
            linear_closed_form(Method::IntegratedGradients, &inst.w, inst.b, &inst.x).unwrap();
        assert_roundoff(ig.scores(), ig_cf.scores(), &format!("ig trial {trial}"));

        // Gradient-Input and IG differ by the factor 1/2 only: identical
        // orderings.
        assert_eq!(ig.ordering(), gi.ordering(), "ordering trial {trial}");

        let ri = rise(&inst.model, &inst.x, &cfg).unwrap();
        let ri_cf = linear_closed_form(Method::Rise, &inst.w, inst.b, &inst.x).unwrap();
        let q = cfg.rise_probability;
        let xw_products: Vec<f64> = inst.x.iter().zip(&inst.w).map(|(x, w)| x * w).collect();
        let total_sq: f64 = xw_products.iter().map(|v| v * v).sum();
        for i in 0..inst.x.len() {
            // Var(f(x*m) | m_i = 1) = q(1-q) * sum_{j != i} (x_j w_j)^2;
            // the estimator averages about M*q included masks.
            let var = q * (1.0 - q) * (total_sq - xw_products[i] * xw_products[i]);
            let se = (var / (RISE_MASKS as f64 * q)).sqrt();
            let err = (ri.scores()[i] - ri_cf.scores()[i]).abs();
            assert!(
                err <= 3.0 * se + 1e-9,
                "rise trial {trial} component {i}: err {err} > 3se {}",
                3.0 * se
            );
        }
    }
    let elapsed = started.elapsed();
    println!("closed-form suite: 100 models in {elapsed:?}");
    assert!(elapsed.as_secs() < 60, "suite exceeded one minute");
}
