//! Cross-checks between the theory lab's exact sums and the metric
//! implementation, plus structural properties of the brute-force verdicts.

use faithbench_core::attribution::Explanation;
use faithbench_core::baseline::{build_context, BaselineKind, DatasetStats};
use faithbench_core::metrics::{deletion_trace, MetricConfig, ScoreMode};
use faithbench_core::model::{LinearModel, Model};
use faithbench_core::tensor::Tensor;
use faithbench_core::theory::{
    brute_force_optimal, exact_deletion_sum, BaselineRegime, TheoryInstance,
};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn explanation_with_ordering(ordering: &[usize]) -> Explanation {
    let d = ordering.len();
    let mut scores = vec![0.0; d];
    for (rank, &idx) in ordering.iter().enumerate() {
        scores[idx] = (d - rank) as f64;
    }
    Explanation::new(scores).unwrap()
}

/// The metric pipeline (k = d, logit mode, zero baseline) reproduces the
/// closed-form deletion step-sum on every random instance.
#[test]
fn deletion_trace_matches_exact_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let stats = DatasetStats {
        mean: 0.5,
        median: 0.5,
    };
    let cfg = MetricConfig {
        score_mode: ScoreMode::Logit,
        ..MetricConfig::default()
    };
    for _ in 0..50 {
        let d = rng.gen_range(3..=6);
        let instance = TheoryInstance::random(d, BaselineRegime::Zero, &mut rng);
        let model = Model::Linear(LinearModel::new(instance.w.clone(), instance.b).unwrap());
        let x = Tensor::from_vec(instance.x.clone()).unwrap();
        let ctx = build_context(&BaselineKind::Zero, &x, &stats, 0).unwrap();

        let mut ordering: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rng.gen_range(0..=i);
            ordering.swap(i, j);
        }
        let explanation = explanation_with_ordering(&ordering);
        let trace = deletion_trace(&model, &x, &explanation, &ctx, &cfg, None).unwrap();
        let exact = exact_deletion_sum(&instance, &ordering).unwrap();
        assert!(
            (trace.perturbed_step_sum() - exact).abs() < 1e-9,
            "d={d}: {} vs {exact}",
            trace.perturbed_step_sum()
        );
    }
}

/// Verdict sets are closed under permuting tied coordinates: with two equal
/// x*w products, every minimizer's mirror (swapping the tied indices) is
/// also a minimizer.
#[test]
fn verdicts_closed_under_tied_swaps() {
    let instance = TheoryInstance::new(
        vec![1.0, 2.0, 0.5],
        vec![2.0, 1.0, -0.7],
        0.2,
        BaselineRegime::Zero,
    )
    .unwrap();
    // x*w = [2, 2, -0.35]: indices 0 and 1 are tied.
    let verdict = brute_force_optimal(&instance).unwrap();
    for minimizer in &verdict.deletion_minimizers {
        let swapped: Vec<usize> = minimizer
            .iter()
            .map(|&i| match i {
                0 => 1,
                1 => 0,
                other => other,
            })
            .collect();
        assert!(
            verdict.deletion_minimizers.contains(&swapped),
            "mirror of {minimizer:?} missing"
        );
    }
}

/// Monotone families are what brute force finds: explicit comparison against
/// an independently generated family on a fixed instance.
#[test]
fn minimizer_set_equals_sorted_family() {
    let instance = TheoryInstance::new(
        vec![0.3, -0.9, 0.7, 0.2],
        vec![1.1, 0.4, -0.8, 2.0],
        0.0,
        BaselineRegime::Zero,
    )
    .unwrap();
    let verdict = brute_force_optimal(&instance).unwrap();
    let products: Vec<f64> = instance.x.iter().zip(&instance.w).map(|(x, w)| x * w).collect();
    let family: Vec<Vec<usize>> = (0..4usize)
        .permutations(4)
        .filter(|u| u.windows(2).all(|p| products[p[0]] >= products[p[1]]))
        .collect();
    assert_eq!(verdict.deletion_minimizers, family);
}

/// The uniform-expected regime evaluates noise in expectation, so its sums
/// are invariant to x only through the constant d*(x.w + b) term; the
/// argmin is x-free.
#[test]
fn uniform_regime_argmin_ignores_x() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..20 {
        let base = TheoryInstance::random(4, BaselineRegime::UniformExpected, &mut rng);
        let verdict = brute_force_optimal(&base).unwrap();
        for _ in 0..3 {
            let rerolled = TheoryInstance {
                x: (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                ..base.clone()
            };
            assert_eq!(
                brute_force_optimal(&rerolled).unwrap().deletion_minimizers,
                verdict.deletion_minimizers
            );
        }
    }
}
