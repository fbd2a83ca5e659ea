//! Driver for the `verify-theory` subcommand: brute-force verification of
//! the linear-model optimality claims plus the metric/theory cross-check.

use faithbench_core::attribution::Explanation;
use faithbench_core::baseline::{build_context, BaselineKind, DatasetStats};
use faithbench_core::metrics::{deletion_trace, MetricConfig, ScoreMode};
use faithbench_core::model::{LinearModel, Model};
use faithbench_core::tensor::Tensor;
use faithbench_core::theory::{
    check_baseline_dependence, check_corollary_insertion, exact_deletion_sum, BaselineRegime,
    TheoryInstance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub struct VerifyOutcome {
    pub lines: Vec<CheckLine>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let status = if line.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{status}] {}: {}\n", line.name, line.detail));
        }
        out
    }
}

/// Exact-sum vs metric-pipeline agreement on random instances (k = d,
/// logit mode, zero baseline).
fn cross_check(per_dim: usize, dims: &[usize], seed: u64) -> CheckLine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = DatasetStats {
        mean: 0.5,
        median: 0.5,
    };
    let cfg = MetricConfig {
        score_mode: ScoreMode::Logit,
        ..MetricConfig::default()
    };
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for &d in dims {
        for _ in 0..per_dim {
            let instance = TheoryInstance::random(d, BaselineRegime::Zero, &mut rng);
            let model = Model::Linear(
                LinearModel::new(instance.w.clone(), instance.b).expect("finite weights"),
            );
            let x = Tensor::from_vec(instance.x.clone()).expect("finite inputs");
            let ctx = build_context(&BaselineKind::Zero, &x, &stats, 0).expect("zero context");
            let mut ordering: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                let j = rng.gen_range(0..=i);
                ordering.swap(i, j);
            }
            let mut scores = vec![0.0; d];
            for (rank, &idx) in ordering.iter().enumerate() {
                scores[idx] = (d - rank) as f64;
            }
            let explanation = Explanation::new(scores).expect("finite scores");
            let trace = deletion_trace(&model, &x, &explanation, &ctx, &cfg, None)
                .expect("trace evaluates");
            let exact = exact_deletion_sum(&instance, &ordering).expect("valid ordering");
            worst = worst.max((trace.perturbed_step_sum() - exact).abs());
            checked += 1;
        }
    }
    CheckLine {
        name: "metric/theory cross-check".into(),
        passed: worst < 1e-9,
        detail: format!("{checked} instances, max |trace-sum - exact| = {worst:.3e}"),
    }
}

pub fn verify_theory(per_dim: usize, dims: &[usize], seed: u64) -> anyhow::Result<VerifyOutcome> {
    let mut lines = Vec::new();

    let dependence = check_baseline_dependence(per_dim, dims, seed)?;
    lines.push(CheckLine {
        name: "zero baseline: optimum = orderings monotone in x*w".into(),
        passed: dependence.failures.iter().all(|f| !f.contains("zero")),
        detail: format!(
            "{} instances, direction {:?}",
            dependence.instances, dependence.zero_direction
        ),
    });
    lines.push(CheckLine {
        name: "uniform baseline (expected): optimum depends on w only".into(),
        passed: dependence
            .failures
            .iter()
            .all(|f| !f.contains("uniform") && !f.contains("moved")),
        detail: format!(
            "{} instances, direction {:?}",
            dependence.instances, dependence.uniform_direction
        ),
    });
    lines.push(CheckLine {
        name: "baseline changes the optimal ordering".into(),
        passed: dependence.differing_optima > 0,
        detail: format!(
            "{}/{} instances have regime-dependent optima",
            dependence.differing_optima, dependence.instances
        ),
    });

    let corollary = check_corollary_insertion(per_dim, dims, seed.wrapping_add(1))?;
    lines.push(CheckLine {
        name: "insertion corollary: same optimal orderings".into(),
        passed: corollary.passed(),
        detail: format!("{} instances per regime", corollary.instances),
    });

    lines.push(cross_check(per_dim, dims, seed.wrapping_add(2)));

    for failure in dependence.failures.iter().chain(&corollary.failures) {
        lines.push(CheckLine {
            name: "counterexample".into(),
            passed: false,
            detail: failure.clone(),
        });
    }
    Ok(VerifyOutcome { lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_verification_passes() {
        let outcome = verify_theory(5, &[3, 4], 11).unwrap();
        assert!(outcome.passed(), "{}", outcome.render());
        assert!(outcome.render().contains("PASS"));
    }
}
