//! Grid execution: methods x baselines x images, with one explanation per
//! (image, method) reused across baselines, per-trace OOD/energy recording,
//! and deterministic aggregation.

use std::path::Path;

use anyhow::{bail, Context};
use faithbench_core::attribution::{attribute, Explanation, Method};
use faithbench_core::baseline::{apply, build_context, BaselineKind, DatasetStats};
use faithbench_core::featviz::{mean_magnitude_spectrum, optimize_baseline, FeatVizConfig, FeatVizResult};
use faithbench_core::metrics::{
    auc_concentration, classify_topk, deletion_trace, insertion_trace, FeatureIndex, MetricKind,
    MetricTrace, ScoreMode,
};
use faithbench_core::model::{load_model, train_sgd, ArchSpec, Dataset, Model, TrainConfig};
use faithbench_core::seeding::derive_seed;
use faithbench_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSource, RunConfig};
use crate::idx::{load_idx_images, load_idx_labels};

/// Aggregated result for one (method, baseline) cell, averaged over images.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub method: String,
    pub baseline: String,
    pub deletion_auc: f64,
    pub insertion_auc: f64,
    pub srg: f64,
    pub final_logit_energy: f64,
    /// Mean normalized 1-NN distance along the deletion and insertion paths.
    pub path_ood: f64,
    pub deletion_concentration: Option<f64>,
    pub insertion_concentration: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConcentrationRow {
    pub method: String,
    pub baseline: String,
    pub metric: &'static str,
    pub concentration: f64,
    /// Mean normalized OOD over the steps inside the 80%-AUC span.
    pub ood_over_span: f64,
}

#[derive(Debug, Clone)]
pub struct TopkRow {
    pub baseline: String,
    pub mean_top1: f64,
    pub max_top1: f64,
    /// Top-5 of the first image's full replacement.
    pub top5: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct MeanTrace {
    pub method: String,
    pub baseline: String,
    pub metric: MetricKind,
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub energies: Vec<f64>,
    pub ood_raw: Vec<f64>,
    pub ood_normalized: Vec<f64>,
}

#[derive(Debug)]
pub struct BenchmarkOutput {
    pub rows: Vec<ReportRow>,
    pub concentration: Vec<ConcentrationRow>,
    pub topk: Vec<TopkRow>,
    pub mean_traces: Vec<MeanTrace>,
    pub featviz: Option<FeatVizResult>,
    pub model: Model,
    /// (baseline, fraction, image) chain dumps for the first image.
    pub chains: Vec<(String, f64, Tensor)>,
}

/// JSON tensor document used for featviz baseline import/export.
#[derive(Serialize, Deserialize)]
pub struct TensorFile {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub fn load_tensor_json(path: &Path) -> anyhow::Result<Tensor> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading tensor {}", path.display()))?;
    let file: TensorFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing tensor {}", path.display()))?;
    Ok(Tensor::new(vec![file.height, file.width], file.data)?)
}

pub fn save_tensor_json(path: &Path, image: &Tensor) -> anyhow::Result<()> {
    let (h, w) = image.image_dims();
    let file = TensorFile {
        height: h,
        width: w,
        data: image.data().to_vec(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)
        .with_context(|| format!("writing tensor {}", path.display()))?;
    Ok(())
}

pub fn resolve_model(cfg: &RunConfig, train: &Dataset) -> anyhow::Result<Model> {
    match &cfg.model {
        ModelSource::Path(path) => Ok(load_model(path)?),
        ModelSource::Train(spec) => {
            let (h, w) = train.images[0].image_dims();
            let arch = ArchSpec {
                input_shape: (h, w),
                hidden: spec.hidden.clone(),
                classes: spec.classes,
            };
            let train_cfg = TrainConfig {
                learning_rate: spec.learning_rate,
                epochs: spec.epochs,
                batch_size: spec.batch_size,
                seed: spec.seed,
                l2_penalty: spec.l2_penalty,
            };
            let (model, report) = train_sgd(&arch, train, &train_cfg)?;
            log::info!(
                "trained model: accuracy {:.4}, loss {:.4}",
                report.final_accuracy,
                report.final_loss
            );
            Ok(Model::Mlp(model))
        }
    }
}

/// Optimizes the featviz baseline for the run's model (or loads a
/// precomputed one).
pub fn resolve_featviz(
    cfg: &RunConfig,
    model: &Model,
    train_images: &[Tensor],
) -> anyhow::Result<Option<FeatVizResult>> {
    if !cfg.baselines.iter().any(|b| b == "featviz") {
        return Ok(None);
    }
    if let Some(path) = &cfg.featviz_image {
        let image = load_tensor_json(path)?;
        return Ok(Some(FeatVizResult {
            phase: vec![],
            image,
            objective_trace: vec![],
            clip_fraction: 0.0,
        }));
    }
    let Model::Mlp(mlp) = model else {
        bail!("featviz baseline needs an MLP model");
    };
    let magnitude = mean_magnitude_spectrum(train_images)?;
    let fv_cfg = FeatVizConfig {
        seed: derive_seed(cfg.seed, &[41]),
        ..FeatVizConfig::default()
    };
    Ok(Some(optimize_baseline(mlp, &magnitude, &fv_cfg)?))
}

struct CellAccumulator {
    deletion_auc: f64,
    insertion_auc: f64,
    final_energy: f64,
    ood_sum: f64,
    ood_count: usize,
    del_concentration: f64,
    ins_concentration: f64,
    del_span_ood: f64,
    ins_span_ood: f64,
    del_trace_sums: Vec<TraceSums>,
    ins_trace_sums: Vec<TraceSums>,
}

#[derive(Clone, Default)]
struct TraceSums {
    score: f64,
    energy: f64,
    ood_raw: f64,
    ood_norm: f64,
}

impl CellAccumulator {
    fn new(steps: usize) -> Self {
        Self {
            deletion_auc: 0.0,
            insertion_auc: 0.0,
            final_energy: 0.0,
            ood_sum: 0.0,
            ood_count: 0,
            del_concentration: 0.0,
            ins_concentration: 0.0,
            del_span_ood: 0.0,
            ins_span_ood: 0.0,
            del_trace_sums: vec![TraceSums::default(); steps + 1],
            ins_trace_sums: vec![TraceSums::default(); steps + 1],
        }
    }

    fn absorb(&mut self, trace: &MetricTrace, sums: bool) {
        let target = match trace.metric {
            MetricKind::Deletion => &mut self.del_trace_sums,
            MetricKind::Insertion => &mut self.ins_trace_sums,
        };
        if sums {
            for (i, slot) in target.iter_mut().enumerate() {
                slot.score += trace.scores[i];
                if !trace.energies.is_empty() {
                    slot.energy += trace.energies[i];
                }
                if !trace.ood_normalized.is_empty() {
                    slot.ood_raw += trace.ood_raw[i];
                    slot.ood_norm += trace.ood_normalized[i];
                }
            }
        }
        for &v in &trace.ood_normalized {
            self.ood_sum += v;
            self.ood_count += 1;
        }
    }
}

fn ood_over_span(trace: &MetricTrace, span: f64) -> f64 {
    if trace.ood_normalized.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (f, o) in trace.fractions.iter().zip(&trace.ood_normalized) {
        if *f <= span + 1e-12 {
            sum += o;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

pub fn run_benchmark(cfg: &RunConfig) -> anyhow::Result<BenchmarkOutput> {
    cfg.validate()?;
    let train_images = load_idx_images(&cfg.train_images)?;
    let train_labels = load_idx_labels(&cfg.train_labels)?;
    let test_images = load_idx_images(&cfg.test_images)?;
    let _test_labels = load_idx_labels(&cfg.test_labels)?;
    if test_images.len() < cfg.image_count {
        bail!(
            "config requests {} images but the test set has {}",
            cfg.image_count,
            test_images.len()
        );
    }
    let train = Dataset::new(train_images, train_labels)?;
    let model = resolve_model(cfg, &train)?;
    let stats = DatasetStats::from_images(&train.images)?;
    let featviz = resolve_featviz(cfg, &model, &train.images)?;

    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .map(|name| Ok(Method::from_name(name)?))
        .collect::<anyhow::Result<_>>()?;
    let metric_cfg = cfg.metric.to_metric_config()?;

    let index = if metric_cfg.record_ood {
        let mut order: Vec<usize> = (0..train.images.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[42]));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        order.truncate(cfg.ood_index_size.min(train.images.len()));
        let subset: Vec<Tensor> = order.into_iter().map(|i| train.images[i].clone()).collect();
        Some(FeatureIndex::build(&model, &subset)?)
    } else {
        None
    };

    let d = test_images[0].len();
    let steps = metric_cfg.steps.unwrap_or(d);
    let softmax_mode = metric_cfg.score_mode == ScoreMode::Softmax;

    let mut cells: Vec<Vec<CellAccumulator>> = methods
        .iter()
        .map(|_| cfg.baselines.iter().map(|_| CellAccumulator::new(steps)).collect())
        .collect();
    let mut topk_mean = vec![0.0; cfg.baselines.len()];
    let mut topk_max = vec![0.0f64; cfg.baselines.len()];
    let mut topk_first: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cfg.baselines.len()];
    let mut chains: Vec<(String, f64, Tensor)> = Vec::new();
    let mut fractions_template: Option<(Vec<f64>, Vec<f64>)> = None;

    for img_idx in 0..cfg.image_count {
        let x = &test_images[img_idx];
        let attribution_cfg = cfg
            .attribution
            .to_attribution_config(derive_seed(cfg.seed, &[1, img_idx as u64]));

        // One explanation per (image, method), shared across baselines.
        let explanations: Vec<Explanation> = methods
            .iter()
            .map(|&m| {
                attribute(m, &model, x.data(), &attribution_cfg)
                    .with_context(|| format!("image {img_idx}, method {}", m.name()))
            })
            .collect::<anyhow::Result<_>>()?;

        for (b_idx, baseline_name) in cfg.baselines.iter().enumerate() {
            let kind = BaselineKind::from_name(
                baseline_name,
                featviz.as_ref().map(|f| f.image.clone()),
            )?;
            let ctx = build_context(&kind, x, &stats, derive_seed(cfg.seed, &[2, img_idx as u64]))
                .with_context(|| format!("image {img_idx}, baseline {baseline_name}"))?;

            for (m_idx, method) in methods.iter().enumerate() {
                let tag = || {
                    format!(
                        "image {img_idx}, method {}, baseline {baseline_name}",
                        method.name()
                    )
                };
                let del = deletion_trace(&model, x, &explanations[m_idx], &ctx, &metric_cfg, index.as_ref())
                    .with_context(tag)?;
                let ins = insertion_trace(&model, x, &explanations[m_idx], &ctx, &metric_cfg, index.as_ref())
                    .with_context(tag)?;
                if fractions_template.is_none() {
                    fractions_template = Some((del.fractions.clone(), ins.fractions.clone()));
                }
                let cell = &mut cells[m_idx][b_idx];
                cell.deletion_auc += del.auc;
                cell.insertion_auc += ins.auc;
                if !del.energies.is_empty() {
                    cell.final_energy += *del.energies.last().unwrap();
                }
                cell.absorb(&del, true);
                cell.absorb(&ins, true);
                if softmax_mode {
                    let dc = auc_concentration(&del)?;
                    let ic = auc_concentration(&ins)?;
                    cell.del_concentration += dc.fraction;
                    cell.ins_concentration += ic.fraction;
                    cell.del_span_ood += ood_over_span(&del, dc.fraction);
                    cell.ins_span_ood += ood_over_span(&ins, ic.fraction);
                }
            }

            // Appendix-style classification of the full replacement image.
            let replacement = Tensor::new(x.shape().to_vec(), ctx.replacement().to_vec())?;
            let top = classify_topk(&model, replacement.data(), 5.min(model.num_classes()))?;
            topk_mean[b_idx] += top[0].1;
            topk_max[b_idx] = topk_max[b_idx].max(top[0].1);
            if img_idx == 0 {
                topk_first[b_idx] = top;
                if cfg.dump_chains {
                    let ordering = explanations[0].ordering();
                    for fraction in [0.25, 0.5, 0.75, 1.0] {
                        let count = ((fraction * d as f64).ceil() as usize).min(d);
                        let image = apply(x, &ordering[..count], &ctx)?;
                        chains.push((baseline_name.clone(), fraction, image));
                    }
                }
            }
        }
    }

    let n = cfg.image_count as f64;
    let mut rows = Vec::new();
    let mut concentration = Vec::new();
    let mut mean_traces = Vec::new();
    let (del_fracs, ins_fracs) = fractions_template.expect("grid ran at least one cell");
    for (m_idx, method) in methods.iter().enumerate() {
        for (b_idx, baseline_name) in cfg.baselines.iter().enumerate() {
            let cell = &cells[m_idx][b_idx];
            let deletion_auc = cell.deletion_auc / n;
            let insertion_auc = cell.insertion_auc / n;
            rows.push(ReportRow {
                method: method.name().to_string(),
                baseline: baseline_name.clone(),
                deletion_auc,
                insertion_auc,
                srg: insertion_auc - deletion_auc,
                final_logit_energy: if metric_cfg.record_energy {
                    cell.final_energy / n
                } else {
                    f64::NAN
                },
                path_ood: if cell.ood_count > 0 {
                    cell.ood_sum / cell.ood_count as f64
                } else {
                    f64::NAN
                },
                deletion_concentration: softmax_mode.then(|| cell.del_concentration / n),
                insertion_concentration: softmax_mode.then(|| cell.ins_concentration / n),
            });
            if softmax_mode {
                concentration.push(ConcentrationRow {
                    method: method.name().to_string(),
                    baseline: baseline_name.clone(),
                    metric: MetricKind::Deletion.name(),
                    concentration: cell.del_concentration / n,
                    ood_over_span: cell.del_span_ood / n,
                });
                concentration.push(ConcentrationRow {
                    method: method.name().to_string(),
                    baseline: baseline_name.clone(),
                    metric: MetricKind::Insertion.name(),
                    concentration: cell.ins_concentration / n,
                    ood_over_span: cell.ins_span_ood / n,
                });
            }
            for (kind, fracs, sums) in [
                (MetricKind::Deletion, &del_fracs, &cell.del_trace_sums),
                (MetricKind::Insertion, &ins_fracs, &cell.ins_trace_sums),
            ] {
                mean_traces.push(MeanTrace {
                    method: method.name().to_string(),
                    baseline: baseline_name.clone(),
                    metric: kind,
                    fractions: fracs.clone(),
                    scores: sums.iter().map(|s| s.score / n).collect(),
                    energies: sums.iter().map(|s| s.energy / n).collect(),
                    ood_raw: sums.iter().map(|s| s.ood_raw / n).collect(),
                    ood_normalized: sums.iter().map(|s| s.ood_norm / n).collect(),
                });
            }
        }
    }
    let topk = cfg
        .baselines
        .iter()
        .enumerate()
        .map(|(b_idx, name)| TopkRow {
            baseline: name.clone(),
            mean_top1: topk_mean[b_idx] / n,
            max_top1: topk_max[b_idx],
            top5: topk_first[b_idx].clone(),
        })
        .collect();

    Ok(BenchmarkOutput {
        rows,
        concentration,
        topk,
        mean_traces,
        featviz,
        model,
        chains,
    })
}
