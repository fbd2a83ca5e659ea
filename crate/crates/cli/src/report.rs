//! CSV emission: rankings, Kendall-tau instability matrices, the
//! information-removal/OOD trade-off, concentration statistics, baseline
//! classification, mean traces, and optional PGM chain dumps. All output is
//! byte-deterministic for a given config and seed.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use faithbench_core::stats::kendall_tau;

use crate::config::RunConfig;
use crate::pgm::write_pgm;
use crate::runner::{save_tensor_json, BenchmarkOutput, ReportRow};

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Distinct values in order of first appearance.
fn ordered_unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.iter().any(|o| o == v) {
            out.push(v.to_string());
        }
    }
    out
}

pub fn rankings_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "method,baseline,deletion_auc,insertion_auc,srg,final_logit_energy,path_ood,deletion_concentration,insertion_concentration\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.baseline,
            fmt_f64(r.deletion_auc),
            fmt_f64(r.insertion_auc),
            fmt_f64(r.srg),
            fmt_f64(r.final_logit_energy),
            fmt_f64(r.path_ood),
            fmt_opt(r.deletion_concentration),
            fmt_opt(r.insertion_concentration),
        );
    }
    out
}

pub fn parse_rankings(text: &str) -> anyhow::Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            anyhow::bail!("rankings.csv line {}: expected 9 fields, got {}", i + 1, fields.len());
        }
        let opt = |s: &str| -> anyhow::Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse()?))
            }
        };
        rows.push(ReportRow {
            method: fields[0].to_string(),
            baseline: fields[1].to_string(),
            deletion_auc: fields[2].parse()?,
            insertion_auc: fields[3].parse()?,
            srg: fields[4].parse()?,
            final_logit_energy: fields[5].parse()?,
            path_ood: fields[6].parse()?,
            deletion_concentration: opt(fields[7])?,
            insertion_concentration: opt(fields[8])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankingMetric {
    Deletion,
    Insertion,
    Srg,
}

impl RankingMetric {
    fn pick(&self, row: &ReportRow) -> f64 {
        match self {
            RankingMetric::Deletion => row.deletion_auc,
            RankingMetric::Insertion => row.insertion_auc,
            RankingMetric::Srg => row.srg,
        }
    }
}

/// Baseline x baseline Kendall tau of the per-baseline method rankings.
/// The diagonal is 1 by definition (tau of fully tied rankings would
/// otherwise be 0).
pub fn tau_matrix(rows: &[ReportRow], metric: RankingMetric) -> anyhow::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let methods = ordered_unique(rows.iter().map(|r| r.method.as_str()));
    let baselines = ordered_unique(rows.iter().map(|r| r.baseline.as_str()));
    let ranking = |baseline: &str| -> Vec<f64> {
        methods
            .iter()
            .map(|m| {
                rows.iter()
                    .find(|r| r.method == *m && r.baseline == baseline)
                    .map(|r| metric.pick(r))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    let rankings: Vec<Vec<f64>> = baselines.iter().map(|b| ranking(b)).collect();
    let mut matrix = vec![vec![1.0; baselines.len()]; baselines.len()];
    for i in 0..baselines.len() {
        for j in i + 1..baselines.len() {
            let tau = kendall_tau(&rankings[i], &rankings[j])?;
            matrix[i][j] = tau;
            matrix[j][i] = tau;
        }
    }
    Ok((baselines, matrix))
}

pub fn tau_matrix_csv(baselines: &[String], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("baseline");
    for b in baselines {
        let _ = write!(out, ",{b}");
    }
    out.push('\n');
    for (b, row) in baselines.iter().zip(matrix) {
        let _ = write!(out, "{b}");
        for v in row {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Smallest off-diagonal entry of a tau matrix.
pub fn min_off_diagonal(matrix: &[Vec<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v < min {
                min = v;
            }
        }
    }
    min
}

/// Per-baseline mean final energy and mean path OOD (averaged over methods).
pub fn tradeoff_rows(rows: &[ReportRow]) -> Vec<(String, f64, f64)> {
    let baselines = ordered_unique(rows.iter().map(|r| r.baseline.as_str()));
    baselines
        .into_iter()
        .map(|b| {
            let cells: Vec<&ReportRow> = rows.iter().filter(|r| r.baseline == b).collect();
            let n = cells.len() as f64;
            let energy = cells.iter().map(|r| r.final_logit_energy).sum::<f64>() / n;
            let ood = cells.iter().map(|r| r.path_ood).sum::<f64>() / n;
            (b, energy, ood)
        })
        .collect()
}

pub fn tradeoff_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("baseline,final_logit_energy,mean_path_ood\n");
    for (baseline, energy, ood) in tradeoff_rows(rows) {
        let _ = writeln!(out, "{baseline},{},{}", fmt_f64(energy), fmt_f64(ood));
    }
    out
}

fn concentration_csv(output: &BenchmarkOutput) -> String {
    let mut out = String::from("method,baseline,metric,concentration,ood_over_span\n");
    for row in &output.concentration {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.method,
            row.baseline,
            row.metric,
            fmt_f64(row.concentration),
            fmt_f64(row.ood_over_span)
        );
    }
    out
}

fn topk_csv(output: &BenchmarkOutput) -> String {
    let mut out = String::from("baseline,mean_top1_softmax,max_top1_softmax");
    for i in 1..=5 {
        let _ = write!(out, ",class_{i},prob_{i}");
    }
    out.push('\n');
    for row in &output.topk {
        let _ = write!(
            out,
            "{},{},{}",
            row.baseline,
            fmt_f64(row.mean_top1),
            fmt_f64(row.max_top1)
        );
        for i in 0..5 {
            match row.top5.get(i) {
                Some((class, prob)) => {
                    let _ = write!(out, ",{class},{}", fmt_f64(*prob));
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes the complete artifact set for a finished run.
pub fn emit_report(output: &BenchmarkOutput, cfg: &RunConfig, outdir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(outdir)?;
    write(&outdir.join("rankings.csv"), &rankings_csv(&output.rows))?;
    emit_derived(&output.rows, outdir)?;
    write(&outdir.join("concentration.csv"), &concentration_csv(output))?;
    write(&outdir.join("baseline_topk.csv"), &topk_csv(output))?;

    let traces_dir = outdir.join("traces");
    std::fs::create_dir_all(&traces_dir)?;
    for trace in &output.mean_traces {
        let mut out = String::from("step,fraction,score,logit_energy,ood_raw,ood_normalized\n");
        for (i, fraction) in trace.fractions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                fmt_f64(*fraction),
                fmt_f64(trace.scores[i]),
                fmt_f64(trace.energies[i]),
                fmt_f64(trace.ood_raw[i]),
                fmt_f64(trace.ood_normalized[i]),
            );
        }
        let name = format!(
            "mean_{}_{}_{}.csv",
            trace.method,
            trace.baseline,
            trace.metric.name()
        );
        write(&traces_dir.join(name), &out)?;
    }

    if let Some(fv) = &output.featviz {
        save_tensor_json(&outdir.join("featviz_baseline.json"), &fv.image)?;
        write_pgm(&outdir.join("featviz_baseline.pgm"), &fv.image)?;
    }
    faithbench_core::model::save_model(&output.model, &outdir.join("model.json"))?;

    if !output.chains.is_empty() {
        let chains_dir = outdir.join("chains");
        std::fs::create_dir_all(&chains_dir)?;
        for (baseline, fraction, image) in &output.chains {
            let name = format!("{baseline}_f{:03}.pgm", (fraction * 100.0).round() as u32);
            write_pgm(&chains_dir.join(name), image)?;
        }
    }

    let echo = serde_json::to_string_pretty(cfg)?;
    write(&outdir.join("config.json"), &format!("{echo}\n"))?;
    Ok(())
}

/// (Re)derives the artifacts that depend only on rankings.csv: the three
/// tau matrices and the trade-off table.
pub fn emit_derived(rows: &[ReportRow], outdir: &Path) -> anyhow::Result<()> {
    for (metric, name) in [
        (RankingMetric::Deletion, "tau_matrix_deletion.csv"),
        (RankingMetric::Insertion, "tau_matrix_insertion.csv"),
        (RankingMetric::Srg, "tau_matrix_srg.csv"),
    ] {
        let (baselines, matrix) = tau_matrix(rows, metric)?;
        write(&outdir.join(name), &tau_matrix_csv(&baselines, &matrix))?;
    }
    write(&outdir.join("tradeoff.csv"), &tradeoff_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, baseline: &str, del: f64, ins: f64) -> ReportRow {
        ReportRow {
            method: method.into(),
            baseline: baseline.into(),
            deletion_auc: del,
            insertion_auc: ins,
            srg: ins - del,
            final_logit_energy: 1.0,
            path_ood: 0.5,
            deletion_concentration: Some(0.4),
            insertion_concentration: Some(0.9),
        }
    }

    #[test]
    fn single_row_has_fixed_header_and_one_line() {
        let csv = rankings_csv(&[row("saliency", "zero", 0.3, 0.7)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("method,baseline,deletion_auc"));
        assert!(lines[1].starts_with("saliency,zero,0.3,0.7,"));
    }

    #[test]
    fn rankings_round_trip_through_csv() {
        let rows = vec![row("saliency", "zero", 0.3, 0.7), row("rise", "zero", 0.2, 0.9)];
        let parsed = parse_rankings(&rankings_csv(&rows)).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].method, "rise");
        assert_eq!(parsed[1].deletion_auc, 0.2);
        assert_eq!(parsed[0].insertion_concentration, Some(0.9));
    }

    #[test]
    fn identical_rankings_give_unit_tau_matrix() {
        let rows = vec![
            row("saliency", "zero", 0.3, 0.7),
            row("rise", "zero", 0.2, 0.9),
            row("saliency", "mean", 0.6, 0.4),
            row("rise", "mean", 0.5, 0.8),
        ];
        let (baselines, matrix) = tau_matrix(&rows, RankingMetric::Deletion).unwrap();
        assert_eq!(baselines, vec!["zero".to_string(), "mean".to_string()]);
        assert_eq!(matrix, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn opposed_rankings_give_negative_tau() {
        let rows = vec![
            row("saliency", "zero", 0.1, 0.0),
            row("rise", "zero", 0.2, 0.0),
            row("gradient_input", "zero", 0.3, 0.0),
            row("saliency", "mean", 0.3, 0.0),
            row("rise", "mean", 0.2, 0.0),
            row("gradient_input", "mean", 0.1, 0.0),
        ];
        let (_, matrix) = tau_matrix(&rows, RankingMetric::Deletion).unwrap();
        assert_eq!(matrix[0][1], -1.0);
        assert_eq!(min_off_diagonal(&matrix), -1.0);
    }

    #[test]
    fn tradeoff_averages_over_methods() {
        let mut rows = vec![row("saliency", "zero", 0.3, 0.7), row("rise", "zero", 0.2, 0.9)];
        rows[0].path_ood = 0.4;
        rows[1].path_ood = 0.6;
        let t = tradeoff_rows(&rows);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].1, 1.0);
        assert!((t[0].2 - 0.5).abs() < 1e-15);
    }
}
