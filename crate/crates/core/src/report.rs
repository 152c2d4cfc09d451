//! Evaluation of a scored test set and the plot-ready files written by the
//! CLI. All writers are deterministic: rows follow pool, rank or declared
//! order, and floats print in shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ablation::{capture_chisq, AblationReport};
use crate::error::{Error, Result};
use crate::pooling::{quantile_pools, summarize_pools, summarize_subset, PoolAssignment, PoolSummary};
use crate::stats::{
    group_composition, pearson_r, rank_descending, recall_at_k_curve, score_histogram, ChiSqResult,
    Cohort, CompositionRow, GroupFlags, RecallCurve, ScoreHistogram,
};

/// Inputs to [`evaluate`]. `baseline` is a named single-score heuristic;
/// higher scores rank first.
#[derive(Debug, Clone)]
pub struct EvaluationInputs<'a> {
    pub scores: &'a [f64],
    pub labels: &'a [u8],
    pub ids: &'a [String],
    pub baseline: Option<(&'a str, &'a [f64])>,
    pub groups: &'a [GroupFlags],
    pub pools: usize,
    pub top_k: usize,
    pub bottom_k: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureComparison {
    /// `top_k` or `bottom_k`.
    pub cohort: String,
    pub k: usize,
    pub model_hits: usize,
    pub model_capture: f64,
    pub baseline_hits: Option<usize>,
    pub baseline_capture: Option<f64>,
    pub chisq: Option<ChiSqResult<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCalibration {
    pub group: String,
    pub pools: Vec<PoolSummary<f64>>,
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub positives: usize,
    pub baseline_column: Option<String>,
    pub capture: Vec<CaptureComparison>,
    pub recall_curve: RecallCurve<f64>,
    pub baseline_recall_curve: Option<RecallCurve<f64>>,
    pub composition: Vec<CompositionRow<f64>>,
    pub calibration: Vec<PoolSummary<f64>>,
    /// Correlation of predicted and actual rates over the pools; `None` when
    /// either is constant.
    pub calibration_r: Option<f64>,
    pub group_calibration: Vec<GroupCalibration>,
    pub histogram: ScoreHistogram<f64>,
}

fn pool_correlation(pools: &[PoolSummary<f64>]) -> Option<f64> {
    let predicted: Vec<f64> = pools.iter().map(|p| p.predicted_rate).collect();
    let actual: Vec<f64> = pools.iter().filter_map(|p| p.actual_rate).collect();
    if actual.len() != predicted.len() {
        return None;
    }
    pearson_r(&predicted, &actual).ok()
}

fn hits(members: &[usize], labels: &[u8]) -> usize {
    members.iter().filter(|&&i| labels[i] == 1).count()
}

fn top_and_bottom(scores: &[f64], top_k: usize, bottom_k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let order = rank_descending(scores)?;
    let n = order.len();
    Ok((order[..top_k].to_vec(), order[n - bottom_k..].to_vec()))
}

pub fn evaluate(inp: &EvaluationInputs<'_>) -> Result<(EvaluationReport, PoolAssignment<f64>)> {
    let n = inp.scores.len();
    if inp.labels.len() != n || inp.ids.len() != n {
        return Err(Error::Shape("scores, labels and ids differ in length".into()));
    }
    if inp.top_k > n || inp.bottom_k > n {
        return Err(Error::invalid(format!(
            "top/bottom sizes ({}, {}) exceed {n} rows",
            inp.top_k, inp.bottom_k
        )));
    }
    if let Some((name, b)) = inp.baseline {
        if b.len() != n {
            return Err(Error::Shape(format!("baseline {name:?} has {} rows, expected {n}", b.len())));
        }
    }
    let positives = inp.labels.iter().filter(|&&l| l == 1).count();
    let recall_curve = recall_at_k_curve(inp.scores, inp.labels)?;

    let (top, bottom) = top_and_bottom(inp.scores, inp.top_k, inp.bottom_k)?;
    let (top_hits, bottom_hits) = (hits(&top, inp.labels), hits(&bottom, inp.labels));
    let capture_of = |h: usize| h as f64 / positives as f64;

    let mut cohorts = vec![Cohort {
        label: "applicant_pool".into(),
        members: (0..n).collect(),
    }];
    let mut capture = Vec::with_capacity(2);
    let mut baseline_recall_curve = None;
    match inp.baseline {
        Some((name, b)) => {
            let (btop, bbottom) = top_and_bottom(b, inp.top_k, inp.bottom_k)?;
            let (bt, bb) = (hits(&btop, inp.labels), hits(&bbottom, inp.labels));
            for (cohort, k, mh, bh) in [("top_k", inp.top_k, top_hits, bt), ("bottom_k", inp.bottom_k, bottom_hits, bb)] {
                capture.push(CaptureComparison {
                    cohort: cohort.into(),
                    k,
                    model_hits: mh,
                    model_capture: capture_of(mh),
                    baseline_hits: Some(bh),
                    baseline_capture: Some(capture_of(bh)),
                    chisq: capture_chisq(mh, bh, positives)?,
                });
            }
            baseline_recall_curve = Some(recall_at_k_curve(b, inp.labels)?);
            cohorts.push(Cohort {
                label: format!("baseline_top:{name}"),
                members: btop,
            });
        }
        None => {
            for (cohort, k, mh) in [("top_k", inp.top_k, top_hits), ("bottom_k", inp.bottom_k, bottom_hits)] {
                capture.push(CaptureComparison {
                    cohort: cohort.into(),
                    k,
                    model_hits: mh,
                    model_capture: capture_of(mh),
                    baseline_hits: None,
                    baseline_capture: None,
                    chisq: None,
                });
            }
        }
    }
    cohorts.push(Cohort {
        label: "model_top".into(),
        members: top,
    });
    cohorts.push(Cohort {
        label: "admitted_class".into(),
        members: (0..n).filter(|&i| inp.labels[i] == 1).collect(),
    });
    let composition = group_composition(&cohorts, inp.groups)?;

    let assignment = quantile_pools(inp.ids, inp.scores, inp.pools)?;
    let calibration = summarize_pools(&assignment, Some(inp.labels))?;
    let calibration_r = pool_correlation(&calibration);
    let group_calibration = inp
        .groups
        .iter()
        .map(|g| {
            let pools = summarize_subset(&assignment, Some(inp.labels), Some(&g.flags))?;
            Ok(GroupCalibration {
                group: g.name.clone(),
                pearson_r: pool_correlation(&pools),
                pools,
            })
        })
        .collect::<Result<_>>()?;
    let histogram = score_histogram(inp.scores, inp.labels, inp.bins)?;

    Ok((
        EvaluationReport {
            n,
            positives,
            baseline_column: inp.baseline.map(|(name, _)| name.to_string()),
            capture,
            recall_curve,
            baseline_recall_curve,
            composition,
            calibration,
            calibration_r,
            group_calibration,
            histogram,
        },
        assignment,
    ))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes a delimited table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const POOL_HEADER: [&str; 7] = [
    "pool_index",
    "size",
    "predicted_rate",
    "admits",
    "actual_rate",
    "ci_low",
    "ci_high",
];

fn pool_row(p: &PoolSummary<f64>) -> Vec<String> {
    vec![
        p.pool.to_string(),
        p.size.to_string(),
        num(p.predicted_rate),
        opt(p.admits),
        opt(p.actual_rate),
        opt(p.ci_low),
        opt(p.ci_high),
    ]
}

pub fn write_pool_summary(path: &Path, pools: &[PoolSummary<f64>]) -> Result<()> {
    write_table(path, &POOL_HEADER, &pools.iter().map(pool_row).collect::<Vec<_>>())
}

/// `id,pool` per applicant in input order; `score` is added only when
/// `with_scores` is set.
pub fn write_assignment(path: &Path, a: &PoolAssignment<f64>, with_scores: bool) -> Result<()> {
    let mut header = vec!["id", "pool"];
    if with_scores {
        header.push("score");
    }
    let rows: Vec<Vec<String>> = a
        .members
        .iter()
        .map(|m| {
            let mut r = vec![m.id.clone(), m.pool.to_string()];
            if with_scores {
                r.push(num(m.score));
            }
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Recall curves side by side, one column per named curve.
pub fn write_recall_curves(path: &Path, curves: &[(&str, &RecallCurve<f64>)]) -> Result<()> {
    let mut header = vec!["k"];
    header.extend(curves.iter().map(|(name, _)| *name));
    let n = curves.first().map_or(0, |(_, c)| c.points.len());
    if curves.iter().any(|(_, c)| c.points.len() != n) {
        return Err(Error::Shape("recall curves differ in length".into()));
    }
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut r = vec![curves[0].1.points[i].0.to_string()];
            r.extend(curves.iter().map(|(_, c)| num(c.points[i].1)));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

const TEST_FIELDS: [&str; 4] = ["statistic", "df", "p_one_sided", "p_two_sided"];

fn test_cells(t: Option<&ChiSqResult<f64>>) -> [String; 4] {
    match t {
        Some(t) => [num(t.chi2), t.df.to_string(), num(t.p_one_sided), num(t.p_two_sided)],
        None => Default::default(),
    }
}

pub fn write_capture(path: &Path, rows: &[CaptureComparison]) -> Result<()> {
    let mut header = vec![
        "cohort",
        "k",
        "model_hits",
        "model_capture",
        "baseline_hits",
        "baseline_capture",
    ];
    header.extend(TEST_FIELDS);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            let mut r = vec![
                c.cohort.clone(),
                c.k.to_string(),
                c.model_hits.to_string(),
                num(c.model_capture),
                opt(c.baseline_hits),
                opt(c.baseline_capture),
            ];
            r.extend(test_cells(c.chisq.as_ref()));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

pub fn write_composition(path: &Path, rows: &[CompositionRow<f64>]) -> Result<()> {
    let mut header = vec!["cohort".to_string(), "size".to_string()];
    if let Some(first) = rows.first() {
        header.extend(first.fractions.iter().map(|(g, _)| g.clone()));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            let mut r = vec![c.label.clone(), c.size.to_string()];
            r.extend(c.fractions.iter().map(|(_, f)| num(*f)));
            r
        })
        .collect();
    write_table(path, &header, &body)
}

pub fn write_histogram(path: &Path, h: &ScoreHistogram<f64>) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..h.counts[0].len())
        .map(|b| {
            vec![
                num(h.edges[b]),
                num(h.edges[b + 1]),
                h.counts[0][b].to_string(),
                h.counts[1][b].to_string(),
                num(h.densities[0][b]),
                num(h.densities[1][b]),
            ]
        })
        .collect();
    write_table(
        path,
        &["bin_low", "bin_high", "count_0", "count_1", "density_0", "density_1"],
        &rows,
    )
}

/// Writes every evaluation table plus `report.json` into `dir`.
pub fn write_evaluation(dir: &Path, report: &EvaluationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut curves = vec![("model", &report.recall_curve)];
    if let (Some(name), Some(c)) = (&report.baseline_column, &report.baseline_recall_curve) {
        curves.push((name.as_str(), c));
    }
    write_recall_curves(&dir.join("recall_curve.csv"), &curves)?;
    write_capture(&dir.join("capture.csv"), &report.capture)?;
    write_composition(&dir.join("composition.csv"), &report.composition)?;
    write_pool_summary(&dir.join("calibration.csv"), &report.calibration)?;

    let mut header = vec!["group"];
    header.extend(POOL_HEADER);
    let rows: Vec<Vec<String>> = report
        .group_calibration
        .iter()
        .flat_map(|g| {
            g.pools.iter().map(move |p| {
                let mut r = vec![g.group.clone()];
                r.extend(pool_row(p));
                r
            })
        })
        .collect();
    write_table(&dir.join("calibration_groups.csv"), &header, &rows)?;

    let mut r_rows = vec![vec!["all".to_string(), opt(report.calibration_r)]];
    r_rows.extend(
        report
            .group_calibration
            .iter()
            .map(|g| vec![g.group.clone(), opt(g.pearson_r)]),
    );
    write_table(&dir.join("calibration_r.csv"), &["scope", "pearson_r"], &r_rows)?;
    write_histogram(&dir.join("histogram.csv"), &report.histogram)?;
    write_json(&dir.join("report.json"), report)
}

/// Table-shaped ablation output: one row per variant (then the heuristic,
/// applicant pool and admitted class), capture and group shares in percent.
pub fn ablation_table(report: &AblationReport) -> (Vec<String>, Vec<Vec<String>>) {
    let groups: Vec<String> = report
        .applicant_pool
        .fractions
        .iter()
        .map(|(g, _)| format!("{g}_pct"))
        .collect();
    let mut header: Vec<String> = ["variant", "features_used", "top_k", "admitted_captured", "admitted_capture_pct"]
        .map(String::from)
        .into();
    header.extend(groups);
    let pct = |f: f64| num(100.0 * f);
    let mut rows = Vec::new();
    for v in report.variants.iter().chain(&report.heuristic) {
        let mut r = vec![
            v.name.clone(),
            v.features_used.to_string(),
            report.top_k.to_string(),
            v.top_k_hits.to_string(),
            pct(v.top_k_capture),
        ];
        r.extend(v.composition.fractions.iter().map(|(_, f)| pct(*f)));
        rows.push(r);
    }
    for c in [&report.applicant_pool, &report.admitted_class] {
        let mut r = vec![c.label.clone(), String::new(), c.size.to_string(), String::new(), String::new()];
        r.extend(c.fractions.iter().map(|(_, f)| pct(*f)));
        rows.push(r);
    }
    (header, rows)
}

pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (header, rows) = ablation_table(report);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("ablation_table.csv"), &header, &rows)?;

    let reference = &report.variants[0].name;
    let mut header = vec!["variant", "reference"];
    header.extend(TEST_FIELDS);
    let tests: Vec<Vec<String>> = report
        .variants
        .iter()
        .skip(1)
        .chain(&report.heuristic)
        .map(|v| {
            let mut r = vec![v.name.clone(), reference.clone()];
            r.extend(test_cells(v.chisq_vs_reference.as_ref()));
            r
        })
        .collect();
    write_table(&dir.join("ablation_tests.csv"), &header, &tests)?;

    let curves: Vec<(&str, &RecallCurve<f64>)> = report
        .variants
        .iter()
        .chain(&report.heuristic)
        .map(|v| (v.name.as_str(), &v.recall_curve))
        .collect();
    write_recall_curves(&dir.join("ablation_curves.csv"), &curves)?;
    write_json(&dir.join("ablation_report.json"), report)
}
