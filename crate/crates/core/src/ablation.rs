//! Feature-group ablations: refit the same model with feature groups removed
//! or re-enabled and compare Top-pool capture, composition and recall curves
//! against the first (reference) variant.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{fit_pipeline, FeatureMask, PipelineConfig};
use crate::gbdt::{fit_gbdt, TrainConfig};
use crate::pooling::top_k_pool;
use crate::schema::LabeledDataset;
use crate::stats::{
    group_composition, recall_at_k_curve, two_prop_chisq, ChiSqResult, Cohort, CompositionRow,
    GroupFlags, RecallCurve,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    #[serde(default)]
    pub exclude: BTreeSet<String>,
    /// Groups re-enabled although the baseline configuration excludes them.
    #[serde(default)]
    pub include: BTreeSet<String>,
}

impl AblationVariant {
    pub fn new(name: &str, exclude: &[&str], include: &[&str]) -> Self {
        Self {
            name: name.into(),
            exclude: exclude.iter().map(|s| s.to_string()).collect(),
            include: include.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub const STANDARDIZED_TESTS: &str = "standardized_tests";
pub const SAT_SUBJECT: &str = "sat_subject";
pub const SENSITIVE: &str = "sensitive";

/// The four-model matrix: the baseline (required tests excluded by the
/// baseline configuration), minus SAT subject scores, plus standardized
/// tests, minus sensitive attributes.
pub fn default_variants() -> Vec<AblationVariant> {
    vec![
        AblationVariant::new("baseline", &[], &[]),
        AblationVariant::new("remove_sat_subject", &[SAT_SUBJECT], &[]),
        AblationVariant::new("add_standardized_tests", &[], &[STANDARDIZED_TESTS]),
        AblationVariant::new("remove_sensitive", &[SENSITIVE], &[]),
    ]
}

pub fn default_baseline_exclude() -> BTreeSet<String> {
    [STANDARDIZED_TESTS.to_string()].into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub baseline_exclude: BTreeSet<String>,
    pub variants: Vec<AblationVariant>,
    pub top_k: usize,
    pub report_groups: Vec<String>,
    /// Raw numeric column scored as a single-score heuristic, if any.
    pub heuristic_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    /// Number of feature columns the model could use (0 for a heuristic).
    pub features_used: usize,
    pub top_k_hits: usize,
    pub top_k_capture: f64,
    pub composition: CompositionRow<f64>,
    /// Capture compared with the reference variant; `None` for the
    /// reference itself or when the test is undefined.
    pub chisq_vs_reference: Option<ChiSqResult<f64>>,
    pub recall_curve: RecallCurve<f64>,
    /// Individual scores stay out of exported reports.
    #[serde(skip)]
    pub test_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub top_k: usize,
    pub n_test: usize,
    pub positives: usize,
    pub applicant_pool: CompositionRow<f64>,
    pub admitted_class: CompositionRow<f64>,
    pub variants: Vec<VariantResult>,
    pub heuristic: Option<VariantResult>,
}

/// Columns excluded by a variant: the baseline exclusions plus the variant's
/// own, minus the groups it re-enables.
pub fn effective_groups(
    baseline_exclude: &BTreeSet<String>,
    variant: &AblationVariant,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if let Some(g) = variant.exclude.intersection(&variant.include).next() {
        return Err(Error::invalid(format!(
            "variant {:?} both excludes and includes {g:?}",
            variant.name
        )));
    }
    let exclude = baseline_exclude
        .union(&variant.exclude)
        .filter(|g| !variant.include.contains(*g))
        .cloned()
        .collect();
    Ok((exclude, variant.include.clone()))
}

fn evaluate_scores(
    name: &str,
    features_used: usize,
    scores: Vec<f64>,
    labels: &[u8],
    k: usize,
    groups: &[GroupFlags],
) -> Result<VariantResult> {
    let top = top_k_pool(&scores, k)?;
    let hits = top.iter().filter(|&&i| labels[i] == 1).count();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let composition = group_composition(
        &[Cohort {
            label: name.to_string(),
            members: top,
        }],
        groups,
    )?
    .remove(0);
    Ok(VariantResult {
        name: name.to_string(),
        features_used,
        top_k_hits: hits,
        top_k_capture: hits as f64 / positives as f64,
        composition,
        chisq_vs_reference: None,
        recall_curve: recall_at_k_curve(&scores, labels)?,
        test_scores: scores,
    })
}

/// Capture test with N = total test admits for both sides. Undefined tests
/// (both capture all or none) yield `None`.
pub fn capture_chisq(hits: usize, reference_hits: usize, positives: usize) -> Result<Option<ChiSqResult<f64>>> {
    match two_prop_chisq(hits, positives, reference_hits, positives) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Statistic(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_variants(
    train: &LabeledDataset,
    test: &LabeledDataset,
    pipeline_config: &PipelineConfig,
    train_config: &TrainConfig<f64>,
    plan: &AblationPlan,
) -> Result<AblationReport> {
    if plan.variants.is_empty() {
        return Err(Error::invalid("no ablation variants"));
    }
    if plan.top_k > test.len() {
        return Err(Error::invalid(format!(
            "top_k {} exceeds {} test rows",
            plan.top_k,
            test.len()
        )));
    }
    let y_train = train.labels()?;
    let y_test = test.labels()?;
    let positives = y_test.iter().filter(|&&l| l == 1).count();

    let pipeline = fit_pipeline(&train.features, pipeline_config)?;
    let masks: Vec<FeatureMask> = plan
        .variants
        .iter()
        .map(|v| {
            let (exclude, include) = effective_groups(&plan.baseline_exclude, v)?;
            pipeline.mask_for_groups(&exclude, &include)
        })
        .collect::<Result<_>>()?;
    let x_train = pipeline.transform::<f64>(&train.features)?;
    let x_test = pipeline.transform::<f64>(&test.features)?;

    let groups: Vec<GroupFlags> = plan
        .report_groups
        .iter()
        .map(|g| {
            Ok(GroupFlags {
                name: g.clone(),
                flags: test.features.group_flags(g)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut variants: Vec<VariantResult> = plan
        .variants
        .par_iter()
        .zip(masks.par_iter())
        .map(|(v, mask)| {
            let model = fit_gbdt(&x_train, y_train, train_config, mask)?;
            let scores = model.predict_proba(&x_test)?;
            evaluate_scores(&v.name, mask.count(), scores, y_test, plan.top_k, &groups)
        })
        .collect::<Result<_>>()?;

    let reference_hits = variants[0].top_k_hits;
    for v in variants.iter_mut().skip(1) {
        v.chisq_vs_reference = capture_chisq(v.top_k_hits, reference_hits, positives)?;
    }

    let heuristic = plan
        .heuristic_column
        .as_ref()
        .map(|col| {
            let scores = heuristic_scores(test, col)?;
            let mut r = evaluate_scores(&format!("heuristic:{col}"), 0, scores, y_test, plan.top_k, &groups)?;
            r.chisq_vs_reference = capture_chisq(r.top_k_hits, reference_hits, positives)?;
            Ok::<_, Error>(r)
        })
        .transpose()?;

    let everyone: Vec<usize> = (0..test.len()).collect();
    let admitted: Vec<usize> = everyone.iter().copied().filter(|&i| y_test[i] == 1).collect();
    let mut reference_rows = group_composition(
        &[
            Cohort {
                label: "applicant_pool".into(),
                members: everyone,
            },
            Cohort {
                label: "admitted_class".into(),
                members: admitted,
            },
        ],
        &groups,
    )?;
    let admitted_class = reference_rows.pop().expect("two rows");
    let applicant_pool = reference_rows.pop().expect("two rows");

    Ok(AblationReport {
        top_k: plan.top_k,
        n_test: test.len(),
        positives,
        applicant_pool,
        admitted_class,
        variants,
        heuristic,
    })
}

/// Scores from a raw numeric column; missing or unparseable cells rank last.
pub fn heuristic_scores(data: &LabeledDataset, column: &str) -> Result<Vec<f64>> {
    Ok(data
        .features
        .numeric_column(column)?
        .into_iter()
        .map(|v| v.unwrap_or(f64::NEG_INFINITY))
        .collect())
}
