//! The five workflow commands behind the `triagekit` binary. Each returns a
//! small summary for the caller to print; data goes to files.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use crate::ablation::{heuristic_scores, run_variants, AblationPlan, AblationReport};
use crate::bundle::{load_bundle, save_bundle, ModelBundle, TrainingMetadata};
use crate::config::{RowSelection, RunConfig};
use crate::error::{Error, Result};
use crate::featurize::fit_pipeline;
use crate::gbdt::fit_gbdt;
use crate::pooling::{quantile_pools, summarize_pools, top_k_pool};
use crate::report::{evaluate, write_assignment, write_evaluation, write_pool_summary, write_table, EvaluationInputs, EvaluationReport};
use crate::schema::{load_dataset, read_schema, split_indices, DatasetSchema, LabeledDataset};
use crate::stats::GroupFlags;
use crate::synth::{generate_dataset, GeneratorConfig};

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub schema_path: PathBuf,
    pub data_path: PathBuf,
    pub n_rows: usize,
    pub prevalence: f64,
}

pub fn cmd_synth(config: &GeneratorConfig, out: &Path) -> Result<SynthOutcome> {
    let data = generate_dataset(config)?;
    let prevalence = data.labeled()?.prevalence().unwrap_or(0.0);
    let (schema_path, data_path) = data.write(out)?;
    Ok(SynthOutcome {
        schema_path,
        data_path,
        n_rows: data.raw.n_rows(),
        prevalence,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_unique_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Data {
                path: "identifier column".into(),
                message: format!("duplicate id {id:?}"),
            });
        }
    }
    Ok(())
}

/// Schema, data and labels for training, deduplicated when configured.
pub fn load_training_data(cfg: &RunConfig) -> Result<(DatasetSchema, LabeledDataset)> {
    let schema = read_schema(&cfg.paths.schema)?;
    cfg.check_groups(&schema)?;
    let mut raw = load_dataset(&cfg.paths.data, &schema)?;
    if cfg.split.dedupe {
        raw = raw.dedupe();
    }
    let data = raw.into_labeled()?;
    check_unique_ids(&data.ids)?;
    Ok((schema, data))
}

/// The configured train/test split of `data`.
pub fn split(cfg: &RunConfig, data: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(data.len(), cfg.split.test_fraction, cfg.seed)?;
    Ok((data.select(&train), data.select(&test)))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle_path: PathBuf,
    pub manifest_path: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    pub train_prevalence: f64,
    pub test_prevalence: f64,
    pub n_features: usize,
    pub n_usable: usize,
}

pub fn train_bundle(
    cfg: &RunConfig,
    schema: DatasetSchema,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<ModelBundle> {
    let pipeline = fit_pipeline(&train.features, &cfg.pipeline)?;
    let mask = pipeline.mask_for_groups(&cfg.features.exclude, &cfg.features.include)?;
    let x = pipeline.transform::<f64>(&train.features)?;
    let model = fit_gbdt(&x, train.labels()?, &cfg.train, &mask)?;
    Ok(ModelBundle {
        schema,
        pipeline,
        model,
        metadata: TrainingMetadata {
            seed: cfg.seed,
            test_fraction: cfg.split.test_fraction,
            dedupe: cfg.split.dedupe,
            excluded_groups: cfg.features.exclude.clone(),
            included_groups: cfg.features.include.clone(),
            n_train: train.len(),
            n_test: test.len(),
            train_prevalence: train.prevalence().unwrap_or(0.0),
            test_prevalence: test.prevalence().unwrap_or(0.0),
            created_at: std::env::var("SOURCE_DATE_EPOCH").ok(),
        },
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (schema, data) = load_training_data(cfg)?;
    let (train_idx, test_idx) = split_indices(data.len(), cfg.split.test_fraction, cfg.seed)?;
    let (train, test) = (data.select(&train_idx), data.select(&test_idx));
    let bundle = train_bundle(cfg, schema, &train, &test)?;

    create_dir(&cfg.paths.out)?;
    let bundle_path = cfg.bundle_path();
    if let Some(dir) = bundle_path.parent() {
        create_dir(dir)?;
    }
    save_bundle(&bundle, &bundle_path)?;

    let test_set: HashSet<usize> = test_idx.into_iter().collect();
    let rows: Vec<Vec<String>> = data
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let side = if test_set.contains(&i) { "test" } else { "train" };
            vec![id.clone(), side.to_string()]
        })
        .collect();
    let manifest_path = cfg.manifest_path();
    if let Some(dir) = manifest_path.parent() {
        create_dir(dir)?;
    }
    write_table(&manifest_path, &["id", "split"], &rows)?;

    Ok(TrainOutcome {
        bundle_path,
        manifest_path,
        n_train: bundle.metadata.n_train,
        n_test: bundle.metadata.n_test,
        train_prevalence: bundle.metadata.train_prevalence,
        test_prevalence: bundle.metadata.test_prevalence,
        n_features: bundle.model.n_features,
        n_usable: bundle.model.feature_mask.count(),
    })
}

/// Ids listed under `split` in a manifest file.
pub fn read_manifest(path: &Path, split: &str) -> Result<BTreeSet<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "split"] {
        return Err(Error::Data {
            path: path.display().to_string(),
            message: "expected header id,split".into(),
        });
    }
    let mut ids = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if &rec[1] == split {
            ids.insert(rec[0].to_string());
        }
    }
    Ok(ids)
}

/// Rows to score, read with the bundle's own schema.
fn scoring_data(cfg: &RunConfig, bundle: &ModelBundle, require_labels: bool) -> Result<LabeledDataset> {
    let raw = load_dataset(&cfg.paths.data, &bundle.schema)?;
    let raw = match cfg.pool.rows {
        RowSelection::All => raw,
        RowSelection::Test => {
            let keep = read_manifest(&cfg.manifest_path(), "test")?;
            let ids = raw.ids();
            let idx: Vec<usize> = (0..raw.n_rows()).filter(|&i| keep.contains(&ids[i])).collect();
            if idx.len() != keep.len() {
                return Err(Error::Data {
                    path: cfg.paths.data.display().to_string(),
                    message: format!(
                        "manifest lists {} test ids but {} rows match",
                        keep.len(),
                        idx.len()
                    ),
                });
            }
            raw.select_rows(&idx)
        }
    };
    if raw.n_rows() == 0 {
        return Err(Error::invalid("no rows to score"));
    }
    if raw.outcome_absent() {
        if require_labels {
            return Err(Error::invalid("scoring data has no outcome labels"));
        }
        return Ok(raw.into_unlabeled());
    }
    raw.into_labeled()
}

fn score(bundle: &ModelBundle, data: &LabeledDataset) -> Result<Vec<f64>> {
    let x = bundle.pipeline.transform::<f64>(&data.features)?;
    bundle.model.predict_proba(&x)
}

#[derive(Debug, Clone)]
pub struct PoolOutcome {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub top_k: usize,
    pub dir: PathBuf,
}

/// Writes `pool_summary.csv`, `pool_assignment.csv` and `top_pool.csv`
/// under `<out>/pools`.
pub fn cmd_pool(cfg: &RunConfig, verbose: bool) -> Result<PoolOutcome> {
    let bundle = load_bundle(&cfg.bundle_path())?;
    let data = scoring_data(cfg, &bundle, false)?;
    let scores = score(&bundle, &data)?;
    let assignment = quantile_pools(&data.ids, &scores, cfg.pool.pools)?;
    let summary = summarize_pools(&assignment, data.labels.as_deref())?;
    let top_k = cfg.pool.top_k_for(data.len());
    let mut top = top_k_pool(&scores, top_k)?;
    top.sort_unstable();

    let dir = cfg.paths.out.join("pools");
    create_dir(&dir)?;
    write_pool_summary(&dir.join("pool_summary.csv"), &summary)?;
    write_assignment(&dir.join("pool_assignment.csv"), &assignment, verbose)?;
    let rows: Vec<Vec<String>> = top.iter().map(|&i| vec![data.ids[i].clone()]).collect();
    write_table(&dir.join("top_pool.csv"), &["id"], &rows)?;
    Ok(PoolOutcome {
        n: data.len(),
        sizes: summary.iter().map(|p| p.size).collect(),
        top_k,
        dir,
    })
}

fn report_groups(cfg: &RunConfig, data: &LabeledDataset) -> Result<Vec<GroupFlags>> {
    cfg.evaluate
        .report_groups
        .iter()
        .map(|g| {
            Ok(GroupFlags {
                name: g.clone(),
                flags: data.features.group_flags(g)?,
            })
        })
        .collect()
}

/// Evaluates the bundle on the configured rows and writes the report files
/// under `<out>/evaluation`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(EvaluationReport, PathBuf)> {
    let bundle = load_bundle(&cfg.bundle_path())?;
    cfg.check_groups(&bundle.schema)?;
    let data = scoring_data(cfg, &bundle, true)?;
    let scores = score(&bundle, &data)?;
    let baseline = cfg
        .evaluate
        .baseline_column
        .as_ref()
        .map(|c| Ok::<_, Error>((c.as_str(), heuristic_scores(&data, c)?)))
        .transpose()?;
    let groups = report_groups(cfg, &data)?;
    let n = data.len();
    let inputs = EvaluationInputs {
        scores: &scores,
        labels: data.labels()?,
        ids: &data.ids,
        baseline: baseline.as_ref().map(|(c, s)| (*c, s.as_slice())),
        groups: &groups,
        pools: cfg.pool.pools,
        top_k: cfg.pool.top_k_for(n),
        bottom_k: cfg.pool.bottom_k_for(n),
        bins: cfg.evaluate.histogram_bins,
    };
    let (report, _) = evaluate(&inputs)?;
    let dir = cfg.paths.out.join("evaluation");
    write_evaluation(&dir, &report)?;
    Ok((report, dir))
}

/// Runs the configured ablation matrix on the training split and writes the
/// report files under `<out>/ablation`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<(AblationReport, PathBuf)> {
    let (_, data) = load_training_data(cfg)?;
    let (train, test) = split(cfg, &data)?;
    let plan = AblationPlan {
        baseline_exclude: cfg
            .features
            .exclude
            .difference(&cfg.features.include)
            .cloned()
            .collect(),
        variants: cfg.ablation.variants.clone(),
        top_k: cfg.pool.top_k_for(test.len()),
        report_groups: cfg.evaluate.report_groups.clone(),
        heuristic_column: cfg.evaluate.baseline_column.clone(),
    };
    let report = run_variants(&train, &test, &cfg.pipeline, &cfg.train, &plan)?;
    let dir = cfg.paths.out.join("ablation");
    crate::report::write_ablation(&dir, &report)?;
    Ok((report, dir))
}
