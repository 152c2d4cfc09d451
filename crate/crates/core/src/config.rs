//! Run configuration (TOML). Relative paths resolve against the directory
//! holding the config file. See `config/run.toml` for an annotated file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablation::{default_baseline_exclude, default_variants, AblationVariant};
use crate::error::{Error, Result};
use crate::featurize::PipelineConfig;
use crate::gbdt::TrainConfig;
use crate::schema::DatasetSchema;
use crate::synth::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Defaults to `<out>/bundle.json`.
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    /// Defaults to `<out>/split_manifest.csv`.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub dedupe: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            dedupe: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSelection {
    /// Groups whose columns the model may not use.
    pub exclude: BTreeSet<String>,
    /// Groups re-enabled even if also excluded.
    pub include: BTreeSet<String>,
}

impl Default for FeatureSelection {
    fn default() -> Self {
        Self {
            exclude: default_baseline_exclude(),
            include: BTreeSet::new(),
        }
    }
}

/// Which rows `pool` and `evaluate` score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSelection {
    /// Rows listed as `test` in the split manifest.
    Test,
    /// Every row of the data file.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub pools: usize,
    /// Top-pool size; when absent, `top_fraction` of the scored rows.
    pub top_k: Option<usize>,
    pub top_fraction: f64,
    /// Bottom-pool size as a fraction of the scored rows.
    pub bottom_fraction: f64,
    pub rows: RowSelection,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            pools: 10,
            top_k: None,
            top_fraction: 0.57,
            bottom_fraction: 0.2,
            rows: RowSelection::Test,
        }
    }
}

impl PoolConfig {
    pub fn top_k_for(&self, n: usize) -> usize {
        self.top_k
            .unwrap_or_else(|| (n as f64 * self.top_fraction).round() as usize)
    }

    pub fn bottom_k_for(&self, n: usize) -> usize {
        (n as f64 * self.bottom_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Raw numeric column scored as the single-score baseline heuristic.
    pub baseline_column: Option<String>,
    pub report_groups: Vec<String>,
    pub histogram_bins: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            baseline_column: None,
            report_groups: vec!["urm".into(), "female".into(), "legacy".into()],
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub variants: Vec<AblationVariant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            variants: default_variants(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the train/test split and the boosting subsampler.
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// `seed` inside this table is ignored in favour of the top-level seed.
    #[serde(default)]
    pub train: TrainConfig<f64>,
    #[serde(default)]
    pub features: FeatureSelection,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data);
        fix(&mut self.paths.schema);
        fix(&mut self.paths.out);
        if let Some(b) = self.paths.bundle.as_mut() {
            fix(b);
        }
        if let Some(m) = self.paths.manifest.as_mut() {
            fix(m);
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.paths
            .bundle
            .clone()
            .unwrap_or_else(|| self.paths.out.join("bundle.json"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths
            .manifest
            .clone()
            .unwrap_or_else(|| self.paths.out.join("split_manifest.csv"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.test_fraction {} outside (0, 1)",
                self.split.test_fraction
            )));
        }
        self.pipeline.validate()?;
        self.train.validate()?;
        let p = &self.pool;
        if p.pools == 0 {
            return Err(Error::Config("pool.pools must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&p.top_fraction) || !(0.0..=1.0).contains(&p.bottom_fraction) {
            return Err(Error::Config("pool fractions must lie in [0, 1]".into()));
        }
        if self.evaluate.histogram_bins == 0 {
            return Err(Error::Config("evaluate.histogram_bins must be >= 1".into()));
        }
        let mut names = BTreeSet::new();
        for v in &self.ablation.variants {
            if !names.insert(&v.name) {
                return Err(Error::Config(format!("duplicate ablation variant {:?}", v.name)));
            }
        }
        Ok(())
    }

    /// Every group this config names must be carried by some schema column.
    pub fn check_groups(&self, schema: &DatasetSchema) -> Result<()> {
        let known = schema.groups();
        let named = self
            .features
            .exclude
            .iter()
            .chain(&self.features.include)
            .chain(&self.evaluate.report_groups)
            .chain(self.ablation.variants.iter().flat_map(|v| v.exclude.iter().chain(&v.include)));
        for g in named {
            if !known.contains(g) {
                return Err(Error::UnknownGroup(g.clone()));
            }
        }
        if let Some(col) = &self.evaluate.baseline_column {
            if schema.index_of(col).is_none() {
                return Err(Error::Config(format!("unknown baseline column {col:?}")));
            }
        }
        Ok(())
    }
}

pub fn load_generator_config(path: &Path) -> Result<GeneratorConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(
            "seed = 7\n[paths]\ndata = \"d.csv\"\nschema = \"s.toml\"\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.paths.data, Path::new("/base/d.csv"));
        assert_eq!(cfg.bundle_path(), Path::new("/base/out/bundle.json"));
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.pool.pools, 10);
        assert_eq!(cfg.ablation.variants.len(), 4);
        assert_eq!(cfg.pool.top_k_for(1000), 570);
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        let head = "[paths]\ndata = \"d\"\nschema = \"s\"\n";
        assert!(RunConfig::parse(&format!("{head}[split]\ntest_fraction = 1.5\n"), base).is_err());
        assert!(RunConfig::parse(&format!("{head}[train]\nlearning_rate = 0.0\n"), base).is_err());
        assert!(RunConfig::parse(&format!("{head}[pool]\npools = 0\n"), base).is_err());
        assert!(RunConfig::parse(&format!("{head}bogus = 1\n"), base).is_err());
        assert!(RunConfig::parse("seed = 1\n", base).is_err());
    }

    #[test]
    fn shipped_example_configs_parse() {
        // Apart from paths and the baseline column, the annotated file spells out defaults.
        let dir = Path::new("config");
        let run = RunConfig::parse(include_str!("../../../config/run.toml"), dir).unwrap();
        let head = "seed = 1\n[paths]\ndata = \"../synthetic/applicants.csv\"\n\
                    schema = \"../synthetic/schema.toml\"\nout = \"../run\"\n\
                    [evaluate]\nbaseline_column = \"sat_total\"\n";
        assert_eq!(run, RunConfig::parse(head, dir).unwrap());
        let gen: GeneratorConfig = toml::from_str(include_str!("../../../config/synth.toml")).unwrap();
        gen.validate().unwrap();
    }
}
