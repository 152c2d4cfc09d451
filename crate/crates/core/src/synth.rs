//! Seeded synthetic applicant generator.
//!
//! Each applicant gets a latent score
//! `u = Σ weight·z(numeric) + Σ effect(category) + Σ weight(phrase) + noise`,
//! and an admit label drawn from `Bernoulli(σ(a + u / temperature))`. The
//! intercept `a` is found by bisection so that the mean admit probability over
//! the generated rows equals `base_admit_rate`. Proxy columns (an "SAT-like"
//! score) are noisy affine transforms of the standardized latent score and do
//! not enter it.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::sigmoid;
use crate::schema::{
    write_dataset, Cell, ColumnRole, ColumnSpec, DatasetSchema, LabeledDataset, OutcomeVocabulary,
    RawDataset,
};

fn tags(t: &[&str]) -> BTreeSet<String> {
    t.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSpec {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Contribution of the standardized value to the latent score.
    pub weight: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub decimals: usize,
    #[serde(default)]
    pub groups: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    pub categories: Vec<String>,
    /// Relative sampling weights, one per category.
    pub frequencies: Vec<f64>,
    /// Latent-score effects, one per category.
    pub effects: Vec<f64>,
    #[serde(default)]
    pub groups: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseSpec {
    pub text: String,
    /// Probability a document mentions the phrase.
    pub rate: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSpec {
    pub name: String,
    pub phrases: Vec<PhraseSpec>,
    #[serde(default)]
    pub groups: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    pub name: String,
    pub mean: f64,
    pub scale: f64,
    /// Noise standard deviation relative to the standardized latent score.
    pub noise_sd: f64,
    pub min: f64,
    pub max: f64,
    /// Values are rounded to multiples of this step.
    pub step: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub groups: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    pub base_admit_rate: f64,
    pub seed: u64,
    pub latent_noise_sd: f64,
    /// Label noise temperature: labels follow σ(a + u / temperature).
    pub temperature: f64,
    pub id_column: String,
    pub outcome_column: String,
    pub numeric: Vec<NumericSpec>,
    pub categorical: Vec<CategoricalSpec>,
    pub text: Vec<TextSpec>,
    pub proxies: Vec<ProxySpec>,
}

fn numeric(name: &str, mean: f64, sd: f64, weight: f64, missing: f64, decimals: usize, groups: &[&str]) -> NumericSpec {
    NumericSpec {
        name: name.into(),
        mean,
        sd,
        weight,
        missing_rate: missing,
        decimals,
        groups: tags(groups),
    }
}

fn categorical(name: &str, cats: &[(&str, f64, f64)], groups: &[&str]) -> CategoricalSpec {
    CategoricalSpec {
        name: name.into(),
        categories: cats.iter().map(|c| c.0.to_string()).collect(),
        frequencies: cats.iter().map(|c| c.1).collect(),
        effects: cats.iter().map(|c| c.2).collect(),
        groups: tags(groups),
    }
}

fn phrases(list: &[(&str, f64, f64)]) -> Vec<PhraseSpec> {
    list.iter()
        .map(|&(text, rate, weight)| PhraseSpec {
            text: text.into(),
            rate,
            weight,
        })
        .collect()
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let yes_no = |p_yes: f64, effect: f64| [("yes", p_yes, effect), ("no", 1.0 - p_yes, 0.0)];
        // 30 home languages with Zipf-like frequencies; the tail falls under 1%.
        let languages: Vec<(String, f64)> = (0..30)
            .map(|k| (format!("lang{k:02}"), 1.0 / (k as f64 + 1.0).powf(1.6)))
            .collect();
        let language_spec = CategoricalSpec {
            name: "home_language".into(),
            categories: languages.iter().map(|l| l.0.clone()).collect(),
            frequencies: languages.iter().map(|l| l.1).collect(),
            effects: (0..30).map(|k| if k == 0 { 0.0 } else { 0.1 }).collect(),
            groups: BTreeSet::new(),
        };
        Self {
            n_rows: 10_000,
            base_admit_rate: 0.115,
            seed: 1,
            latent_noise_sd: 0.6,
            temperature: 0.6,
            id_column: "applicant_id".into(),
            outcome_column: "decision".into(),
            numeric: vec![
                numeric("gpa", 3.6, 0.3, 0.9, 0.03, 2, &["academic"]),
                numeric("class_rank_percentile", 70.0, 20.0, 0.4, 0.35, 0, &["academic"]),
                numeric("ap_courses", 5.0, 2.0, 0.5, 0.0, 0, &["academic"]),
                numeric("activity_hours", 12.0, 5.0, 0.25, 0.1, 1, &[]),
                numeric("age", 17.8, 0.5, 0.0, 0.0, 1, &["sensitive"]),
                numeric("family_income", 90.0, 40.0, 0.15, 0.25, 0, &["sensitive"]),
            ],
            categorical: vec![
                categorical(
                    "application_round",
                    &[("ED", 0.12, 1.0), ("RD", 0.88, 0.0)],
                    &[],
                ),
                categorical("urm", &yes_no(0.15, 1.1), &["sensitive", "urm"]),
                categorical("female", &yes_no(0.3, 0.6), &["sensitive", "female"]),
                categorical("first_generation", &yes_no(0.18, 0.4), &["sensitive"]),
                categorical("legacy", &yes_no(0.03, 1.2), &["legacy"]),
                categorical(
                    "region",
                    &[
                        ("northeast", 0.3, 0.0),
                        ("midwest", 0.15, 0.2),
                        ("south", 0.2, 0.1),
                        ("west", 0.2, 0.0),
                        ("international", 0.13, -0.3),
                        ("territories", 0.02, 0.5),
                    ],
                    &["sensitive"],
                ),
                categorical(
                    "intended_major",
                    &[
                        ("engineering", 0.25, -0.2),
                        ("computer science", 0.2, -0.3),
                        ("biology", 0.15, 0.0),
                        ("economics", 0.12, 0.0),
                        ("english", 0.06, 0.3),
                        ("history", 0.06, 0.3),
                        ("physics", 0.05, 0.1),
                        ("music", 0.03, 0.4),
                        ("undecided", 0.08, 0.0),
                    ],
                    &[],
                ),
                categorical(
                    "school_type",
                    &[
                        ("public", 0.7, 0.0),
                        ("private", 0.2, 0.1),
                        ("boarding", 0.06, 0.1),
                        ("charter", 0.03, 0.2),
                        ("homeschool", 0.007, 0.0),
                        ("other", 0.003, 0.0),
                    ],
                    &[],
                ),
                language_spec,
            ],
            text: vec![
                TextSpec {
                    name: "activities".into(),
                    phrases: phrases(&[
                        ("debate club", 0.25, 0.2),
                        ("varsity soccer", 0.2, 0.0),
                        ("science olympiad", 0.12, 0.5),
                        ("research internship", 0.08, 0.9),
                        ("volunteer tutoring", 0.3, 0.2),
                        ("part time job", 0.3, 0.1),
                        ("student council president", 0.06, 0.6),
                        ("robotics team", 0.15, 0.3),
                        ("church choir", 0.1, 0.0),
                        ("school newspaper editor", 0.07, 0.4),
                        ("founded nonprofit", 0.03, 1.0),
                        ("marching band", 0.15, 0.0),
                        ("math club", 0.2, 0.2),
                        ("summer camp counselor", 0.15, 0.0),
                    ]),
                    groups: BTreeSet::new(),
                },
                TextSpec {
                    name: "honors".into(),
                    phrases: phrases(&[
                        ("national merit finalist", 0.08, 0.8),
                        ("ap scholar", 0.3, 0.2),
                        ("honor roll", 0.6, 0.0),
                        ("state science fair winner", 0.04, 0.9),
                        ("usamo qualifier", 0.01, 1.2),
                        ("eagle scout", 0.03, 0.3),
                    ]),
                    groups: BTreeSet::new(),
                },
            ],
            proxies: vec![
                ProxySpec {
                    name: "sat_total".into(),
                    mean: 1350.0,
                    scale: 110.0,
                    noise_sd: 1.2,
                    min: 400.0,
                    max: 1600.0,
                    step: 10.0,
                    missing_rate: 0.0,
                    groups: tags(&["standardized_tests"]),
                },
                ProxySpec {
                    name: "toefl".into(),
                    mean: 100.0,
                    scale: 6.0,
                    noise_sd: 2.0,
                    min: 0.0,
                    max: 120.0,
                    step: 1.0,
                    missing_rate: 0.88,
                    groups: tags(&["standardized_tests"]),
                },
                ProxySpec {
                    name: "sat_subject_avg".into(),
                    mean: 700.0,
                    scale: 50.0,
                    noise_sd: 1.5,
                    min: 200.0,
                    max: 800.0,
                    step: 10.0,
                    missing_rate: 0.6,
                    groups: tags(&["sat_subject"]),
                },
            ],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_rows == 0 {
            return bad("n_rows must be >= 1".into());
        }
        if !(self.base_admit_rate > 0.0 && self.base_admit_rate < 1.0) {
            return bad("base_admit_rate must be in (0, 1)".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive".into());
        }
        if !(self.latent_noise_sd >= 0.0 && self.latent_noise_sd.is_finite()) {
            return bad("latent_noise_sd must be >= 0".into());
        }
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        for n in &self.numeric {
            if !(n.weight.is_finite() && n.mean.is_finite() && n.sd.is_finite() && n.sd >= 0.0) {
                return bad(format!("numeric {:?}: non-finite parameters", n.name));
            }
            if !rate_ok(n.missing_rate) {
                return bad(format!("numeric {:?}: missing_rate outside [0, 1)", n.name));
            }
        }
        for c in &self.categorical {
            let k = c.categories.len();
            if k == 0 || c.frequencies.len() != k || c.effects.len() != k {
                return bad(format!(
                    "categorical {:?}: categories, frequencies and effects must have equal nonzero length",
                    c.name
                ));
            }
            if c.frequencies.iter().any(|f| !(f.is_finite() && *f >= 0.0))
                || c.frequencies.iter().sum::<f64>() <= 0.0
                || c.effects.iter().any(|e| !e.is_finite())
            {
                return bad(format!("categorical {:?}: invalid frequencies or effects", c.name));
            }
        }
        for t in &self.text {
            if t.phrases.iter().any(|p| !(p.weight.is_finite() && (0.0..=1.0).contains(&p.rate))) {
                return bad(format!("text {:?}: invalid phrase", t.name));
            }
        }
        for p in &self.proxies {
            if !(p.scale.is_finite() && p.noise_sd.is_finite() && p.noise_sd >= 0.0 && p.min <= p.max && p.step > 0.0) {
                return bad(format!("proxy {:?}: invalid parameters", p.name));
            }
            if !rate_ok(p.missing_rate) {
                return bad(format!("proxy {:?}: missing_rate outside [0, 1)", p.name));
            }
        }
        Ok(())
    }

    /// Same column layout with every latent weight and effect set to zero.
    pub fn without_signal(mut self) -> Self {
        self.numeric.iter_mut().for_each(|n| n.weight = 0.0);
        self.categorical
            .iter_mut()
            .for_each(|c| c.effects.iter_mut().for_each(|e| *e = 0.0));
        self.text
            .iter_mut()
            .for_each(|t| t.phrases.iter_mut().for_each(|p| p.weight = 0.0));
        self
    }

    /// Admit probability of an applicant with latent score `latent`.
    pub fn label_probability(&self, intercept: f64, latent: f64) -> f64 {
        sigmoid(intercept + latent / self.temperature)
    }

    pub fn schema(&self) -> Result<DatasetSchema> {
        let mut cols = vec![ColumnSpec {
            name: self.id_column.clone(),
            role: ColumnRole::Identifier,
            groups: BTreeSet::new(),
        }];
        let spec = |name: &str, role, groups: &BTreeSet<String>| ColumnSpec {
            name: name.to_string(),
            role,
            groups: groups.clone(),
        };
        cols.extend(self.numeric.iter().map(|n| spec(&n.name, ColumnRole::Numeric, &n.groups)));
        cols.extend(self.proxies.iter().map(|p| spec(&p.name, ColumnRole::Numeric, &p.groups)));
        cols.extend(
            self.categorical
                .iter()
                .map(|c| spec(&c.name, ColumnRole::Categorical, &c.groups)),
        );
        cols.extend(self.text.iter().map(|t| spec(&t.name, ColumnRole::Text, &t.groups)));
        cols.push(ColumnSpec {
            name: self.outcome_column.clone(),
            role: ColumnRole::Outcome,
            groups: BTreeSet::new(),
        });
        DatasetSchema::new(cols, OutcomeVocabulary::default())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub raw: RawDataset,
    pub latent: Vec<f64>,
    /// Ground-truth admit probabilities.
    pub probabilities: Vec<f64>,
    pub intercept: f64,
}

impl SyntheticData {
    pub fn labeled(&self) -> Result<LabeledDataset> {
        self.raw.clone().into_labeled()
    }

    /// Writes `schema.toml` and `applicants.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let schema_path = dir.join("schema.toml");
        let data_path = dir.join("applicants.csv");
        std::fs::write(&schema_path, self.raw.schema().to_toml()).map_err(|e| Error::io(&schema_path, e))?;
        let f = std::fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        write_dataset(std::io::BufWriter::new(f), &self.raw)?;
        Ok((schema_path, data_path))
    }
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn fmt_num(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

/// Intercept `a` with mean σ(a + u/temperature) = rate, by bisection.
fn calibrate_intercept(cfg: &GeneratorConfig, latent: &[f64]) -> f64 {
    let mean_p = |a: f64| {
        latent.iter().map(|&u| cfg.label_probability(a, u)).sum::<f64>() / latent.len() as f64
    };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < cfg.base_admit_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let schema = cfg.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_rows;
    let n_proxy = cfg.proxies.len();
    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);

    for i in 0..n {
        let mut row: Vec<Cell> = Vec::with_capacity(schema.len());
        row.push(Some(format!("A{:06}", i + 1)));
        let mut u = 0.0;
        let mut numeric_cells = Vec::with_capacity(cfg.numeric.len());
        for spec in &cfg.numeric {
            let z: f64 = StandardNormal.sample(&mut rng);
            let missing = rng.random::<f64>() < spec.missing_rate;
            u += spec.weight * z;
            numeric_cells.push((!missing).then(|| fmt_num(spec.mean + spec.sd * z, spec.decimals)));
        }
        row.extend(numeric_cells);
        // Proxy cells are filled after the latent scores are standardized.
        row.extend(std::iter::repeat_n(None, n_proxy));
        for spec in &cfg.categorical {
            let k = pick(&mut rng, &spec.frequencies);
            u += spec.effects[k];
            row.push(Some(spec.categories[k].clone()));
        }
        for spec in &cfg.text {
            let mut mentioned = Vec::new();
            for p in &spec.phrases {
                if rng.random::<f64>() < p.rate {
                    u += p.weight;
                    mentioned.push(p.text.as_str());
                }
            }
            row.push((!mentioned.is_empty()).then(|| mentioned.join(", ")));
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        u += cfg.latent_noise_sd * noise;
        row.push(None);
        rows.push(row);
        latent.push(u);
    }

    let intercept = calibrate_intercept(cfg, &latent);
    let mean_u = latent.iter().sum::<f64>() / n as f64;
    let sd_u = (latent.iter().map(|u| (u - mean_u).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let probabilities: Vec<f64> = latent
        .iter()
        .map(|&u| cfg.label_probability(intercept, u))
        .collect();
    let proxy_at = 1 + cfg.numeric.len();
    let outcome_at = schema.len() - 1;
    for (i, row) in rows.iter_mut().enumerate() {
        let admitted = rng.random::<f64>() < probabilities[i];
        let r = rng.random::<f64>();
        let status = if admitted {
            if r < 0.9 { "Admitted" } else { "Conditionally Admitted" }
        } else if r < 0.8 {
            "Denied"
        } else if r < 0.92 {
            "Wait-listed"
        } else {
            "Withdrawn"
        };
        row[outcome_at] = Some(status.to_string());
        let z = (latent[i] - mean_u) / sd_u;
        for (k, p) in cfg.proxies.iter().enumerate() {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let missing = rng.random::<f64>() < p.missing_rate;
            let v = (p.mean + p.scale * (z + p.noise_sd * eps)).clamp(p.min, p.max);
            let v = (v / p.step).round() * p.step;
            row[proxy_at + k] = (!missing).then(|| fmt_num(v, 0));
        }
    }

    Ok(SyntheticData {
        raw: RawDataset::new(schema, rows)?,
        latent,
        probabilities,
        intercept,
    })
}
