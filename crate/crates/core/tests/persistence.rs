//! Bundle round trips, tamper detection and byte-level reproducibility of
//! the file-producing commands.

mod common;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triagekit_core::bundle::{load_bundle, ModelBundle};
use triagekit_core::commands::{cmd_evaluate, cmd_pool, cmd_train, load_training_data, split, train_bundle};
use triagekit_core::config::RunConfig;

fn run_config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "seed = 3\n[paths]\ndata = \"applicants.csv\"\nschema = \"schema.toml\"\nout = \"out\"\n\
         [train]\nn_stages = 30\n[evaluate]\nbaseline_column = \"sat_total\"\n{extra}"
    );
    RunConfig::parse(&text, dir).unwrap()
}

fn workspace(n: usize) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic(n, 11).write(dir.path()).unwrap();
    let cfg = run_config(dir.path(), "");
    (dir, cfg)
}

fn fitted(cfg: &RunConfig) -> ModelBundle {
    let (schema, data) = load_training_data(cfg).unwrap();
    let (train, test) = split(cfg, &data).unwrap();
    train_bundle(cfg, schema, &train, &test).unwrap()
}

#[test]
fn bundle_round_trip_scores_identically() {
    let (_dir, cfg) = workspace(1500);
    let bundle = fitted(&cfg);
    let back = ModelBundle::from_json(&bundle.to_json().unwrap()).unwrap();
    assert_eq!(back, bundle);

    let (_, data) = load_training_data(&cfg).unwrap();
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    idx.truncate(100);
    let rows = data.select(&idx);
    let a = bundle.model.predict_proba(&bundle.pipeline.transform::<f64>(&rows.features).unwrap()).unwrap();
    let b = back.model.predict_proba(&back.pipeline.transform::<f64>(&rows.features).unwrap()).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn edited_bundle_fails_its_checksum() {
    let (_dir, cfg) = workspace(600);
    let text = fitted(&cfg).to_json().unwrap();
    let edited = text.replacen("\"seed\": 3", "\"seed\": 4", 1);
    assert_ne!(edited, text);
    let err = ModelBundle::from_json(&edited).unwrap_err().to_string();
    assert!(err.contains("checksum mismatch"), "{err}");

    let truncated = &text[..text.len() / 2];
    let err = ModelBundle::from_json(truncated).unwrap_err().to_string();
    assert!(err.contains("corrupted"), "{err}");
}

#[test]
fn newer_format_version_is_refused_by_name() {
    let (_dir, cfg) = workspace(600);
    let text = fitted(&cfg).to_json().unwrap();
    let future = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert_ne!(future, text);
    let err = ModelBundle::from_json(&future).unwrap_err().to_string();
    assert!(err.contains("unsupported version 2"), "{err}");
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn identical_seeds_give_identical_files() {
    let (dir, cfg) = workspace(1500);
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let mut c = cfg.clone();
        c.paths.out = dir.path().join(name);
        cmd_train(&c).unwrap();
        cmd_pool(&c, true).unwrap();
        cmd_evaluate(&c).unwrap();
        runs.push(files_under(&c.paths.out));
    }
    assert!(runs[0].len() >= 10, "{:?}", runs[0].iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(runs[0], runs[1]);

    let mut other = cfg.clone();
    other.set_seed(4);
    other.paths.out = dir.path().join("c");
    cmd_train(&other).unwrap();
    let a = std::fs::read(dir.path().join("a/bundle.json")).unwrap();
    let c = std::fs::read(dir.path().join("c/bundle.json")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn saved_bundle_loads_from_disk() {
    let (_dir, cfg) = workspace(600);
    let t = cmd_train(&cfg).unwrap();
    let b = load_bundle(&t.bundle_path).unwrap();
    assert_eq!(b.metadata.n_train + b.metadata.n_test, 600);
    assert_eq!(b.metadata.seed, 3);
}
