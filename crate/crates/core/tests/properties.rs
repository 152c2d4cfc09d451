mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use triagekit_core::featurize::{fit_pipeline, FeatureKind, FeatureMatrix, FeatureMask, PipelineConfig};
use triagekit_core::gbdt::{fit_gbdt, TrainConfig, TreeNode};
use triagekit_core::pooling::{pool_sizes, quantile_pools, summarize_pools, top_k_pool};
use triagekit_core::schema::{read_dataset, split_indices, write_dataset, ColumnRole, DatasetSchema, OutcomeVocabulary};
use triagekit_core::stats::{
    clopper_pearson, lower_tail, pearson_r, recall_at_k_curve, two_prop_chisq, upper_tail,
};

use common::{col, mixed_schema, raw};

fn cell() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        1 => Just(None),
        4 => "[a-zA-Z0-9 ,\"'\n;.-]{1,12}".prop_map(Some),
    ]
}

fn category() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        1 => Just(None),
        8 => prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(|s| Some(s.to_string())),
    ]
}

fn document() -> impl Strategy<Value = Option<String>> {
    let words = prop::sample::select(vec!["math", "club", "debate", "robotics", "team", "a", "7", "chem"]);
    prop_oneof![
        1 => Just(None),
        6 => prop::collection::vec(words, 0..7).prop_map(|w| Some(w.join(" "))),
    ]
}

fn numeric() -> impl Strategy<Value = Option<String>> {
    prop_oneof![1 => Just(None), 5 => (-1000i32..1000).prop_map(|v| Some(format!("{}", v as f64 / 10.0)))]
}

fn mixed_rows(max: usize) -> impl Strategy<Value = Vec<Vec<Option<String>>>> {
    prop::collection::vec((numeric(), category(), document(), any::<bool>()), 1..max).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (n, c, t, y))| {
                vec![
                    Some(format!("r{i}")),
                    n,
                    c,
                    t,
                    Some(if y { "Admitted" } else { "Denied" }.to_string()),
                ]
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn delimited_round_trip(rows in prop::collection::vec(prop::collection::vec(cell(), 5), 0..20)) {
        let schema = mixed_schema();
        let data = raw(schema.clone(), rows);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn split_is_a_seeded_partition(n in 1usize..400, f in 0.01f64..0.99, seed in any::<u64>()) {
        let (train, test) = split_indices(n, f, seed).unwrap();
        prop_assert_eq!(test.len(), (n as f64 * f + 0.5).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(train.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(test.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(split_indices(n, f, seed).unwrap(), (train, test));
    }

    #[test]
    fn featurization_invariants(rows in mixed_rows(60), cap in 1usize..6) {
        let data = raw(mixed_schema(), rows).into_labeled().unwrap();
        let cfg = PipelineConfig { tfidf_max_features_per_column: cap, ..PipelineConfig::default() };
        let p = fit_pipeline(&data.features, &cfg).unwrap();
        let x: FeatureMatrix<f64> = p.transform(&data.features).unwrap();
        let meta = x.meta();

        let count = |kind: FeatureKind, src: &str| meta.iter().filter(|m| m.kind == kind && m.source == src).count();
        let any_missing = data.features.column("num").unwrap().any(|v| v.is_none());
        let any_present = data.features.column("num").unwrap().any(|v| v.is_some());
        prop_assert_eq!(count(FeatureKind::Numeric, "num"), usize::from(any_present));
        prop_assert_eq!(count(FeatureKind::MissingIndicator, "num"), usize::from(any_missing));
        prop_assert!(count(FeatureKind::Tfidf, "txt") <= cap);
        prop_assert_eq!(x.n_cols(), meta.len());

        let onehot: Vec<usize> = (0..meta.len()).filter(|&j| meta[j].kind == FeatureKind::Onehot).collect();
        let text: Vec<usize> = (0..meta.len()).filter(|&j| meta[j].kind == FeatureKind::Tfidf).collect();
        for row in x.rows() {
            let ones = onehot.iter().filter(|&&j| row[j] == 1.0).count();
            let zeros = onehot.iter().filter(|&&j| row[j] == 0.0).count();
            prop_assert_eq!((ones, zeros), (1, onehot.len() - 1));
            let norm: f64 = text.iter().map(|&j| row[j] * row[j]).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "block norm {}", norm);
        }
        // Transforming must not alter the fitted state.
        let before = p.clone();
        let _: FeatureMatrix<f64> = p.transform(&data.features).unwrap();
        prop_assert_eq!(p, before);
    }

    #[test]
    fn mask_excludes_every_tagged_column(
        tags in prop::collection::vec(prop::collection::btree_set(prop::sample::select(vec!["g1", "g2", "g3"]), 0..3), 3),
        exclude in prop::collection::btree_set(prop::sample::select(vec!["g1", "g2", "g3"]), 0..3),
        include in prop::collection::btree_set(prop::sample::select(vec!["g1", "g2", "g3"]), 0..2),
    ) {
        let include: BTreeSet<String> = include.difference(&exclude).map(|s| s.to_string()).collect();
        let exclude: BTreeSet<String> = exclude.into_iter().map(String::from).collect();
        let t = |k: usize| tags[k].iter().copied().collect::<Vec<_>>();
        let schema = DatasetSchema::new(
            vec![
                col("a", ColumnRole::Numeric, &t(0)),
                col("b", ColumnRole::Categorical, &t(1)),
                col("c", ColumnRole::Numeric, &t(2)),
                col("y", ColumnRole::Outcome, &[]),
                col("anchor", ColumnRole::Numeric, &["g1", "g2", "g3"]),
            ],
            OutcomeVocabulary::default(),
        ).unwrap();
        let rows = vec![
            vec![Some("1".into()), Some("x".into()), None, Some("admitted".into()), Some("0".into())],
            vec![None, Some("y".into()), Some("2".into()), Some("denied".into()), Some("1".into())],
        ];
        let data = raw(schema, rows).into_labeled().unwrap();
        let p = fit_pipeline(&data.features, &PipelineConfig::default()).unwrap();
        let mask = p.mask_for_groups(&exclude, &include).unwrap();
        for (m, keep) in p.meta.iter().zip(&mask.0) {
            let excluded = !m.groups.is_disjoint(&exclude);
            let rescued = !m.groups.is_disjoint(&include);
            prop_assert_eq!(*keep, !excluded || rescued);
        }
        if include.is_empty() {
            for (m, _) in p.meta.iter().zip(&mask.0).filter(|(_, k)| **k) {
                prop_assert!(m.groups.is_disjoint(&exclude));
            }
        }
    }

    #[test]
    fn chisq_symmetry_and_z_relation(n1 in 1usize..400, n2 in 1usize..400, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let x1 = (a * n1 as f64) as usize;
        let x2 = (b * n2 as f64) as usize;
        let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
        prop_assume!(pooled > 0.0 && pooled < 1.0);
        let r = two_prop_chisq::<f64>(x1, n1, x2, n2).unwrap();
        let s = two_prop_chisq::<f64>(x2, n2, x1, n1).unwrap();
        prop_assert!((r.chi2 - s.chi2).abs() <= 1e-12 * r.chi2.max(1.0));
        prop_assert!((r.p_two_sided - s.p_two_sided).abs() <= 1e-12);
        let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
        let z = (p1 - p2) / (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        prop_assert!((r.chi2 - z * z).abs() <= 1e-9 * r.chi2.max(1.0));
        prop_assert!(r.chi2 >= 0.0 && (0.0..=1.0).contains(&r.p_two_sided));
        if r.difference != 0.0 {
            prop_assert!((r.p_one_sided - r.p_two_sided / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..30),
        noise in prop::collection::vec(-50.0f64..50.0, 30),
        a in 0.1f64..10.0, b in -100.0f64..100.0, c in 0.1f64..10.0, d in -100.0f64..100.0,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.5 * x + e).collect();
        let r = match pearson_r(&xs, &ys) { Ok(r) => r, Err(_) => return Ok(()) };
        let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let yt: Vec<f64> = ys.iter().map(|y| c * y + d).collect();
        let rt = pearson_r(&xt, &yt).unwrap();
        prop_assert!((r - rt).abs() < 1e-12, "{} vs {}", r, rt);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn recall_curve_is_monotone(scores in prop::collection::vec(0.0f64..1.0, 1..200), seed in any::<u64>()) {
        let labels: Vec<u8> = scores.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
        prop_assume!(labels.contains(&1));
        let c = recall_at_k_curve(&scores, &labels).unwrap();
        prop_assert_eq!(c.points.len(), scores.len());
        prop_assert!(c.points.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert_eq!(c.points.last().unwrap().1, 1.0);
    }

    #[test]
    fn pools_partition_and_order(scores in prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), 10..300), k in 1usize..=10) {
        let n = scores.len();
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let a = quantile_pools(&ids, &scores, k).unwrap();
        let sizes: Vec<usize> = (1..=k).map(|p| a.pool_members(p).len()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(&sizes, &pool_sizes(n, k));
        for p in 2..=k {
            let lo = a.pool_members(p).iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
            let hi = a.pool_members(p - 1).iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo >= hi);
        }
        let mut top = top_k_pool(&scores, sizes[k - 1]).unwrap();
        top.sort_unstable();
        prop_assert_eq!(top, a.pool_members(k));

        let summary = summarize_pools(&a, None).unwrap();
        let weighted: f64 = summary.iter().map(|s| s.predicted_rate * s.size as f64).sum::<f64>() / n as f64;
        let global: f64 = scores.iter().sum::<f64>() / n as f64;
        prop_assert!((weighted - global).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clopper_pearson_covers_and_inverts(n in 1usize..=20, level in prop::sample::select(vec![0.8, 0.9, 0.95, 0.99])) {
        let half = (1.0 - level) / 2.0;
        for x in 0..=n {
            let ci = clopper_pearson(x, n, level).unwrap();
            let phat = x as f64 / n as f64;
            prop_assert!(ci.low <= phat && phat <= ci.high);
            prop_assert!(0.0 <= ci.low && ci.high <= 1.0);
            if x > 0 {
                prop_assert!((upper_tail(x, n, ci.low) - half).abs() < 1e-8);
            }
            if x < n {
                prop_assert!((lower_tail(x, n, ci.high) - half).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn masked_columns_never_matter(
        rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 12..60),
        shuffle in prop::collection::vec(-5.0f64..5.0, 60),
    ) {
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r.0 + 0.3 * r.2 > 0.6)).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let x = FeatureMatrix::from_rows(&rows.iter().map(|r| vec![r.0, r.1, r.2]).collect::<Vec<_>>()).unwrap();
        let mask = FeatureMask(vec![true, false, true]);
        let cfg = TrainConfig { n_stages: 10, ..TrainConfig::default() };
        let model = fit_gbdt(&x, &y, &cfg, &mask).unwrap();
        let mut perturbed = x.clone();
        for (i, v) in shuffle.iter().take(x.n_rows()).enumerate() {
            perturbed.set(i, 1, *v);
        }
        let a = model.predict_proba(&x).unwrap();
        let b = model.predict_proba(&perturbed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
        for t in &model.trees {
            for node in t.nodes() {
                if let TreeNode::Split { feature, .. } = node {
                    prop_assert_ne!(*feature, 1);
                }
            }
        }
    }
}
