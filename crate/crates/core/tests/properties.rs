mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use subtype_core::explain::{DecisionTree, TreeParams};
use subtype_core::hdbscan::{self, ClusterLabels, HdbscanConfig};
use subtype_core::ingest::{self, Cohort};
use subtype_core::metrics::adjusted_rand_index;
use subtype_core::pipeline::{sha256_hex, PipelineConfig};
use subtype_core::preprocess::{self, assemble_matrix, inverse_logit_transform, logit_transform, N_FEATURES};
use subtype_core::report;
use subtype_core::synth::{self, DegradeSpec};
use subtype_core::umap::{self, Embedding2D, UmapConfig};

fn cohort(n: usize, seed: u64) -> Cohort {
    let files = synth::generate_cohort(&synth::default_paper_spec().with_n(n).with_seed(seed)).unwrap();
    let p = ingest::parse_admissions(files.admissions_csv.as_bytes(), files.vitals_csv.as_bytes()).unwrap();
    ingest::filter_cohort(&p.admissions, &p.vitals).unwrap()
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut common::rng(seed));
    p
}

fn permuted_cohort(c: &Cohort, perm: &[usize]) -> Cohort {
    Cohort { records: perm.iter().map(|&i| c.records[i].clone()).collect(), filter_log: c.filter_log }
}

/// Label per row id, independent of row order.
fn canonical(labels: &ClusterLabels) -> BTreeMap<String, i32> {
    labels.row_ids.iter().cloned().zip(labels.labels.iter().copied()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn logit_is_monotone(a in -50.0..150.0f64, b in -50.0..150.0f64, eps in 1e-6..0.4f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(logit_transform(lo, 0.0, 100.0, eps) <= logit_transform(hi, 0.0, 100.0, eps));
    }

    #[test]
    fn logit_inverts_inside_clip(p in 0.002..0.998f64, lower in -10.0..10.0f64, width in 0.5..200.0f64) {
        let x = lower + p * width;
        let y = logit_transform(x, lower, lower + width, 1e-3);
        prop_assert!((inverse_logit_transform(y, lower, lower + width) - x).abs() <= 1e-9 * width.max(1.0));
    }

    #[test]
    fn ari_matches_pair_counting(a in proptest::collection::vec(0i64..4, 2..60), seed in any::<u64>()) {
        let b: Vec<i64> = permutation(a.len(), seed).iter().map(|&i| a[i] % 3).collect();
        let ours = adjusted_rand_index(&a, &b);
        let oracle = common::ari_oracle(&a, &b);
        prop_assert!((ours - oracle).abs() < 1e-12, "{} vs {}", ours, oracle);
    }

    #[test]
    fn ari_is_one_under_relabelling(a in proptest::collection::vec(0i64..5, 2..80)) {
        let b: Vec<i64> = a.iter().map(|x| 10 - 2 * x).collect();
        prop_assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn percent_diff_half_width_non_negative(v in proptest::collection::vec(-100.0..100.0f64, 1..50), m in -50.0..50.0f64) {
        let r = report::percent_diff_ci(&v, m, 100);
        if let Some(h) = r.ci_half_width {
            prop_assert!(h >= 0.0);
        }
        prop_assert_eq!(r.percent_diff.is_none(), m == 0.0);
    }

    #[test]
    fn digests_change_iff_content_changes(a in proptest::collection::vec(any::<u8>(), 0..64), b in proptest::collection::vec(any::<u8>(), 0..64)) {
        prop_assert_eq!(sha256_hex(&a) == sha256_hex(&b), a == b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_is_idempotent_and_conserves_counts(n in 20usize..120, seed in any::<u64>(), miss in 0.0..0.3f64, short in 0.0..0.3f64) {
        let spec = synth::default_paper_spec().with_n(n).with_seed(seed);
        let files = synth::generate_cohort(&spec).unwrap();
        let (files, manifest) = synth::degrade_cohort(&files, &DegradeSpec::rates(miss, short), seed).unwrap();
        let p = ingest::parse_admissions(files.admissions_csv.as_bytes(), files.vitals_csv.as_bytes()).unwrap();
        prop_assume!(manifest.total() < n);
        let c = ingest::filter_cohort(&p.admissions, &p.vitals).unwrap();
        prop_assert_eq!(c.len() + c.filter_log.total(), p.admissions.len());
        prop_assert_eq!(c.filter_log, manifest.expected_filter_log());

        let adm: Vec<_> = c.records.iter().map(|e| e.admission.clone()).collect();
        let vit: Vec<_> = c.records.iter().map(|e| e.vitals.clone()).collect();
        let again = ingest::filter_cohort(&adm, &vit).unwrap();
        prop_assert_eq!(&again.records, &c.records);
        prop_assert_eq!(again.filter_log.total(), 0);
        for e in &c.records {
            prop_assert!(e.admission.stay_secs() >= ingest::MIN_STAY_SECS);
            prop_assert!(e.vitals.ts >= e.admission.admit_ts && e.vitals.ts <= e.admission.admit_ts + ingest::VITALS_WINDOW_SECS);
        }
    }

    #[test]
    fn summary_means_match_streaming_pass(n in 5usize..300, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let s = ingest::cohort_summary(&c);
        // Welford running mean
        let mut mean = 0.0;
        for (k, e) in c.records.iter().enumerate() {
            mean += (e.vitals.heart_rate - mean) / (k + 1) as f64;
        }
        prop_assert!((s.heart_rate.mean - mean).abs() <= 1e-9 * mean.abs());
        let mut age = 0.0;
        for (k, e) in c.records.iter().enumerate() {
            age += (f64::from(e.admission.age) - age) / (k + 1) as f64;
        }
        prop_assert!((s.age.mean - age).abs() <= 1e-9 * age.abs());
    }

    #[test]
    fn matrix_follows_row_permutation(n in 5usize..200, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let perm = permutation(c.len(), seed ^ 1);
        let (m, _) = assemble_matrix(&c, &Default::default()).unwrap();
        let (mp, _) = assemble_matrix(&permuted_cohort(&c, &perm), &Default::default()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&mp.row_ids[k], &m.row_ids[i]);
            for j in 0..N_FEATURES {
                prop_assert!((mp.values[k][j] - m.values[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scaled_columns_are_standardised(n in 10usize..300, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let (m, params) = assemble_matrix(&c, &Default::default()).unwrap();
        for f in &preprocess::Feature::ALL[..3] {
            if params.degenerate.contains(f) {
                continue;
            }
            let col = m.column(*f);
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            prop_assert!(mu.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, "{:?}: mean {} sd {}", f, mu, sd);
        }
    }

    #[test]
    fn inverse_transform_recovers_raw(n in 5usize..100, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let (m, params) = assemble_matrix(&c, &Default::default()).unwrap();
        let raw = preprocess::raw_rows(&c);
        for (z, r) in m.values.iter().zip(&raw) {
            let back = params.inverse_row(z);
            for j in 0..3 {
                prop_assert!((back[j] - r[j]).abs() < 1e-9 * r[j].abs().max(1.0));
            }
            // logit columns are exact away from the clip region
            prop_assert!((back[4] - r[4]).abs() < 1e-6 || r[4] < 0.06 || r[4] > 59.94);
        }
    }

    #[test]
    fn weighted_cluster_means_reproduce_population(n in 20usize..300, seed in any::<u64>(), k in 1i32..5) {
        let c = cohort(n, seed);
        let labels = ClusterLabels {
            row_ids: c.admission_ids(),
            labels: (0..c.len()).map(|i| (i as i32 * 7 + (seed % 3) as i32) % (k + 1) - 1).collect(),
        };
        let summaries = report::summarize_clusters(&c, &labels).unwrap();
        let pop = ingest::cohort_summary(&c);
        let total: usize = summaries.iter().map(|s| s.table.n_admissions).sum();
        prop_assert_eq!(total, c.len());
        let w = |f: &dyn Fn(&ingest::SummaryTable) -> f64| {
            summaries.iter().map(|s| s.table.n_admissions as f64 * f(&s.table)).sum::<f64>() / total as f64
        };
        for (name, f) in [
            ("sbp", &(|t: &ingest::SummaryTable| t.sbp.mean) as &dyn Fn(&ingest::SummaryTable) -> f64),
            ("age", &|t| t.age.mean),
            ("los", &|t| t.los_hours.mean),
            ("mortality", &|t| t.mortality_pct),
        ] {
            let p = f(&pop);
            prop_assert!((w(f) - p).abs() <= 1e-9 * p.abs().max(1.0), "{}: {} vs {}", name, w(f), p);
        }
    }

    #[test]
    fn heatmap_cells_bounded_and_retention_monotone(n in 20usize..300, seed in any::<u64>(), t1 in 0.0..50.0f64, dt in 0.0..50.0f64) {
        let c = cohort(n, seed);
        let labels = ClusterLabels { row_ids: c.admission_ids(), labels: (0..c.len()).map(|i| (i % 3) as i32).collect() };
        let lo = report::icd10_heatmap(&c, &labels, t1).unwrap();
        let hi = report::icd10_heatmap(&c, &labels, t1 + dt).unwrap();
        for row in &lo.cells {
            for &p in row {
                prop_assert!((0.0..=100.0).contains(&p));
            }
        }
        for (a, b) in lo.retained.iter().zip(&hi.retained) {
            prop_assert!(*a || !*b);
        }
    }

    #[test]
    fn sample_packs_ignore_row_order(n in 30usize..200, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let labels = ClusterLabels { row_ids: c.admission_ids(), labels: (0..c.len()).map(|i| (i % 2) as i32).collect() };
        let e = Embedding2D { row_ids: c.admission_ids(), coords: (0..c.len()).map(|i| [i as f64, 0.0]).collect() };
        let perm = permutation(c.len(), seed);
        let a = report::sample_for_clinicians(&c, &labels, &e, 5, 9).unwrap();
        let b = report::sample_for_clinicians(&permuted_cohort(&c, &perm), &labels, &e, 5, 9).unwrap();
        let ids = |p: &[report::ClinicalSamplePack]| p.iter().map(|x| x.admissions.iter().map(|s| s.admission_id.clone()).collect::<Vec<_>>()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
        for pack in &a {
            let unique: std::collections::BTreeSet<_> = pack.admissions.iter().map(|s| &s.admission_id).collect();
            prop_assert_eq!(unique.len(), pack.admissions.len());
        }
    }

    #[test]
    fn tree_importances_sum_to_one_and_ignore_scaling(seed in any::<u64>(), scale in proptest::array::uniform6(0.01..100.0f64)) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let x: Vec<[f64; N_FEATURES]> = (0..400).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
        let y: Vec<u8> = x.iter().map(|v| u8::from(v[3] > 0.2 || (v[0] < -0.5 && v[5] > 0.0))).collect();
        let params = TreeParams { max_depth: 4, min_leaf: 10 };
        let t = DecisionTree::fit(&x, &y, params);
        let imp = t.feature_importance();
        prop_assert!(imp.iter().all(|&w| w >= 0.0));
        prop_assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let xs: Vec<[f64; N_FEATURES]> = x.iter().map(|v| std::array::from_fn(|j| v[j] * scale[j])).collect();
        let ts = DecisionTree::fit(&xs, &y, params);
        prop_assert_eq!(t.accuracy(&x, &y), ts.accuracy(&xs, &y));
        let imp_s = ts.feature_importance();
        for j in 0..N_FEATURES {
            prop_assert!((imp[j] - imp_s[j]).abs() < 1e-12);
        }
        for (a, b) in x.iter().zip(&xs) {
            prop_assert_eq!(t.predict(a), ts.predict(b));
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), k in 2usize..100, md in 0.001..1.0f64, mcs in proptest::option::of(2usize..500), thr in 0.0..100.0f64) {
        let mut cfg = PipelineConfig { seed, ..Default::default() };
        cfg.umap.n_neighbors = k;
        cfg.umap.min_dist = md;
        cfg.hdbscan.min_cluster_size = mcs;
        cfg.report.threshold = thr;
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn hdbscan_labels_survive_row_permutation(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let mut pts = common::gaussian_blob(&mut r, 60, [0.0, 0.0], 1.0);
        pts.extend(common::gaussian_blob(&mut r, 40, [6.0, 0.0], 0.8));
        pts.extend(common::gaussian_blob(&mut r, 30, [0.0, 7.0], 0.6));
        let e = Embedding2D { row_ids: (0..pts.len()).map(|i| format!("r{i:03}")).collect(), coords: pts };
        let perm = permutation(e.len(), seed);
        let ep = Embedding2D { row_ids: perm.iter().map(|&i| e.row_ids[i].clone()).collect(), coords: perm.iter().map(|&i| e.coords[i]).collect() };
        let cfg = HdbscanConfig { min_cluster_size: 8, ..Default::default() };
        let a = hdbscan::cluster(&e, &cfg).unwrap().labels;
        let b = hdbscan::cluster(&ep, &cfg).unwrap().labels;
        prop_assert_eq!(canonical(&a), canonical(&b));
        let sizes = a.sizes();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(a.labels.iter().all(|&l| l >= -1 && l < sizes.len() as i32));
    }

    #[test]
    fn embedding_is_permutation_equivariant(n in 30usize..60, seed in any::<u64>()) {
        let c = cohort(n, seed);
        let (m, _) = assemble_matrix(&c, &Default::default()).unwrap();
        let perm = permutation(m.len(), seed);
        let mp = preprocess::FeatureMatrix {
            row_ids: perm.iter().map(|&i| m.row_ids[i].clone()).collect(),
            values: perm.iter().map(|&i| m.values[i]).collect(),
        };
        let cfg = UmapConfig { n_neighbors: 8, n_epochs: 40, ..Default::default() };
        let a = umap::embed(&m, &cfg).unwrap().embedding;
        let b = umap::embed(&mp, &cfg).unwrap().embedding;
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&b.row_ids[k], &a.row_ids[i]);
            prop_assert_eq!(b.coords[k], a.coords[i]);
            prop_assert!(a.coords[i].iter().all(|x| x.is_finite()));
        }
    }
}
