//! Release gate for the whole workspace. Each test prints one PASS line
//! with its measured result so a failed run pinpoints the broken property.
//!
//! The real screening study this pipeline mirrors cannot be re-run here
//! (the clinical dataset is access-restricted), so the gate validates
//! every computational stage against independent oracles and then runs
//! the full experiment on the built-in synthetic cohort, where ground
//! truth is known by construction.

use gaitlab::dataset::{load_table, Dataset};
use gaitlab::eval::{
    cross_validate_with, default_knn_grid, grid_search, SelectionMode,
};
use gaitlab::features::{extract_features, wide_table};
use gaitlab::gaitsim::{
    generate_cohort, generate_session, CohortGroup, CohortSpec, GaitParams, ParamJitter,
};
use gaitlab::learn::{fit, loss_and_grad, Metric, Model, ModelSpec, Weighting};
use gaitlab::select::{mutual_information, rank_features};
use gaitlab::telemetry::{decode_frame, encode_frame, DeviceId, Label, SensorFrame, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn elapsed_under(start: Instant, limit_s: f64, what: &str) {
    let took = start.elapsed().as_secs_f64();
    assert!(took < limit_s, "{what} took {took:.1} s, budget is {limit_s} s");
}

fn random_frame(rng: &mut ChaCha8Rng) -> SensorFrame {
    SensorFrame {
        device_id: if rng.gen_bool(0.5) { DeviceId::LeftWrist } else { DeviceId::RightWrist },
        seq: rng.gen(),
        timestamp_ms: rng.gen(),
        accel: [rng.gen(), rng.gen(), rng.gen()],
        gyro: [rng.gen(), rng.gen(), rng.gen()],
        mag: [rng.gen(), rng.gen(), rng.gen()],
    }
}

/// 10,000 random frames survive encode/decode bit-exactly, and every
/// possible single-byte corruption of a frame is rejected. The checksum
/// polynomial guarantees detection of any error burst within one byte,
/// so the collision count must be exactly zero.
#[test]
fn codec_fuzz_round_trip_and_corruption_rejection() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);

    for _ in 0..10_000 {
        let frame = random_frame(&mut rng);
        let decoded = decode_frame(&encode_frame(&frame)).expect("valid frame must decode");
        assert_eq!(decoded, frame, "round trip must be bit-exact");
    }

    let fixed = random_frame(&mut rng);
    let encoded = encode_frame(&fixed);
    let mut collisions = Vec::new();
    for pos in 0..encoded.len() {
        for delta in 1..=255u8 {
            let mut corrupt = encoded;
            corrupt[pos] = corrupt[pos].wrapping_add(delta);
            if let Ok(frame) = decode_frame(&corrupt) {
                collisions.push((pos, delta, frame));
            }
        }
    }
    assert!(
        collisions.is_empty(),
        "single-byte corruptions that decoded anyway: {collisions:?}"
    );

    elapsed_under(start, 5.0, "codec fuzz");
    println!("PASS codec: 10000 round trips exact, 0 of {} corruptions accepted", 26 * 255 + 255);
}

/// Joint-histogram sum written from the definition, independent of the
/// library's entropy-based implementation.
fn mi_oracle_bits(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let a_card = a.iter().max().unwrap() + 1;
    let b_card = b.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0f64; b_card]; a_card];
    let mut pa = vec![0f64; a_card];
    let mut pb = vec![0f64; b_card];
    for (&ai, &bi) in a.iter().zip(b) {
        joint[ai][bi] += 1.0;
        pa[ai] += 1.0;
        pb[bi] += 1.0;
    }
    let mut mi = 0.0;
    for i in 0..a_card {
        for j in 0..b_card {
            if joint[i][j] > 0.0 {
                let p_ab = joint[i][j] / n;
                mi += p_ab * (p_ab * n * n / (pa[i] * pb[j])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// 1,000 random discrete pairs with up to 10 feature levels against the
/// exhaustive-sum oracle, plus the exact 1-bit case.
#[test]
fn mutual_information_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x301);
    for trial in 0..1_000 {
        let n = rng.gen_range(2..=50);
        let a_card = rng.gen_range(1..=10);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..a_card)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let got = mutual_information(&a, &b);
        let want = mi_oracle_bits(&a, &b);
        assert!(
            (got - want).abs() < 1e-12,
            "trial {trial}: {got} vs oracle {want} (n={n}, a_card={a_card})"
        );
    }

    // a balanced feature that determines the label carries exactly one bit
    let a: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let b: Vec<usize> = (0..40).map(|i| i % 2).collect();
    assert_eq!(mutual_information(&a, &b), 1.0);
    println!("PASS mutual information: 1000 oracle comparisons within 1e-12 bits");
}

fn knn_oracle(
    x: &[Vec<f64>],
    y: &[Label],
    query: &[f64],
    k: usize,
    metric: Metric,
    weighting: Weighting,
) -> Label {
    let mut scored: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let d = match metric {
                Metric::Euclidean => row
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                Metric::Manhattan => {
                    row.iter().zip(query).map(|(a, b)| (a - b).abs()).sum::<f64>()
                }
            };
            (d, i)
        })
        .collect();
    scored.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let neighbors = &scored[..k];
    let mut pd_vote = 0.0;
    let mut total = 0.0;
    for &(d, i) in neighbors {
        let w = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / d.max(1e-12),
        };
        total += w;
        if y[i] == Label::Pd {
            pd_vote += w;
        }
    }
    if pd_vote * 2.0 == total {
        y[neighbors[0].1]
    } else if pd_vote * 2.0 > total {
        Label::Pd
    } else {
        Label::Control
    }
}

fn raw_dataset(x: Vec<Vec<f64>>, y: Vec<Label>) -> Dataset {
    let d = x[0].len();
    Dataset {
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        subject_ids: (0..x.len()).map(|i| format!("r{i}")).collect(),
        row_ids: (0..x.len()).collect(),
        x,
        y: Some(y),
        scaler: None,
    }
}

/// 50 random datasets, every k in {1, 3, 5}, both metrics and both vote
/// weightings: the classifier must agree with a brute-force scan on
/// every training row.
#[test]
fn knn_matches_brute_force_on_random_datasets() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4142);
    for trial in 0..50 {
        let n = rng.gen_range(10..=200);
        let d = rng.gen_range(1..=10);
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<Label> = (0..n)
            .map(|i| {
                if i < 2 {
                    // both classes always present
                    if i == 0 { Label::Control } else { Label::Pd }
                } else if rng.gen_bool(0.5) {
                    Label::Pd
                } else {
                    Label::Control
                }
            })
            .collect();
        let ds = raw_dataset(x.clone(), y.clone());

        for k in [1usize, 3, 5] {
            for metric in [Metric::Euclidean, Metric::Manhattan] {
                for weighting in [Weighting::Uniform, Weighting::InverseDistance] {
                    let spec = ModelSpec::Knn { k, metric, weighting };
                    let model = fit(&spec, &ds).unwrap();
                    for (i, row) in x.iter().enumerate() {
                        let (got, _) = model.predict_row(row).unwrap();
                        let want = knn_oracle(&x, &y, row, k, metric, weighting);
                        assert_eq!(
                            got, want,
                            "trial {trial} row {i}: k={k} {metric:?} {weighting:?}"
                        );
                    }
                }
            }
        }
    }
    elapsed_under(start, 10.0, "knn oracle sweep");
    println!("PASS knn: 50 datasets x 3 k x 2 metrics x 2 weightings agree with brute force");
}

/// Analytic logistic gradient against central finite differences at 20
/// random parameter points, 1e-5 relative.
#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6C06);
    let n = 30;
    let d = 5;
    let x: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let l2 = 0.01;
    let h = 1e-6;

    for point in 0..20 {
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let b: f64 = rng.gen_range(-1.0..1.0);
        let (_, grad_w, grad_b) = loss_and_grad(&w, b, &x, &y, l2);

        let check = |analytic: f64, plus: f64, minus: f64, which: String| {
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
            assert!(
                rel < 1e-5,
                "point {point} {which}: analytic {analytic} vs numeric {numeric} (rel {rel:.2e})"
            );
        };

        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let (lp, _, _) = loss_and_grad(&wp, b, &x, &y, l2);
            let (lm, _, _) = loss_and_grad(&wm, b, &x, &y, l2);
            check(grad_w[j], lp, lm, format!("dw[{j}]"));
        }
        let (lp, _, _) = loss_and_grad(&w, b + h, &x, &y, l2);
        let (lm, _, _) = loss_and_grad(&w, b - h, &x, &y, l2);
        check(grad_b, lp, lm, "db".into());
    }
    println!("PASS gradient: 20 random points within 1e-5 of central differences");
}

/// Five-point sweeps on low-noise simulated walks: extracted cadence
/// tracks the generator setting within 2%, and the arm-swing asymmetry
/// index lands within 0.05 of the injected value.
#[test]
fn extracted_features_track_generator_settings() {
    let quiet = GaitParams {
        step_time_cv: 0.01,
        noise_g: 0.005,
        noise_dps: 1.0,
        ..GaitParams::control()
    };

    for (i, cadence) in [95.0, 105.0, 115.0, 125.0, 135.0].into_iter().enumerate() {
        let params = GaitParams { cadence_spm: cadence, seed: 1000 + i as u64, ..quiet };
        let session = generate_session(&params, "sweep_c", Task::Walk).unwrap();
        let fv = extract_features(&session).unwrap();
        let got = fv.get("cadence_spm").unwrap();
        let rel = (got - cadence).abs() / cadence;
        assert!(rel <= 0.02, "cadence {cadence}: extracted {got:.2} ({:.1}% off)", rel * 100.0);
    }

    for (i, asym) in [0.0, 0.1, 0.2, 0.3, 0.4].into_iter().enumerate() {
        let params = GaitParams { swing_asym: asym, seed: 2000 + i as u64, ..quiet };
        let session = generate_session(&params, "sweep_a", Task::Walk).unwrap();
        let fv = extract_features(&session).unwrap();
        let got = fv.get("swing_asym").unwrap();
        assert!(
            (got - asym).abs() <= 0.05,
            "asymmetry {asym}: extracted {got:.3} (off by {:.3})",
            (got - asym).abs()
        );
    }
    println!("PASS fidelity: cadence within 2% and asymmetry within 0.05 on 5-point sweeps");
}

fn cohort_dataset(spec: &CohortSpec) -> Dataset {
    let sessions = generate_cohort(spec).unwrap();
    let rows: Vec<_> = sessions.iter().map(|s| extract_features(s).unwrap()).collect();
    let (wide, skipped) = wide_table(&rows);
    assert!(skipped.is_empty(), "every subject must yield both tasks: {skipped:?}");
    let (ds, dropped) = load_table(&wide).unwrap();
    assert_eq!(dropped, 0);
    ds
}

/// The synthetic analogue of the screening experiment: 40 impaired and 40
/// unimpaired subjects with group-typical presets. Arm-swing features must
/// surface near the top of the ranking, a tuned classifier must separate
/// the groups well with honest per-fold selection close to the leaky
/// shortcut, and a cohort with no group difference must score near chance.
#[test]
fn synthetic_cohort_screening_experiment() {
    let start = Instant::now();
    let seed = 2026;

    let ds = cohort_dataset(&CohortSpec::new(40, 40, seed));
    assert_eq!(ds.n(), 80);
    assert_eq!(ds.feature_names.len(), 28);

    // (a) at least two arm-swing features in the top six
    let ranked = rank_features(&ds, 6, 10).unwrap();
    let top: Vec<&str> = ranked.selected();
    let swing_count = top.iter().filter(|name| name.contains("swing")).count();
    assert!(
        swing_count >= 2,
        "want >=2 arm-swing features in the top 6, got {swing_count}: {top:?}"
    );

    // (b) tuned classifier separates the cohorts; honest close to mimic
    let grid = default_knn_grid();
    let honest =
        grid_search(&grid, &ds, 5, seed, SelectionMode::Honest { k: 6, bins: 10 }).unwrap();
    let mimic =
        grid_search(&grid, &ds, 5, seed, SelectionMode::Mimic { k: 6, bins: 10 }).unwrap();
    assert!(
        honest.best_accuracy_pct >= 90.0,
        "honest CV accuracy {:.2}% below 90%",
        honest.best_accuracy_pct
    );
    let gap = (honest.best_accuracy_pct - mimic.best_accuracy_pct).abs();
    assert!(
        gap <= 15.0,
        "honest {:.2}% vs mimic {:.2}%: gap {gap:.2} exceeds 15 points",
        honest.best_accuracy_pct,
        mimic.best_accuracy_pct
    );

    // (c) identical presets for both groups: accuracy collapses to chance
    let null_spec = CohortSpec {
        pd: CohortGroup { mean: GaitParams::control(), jitter: ParamJitter::control() },
        ..CohortSpec::new(40, 40, seed + 1)
    };
    let null_ds = cohort_dataset(&null_spec);
    let null = cross_validate_with(
        &honest.best_spec,
        &null_ds,
        5,
        seed,
        SelectionMode::Honest { k: 6, bins: 10 },
    )
    .unwrap();
    assert!(
        (38.0..=62.0).contains(&null.mean_accuracy_pct),
        "null cohort accuracy {:.2}% outside [38, 62]",
        null.mean_accuracy_pct
    );

    elapsed_under(start, 120.0, "cohort experiment");
    println!(
        "PASS experiment: {swing_count} swing features in top 6; honest {:.2}% mimic {:.2}%; null {:.2}%",
        honest.best_accuracy_pct, mimic.best_accuracy_pct, null.mean_accuracy_pct
    );
}

/// Two full pipeline runs with the same seed must write byte-identical
/// artifacts, file for file.
#[test]
fn pipeline_runs_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_gaitlab"))
            .args(["pipeline", "--seed", "614", "--n-control", "8", "--n-pd", "8", "--out-dir"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "pipeline failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    let list = |root: &std::path::Path| -> Vec<std::path::PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };

    let (a, b) = (list(dirs[0].path()), list(dirs[1].path()));
    assert_eq!(a, b, "runs produced different file sets");
    assert!(a.len() >= 10, "expected a full artifact tree, got {a:?}");
    for rel in &a {
        let left = std::fs::read(dirs[0].path().join(rel)).unwrap();
        let right = std::fs::read(dirs[1].path().join(rel)).unwrap();
        assert_eq!(left, right, "{} differs between runs", rel.display());
    }
    println!("PASS determinism: {} artifacts byte-identical across two runs", a.len());
}

/// The instrumented cross-validation run must check every (test row,
/// fitted statistic) pair and find zero cases where a held-out row leaked
/// into scaler fitting or feature ranking.
#[test]
fn honest_cv_audits_every_test_row_and_finds_no_leaks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1EAC);
    let n_per_class = 30;
    let d = 6;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * n_per_class {
        let label = if i % 2 == 0 { Label::Control } else { Label::Pd };
        let center = if label == Label::Pd { 1.0 } else { -1.0 };
        x.push((0..d).map(|_| center + rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        y.push(label);
    }
    let ds = raw_dataset(x, y);

    let report = cross_validate_with(
        &ModelSpec::default_knn(),
        &ds,
        5,
        9,
        SelectionMode::Honest { k: 3, bins: 8 },
    )
    .unwrap();

    let audit = &report.leakage;
    assert!(audit.scaler_checks > 0, "scaler fitting was never audited");
    assert!(audit.rank_checks > 0, "feature ranking was never audited");
    // every test row is checked against both fitted statistics in each fold
    assert_eq!(audit.checks(), 2 * ds.n());
    assert_eq!(audit.violations(), 0, "a held-out row reached a fitted statistic");
    println!(
        "PASS leakage: {} checks across scaler and ranking, 0 violations",
        audit.checks()
    );
}

/// predict_row on a loaded model agrees with the in-memory model, so the
/// oracle comparisons above transfer to deployed model files.
#[test]
fn saved_models_predict_identically_after_reload() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10AD);
    let x: Vec<Vec<f64>> =
        (0..40).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y: Vec<Label> =
        (0..40).map(|i| if i % 2 == 0 { Label::Control } else { Label::Pd }).collect();
    let ds = raw_dataset(x.clone(), y);

    for spec in [
        ModelSpec::default_knn(),
        ModelSpec::default_logistic(),
        ModelSpec::default_linear_svm(),
        ModelSpec::default_random_forest(),
        ModelSpec::default_boosted_trees(),
    ] {
        let model = fit(&spec, &ds).unwrap();
        let reloaded: Model =
            gaitlab::learn::load_model(&gaitlab::learn::save_model(&model)).unwrap();
        for row in &x {
            let (l1, s1) = model.predict_row(row).unwrap();
            let (l2, s2) = reloaded.predict_row(row).unwrap();
            assert_eq!(l1, l2);
            assert_eq!(s1.to_bits(), s2.to_bits(), "{spec} score drifted through io");
        }
    }
    println!("PASS model io: all five classifiers score identically after reload");
}
