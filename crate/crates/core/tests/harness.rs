mod common;

use std::fs;
use std::path::Path;

use dcsgd::harness::*;
use dcsgd::problems::{make_random_quadratic, RandomQuadraticParams};
use dcsgd::{CompressorSpec, Error, Mode};

fn quadratic_spec(n: usize, d: usize) -> ProblemSpec {
    ProblemSpec::RandomQuadratic(RandomQuadraticParams {
        n,
        d,
        mu: 0.5,
        l: 2.0,
        heterogeneity: 1.0,
        sigma2: 0.1,
        seed: 4,
    })
}

fn method(name: &str, mode: Mode, compressor: CompressorSpec, schedule: ScheduleSpec) -> MethodSpec {
    MethodSpec {
        name: Some(name.into()),
        mode,
        compressor,
        sampling: None,
        schedule,
        expect_divergence: None,
    }
}

fn sample_config() -> ExperimentConfig {
    let k = 4;
    ExperimentConfig {
        problem: quadratic_spec(4, 12),
        methods: vec![
            method("topk_ef", Mode::ErrorFeedback, CompressorSpec::TopK { k }, ScheduleSpec::Constant { eta: 0.05 }),
            method(
                "induced",
                Mode::Plain,
                CompressorSpec::induced(CompressorSpec::TopK { k: k / 2 }, CompressorSpec::WangniK { k: k / 2 }),
                ScheduleSpec::Theory,
            ),
            MethodSpec {
                sampling: Some(SamplingSpec::BNice { b: 2 }),
                ..method("randk_pp", Mode::PartialParticipation, CompressorSpec::RandK { k }, ScheduleSpec::Theory)
            },
        ],
        iterations: 60,
        seeds: Some(vec![0, 1, 2]),
        checkpoints: Some(vec![0, 30, 60]),
        target_gap: Some(1e-3),
        output: None,
        base_dir: Default::default(),
    }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_written_and_byte_identical_on_rerun() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = sample_config();
    run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa, fb);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names.len(), 3 * 3 + 3);
    for want in ["resolved_config.json", "summary.csv", "methods.csv", "topk_ef_seed0.csv", "randk_pp_seed2.csv"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with(&format!("{SUMMARY_HEADER}\n")));
    assert_eq!(summary.lines().count(), 1 + 3 * 3);
    let run_csv = fs::read_to_string(a.path().join("induced_seed1.csv")).unwrap();
    assert!(run_csv.starts_with("k,f_gap,dist2,bits_up\n"));
    assert_eq!(run_csv.lines().count(), 62);
}

#[test]
fn resolved_config_reloads_to_the_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sample_config();
    cfg.methods[0].name = None;
    cfg.checkpoints = None;
    run_experiment(&cfg, Some(dir.path())).unwrap();
    let path = dir.path().join("resolved_config.json");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"expect_divergence\": false"));
    assert!(text.contains("\"checkpoints\""));
    let reloaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(reloaded.methods[0].name.as_deref(), Some("top4_ef"));
    assert_eq!(reloaded.resolved().methods, cfg.resolved().methods);
    let again = tempfile::tempdir().unwrap();
    run_experiment(&reloaded, Some(again.path())).unwrap();
    assert_eq!(
        fs::read(dir.path().join("summary.csv")).unwrap(),
        fs::read(again.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn zero_seeds_write_header_only_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        seeds: Some(vec![]),
        ..sample_config()
    };
    run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap(), format!("{SUMMARY_HEADER}\n"));
    assert_eq!(fs::read_to_string(dir.path().join("methods.csv")).unwrap(), format!("{METHODS_HEADER}\n"));
}

#[test]
fn induced_budget_within_twice_top_k_ef() {
    let out = run_experiment(&sample_config(), None).unwrap();
    let ef = out.method("topk_ef").unwrap().mean_total_bits;
    let induced = out.method("induced").unwrap().mean_total_bits;
    assert!(induced <= 2.0 * ef && ef <= 2.0 * induced, "induced {induced} vs ef {ef}");
}

#[test]
fn validation_lists_every_error() {
    let mut cfg = sample_config();
    cfg.methods[0].compressor = CompressorSpec::TopK { k: 50 };
    cfg.methods[1].name = Some("topk_ef".into());
    cfg.methods[2].sampling = Some(SamplingSpec::BNice { b: 9 });
    cfg.checkpoints = Some(vec![61]);
    let Err(Error::Validation(errors)) = run_experiment(&cfg, None) else {
        panic!("expected validation errors");
    };
    assert_eq!(errors.len(), 4, "{errors:#?}");
    assert!(errors.iter().any(|e| e.contains("duplicate")));
}

#[test]
fn missing_files_are_reported_with_path() {
    let mut cfg = sample_config();
    cfg.methods[2].sampling = Some(SamplingSpec::ExplicitFile { path: "no_such_table.txt".into() });
    let Err(Error::Validation(errors)) = cfg.prepare() else {
        panic!("expected validation errors");
    };
    assert!(errors[0].contains("no_such_table.txt"), "{errors:?}");
    let err = ExperimentConfig::load(Path::new("/nonexistent/config.json")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/config.json"));
}

#[test]
fn relative_files_resolve_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let problem = make_random_quadratic(&RandomQuadraticParams {
        n: 3,
        d: 4,
        mu: 0.5,
        l: 1.5,
        heterogeneity: 0.5,
        sigma2: 0.0,
        seed: 1,
    })
    .unwrap();
    fs::write(dir.path().join("problem.json"), serde_json::to_string(&problem).unwrap()).unwrap();
    fs::write(dir.path().join("table.txt"), "# two pairs\n0b011 0.5\n0b110 0.25\n0b101 0.25\n").unwrap();
    let cfg = serde_json::json!({
        "problem": {"type": "file", "path": "problem.json"},
        "methods": [{"name": "pp", "mode": "pp", "compressor": {"kind": "rand_k", "k": 1},
                     "sampling": {"family": "explicit_file", "path": "table.txt"},
                     "schedule": {"kind": "theory"}}],
        "iterations": 20,
        "seeds": [5]
    });
    let path = dir.path().join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let out = run_experiment(&loaded, None).unwrap();
    assert_eq!(out.runs.len(), 1);
    assert!(out.methods[0].theorem_bound.is_some());
}

#[test]
fn unexpected_divergence_is_reported() {
    let mut cfg = counterexample_config(vec![0, 1], 400);
    let out = run_experiment(&cfg, None).unwrap();
    assert!(out.unexpected.is_empty());
    cfg.methods[0].expect_divergence = Some(false);
    let out = run_experiment(&cfg, None).unwrap();
    assert_eq!(out.unexpected.len(), 2);
    assert_eq!(out.unexpected[0].method, "top1");
}

#[test]
fn compare_bounds_examples() {
    let cfg = CompareBoundsConfig {
        nodes: vec![1, 2, 4, 8],
        deltas: vec![1.0, 4.0],
        horizon: 500,
        constants: Some(BoundConstants {
            l: 2.0,
            mu: 0.5,
            sigma2: 0.1,
            heterogeneity: 0.3,
            r0: 1.0,
        }),
        problem: None,
    };
    let rows = compare_bounds(&cfg, Path::new(".")).unwrap();
    let by_delta = |d: f64| rows.iter().filter(move |r| r.delta == d);
    assert!(by_delta(1.0).all(|r| r.delta_n == 1.0));
    let dn: Vec<f64> = by_delta(4.0).map(|r| r.delta_n).collect();
    assert_eq!(dn, vec![4.0, 2.5, 1.75, 1.375]);
    assert!(rows.iter().all(|r| r.delta_s_full == r.delta_n && r.bound_pp_full == r.bound_full));
    let bounds: Vec<f64> = by_delta(4.0).map(|r| r.bound_full).collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]));
    let csv = bounds_csv(&rows);
    assert!(csv.starts_with(BOUNDS_HEADER));
    assert_eq!(csv.lines().count(), 9);

    let from_problem = CompareBoundsConfig {
        constants: None,
        problem: Some(quadratic_spec(3, 5)),
        ..cfg.clone()
    };
    assert_eq!(compare_bounds(&from_problem, Path::new(".")).unwrap().len(), 8);
    let neither = CompareBoundsConfig { constants: None, ..cfg };
    assert!(matches!(compare_bounds(&neither, Path::new(".")), Err(Error::Validation(_))));
}

#[test]
fn certification_classifies_operators() {
    let rows = certify_all(&default_certification_set(8, 2), 8, MIN_TRIALS, 3).unwrap();
    for row in &rows {
        let want_unbiased = !row.compressor.starts_with("top");
        assert_eq!(row.unbiased, want_unbiased, "{row:?}");
        if want_unbiased {
            assert!(row.delta_hat >= 1.0 - 4.0 * row.delta_hat_se - 1e-12);
            assert!(row.delta_hat <= row.nominal_delta + 4.0 * row.delta_hat_se + 1e-12, "{row:?}");
        } else {
            assert!(row.contractive);
        }
    }
    let csv = report_csv(&rows);
    assert_eq!(csv.lines().count(), rows.len() + 1);
    assert!(csv.starts_with(CERTIFICATION_HEADER));
}
