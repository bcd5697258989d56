use tlr_adapt::bench::{grid_search, run_protocol_ixmas_style, BenchConfig, GridSpec};
use tlr_adapt::dataset::{standardize_pair, synth_shift_pair, DomainPair, SynthConfig, ZScoreMode};

fn pair(n_per_class: usize, rotation: f64, translation: f64) -> DomainPair {
    let raw = synth_shift_pair(&SynthConfig {
        n_per_class,
        dim: 10,
        classes: 3,
        rotation_deg: rotation,
        translation,
        noise_std: 0.5,
        seed: 21,
    })
    .unwrap();
    standardize_pair(&raw, ZScoreMode::PerDomain).unwrap()
}

#[test]
fn oversized_per_class_keeps_every_run_identical() {
    let cfg = BenchConfig {
        grid: GridSpec::singleton(0.01, 1.0, 4),
        ..BenchConfig::default()
    };
    let report = run_protocol_ixmas_style(&pair(12, 20.0, 0.5), 50, 4, &cfg).unwrap();
    assert_eq!(report.n_source, 36);
    let accs = &report.records[0].accuracies;
    assert_eq!(accs.len(), 4);
    assert!(accs.iter().all(|a| a == &accs[0]));
}

#[test]
fn ten_runs_give_ten_accuracies() {
    let cfg = BenchConfig {
        grid: GridSpec {
            alphas: vec![0.01, 1.0],
            betas: vec![1.0],
            ks: vec![2, 5],
        },
        seed: 3,
        ..BenchConfig::default()
    };
    let report = run_protocol_ixmas_style(&pair(40, 20.0, 0.5), 30, 10, &cfg).unwrap();
    assert_eq!(report.n_source, 90);
    assert!(report.records.iter().all(|r| r.accuracies.len() == 10));
    assert!(report.records.iter().any(|r| r.std() > 0.0));
}

#[test]
fn unshifted_pair_is_easy_under_default_grid() {
    let p = pair(40, 0.0, 0.0);
    let cfg = BenchConfig {
        threads: Some(2),
        ..BenchConfig::default()
    };
    let report = grid_search(&p, &cfg).unwrap();
    assert_eq!(report.total_configurations(), 720);
    let best = report.best_record().mean();
    assert!(best >= 0.95, "{best}");
    let max = report.records.iter().map(|r| r.mean()).fold(0.0, f64::max);
    assert_eq!(best, max);
}
