use super::*;
use crate::flightlog::{segment, CampaignStats, FlightLog, LogEntry};
use crate::monitor::VerdictLabel;
use rand::Rng;

fn flight(id: usize, n: usize, config: Configuration, f: impl Fn(usize) -> [f64; 12]) -> FlightLog {
    FlightLog {
        id,
        config,
        verdict: VerdictLabel::Correct,
        seed: 0,
        entries: (0..n)
            .map(|k| LogEntry {
                t: k as f64 * 0.04,
                context: Context::from_slice(&f(k)),
            })
            .collect(),
    }
}

fn wavy_logset(table: &ParameterTable, flights: usize, n: usize) -> LogSet {
    let mut r = rng::stream(1, &[]);
    LogSet {
        parameters: table.names().map(str::to_string).collect(),
        flights: (0..flights)
            .map(|i| {
                let cfg = table.sample_uniform(&mut r);
                let phase = i as f64;
                flight(i, n, cfg, move |k| {
                    let mut v = [0.0; 12];
                    for (j, x) in v.iter_mut().enumerate() {
                        *x = ((k as f64) * 0.1 + phase + j as f64).sin() * (j + 1) as f64;
                    }
                    v
                })
            })
            .collect(),
        stats: CampaignStats::default(),
    }
}

#[test]
fn sliding_windows_per_flight() {
    let table = ParameterTable::builtin();
    let set = wavy_logset(&table, 3, 20);
    let f = extract_features(&set, &table, 4, None, 0).unwrap();
    assert_eq!(f.dataset.len(), 3 * (20 - 4));
    assert_eq!(f.dataset.input_dim, 12 + table.dim());
    for n in 0..f.dataset.len() {
        let w = f.dataset.window(n);
        let cfg = &w.rows[0][12..];
        assert!(w.rows.iter().all(|r| &r[12..] == cfg));
        assert!(w.rows.iter().flatten().all(|v| v.abs() <= 1.0 + 1e-12));
    }
    let capped = extract_features(&set, &table, 4, Some(10), 0).unwrap();
    assert_eq!(capped.dataset.len(), 10);
}

#[test]
fn short_flights_are_skipped() {
    let table = ParameterTable::builtin();
    let mut set = wavy_logset(&table, 2, 20);
    set.flights[1].entries.truncate(4);
    let f = extract_features(&set, &table, 4, None, 0).unwrap();
    assert_eq!(f.skipped_flights, 1);
    assert_eq!(f.dataset.len(), 16);
}

#[test]
fn constant_flight_gives_identical_targets() {
    let table = ParameterTable::builtin();
    let mut set = wavy_logset(&table, 2, 12);
    set.flights[0] = flight(0, 12, table.default_configuration(), |_| [0.5; 12]);
    let f = extract_features(&set, &table, 3, None, 0).unwrap();
    let first = f.dataset.window(0).target;
    for n in 1..9 {
        assert_eq!(f.dataset.window(n).target, first);
    }
}

#[test]
fn l1_arithmetic() {
    assert_eq!(
        l1(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], &[0.0, 2.0, 3.0, 0.0, 0.0, 0.0]),
        1.0
    );
    assert_eq!(l1(&[0.25; 6], &[0.25; 6]), 0.0);
}

#[test]
fn hyperparameter_validation() {
    let ok = PredictorHyperparams::default();
    assert!(ok.validate().is_ok());
    assert!(PredictorHyperparams { h: 0, ..ok.clone() }.validate().is_err());
    assert!(PredictorHyperparams {
        validation_fraction: 0.6,
        ..ok.clone()
    }
    .validate()
    .is_err());
    assert!(PredictorHyperparams {
        validation_fraction: 0.0,
        ..ok
    }
    .validate()
    .is_err());
}

fn constant_dataset(n: usize) -> Dataset {
    let mut d = Dataset::new(2, 3);
    for _ in 0..n {
        d.push(&FeatureWindow {
            rows: vec![vec![0.1, -0.2, 0.3]; 2],
            target: [0.2, -0.1, 0.05, 0.0, 0.3, -0.25],
        })
        .unwrap();
    }
    d
}

fn small_hp() -> PredictorHyperparams {
    PredictorHyperparams {
        h: 2,
        hidden_size: 8,
        epochs: 40,
        learning_rate: 1e-2,
        batch_size: 32,
        ..PredictorHyperparams::default()
    }
}

#[test]
fn constant_data_is_learned() {
    let (tr, va) = constant_dataset(500).split(0.2, 3);
    let (_, report) = train(&tr, &va, &small_hp(), 3).unwrap();
    assert!(report.best_val_loss() < 1e-6, "{}", report.best_val_loss());
    assert!(report.best_val_loss() <= report.initial_val_loss);
}

#[test]
fn training_is_seed_deterministic() {
    let (tr, va) = constant_dataset(200).split(0.2, 1);
    let hp = PredictorHyperparams {
        epochs: 3,
        ..small_hp()
    };
    let a = train(&tr, &va, &hp, 9).unwrap();
    let b = train(&tr, &va, &hp, 9).unwrap();
    assert_eq!(a, b);
    let c = train(&tr, &va, &hp, 10).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn too_few_windows_is_rejected() {
    let (tr, va) = constant_dataset(50).split(0.2, 1);
    assert!(matches!(train(&tr, &va, &small_hp(), 0), Err(Error::Precondition(_))));
}

#[test]
fn exploding_learning_rate_reports_divergence() {
    let mut d = Dataset::new(2, 3);
    let mut r = rng::stream(4, &[]);
    for _ in 0..200 {
        d.push(&FeatureWindow {
            rows: (0..2)
                .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect(),
            target: [1e200; 6],
        })
        .unwrap();
    }
    let (tr, va) = d.split(0.2, 1);
    let hp = PredictorHyperparams {
        epochs: 2,
        ..small_hp()
    };
    assert!(matches!(
        train(&tr, &va, &hp, 0),
        Err(Error::TrainingDiverged { epoch: 1 })
    ));
}

fn tiny_model() -> (ParameterTable, LogSet, SurrogateModel) {
    let table = ParameterTable::builtin();
    let set = wavy_logset(&table, 4, 60);
    let hp = PredictorHyperparams {
        hidden_size: 6,
        epochs: 2,
        ..PredictorHyperparams::default()
    };
    let model = SurrogateModel::fit(&set, &table, &hp, ThresholdSplit::Train, 5).unwrap();
    (table, set, model)
}

#[test]
fn threshold_dominates_training_windows() {
    let (table, set, model) = tiny_model();
    assert!(model.threshold > 0.0);
    let features = extract_features(&set, &table, model.h, Some(model.hyperparams.max_windows), 5).unwrap();
    let (train_set, _) = features.dataset.split(model.hyperparams.validation_fraction, 5);
    assert_eq!(calibrate_threshold(&model, &train_set).unwrap(), model.threshold);
    for n in 0..train_set.len() {
        let w = train_set.window(n);
        assert!(l1(&model.predict(&w).unwrap(), &w.target) <= model.threshold);
    }
    // one window: the threshold is its own deviation
    let one = train_set.subset(&[0]);
    let w = one.window(0);
    assert_eq!(
        calibrate_threshold(&model, &one).unwrap(),
        l1(&model.predict(&w).unwrap(), &w.target)
    );
}

#[test]
fn evaluator_matches_deviation() {
    let (table, set, model) = tiny_model();
    let segs = segment(&set, model.h).unwrap();
    let mut r = rng::stream(2, &[]);
    for seg in segs.iter().take(5) {
        let ev = model.evaluator(seg, &table).unwrap();
        for _ in 0..5 {
            let unit: Vec<f64> = (0..table.dim()).map(|_| r.random_range(0.0..1.0)).collect();
            let cfg = table.denormalize(&unit);
            let a = model.deviation(seg, &cfg).unwrap();
            let b = ev.deviation_unit(&unit);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            assert!(a >= 0.0);
        }
    }
}

#[test]
fn predict_is_pure_and_checks_shape() {
    let (table, set, model) = tiny_model();
    let seg = &segment(&set, model.h).unwrap()[0];
    let (w, _) = model.window(seg, &table.default_configuration()).unwrap();
    let a = model.predict(&w).unwrap();
    assert_eq!(a, model.predict(&w).unwrap());
    assert_eq!(a.len(), 6);
    let mut short = w.clone();
    short.rows.pop();
    assert!(matches!(model.predict(&short), Err(Error::DimensionMismatch { .. })));
    assert!(model.deviation(seg, &Configuration(vec![0.0; 2])).is_err());
}

#[test]
fn model_file_round_trip() {
    let (_, _, model) = tiny_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(MODEL_FILE);
    model.save(&path).unwrap();
    let back = SurrogateModel::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json().unwrap(), std::fs::read_to_string(&path).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"format_version\":1", "\"format_version\":9", 1)).unwrap();
    assert!(matches!(
        SurrogateModel::load(&path),
        Err(Error::FormatVersion { found: 9, .. })
    ));
}

#[test]
fn residual_model_predicts_states() {
    let table = ParameterTable::builtin();
    let set = wavy_logset(&table, 4, 60);
    let hp = PredictorHyperparams {
        hidden_size: 6,
        epochs: 2,
        residual: true,
        ..PredictorHyperparams::default()
    };
    let model = SurrogateModel::fit(&set, &table, &hp, ThresholdSplit::Train, 5).unwrap();
    let scale = model.residual_scale.clone().unwrap();
    assert!(scale.iter().all(|&s| s > 0.0));
    let segs = segment(&set, model.h).unwrap();
    let mut r = rng::stream(3, &[]);
    for seg in segs.iter().take(4) {
        let ev = model.evaluator(seg, &table).unwrap();
        let unit: Vec<f64> = (0..table.dim()).map(|_| r.random_range(0.0..1.0)).collect();
        let a = model.deviation(seg, &table.denormalize(&unit)).unwrap();
        assert!((a - ev.deviation_unit(&unit)).abs() < 1e-10);
    }
    // zero network output reproduces the last observed state
    let mut flat_model = model.clone();
    flat_model.net.params.iter_mut().for_each(|p| *p = 0.0);
    let (w, _) = flat_model.window(&segs[0], &table.default_configuration()).unwrap();
    let y = flat_model.predict(&w).unwrap();
    assert_eq!(&y[..], &w.rows[model.h - 1][..6]);
}
