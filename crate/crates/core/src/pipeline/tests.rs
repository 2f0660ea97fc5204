use super::*;
use crate::paramspec::Configuration;

fn tiny() -> RunOptions {
    RunOptions {
        campaign: CampaignOptions {
            n_flights: 8,
            ..CampaignOptions::default()
        },
        predictor: PredictorHyperparams {
            hidden_size: 8,
            epochs: 2,
            max_windows: 400,
            ..PredictorHyperparams::default()
        },
        search: SearchParams {
            np: 8,
            g_max: 3,
            top_k: 2,
            m: 1,
            ..SearchParams::default()
        },
        cluster_sample: 40,
        moea: MoeaParams {
            population: 8,
            generations: 3,
            ..MoeaParams::default()
        },
        ..RunOptions::default()
    }
}

fn record(id: usize, label: VerdictLabel) -> ValidationRecord {
    ValidationRecord::new(id, Configuration(vec![0.0]), label)
}

#[test]
fn tp_ratio_arithmetic() {
    let mut records: Vec<_> = (0..3).map(|i| record(i, VerdictLabel::Correct)).collect();
    records.extend((3..10).map(|i| record(i, VerdictLabel::Deviation)));
    let r = Report::from_records(&records);
    assert_eq!((r.total, r.incorrect), (10, 7));
    assert!((r.tp_ratio - 0.7).abs() < 1e-12);
    let empty = Report::from_records(&[]);
    assert_eq!((empty.total, empty.incorrect, empty.tp_ratio), (0, 0, 0.0));
    assert!(empty.counts.values().all(|&n| n == 0));
}

#[test]
fn report_format_is_stable() {
    let records = vec![
        record(0, VerdictLabel::Correct),
        record(1, VerdictLabel::Tackling),
        record(2, VerdictLabel::Crash),
        record(3, VerdictLabel::Crash),
    ];
    let golden = "metric,value\nvalidated,4\nCorrect,1\nFreeze,0\nDeviation,0\nCrash,2\nThrustLoss,0\nTackling,1\nincorrect,3\ntp_ratio,0.750000\n";
    assert_eq!(Report::from_records(&records).to_csv_string(), golden);
}

#[test]
fn run_all_is_reproducible_and_hashed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = tiny();
    let ra = Pipeline::open(a.path(), 3, Inputs::builtin())
        .unwrap()
        .run_all(&opts)
        .unwrap();
    let rb = Pipeline::open(b.path(), 3, Inputs::builtin())
        .unwrap()
        .run_all(&opts)
        .unwrap();
    assert_eq!(ra, rb);
    for f in [
        REPORT_FILE,
        GUIDELINES_FILE,
        FRONT_FILE,
        FRONT_PLOT_FILE,
        RECORDS_CSV,
        POTENTIAL_FILE,
        MODEL_FILE,
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let m = RunManifest::load(a.path()).unwrap().unwrap();
    assert_eq!(m.stages.len(), STAGES.len());
    for s in STAGES {
        m.verify(a.path(), s).unwrap();
    }
}

#[test]
fn tampered_artifact_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let opts = tiny();
    let mut p = Pipeline::open(dir.path(), 1, Inputs::builtin()).unwrap();
    p.genlogs(&opts.campaign).unwrap();
    p.train(&opts.predictor, opts.threshold_split).unwrap();
    let model = dir.path().join(MODEL_FILE);
    let text = std::fs::read_to_string(&model).unwrap();
    std::fs::write(&model, text.replacen("\"threshold\":", "\"threshold\": ", 1)).unwrap();
    let err = p.search(&opts.search, None, opts.cluster_sample).unwrap_err();
    assert!(matches!(err, Error::HashMismatch { .. }), "{err}");
}

#[test]
fn stages_rerun_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let opts = tiny();
    {
        let mut p = Pipeline::open(dir.path(), 2, Inputs::builtin()).unwrap();
        p.genlogs(&opts.campaign).unwrap();
        p.train(&opts.predictor, opts.threshold_split).unwrap();
    }
    let mut p = Pipeline::open(dir.path(), 2, Inputs::builtin()).unwrap();
    let set = p.search(&opts.search, None, opts.cluster_sample).unwrap();
    assert!(!set.entries.is_empty());
    // retraining invalidates downstream stages
    p.train(&opts.predictor, opts.threshold_split).unwrap();
    assert!(!p.manifest().stages.contains_key("search"));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(dir.path(), 0, Inputs::builtin()).unwrap();
    assert!(matches!(
        p.train(&tiny().predictor, ThresholdSplit::Train),
        Err(Error::Io { .. })
    ));
    assert!(matches!(p.report(), Err(Error::Io { .. })));
}

#[test]
fn empty_potential_set_validates_to_empty_records() {
    let dir = tempfile::tempdir().unwrap();
    let table = ParameterTable::builtin();
    let set = PotentialSet {
        parameters: table.names().map(str::to_string).collect(),
        entries: vec![],
        metadata: search::SearchMetadata {
            params: SearchParams::default(),
            seed: 0,
            threshold: 0.0,
            representatives: vec![],
            generations: vec![],
            clusters: None,
        },
    };
    set.save(dir.path().join(POTENTIAL_FILE)).unwrap();
    let mut p = Pipeline::open(dir.path(), 0, Inputs::builtin()).unwrap();
    let records = p.validate(&ValidateOptions::default()).unwrap();
    assert!(records.records.is_empty());
    assert_eq!(p.report().unwrap().total, 0);
    assert!(matches!(p.guideline(&MoeaParams::default()), Err(Error::NoRecords)));
}

#[test]
fn rejected_unstable_config_validates_as_tackling() {
    let inputs = Inputs::builtin();
    let bad = inputs
        .table
        .with_value(&inputs.table.default_configuration(), "ATC_RAT_PIT_P", 0.012)
        .unwrap();
    let (v, accepted, injected) = validate_config(&inputs, &bad, &ValidateOptions::default(), 4).unwrap();
    assert!(!accepted && injected);
    assert_eq!(v.label, VerdictLabel::Tackling);
    let (v, accepted, _) = validate_config(
        &inputs,
        &inputs.table.default_configuration(),
        &ValidateOptions::default(),
        4,
    )
    .unwrap();
    assert!(accepted);
    assert_eq!(v.label, VerdictLabel::Correct);
}

#[test]
fn other_table_is_refused_for_existing_run() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::open(dir.path(), 0, Inputs::builtin())
        .unwrap()
        .genlogs(&tiny().campaign)
        .unwrap();
    let mut other = Inputs::builtin();
    other.mission = Mission::new(vec![[5.0, 0.0, 10.0]], 10.0, 2.0).unwrap();
    assert!(matches!(
        Pipeline::open(dir.path(), 0, other),
        Err(Error::Precondition(_))
    ));
}
