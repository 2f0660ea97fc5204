use super::fixtures::{self, scripted_trace, Sample};
use super::*;
use crate::simkernel::Termination;

fn fired(trace: &FlightTrace, th: &Thresholds) -> Vec<Detector> {
    let mut v = Vec::new();
    if detect_freeze(trace, th).is_some() {
        v.push(Detector::Freeze);
    }
    if detect_deviation(trace, th).is_some() {
        v.push(Detector::Deviation);
    }
    if detect_crash(trace, th).is_some() {
        v.push(Detector::Crash);
    }
    if detect_thrust_loss(trace, th).is_some() {
        v.push(Detector::ThrustLoss);
    }
    v
}

#[test]
fn fixture_suite_verdicts_are_exact() {
    let th = Thresholds::default();
    let suite = fixtures::suite();
    assert!(suite.len() >= 10);
    for f in &suite {
        let verdict = classify(&f.trace, &f.prearm, f.injected, &th);
        assert_eq!(verdict.label, f.expected, "{}", f.name);
        let mut got = fired(&f.trace, &th);
        let mut want = f.fires.clone();
        got.sort_by_key(|d| *d as u8);
        want.sort_by_key(|d| *d as u8);
        assert_eq!(got, want, "{}", f.name);
        assert_eq!(verdict.evidence.is_some(), !want.is_empty(), "{}", f.name);
    }
}

#[test]
fn freeze_evidence_reports_distance() {
    let f = fixtures::suite()
        .into_iter()
        .find(|f| f.expected == VerdictLabel::Freeze)
        .unwrap();
    let ev = detect_freeze(&f.trace, &Thresholds::default()).unwrap();
    assert!(ev.measured < 0.5);
    assert!((ev.t_end - ev.t_start - 15.0).abs() < 1e-9);
}

#[test]
fn deviation_needs_full_run() {
    let th = Thresholds::default();
    // exactly 15 samples beyond the limit
    let trace = scripted_trace(40.0, |t| {
        let east = if (9.5..24.5).contains(&t) { 1.6 } else { 0.0 };
        Sample::cruise(2.0 * t, east)
    });
    let ev = detect_deviation(&trace, &th).unwrap();
    assert!((ev.measured - 1.6).abs() < 1e-9);
    let stricter = Thresholds {
        deviation_count: 16,
        ..th
    };
    assert!(detect_deviation(&trace, &stricter).is_none());
}

#[test]
fn diverged_trace_is_a_crash() {
    let mut trace = scripted_trace(5.0, |t| Sample::cruise(t, 0.0));
    trace.termination = Termination::Diverged { last_finite_time: 4.0 };
    let v = classify(&trace, &PrearmResult::accept(), false, &Thresholds::default());
    assert_eq!(v.label, VerdictLabel::Crash);
    assert_eq!(v.evidence.unwrap().detector, Detector::Diverged);
    serde_json::to_string(&classify(
        &trace,
        &PrearmResult::accept(),
        false,
        &Thresholds::default(),
    ))
    .unwrap();
}

#[test]
fn ground_phase_never_fires() {
    let trace = scripted_trace(30.0, |_| Sample {
        position: [0.0, 30.0, 0.0],
        velocity: [0.0, 0.0, 5.0],
        roll: 170.0,
        phase: Phase::Ground,
        ..Sample::cruise(0.0, 0.0)
    });
    assert!(fired(&trace, &Thresholds::default()).is_empty());
}

#[test]
fn builtin_prearm_rules() {
    let table = ParameterTable::builtin();
    let rules = PrearmRules::builtin();
    let defaults = table.default_configuration();
    assert!(rules.check(&table, &defaults).accepted);

    let bad = table.with_value(&defaults, "ATC_ANG_RLL_P", 0.1).unwrap();
    let r = prearm_check(&table, &bad, &rules);
    assert!(!r.accepted);
    assert_eq!(
        r.reasons,
        vec![("ATC_ANG_RLL_P".to_string(), "ANG_RLL_P_FLOOR".to_string())]
    );

    let edge = table.with_value(&defaults, "ATC_RAT_PIT_P", 0.02).unwrap();
    assert!(rules.check(&table, &edge).accepted);
}

#[test]
fn prearm_csv_errors_name_the_row() {
    let csv = "parameter,min,max,rule_id\nA,0.1,,R1\nB,abc,,R2\n";
    match PrearmRules::from_csv_reader(csv.as_bytes(), "rules.csv") {
        Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
        other => panic!("unexpected {other:?}"),
    }
    let ok = PrearmRules::from_csv_reader("parameter,min,max,rule_id\nX,,2,MAXX\n".as_bytes(), "r").unwrap();
    assert_eq!(ok.rules[0].max, Some(2.0));
    assert_eq!(ok.rules[0].min, None);
}

#[test]
fn verdict_labels_round_trip() {
    for l in VerdictLabel::ALL {
        assert_eq!(l.as_str().parse::<VerdictLabel>().unwrap(), l);
    }
    assert!("Bogus".parse::<VerdictLabel>().is_err());
}
