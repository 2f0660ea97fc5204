use super::*;
use crate::monitor::{classify, PrearmRules, Thresholds, VerdictLabel};

fn builtin() -> (ParameterTable, Configuration) {
    let t = ParameterTable::builtin();
    let c = t.default_configuration();
    (t, c)
}

#[test]
fn hover_settles_near_hover_throttle() {
    let (table, config) = builtin();
    let params = FlightParams::from_config(&table, &config);
    let p0 = Vector3::new(0.0, 0.0, -10.0);
    let mut plant = PlantState::hovering(p0);
    let mut mem = ControllerMemory::default();
    let sp = Setpoint::hold(p0);
    let mut commands = [0.0; 4];
    for _ in 0..(5.0 / DEFAULT_DT) as usize {
        let (p, m, c) = step(&plant, &mem, &params, &sp, DEFAULT_DT).unwrap();
        plant = p;
        mem = m;
        commands = c;
    }
    for c in commands {
        assert!(
            (c - plant::HOVER_THROTTLE).abs() <= 0.02 * plant::HOVER_THROTTLE,
            "{commands:?}"
        );
    }
}

#[test]
fn step_rejects_bad_dt() {
    let (table, config) = builtin();
    let params = FlightParams::from_config(&table, &config);
    let plant = PlantState::default();
    let sp = Setpoint::hold(Vector3::zeros());
    for dt in [0.0, -0.01, 0.06, f64::NAN] {
        assert!(matches!(
            step(&plant, &ControllerMemory::default(), &params, &sp, dt),
            Err(Error::Precondition(_))
        ));
    }
    let opts = SimOptions {
        dt: 0.0,
        ..SimOptions::default()
    };
    assert!(run_mission(&table, &config, &Mission::builtin(), None, &opts).is_err());
}

#[test]
fn default_config_completes_builtin_mission() {
    let (table, config) = builtin();
    let trace = run_mission(&table, &config, &Mission::builtin(), None, &SimOptions::with_seed(3)).unwrap();
    assert_eq!(trace.termination, Termination::Completed);
    assert!(trace.has_event(|e| *e == EventTag::Touchdown));
    let waypoints = trace
        .events
        .iter()
        .filter(|e| matches!(e.tag, EventTag::WaypointReached(_)))
        .count();
    assert_eq!(waypoints, Mission::builtin().waypoints.len());
    let prearm = PrearmRules::builtin().check(&table, &config);
    assert!(prearm.accepted);
    let verdict = classify(&trace, &prearm, false, &Thresholds::default());
    assert_eq!(verdict.label, VerdictLabel::Correct, "{verdict:?}");
}

#[test]
fn trace_timestamps_are_evenly_spaced() {
    let (table, config) = builtin();
    let trace = run_mission(&table, &config, &Mission::builtin(), None, &SimOptions::with_seed(1)).unwrap();
    assert!((trace.log_dt - DEFAULT_LOG_DT).abs() < 1e-12);
    for (k, e) in trace.entries.iter().enumerate() {
        assert!((e.t - k as f64 * trace.log_dt).abs() < 1e-9);
        assert!(e.state.is_finite() && e.sensors.is_finite());
        assert!(e.motor.iter().all(|m| (0.0..=1.0).contains(m)));
    }
}

#[test]
fn missions_are_deterministic_per_seed() {
    let (table, config) = builtin();
    let a = run_mission(&table, &config, &Mission::builtin(), None, &SimOptions::with_seed(9)).unwrap();
    let b = run_mission(&table, &config, &Mission::builtin(), None, &SimOptions::with_seed(9)).unwrap();
    assert_eq!(a, b);
    let c = run_mission(&table, &config, &Mission::builtin(), None, &SimOptions::with_seed(10)).unwrap();
    assert_ne!(a.entries, c.entries);
}

#[test]
fn empty_mission_takes_off_and_lands() {
    let (table, config) = builtin();
    let mission = Mission::new(Vec::new(), 5.0, 2.0).unwrap();
    let trace = run_mission(&table, &config, &mission, None, &SimOptions::with_seed(0)).unwrap();
    assert_eq!(trace.termination, Termination::Completed);
    assert!(trace.has_event(|e| *e == EventTag::TakeoffComplete));
    assert!(trace.has_event(|e| *e == EventTag::Touchdown));
    let peak = trace.entries.iter().map(TraceEntry::altitude).fold(0.0, f64::max);
    assert!(peak > 4.0 && peak < 6.0, "peak {peak}");
}

#[test]
fn lower_angle_max_never_leans_further() {
    let (table, config) = builtin();
    let max_lean = |angle_max: f64| {
        let cfg = table.with_value(&config, "ANGLE_MAX", angle_max).unwrap();
        let tr = run_mission(&table, &cfg, &Mission::builtin(), None, &SimOptions::with_seed(2)).unwrap();
        tr.entries
            .iter()
            .map(|e| e.state.roll.abs().hypot(e.state.pitch.abs()))
            .fold(0.0, f64::max)
    };
    let mut prev = f64::INFINITY;
    for a in [8000.0, 4500.0, 2500.0, 1500.0, 1000.0] {
        let lean = max_lean(a);
        assert!(lean <= prev + 0.5, "ANGLE_MAX {a}: {lean} > {prev}");
        prev = lean;
    }
}

#[test]
fn injection_swaps_config_and_destabilizes() {
    let (table, config) = builtin();
    let bad = table.with_value(&config, "ATC_RAT_PIT_P", 0.012).unwrap();
    let prearm = PrearmRules::builtin().check(&table, &bad);
    assert!(!prearm.accepted);
    let inj = Injection {
        time: 20.0,
        config: bad.clone(),
    };
    let trace = run_mission(
        &table,
        &config,
        &Mission::builtin(),
        Some(&inj),
        &SimOptions::with_seed(4),
    )
    .unwrap();
    let ev = trace.events.iter().find(|e| e.tag == EventTag::ConfigInjected).unwrap();
    assert!((ev.t - 20.0).abs() < 1e-9);
    assert_eq!(trace.injected.as_ref().map(|(_, c)| c), Some(&bad));
    let verdict = classify(&trace, &prearm, true, &Thresholds::default());
    assert_eq!(verdict.label, VerdictLabel::Tackling);
    assert!(verdict.evidence.unwrap().t_start >= 20.0);
}

#[test]
fn injection_before_takeoff_is_rejected() {
    let (table, config) = builtin();
    let inj = Injection {
        time: 1.0,
        config: config.clone(),
    };
    let r = run_mission(&table, &config, &Mission::builtin(), Some(&inj), &SimOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn dimension_mismatch_is_reported() {
    let (table, _) = builtin();
    let short = Configuration(vec![1.0; 3]);
    let r = run_mission(&table, &short, &Mission::builtin(), None, &SimOptions::default());
    assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
}
