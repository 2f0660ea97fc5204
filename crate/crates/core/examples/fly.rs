//! Flies the built-in mission with the default configuration, optionally
//! overridden by `NAME=value` arguments, and prints the monitor verdict.
//!
//! ```text
//! cargo run --release --example fly -- ATC_RAT_PIT_P=0.012
//! ```

use lgd_core::pipeline::{validate_config, Inputs, ValidateOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inputs = Inputs::builtin();
    let mut config = inputs.table.default_configuration();
    for arg in std::env::args().skip(1) {
        let (name, value) = arg.split_once('=').ok_or("expected NAME=value")?;
        config = inputs.table.with_value(&config, name, value.parse()?)?;
    }
    let prearm = inputs.rules.check(&inputs.table, &config);
    for (param, rule) in &prearm.reasons {
        println!("pre-arm: {param} fails {rule}");
    }
    let (verdict, _, injected) = validate_config(&inputs, &config, &ValidateOptions::default(), 1)?;
    if injected {
        println!("rejected before arming; injected into a default flight instead");
    }
    println!("verdict: {}", verdict.label.as_str());
    if let Some(ev) = verdict.evidence {
        println!("evidence: {ev:?}");
    }
    Ok(())
}
