use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lgd_core::predictor::{Lstm, CONTEXT_DIM, OUTPUT_DIM};
use lgd_core::rng;
use lgd_core::search::de;
use lgd_core::simkernel::{run_mission, Mission, SimOptions};
use lgd_core::ParameterTable;

fn mission(c: &mut Criterion) {
    let table = ParameterTable::builtin();
    let config = table.default_configuration();
    let m = Mission::builtin();
    let opts = SimOptions::default();
    c.bench_function("mission_default_config", |b| {
        b.iter(|| run_mission(&table, black_box(&config), &m, None, &opts).unwrap())
    });
}

fn lstm(c: &mut Criterion) {
    // Default model shape on the built-in table.
    let (hidden, h, batch) = (64, 4, 64);
    let input = CONTEXT_DIM + ParameterTable::builtin().dim();
    let output = OUTPUT_DIM;
    let mut r = rng::stream(1, &[0]);
    let net = Lstm::init(input, hidden, output, &mut r);
    let inputs: Vec<f64> = (0..batch * h * input)
        .map(|k| ((k * 37) % 101) as f64 / 50.0 - 1.0)
        .collect();
    let targets: Vec<f64> = (0..batch * output)
        .map(|k| ((k * 13) % 29) as f64 / 14.0 - 1.0)
        .collect();
    let idx: Vec<usize> = (0..batch).collect();
    c.bench_function("lstm_forward_window", |b| {
        b.iter(|| net.forward(black_box(&inputs[..h * input])))
    });
    c.bench_function("lstm_loss_and_grad_batch64", |b| {
        b.iter(|| net.loss_and_grad(black_box(&inputs), &targets, h, &idx))
    });
}

fn de_generation(c: &mut Criterion) {
    let d = 23;
    let params = de::SearchParams::default();
    let pop = de::initial_population(&vec![0.5; d], params.np, 1.0, 3, 0);
    let fitness: Vec<f64> = pop
        .iter()
        .map(|x| -x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>())
        .collect();
    c.bench_function("de_generation_np200_d23", |b| {
        b.iter(|| {
            let variants = de::mutate(&pop, &fitness, params.f, 3, 0, 1);
            de::crossover(&pop, &variants, params.cr, 3, 0, 1)
        })
    });
}

criterion_group!(benches, mission, lstm, de_generation);
criterion_main!(benches);
