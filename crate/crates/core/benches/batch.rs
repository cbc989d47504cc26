//! Sequential vs rayon execution on the batch entry points.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use daas_core::fleet::EnergyModel;
use daas_core::intake::{extract_batch, generate_corpus, PatternBackend, StructuredRequest};
use daas_core::planner::select_drone;
use daas_core::routing::{route_batch, Algorithm, CostMode, RouteContext, RouteQuery};
use daas_core::weather::SafetyLimits;
use daas_core::{synth, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn routes(c: &mut Criterion) {
    let net = synth::gen_network(200, 1).unwrap();
    let weather = synth::gen_weather(&net, 1, 1).unwrap();
    let ctx = RouteContext::new(&net, &weather, 0, SafetyLimits::default());
    let queries: Vec<RouteQuery> = (0..200).map(|i| RouteQuery { from: i, to: 199 - i, v_nominal: 18.0 }).collect();
    let mut g = c.benchmark_group("route_batch");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| route_batch(&ctx, Algorithm::Dijkstra, CostMode::WeatherTime, black_box(&queries), exec))
        });
    }
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let net = synth::gen_network(50, 2).unwrap();
    let corpus = generate_corpus(&net, 5000, 2).unwrap();
    let texts: Vec<&str> = corpus.iter().map(|r| r.free_text.as_str()).collect();
    let backend = PatternBackend { net: &net };
    let mut g = c.benchmark_group("extract_batch");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| extract_batch(&backend, black_box(&texts), exec, None))
        });
    }
    g.finish();
}

fn selection(c: &mut Criterion) {
    let net = synth::gen_network(150, 3).unwrap();
    let weather = synth::gen_weather(&net, 1, 3).unwrap();
    let fleet = synth::gen_fleet(&net, 64, 3).unwrap();
    let ctx = RouteContext::new(&net, &weather, 0, SafetyLimits::default());
    let model = EnergyModel::default();
    let req = StructuredRequest { request_id: 1, start_node: 10, destination_node: 140, payload_kg: 2.0 };
    let mut g = c.benchmark_group("select_drone");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| select_drone(black_box(&fleet), &req, &ctx, &model, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, routes, extraction, selection);
criterion_main!(benches);
