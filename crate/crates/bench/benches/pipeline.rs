// SPDX-License-Identifier: MIT OR Apache-2.0

use std::hint::black_box;

use case_bench::changepoint_instance;
use case_core::gosd::{build_gosd, enumerate_connected_subgraphs};
use case_core::gram::{gram_changepoint, gram_powerdecay, LinearFilter};
use case_core::pipeline::{sp_from_vartheta, CaseConfig, CasePipeline, Observation};
use case_core::rates::{fisher_info_patched, LtsPatterns, LtsSearch};
use case_core::sparsify::sparsify;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn changepoint_select(c: &mut Criterion) {
    let mut group = c.benchmark_group("changepoint_select");
    group.sample_size(20);
    for &(v, tau) in &[(0.75, 5.5), (0.45, 5.5)] {
        let p = 5000;
        let (y, _) = changepoint_instance(p, v, tau, 1);
        let g = gram_changepoint(p).unwrap();
        let cfg = CaseConfig::from_sparsity_strength(&g, sp_from_vartheta(p, v), tau).unwrap();
        let pipe = CasePipeline::new(&g, &cfg).unwrap();
        let obs = Observation::ChangePointSeries(y);
        group.bench_with_input(BenchmarkId::from_parameter(v), &obs, |b, obs| {
            b.iter(|| pipe.run(black_box(obs)).unwrap())
        });
    }
    group.finish();
}

fn gosd_enumeration(c: &mut Criterion) {
    let g = gram_powerdecay(2000, 0.95, 5.0).unwrap();
    let sp = sparsify(&g, &LinearFilter::first_difference(), 0.05).unwrap();
    let gosd = build_gosd(&sp, 0.05);
    c.bench_function("enumerate_connected_m3", |b| b.iter(|| enumerate_connected_subgraphs(black_box(&gosd), 3)));
}

fn patched_information(c: &mut Criterion) {
    let g = gram_powerdecay(5000, 0.95, 5.0).unwrap();
    let f = LinearFilter::first_difference();
    let iplus: Vec<usize> = (1989..=2009).collect();
    c.bench_function("fisher_info_patched_21", |b| {
        b.iter(|| fisher_info_patched(&g, &f, &[1999], black_box(&iplus)).unwrap())
    });
}

fn lts_boundary(c: &mut Criterion) {
    let mut group = c.benchmark_group("lts");
    group.sample_size(10);
    group.bench_function("patterns_w300", |b| b.iter(|| LtsPatterns::new(0.35, 300, LtsSearch::default()).unwrap()));
    let l = LtsPatterns::new(0.35, 300, LtsSearch::default()).unwrap();
    group.bench_function("boundary", |b| b.iter(|| l.boundary(black_box(0.3)).unwrap()));
    group.finish();
}

criterion_group!(benches, changepoint_select, gosd_enumeration, patched_information, lts_boundary);
criterion_main!(benches);
