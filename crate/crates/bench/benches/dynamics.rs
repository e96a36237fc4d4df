use std::hint::black_box;

use bifocus::spiral::find_spiral_line_intersections;
use bifocus::{find_reversible_periodic, refine_nested_disk, return_map, ModelParams, SigmaPoint};
use bifocus_bench::lattice;
use criterion::{criterion_group, criterion_main, Criterion};

fn return_maps(c: &mut Criterion) {
    let mp = ModelParams::default_for(2);
    let pts = lattice(&mp, 256);
    let f64_pts: Vec<SigmaPoint> = pts.iter().map(|p| p.to_f64()).collect();
    c.bench_function("return_map_dd_256", |b| b.iter(|| pts.iter().filter(|p| return_map(black_box(*p), &mp).is_ok()).count()));
    c.bench_function("return_map_f64_256", |b| b.iter(|| f64_pts.iter().filter(|p| return_map(black_box(*p), &mp).is_ok()).count()));
}

fn searches(c: &mut Criterion) {
    let mp = ModelParams::default_for(2);
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("spiral_crossings_m1_5", |b| b.iter(|| find_spiral_line_intersections(1, 2, black_box([1, 5]), &mp).unwrap()));
    g.bench_function("chain_depth3", |b| b.iter(|| refine_nested_disk(black_box(&[1, 2, 1]), &[2, 2], &mp).unwrap()));
    g.bench_function("periodic_m2", |b| b.iter(|| find_reversible_periodic(black_box(&[1, 2, 1]), &[2, 2], &mp).unwrap()));
    g.bench_function("periodic_m5_extended", |b| {
        b.iter(|| find_reversible_periodic(black_box(&[1, 2, 2, 1, 1, 2]), &[2; 5], &mp).unwrap())
    });
    g.finish();
}

criterion_group!(benches, return_maps, searches);
criterion_main!(benches);
