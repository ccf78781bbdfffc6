use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use flatlas::accessibility::{classify_point, default_budget, gamma_accessibility, strong_accessibility};
use flatlas::atlas::corpus;
use flatlas::flat_degenerate::{analyze_degenerate, DegenerateOptions};
use flatlas::geometry::lie_bracket;
use flatlas::sampling::Sampler;

fn towers(c: &mut Criterion) {
    let sampler = Sampler::default();
    for name in ["example1.sys", "example2.sys", "example3.sys"] {
        let file = corpus(name).unwrap();
        let sys = file.system().unwrap();
        let point = file.point_map(&file.points[0]);
        let budget = default_budget(&sys);
        c.bench_function(&format!("brackets/{name}"), |b| {
            b.iter(|| {
                for f in sys.controls() {
                    black_box(lie_bracket(sys.drift(), f).unwrap());
                }
            })
        });
        c.bench_function(&format!("gamma_tower/{name}"), |b| {
            b.iter(|| gamma_accessibility(&sys, black_box(&point), budget, &sampler).unwrap())
        });
        c.bench_function(&format!("d_tower/{name}"), |b| {
            b.iter(|| strong_accessibility(&sys, black_box(&point), budget, &sampler).unwrap())
        });
        c.bench_function(&format!("classify/{name}"), |b| b.iter(|| classify_point(&sys, black_box(&point), budget, &sampler).unwrap()));
    }
    for (name, point) in [("example1.sys", "singular"), ("example3.sys", "singular")] {
        let file = corpus(name).unwrap();
        let sys = file.system().unwrap();
        let point = file.point_map(file.point(point).unwrap());
        c.bench_function(&format!("degenerate_pipeline/{name}"), |b| {
            b.iter(|| analyze_degenerate(&sys, black_box(&point), &DegenerateOptions::default(), &sampler).unwrap())
        });
    }
}

criterion_group!(benches, towers);
criterion_main!(benches);
