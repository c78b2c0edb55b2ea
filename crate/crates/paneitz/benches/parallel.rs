//! Parallel core against the sequential fallback on the same workloads.

use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use paneitz::bubbles::{deficit_scan, BubbleSpec, Variant};
use paneitz::conformal::maxprinciple_path;
use paneitz::green::{mass_scan, torus5_fit};
use paneitz::paneitz::assemble;
use paneitz::par;
use paneitz::spectral::build_discretization;
use paneitz::{Field, ModelManifold, PaneitzOperator, Point, Symmetry};

fn product_2d(modes: usize) -> PaneitzOperator {
    let m = ModelManifold::product(5, 2.0 * PI).unwrap();
    assemble(&build_discretization(&m, Symmetry::CircleZonal2D, modes).unwrap()).unwrap()
}

fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("parallel_vs_sequential");
    g.sample_size(10);

    let p = product_2d(96);
    let poles = [
        Point::product_polar(5, 0.0, 0.0),
        Point::product_polar(5, 1.0, PI),
    ];
    // P u ≥ 0, as the path requires
    let w = Field::from_fn(p.disc(), |x| (1.0 + 0.2 * x[0].cos() * x[1].cos()).powi(2)).unwrap();
    let u = p.solve(&w).unwrap();
    let mut template = BubbleSpec::new(0.1, poles[0].clone(), Variant::Glued);
    template.inner_radius = 0.45;
    let eps = [0.2, 0.1, 0.05];

    for mode in ["parallel", "sequential"] {
        let run = |f: &mut dyn FnMut()| {
            if mode == "parallel" {
                f()
            } else {
                par::sequential(f)
            }
        };
        g.bench_function(BenchmarkId::new("assemble_2d_j96", mode), |b| {
            b.iter(|| run(&mut || drop(product_2d(96))))
        });
        g.bench_function(BenchmarkId::new("mass_scan_2d_j96", mode), |b| {
            b.iter(|| run(&mut || drop(mass_scan(&p, &poles, (0.15, PI / 4.0)).unwrap())))
        });
        g.bench_function(BenchmarkId::new("maxprinciple_path_21", mode), |b| {
            b.iter(|| run(&mut || drop(maxprinciple_path(&p, &u, 21).unwrap())))
        });
        g.bench_function(BenchmarkId::new("glued_deficit_scan", mode), |b| {
            b.iter(|| {
                run(&mut || drop(deficit_scan(&p, &template, &eps, (0.15, PI / 4.0)).unwrap()))
            })
        });
        g.bench_function(BenchmarkId::new("torus_ewald_fit", mode), |b| {
            b.iter(|| run(&mut || drop(torus5_fit((0.1, 0.7), 8).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
