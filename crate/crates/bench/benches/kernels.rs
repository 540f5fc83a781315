use std::hint::black_box;

use asm4vi::analysis::min_sine_angle;
use asm4vi::bfs::element_matrices;
use asm4vi::*;
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

fn elements(c: &mut Criterion) {
    c.bench_function("element matrices (plate)", |b| b.iter(|| element_matrices(BilinearForm::Plate, black_box(1.0 / 32.0))));
    c.bench_function("element matrices (control)", |b| {
        b.iter(|| element_matrices(BilinearForm::Control { beta: 1e-4 }, black_box(1.0 / 32.0)))
    });
}

fn assembly(c: &mut Criterion) {
    let grid = Grid::new(32).unwrap();
    let spec = ProblemSpec::plate_obstacle();
    c.bench_function("assemble plate n=32", |b| b.iter(|| assemble(&spec, black_box(&grid)).unwrap()));
}

fn schwarz_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("one Schwarz iteration n=32");
    group.sample_size(20);
    let p = assemble(&ProblemSpec::plate_obstacle(), &Grid::new(32).unwrap()).unwrap();
    let dd = build_decomposition(32, 8, 2).unwrap();
    for levels in [1, 2] {
        let mut solver = SchwarzSolver::new(&p, &dd, SchwarzConfig { levels, ..Default::default() }).unwrap();
        let u = DVector::zeros(p.num_free());
        group.bench_function(format!("{levels} level"), |b| b.iter(|| solver.correction(black_box(&u), 0).unwrap()));
    }
    group.finish();
}

fn angles(c: &mut Criterion) {
    c.bench_function("min sine angle m=8", |b| b.iter(|| min_sine_angle(black_box(8)).unwrap()));
}

criterion_group!(benches, elements, assembly, schwarz_iteration, angles);
criterion_main!(benches);
