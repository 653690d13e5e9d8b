use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use indiff::bachelier::BachelierParams;
use indiff::conjugacy::Conjugate;
use indiff::engine::{Engine, EngineOptions};
use indiff::field::{Field, Order};
use indiff::parallel::Execution;
use indiff::representative::PrimalPoint;
use indiff::strategy::Strategy;
use indiff::{MakerPanel, Payoff, TreeSpec, UtilitySpec, WeightVector};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn euler_paths(c: &mut Criterion) {
    let p = BachelierParams::default();
    let panel = p.panel().unwrap();
    let tree = p.tree_spec(128).unwrap().build().unwrap();
    let field = Field::new(&panel, &tree);
    let conj = Conjugate::new(&field);
    let lambda = WeightVector::uniform(1);
    let mut group = c.benchmark_group("euler_paths");
    group.sample_size(10);
    for (name, exec) in MODES {
        let eng = Engine::new(&conj).with_options(EngineOptions {
            exec,
            ..Default::default()
        });
        group.bench_with_input(BenchmarkId::new(name, 256), &256usize, |b, &n| {
            b.iter(|| black_box(eng.simulate_sde(&Strategy::constant(vec![1.0]), &lambda, n, 7).unwrap()))
        });
    }
    group.finish();
}

fn field_sweep(c: &mut Criterion) {
    let panel = MakerPanel::new(vec![
        UtilitySpec::exponential(1.0).unwrap(),
        UtilitySpec::sum_of_exponentials(vec![0.5, 0.5], vec![0.6, 2.0]).unwrap(),
        UtilitySpec::exponential(0.7).unwrap(),
    ])
    .unwrap();
    let tree = TreeSpec::new(
        6,
        1.0,
        2,
        Payoff::expression("0.3*B1 - 0.2*B2").unwrap(),
        vec![
            Payoff::expression("1 + 0.5*B1").unwrap(),
            Payoff::expression("0.4*B2 + 0.1*B1^2").unwrap(),
        ],
    )
    .build()
    .unwrap();
    let a = PrimalPoint::new(WeightVector::uniform(3), 0.2, vec![0.3, -0.4]);
    let mut group = c.benchmark_group("field_backward_all");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                let field = Field::new(&panel, &tree);
                black_box(field.backward_all(&a, Order::Hessian, exec).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, euler_paths, field_sweep);
criterion_main!(benches);
