//! Rayon pool versus single-threaded execution on the data-parallel kernels.
//!
//! With default features each workload runs on the global pool and on a
//! one-thread pool. Built with `--no-default-features` only the sequential
//! path exists and is reported under `sequential`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lindsim::duhamel::{choose_orders, enumerate_kraus, g_k_quadrature};
use lindsim::{nested_grid, random, Lindbladian};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(d: usize, m: usize) -> Lindbladian {
    random::lindbladian(&mut ChaCha8Rng::seed_from_u64(17), d, m, 1.0)
}

type Workload = (&'static str, Box<dyn Fn() + Send + Sync>);

fn workloads() -> Vec<Workload> {
    let pair = model(4, 2);
    let qubit = model(2, 2);
    vec![
        (
            "nested_weights_k5_q8",
            Box::new(|| {
                std::hint::black_box(nested_grid(5, 8, 1.0).unwrap().weight_total());
            }),
        ),
        (
            "g_k_quadrature_2q_k3_q4",
            Box::new(move || {
                std::hint::black_box(g_k_quadrature(&pair, 0.3, 3, 4).unwrap());
            }),
        ),
        (
            "kraus_sum_1q_eps1e-4",
            Box::new(move || {
                let cfg = choose_orders(&qubit, 0.2, 1e-4).unwrap();
                let cp = enumerate_kraus(&qubit, 0.2, &cfg).unwrap();
                std::hint::black_box(cp.as_superoperator().unwrap());
            }),
        ),
    ]
}

fn compare(c: &mut Criterion) {
    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    for (name, work) in workloads() {
        #[cfg(feature = "parallel")]
        {
            let label = format!("pool_{}", rayon::current_num_threads());
            group.bench_function(BenchmarkId::new(name, label), |b| b.iter(&work));
            group.bench_function(BenchmarkId::new(name, "single_thread"), |b| b.iter(|| single.install(&work)));
        }
        #[cfg(not(feature = "parallel"))]
        group.bench_function(BenchmarkId::new(name, "sequential"), |b| b.iter(&work));
    }
    group.finish();
}

criterion_group!(benches, compare);
criterion_main!(benches);
