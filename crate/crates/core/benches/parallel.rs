//! Sequential vs rayon execution of a small experiment and of the
//! per-column FBS matrix solve.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fawp::channels::gen_rayleigh;
use fawp::fbs::{pre_fawp_fbs_matrix, FbsParams, InitMode};
use fawp::harness::{run_experiment, ExperimentConfig};
use fawp::wf::wf_woodbury;
use fawp::{Execution, FiniteAlphabet};

const CONFIG: &str = r#"
constellation = "16qam"
snr_db = [0.0, 10.0]
num_channels = 8
vectors_per_channel = 20
[system]
bs_antennas = 64
ues = 8
[[precoder]]
variant = "WF"
[[precoder]]
variant = "PreFAWP-WF"
bits = 1
[[precoder]]
variant = "PreFAWP-FBS"
bits = 1
t_max = 10
"#;

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if Execution::parallel_available() {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn experiment(c: &mut Criterion) {
    let cfg = ExperimentConfig::from_toml(CONFIG, std::path::Path::new(".")).unwrap();
    let mut g = c.benchmark_group("run_experiment");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| black_box(run_experiment(&cfg, exec).unwrap())));
    }
    g.finish();
}

fn fbs_matrix(c: &mut Criterion) {
    let h = gen_rayleigh(256, 16, 1);
    let kappa = 0.16;
    let a1 = FiniteAlphabet::new(1).unwrap();
    let q = wf_woodbury(&h, kappa).unwrap();
    let params = FbsParams::default_for(&h, 10, InitMode::Mrt);
    let mut g = c.benchmark_group("pre_fbs_256x16");
    g.sample_size(20);
    for (name, exec) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| black_box(pre_fawp_fbs_matrix(&h, kappa, &a1, &params, &q, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, experiment, fbs_matrix);
criterion_main!(benches);
