//! Parallel against sequential execution of the scenario-parallel hot
//! paths. Worker counts are compared within one build; run once more with
//! `--no-default-features` for the build without rayon.

use std::hint::black_box;
use std::path::Path;

use cascadesim_core::engine::{prepare, simulate, RunConfig};
use cascadesim_core::par::parallel_enabled;
use cascadesim_core::scenario::{generate, ParModel};
use cascadesim_core::sddp::{run_sddp, SddpConfig};
use cascadesim_core::system::load_system;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn fixture(name: &str, file: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).join(file)
}

fn mode() -> &'static str {
    if parallel_enabled() {
        "parallel"
    } else {
        "sequential"
    }
}

fn scenario_generation(c: &mut Criterion) {
    let par: ParModel = serde_json::from_str(&std::fs::read_to_string(fixture("desk", "par.json")).unwrap()).unwrap();
    let mut g = c.benchmark_group("scenario_generation");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(mode(), "16x2016h"), |b| {
        b.iter(|| black_box(generate(&par, 16, 2016, 1).unwrap()))
    });
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new("one_thread", "16x2016h"), |b| {
            b.iter(|| one.install(|| black_box(generate(&par, 16, 2016, 1).unwrap())))
        });
    }
    g.finish();
}

fn sddp_iteration(c: &mut Criterion) {
    let cfg = RunConfig::load(&fixture("minimal", "config.json")).unwrap();
    let par: ParModel = serde_json::from_str(&std::fs::read_to_string(fixture("minimal", "par.json")).unwrap()).unwrap();
    let model = load_system(&cfg.system).unwrap();
    let set = generate(&par, 8, 6 * 168, 3).unwrap();
    let sddp = SddpConfig {
        max_iterations: 2,
        forward_paths: Some(8),
        confidence_stop: false,
        ..SddpConfig::default()
    };
    let mut g = c.benchmark_group("sddp_forward_backward");
    g.sample_size(10);
    for workers in [1, 4] {
        g.bench_with_input(BenchmarkId::new(mode(), format!("{workers}_workers")), &workers, |b, &w| {
            b.iter(|| black_box(run_sddp(&model, &set, 5, &sddp, 3, w).unwrap()))
        });
    }
    g.finish();
}

fn chain_dispatch(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&fixture("minimal", "config.json")).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.num_scenarios = 4;
    cfg.checkpoint = false;
    let prep = prepare(&cfg).unwrap();
    let mut g = c.benchmark_group("chain_dispatch");
    g.sample_size(10);
    for workers in [1, 4] {
        cfg.workers = workers;
        g.bench_function(BenchmarkId::new(mode(), format!("4x24h_{workers}_workers")), |b| {
            b.iter(|| black_box(simulate(&cfg, &prep, None).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, scenario_generation, sddp_iteration, chain_dispatch);
criterion_main!(benches);
