//! Sequential vs data-parallel attack-sweep throughput.
//!
//! Two workloads: the stock economic bundle (few targets, measures fixed
//! overhead) and a densified store (~hundreds of jobs, where the rayon path
//! should win). Without the `parallel` feature only the sequential variants
//! run.

use criterion::{criterion_group, criterion_main, Criterion};

use ats_core::adversary::HomoglyphTable;
use ats_core::evaluator::{sweep, Execution, SweepConfig, SweepInputs};
use ats_core::fixtures::{economic_bundle, EconomicBundle};
use ats_core::forecaster::PersistenceForecaster;
use ats_core::news::{Headline, HeadlineStore, Lexicon};

fn dense_store(bundle: &EconomicBundle) -> HeadlineStore {
    let mut headlines = bundle.store.headlines().to_vec();
    let mut k = 0usize;
    for &date in bundle.calendar.dates().iter().step_by(2) {
        for name in ["Nvidia", "Tesla", "Exxon Mobil"] {
            headlines.push(Headline {
                id: format!("dense-{k}"),
                date,
                raw_html: format!("{name} schedules earnings call for Thursday"),
                source: "bench".to_string(),
            });
            k += 1;
        }
    }
    HeadlineStore::new(headlines).expect("bench ids are unique")
}

fn config_for(execution: Execution) -> SweepConfig {
    SweepConfig { execution, ..SweepConfig::default() }
}

fn bench_sweep(c: &mut Criterion) {
    let bundle = economic_bundle();
    let table = HomoglyphTable::default_confusables();
    let lexicon = Lexicon::default_lexicon();

    let inputs = SweepInputs {
        calendar: &bundle.calendar,
        series: &bundle.series,
        portfolio: &bundle.portfolio,
        store: &bundle.store,
        lexicon,
        table: &table,
    };
    let mut group = c.benchmark_group("sweep_bundle");
    group.bench_function("sequential", |b| {
        b.iter(|| sweep(&inputs, &PersistenceForecaster, &config_for(Execution::Sequential)))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| {
            sweep(
                &inputs,
                &PersistenceForecaster,
                &config_for(Execution::Parallel { threads: None }),
            )
        })
    });
    group.finish();

    let dense = dense_store(&bundle);
    let dense_inputs = SweepInputs { store: &dense, ..inputs };
    let mut group = c.benchmark_group("sweep_dense");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            sweep(
                &dense_inputs,
                &PersistenceForecaster,
                &config_for(Execution::Sequential),
            )
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| {
            sweep(
                &dense_inputs,
                &PersistenceForecaster,
                &config_for(Execution::Parallel { threads: None }),
            )
        })
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
