//! Benchmark harness for the parallel SMC toolkit: experiment protocols,
//! run records, CSV emission and median/speed-up summaries.

pub mod config;
pub mod experiments;
pub mod record;

pub use experiments::{
    bench_multisensor, bench_redistribute, bench_sort, bench_worst_case, compare_mh, BenchCommon,
    BenchModel, SortAlgo, VsMhOptions, VsMhReport,
};
pub use record::{
    bootstrap_medians, emit_csv, median, parse_csv, records_to_csv, summarise, summary_to_csv,
    RunRecord, SummaryRow,
};
