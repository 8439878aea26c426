//! Config files, TSV data, JSONL traces and the command implementations.

pub mod config;
pub mod run;
pub mod trace;
pub mod tsv;

pub use config::RunConfig;
pub use run::{chain_seed, load_traces, run_diagnose, run_evaluate, run_fit, run_simulate};
pub use trace::{read_trace, TraceHeader, TraceRecord, TraceWriter};
pub use tsv::{load_dataset, load_links, load_network, load_variables};
