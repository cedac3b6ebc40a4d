//! Experiment harness for the proximal-gradient homotopy solver: seeded
//! problem generators, a runner that writes per-algorithm trace CSVs and a
//! JSON summary, static SVG plots, and the `pgh` command line.

pub mod config;
pub mod error;
pub mod generate;
pub mod io;
pub mod plot;
pub mod runner;

pub use config::{Algorithm, ExperimentConfig, NormChoice, ProblemKind};
pub use error::{BenchError, Result};
pub use generate::{default_lambda_tgt, gen_problem, Generated, LambdaDefaults};
pub use plot::{emit_plot, PlotKind, Series};
pub use runner::{run_bench, BenchSummary, TraceRow};
