//! Scaling harness: peak memory and wall time against speech duration,
//! log-log exponent fits and crossover detection between two models.

mod chart;
mod crossover;
mod fit;
mod measure;
mod report;

pub use chart::render_svg;
pub use crossover::{detect_crossover, Crossover, CrossoverReport, MetricComparison};
pub use fit::{fit_exponent, ExponentFit, BOOTSTRAP_RESAMPLES};
pub use measure::{measure, measure_model, BenchConfig, BenchRecord, Metric};
pub use report::{emit_report, read_csv, write_csv, ReportFiles, CSV_HEADER};
