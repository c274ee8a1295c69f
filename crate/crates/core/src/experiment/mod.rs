//! Seeded sweeps over noise level and training-set size, with CSV output,
//! significance reports and SVG bar charts.
//!
//! No network is trained: initial beliefs come from [`init_beliefs`], a noisy
//! softmax of the ground truth whose noise grows with the input noise level. The
//! `identity` model keeps those beliefs fixed. In the sample-size sweep only the
//! Hopfield memories see the training set, so the other models give the same
//! numbers for every size.
//!
//! Every random draw comes from a stream keyed by (config seed, seed index, purpose,
//! noise level, instance), so output does not depend on thread count.

mod config;
mod plot;
mod report;
mod rows;
mod sweep;

pub use config::{CrfParams, ExperimentConfig, HopfieldParams, InitParams, Model, PlotParams, SomParams};
pub use plot::{emit_plots, PLOT_HEIGHT, PLOT_METRIC};
pub use report::{
    significance_report, write_report, CellKey, Dimension, ReportCell, Verdict, REPORT_HEADER, SIGNIFICANCE_LEVEL,
};
pub use rows::{
    format_sig9, load_rows, read_rows, rows_to_csv, save_rows, write_rows, ResultRow, CSV_HEADER, WARNING_PREFIX,
};
pub use sweep::{init_beliefs, memory_reconstruction_error, run_noise_sweep, run_sample_sweep};
