//! Configuration, variant construction, training sweeps, evaluation and
//! reporting.

pub mod config;
pub mod eval;
pub mod summary;
pub mod train;

pub use config::{variant_topology, RunConfig, VARIANTS};
pub use eval::{evaluate, evaluate_network, EvalResult};
pub use summary::{render_svg, summarize, SummaryRow};
pub use train::{load_checkpoint, read_metrics, resume_training, run_training, write_metrics, MetricsRow, Snapshot};
