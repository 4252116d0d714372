//! Cadlag step-plus-drift paths on `[0, 1]`, Skorokhod-type metrics, and
//! path-event analysis.

mod event;
mod metric;
mod step_fn;

pub use event::{jump_index, EventError, EventSet, JumpIndexReport, JumpMode, PathFacts, SlicePred};
pub use metric::{j1_distance, m1_prime_distance, MetricError};
pub use step_fn::{min_jumps_to_reach, Jump, OscillationReport, StepFn, StepFnError};
