//! Simulation and estimation toolkit for the affine recursion
//! `X_{n+1} = A_{n+1} X_n + B_{n+1}` with i.i.d. coefficient pairs `(A, B)`
//! in the heavy-tailed (Kesten) regime.
//!
//! The crate is organized around the pipeline that turns a coefficient law
//! into validated rare-event estimates for the scaled additive path
//! `t -> (1/n) * sum_{i < floor(nt)} X_i`:
//!
//! * [`model`] — coefficient laws, path simulation, stationarity and
//!   moment diagnostics;
//! * [`regen`] — Nummelin splitting: minorization certificates, split-chain
//!   simulation, i.i.d. cycle extraction;
//! * [`measure`] — the tail index `alpha` with `E[A^alpha] = 1`, exponential
//!   tilting, the dual change of measure, and the cycle-area tail constants;
//! * [`pathspace`] — cadlag step functions, the `M1'` and `J1` Skorokhod
//!   metrics, jump extraction and jump-count analysis of path events;
//! * [`ldp`] — limit measures built from Pareto jumps at uniform times,
//!   and the rare-event estimators (direct, cycle-planting importance
//!   sampling, closed-form asymptotics) behind a common interface.
//!
//! All randomness flows through counter-based streams keyed by
//! `(seed, domain, replication)` (see [`rng`]), so every estimate in the
//! crate is bit-reproducible independently of thread count.

pub mod ldp;
pub mod measure;
pub mod model;
pub mod pathspace;
pub mod regen;
pub mod rng;
pub mod stats;

pub use ldp::{
    BarrierStudy, LimitMeasureSpec, MethodEstimate, RareEventConfig, RareEventMethod,
    RareEventReport,
};
pub use measure::{AlphaCalibration, ConstantsReport, TailCurve, TiltedModel};
pub use model::{CoupleLaw, Model, ModelDiagnostics, ModelError, PathSample, ScalarLaw};
pub use pathspace::{EventSet, StepFn};
pub use regen::{CycleStats, MinorizationMode, MinorizationParams, RegenError, SplitTrajectory};
pub use rng::StreamFactory;
