//! Low-rank composite factorization
//!
//! `min_{U,V} f(UVᵀ) + λ[ϑ(U) + ϑ(V)] + (μ/2)[‖U‖_F² + ‖V‖_F²]`
//!
//! solved by majorized proximal alternating minimization with SVD-based
//! subspace correction ([`pama`]) or by a line-search PALM baseline
//! ([`palm`]), with column regularizers from [`theta`], one-bit losses from
//! [`loss`] and runtime certificates from [`diagnostics`].
//!
//! [`experiment`] generates one-bit problems and runs seeded λ sweeps whose
//! CSV output is reproducible byte for byte apart from timings; [`checks`]
//! holds the oracle suites shared by the `pama check` command and the
//! acceptance tests.

pub mod checks;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod loss;
pub mod observations;
pub mod palm;
pub mod pama;
pub mod theta;
pub mod trace;

pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use loss::{LossKind, Noise, SmoothLoss};
pub use observations::{Observation, ObservationSet};
pub use palm::{run_palm, PalmConfig, PalmOutput};
pub use pama::{run_pama, PamaConfig, PamaOutput, PamaSolver, PamaState};
pub use theta::ThetaSpec;
pub use trace::{StopReason, StoppingRule, TraceRecord};
