//! Numerical laboratory for the normalized Kahler-Ricci flow written at the
//! level of the metric potential, posed on flat complex tori of dimension one
//! or two.
//!
//! The flow `du/dt = log((omega_t + i d dbar u)^n / Omega) - u` is discretized
//! pseudospectrally and integrated with classical Runge-Kutta steps; the
//! [`estimates`] module re-evaluates the evolution identities and
//! maximum-principle bounds of the flow on every snapshot.

pub mod background;
pub mod estimates;
pub mod oracles;
pub mod checkpoint;
pub mod error;
pub mod flow;
pub mod grid;
pub mod hermitian;

pub use background::{Background, CertificateConstants, Scenario, ScenarioParams};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result, Witness};
pub use grid::{Grid, GridSpec, Reduction, ScalarField};
pub use flow::{FlowState, Integrator, IntegratorConfig, RunOutcome, Snapshot, Termination};
pub use hermitian::{ConnectionField, HermitianField, HermitianMatrix};
