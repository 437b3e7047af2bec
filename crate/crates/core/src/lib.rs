//! Goal-oriented dynamic iteration (waveform relaxation) for linear ODE
//! initial value problems
//!
//! ```text
//!     U'(t) + B U(t) = Y(t),   U(t0) = U_t0,   t in [t0, tn]
//! ```
//!
//! The system is split with a binary mask `S` into an implicit part
//! `B_hat = S * B` and a lagged part `B_check = B - B_hat`. Every iterate
//! is discretized with finite elements in time on per-component grids
//! (multiadaptive meshes). Two error sources are balanced against a point
//! quantity of interest `J(U) = sum_r J_r . U(tau_r)`:
//!
//! - the splitting error, bounded a priori from the logarithmic norm of
//!   `-B_hat` and the spectral norm of `B_check`;
//! - the discretization error, estimated with dual weighted residuals on
//!   the stacked iteration system and localized per component cell.
//!
//! The local estimators drive bisection of the worst cells
//! ([`driver::run`]); the comparison of both estimators stops the inner
//! iteration.
//!
//! Module map:
//!
//! - [`model`]: problem, forcing signals, quantity of interest, splitting.
//! - [`mesh`]: per-component grids, cell selection, bisection, transfer.
//! - [`assembly`]: basis families and the discrete operators.
//! - [`solver`]: sparse factorization, primal sweeps and dual solves.
//! - [`estimators`]: splitting bound and localized DWR estimators.
//! - [`driver`]: the adaptive refinement loop.
//! - [`reference`]: high-accuracy oracles used for verification.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod mesh;
pub mod model;
pub mod reference;
pub mod solver;

pub use assembly::{assemble, AssembledSystem, BasisFamily, DiscreteFunction, Scheme};
pub use driver::{run, LevelRecord, RunConfig, RunHistory};
pub use error::{Error, Result};
pub use estimators::EstimatorReport;
pub use mesh::{CellId, MultiMesh};
pub use model::{Problem, Qoi, QoiTerm, Side, Signal, SignalTerm, Splitting, SplittingScheme};
pub use reference::ReferenceSolution;
