//! Exact open-system dynamics of N strongly driven two-level atoms coupled on
//! resonance to a damped cavity mode.
//!
//! The crate is split along the physics:
//!
//! - [`model`]: rotated-basis bookkeeping, collective spin sectors, symmetric
//!   Dicke states and decoherence-free-subspace classification.
//! - [`exact`]: the closed-form joint state and every derived quantity.
//! - [`oracle`]: a brute-force Lindblad integrator in a truncated Fock space.
//! - [`entangle`]: concurrence, tangles and Bell-gem checks.
//! - [`phase_space`]: coherent states and Wigner maps.
//!
//! Atom `l` (zero-based) is bit `l` of every atomic index. In the rotated basis
//! a set bit means `|+>`; in the energy basis a set bit means `|e>`.

pub mod density;
pub mod entangle;
pub mod error;
pub mod exact;
pub mod model;
pub mod oracle;
pub mod phase_space;

pub use num_complex::Complex64 as C64;

pub use density::DensityMatrix;
pub use error::{Error, Result};
pub use exact::{ClosedFormState, ModelParams};
pub use model::{AtomicAmplitudes, Basis, DickeWeights, RotatedBasisIndex};
