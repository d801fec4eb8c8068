//! Secure quantized aggregation for federated learning.
//!
//! * [`ring`]: fixed-point arithmetic over Z_2^32 and secret-sharing types.
//! * [`quantize`]: SQ, HSQ and KSQ one-bit quantizers and the NMSE metric.
//! * [`bitconv`]: exact and approximate bit-to-arithmetic conversion.
//! * [`mpc`]: simulated three-server aggregation protocols and cost ledger.
//! * [`robust`]: norm-scaling and cosine-filtering defense and the Min-Max attack.
//! * [`experiments`]: NMSE sweeps, federated training and report emission.

pub mod bitconv;
pub mod error;
pub mod experiments;
pub mod mpc;
pub mod quantize;
pub mod ring;
pub mod robust;

pub use error::{Error, Result};
