//! Identity-based public-key management for ML-DSA, and a small RPKI
//! object model that uses it.
//!
//! A key center publishes a matrix of public seeds. Any CA key can be
//! checked from the CA's identity and a 32-byte accompanying value `R`
//! alone, so relying parties verify one signature instead of a chain.

pub mod bench;
pub mod center;
pub mod directory;
pub mod protocol;
pub mod resolver;
pub mod rpki;
pub mod seed;
pub mod validator;

pub use ipkpq_mldsa as mldsa;
