//! Finite-blocklength converse bounds for discrete memoryless channels.
//!
//! The crate evaluates sphere-packing exponents, exact pre-factor bounds for
//! symmetric channels, and third-order normal-approximation converses. Every
//! quantity is in nats.

pub mod cgf;
pub mod channel;
pub mod classify;
pub mod error;
pub mod exponents;
pub mod gaussian;
pub mod measures;
pub mod normal_approx;
pub mod oracle;
pub mod prefactor;
pub mod simplex;
pub mod verify;

pub use channel::{parse_channel, Channel, Entry};
pub use classify::{classify, ChannelClassification, SymmetryCertificate};
pub use error::{Error, Result};
