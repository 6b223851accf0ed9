//! Quantizer design for quantize-and-forward two-way relaying.
//!
//! A relay observes `Yr = X1 + X2 + Zr` and forwards a quantized version `Yhat`
//! of it to both users. The crate computes quantizers that maximize
//! `J = I(X1; Yhat | X2) + I(X2; Yhat | X1)` under the downlink rate
//! constraints, traces the resulting tradeoff surface, and optimizes the
//! time split between uplink and downlink.

pub mod channel;
pub mod error;
pub mod infotheory;
pub mod io;
pub mod optimizer;
pub mod oracle;
pub mod sumrate;
pub mod sweep;

pub use error::{Error, Result};
