//! Desk-scale flow-matching speech synthesis for Manchu.
//!
//! The crate is organized around a small tape-autodiff tensor engine
//! ([`tensor`]), a three-tier Manchu text frontend ([`frontend`]), the
//! cross-modal attention block ([`attention`]), the conditional flow-matching
//! core ([`flow`]), the hierarchical contrastive alignment loss ([`hca`]),
//! the synthesis network ([`model`]), mel/MCD/F0 evaluation ([`metrics`]),
//! and the training harness ([`train`]).

pub mod attention;
pub mod config;
pub mod corpus;
pub mod error;
pub mod flow;
pub mod frontend;
pub mod hca;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
