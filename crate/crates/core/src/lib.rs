//! Discovery of Lie point symmetries from trajectory data.
//!
//! The pipeline runs bottom-up through the modules: a [`library`] of
//! candidate coefficient functions is prolonged to jet space ([`prolong`]),
//! contracted with the Jacobian of a residual model ([`surrogate`]) at points
//! estimated from simulated trajectories ([`pdegen`], [`jetdata`]), and the
//! null space of the stacked criterion ([`discover`]) is rotated to a sparse
//! basis ([`sparsify`]) and scored against known algebras ([`metrics`]).

pub mod discover;
pub mod error;
pub mod jetdata;
pub mod library;
pub mod pdegen;
pub mod metrics;
pub mod pipeline;
pub mod prolong;
pub mod surrogate;
pub mod sparsify;
pub mod symexpr;

pub use error::{Error, Result};
