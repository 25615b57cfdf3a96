//! Personalized federated learning with cyclic secure aggregation over an
//! additively homomorphic cipher, plus a gradient-inversion attack harness.
//!
//! The crate is organized bottom-up:
//!
//! - [`numeric`]: parameter vectors, seeded random streams, fixed-point codec.
//! - [`model`]: differentiable toy models with loss, gradient and
//!   Hessian-vector products.
//! - [`data`]: heterogeneous synthetic user datasets and a CSV shard loader.
//! - [`csahe`]: Paillier cipher, ciphertext vectors and the ring aggregation
//!   protocol.
//! - [`engine`]: Per-FedAvg local updates, FedAvg and local baselines, server
//!   aggregation and final adaptation.
//! - [`adversary`]: iDLG inversion, label extraction and the attacker vantage
//!   points.
//! - [`metrics`]: accuracy, Dice and recall.

pub mod adversary;
pub mod csahe;
pub mod data;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod numeric;

pub use numeric::{FixedPointCodec, ParamVector, SeededRng};
