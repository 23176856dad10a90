//! A deterministic, desk-scale data marketplace for collaboratively trained
//! models: a content-addressed blob store, a single-writer ledger, a
//! marketplace contract with deposit/reward/timeout incentives, online
//! linear models, and an agent simulation with CSV metric export.
//!
//! Numeric model code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what contracts store.

pub mod amount;
pub mod cas;
pub mod contract;
pub mod dataset;
pub mod ledger;
pub mod models;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod workspace;

pub use amount::Amount;
pub use cas::{digest, BlobStore, ContentHash, DirStore, MemStore};
pub use contract::{DataRef, IncentiveParams, ModelContract};
pub use ledger::{Address, Genesis, Ledger};
pub use models::{ModelKind, OnlineModel};
pub use scalar::Scalar;

/// Model type stored by contracts.
pub type Model = models::AnyModel<f64>;
pub type Perceptron = models::PerceptronModel<f64>;
pub type Logistic = models::LogisticModel<f64>;
pub type Sample = dataset::Sample<f64>;

pub type Perceptron32 = models::PerceptronModel<f32>;
pub type Logistic32 = models::LogisticModel<f32>;
pub type Sample32 = dataset::Sample<f32>;
