//! Stable assignment of influencers to merchant products under nested quotas.
//!
//! The crate is organised as a pipeline:
//!
//! * [`derive`] turns retail transaction logs into reputations, desired-product
//!   lists and quotas.
//! * [`model`] validates the market ([`Instance`]) and materialises the
//!   merchant and per-product preference lists.
//! * [`engine`] runs influencer-proposing deferred acceptance with product and
//!   merchant quotas.
//! * [`verify`] is an independent blocking-pair oracle plus brute-force
//!   enumeration of stable matchings for small markets.
//! * [`ingest`] reads and writes instance, transaction and matching files and
//!   generates synthetic markets.
//! * [`report`] computes utilization, free-slot and preference-rank metrics.

pub mod derive;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod report;
pub mod verify;

pub use engine::{solve, SolveTrace};
pub use model::{
    build_instance, BuildOptions, Instance, InfluencerId, InfluencerSpec, Matching, MerchantId,
    MerchantSpec, ModelError, ProductId, ProductSpec, TieBreak,
};
pub use verify::{enumerate_stable_matchings, is_blocking_pair, verify_stability};
