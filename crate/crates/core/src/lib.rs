//! Closed-loop, question-driven evaluation of language driving policies.

pub mod geometry;
pub mod world;
pub mod render;
pub mod keys;
pub mod expert;
pub mod action;
pub mod metrics;
pub mod infraction;
pub mod chain;
pub mod policy;
pub mod executor;
pub mod vqa;
pub mod schema;
pub mod dataset;
pub mod episode;
