//! Decentralised, content-addressed data for listening and speaking language
//! practice.
//!
//! * [`cas`] stores immutable blocks by content hash and keeps signed mutable names.
//! * [`datamodel`] is the JSON index hierarchy: root → language entries → clip lists.
//! * [`ingest`] turns a Common Voice style release into difficulty buckets.
//! * [`consent`] publishes contributions under revocable session keys.
//! * [`align`] compares a transcript with a recognizer hypothesis for feedback.
//! * [`game`] runs the gap-fill exercise.

pub mod cas;
pub mod datamodel;
pub mod ingest;
pub mod consent;
pub mod align;
pub mod game;
