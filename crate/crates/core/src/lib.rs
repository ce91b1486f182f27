//! Bounded symbolic analysis of device-pairing and bootstrapping ceremonies.
//!
//! The crate models devices, human users, and physical/out-of-band channels
//! as communicating role programs, explores their executions under a bounded
//! Dolev-Yao attacker, checks intention-preservation correspondence
//! assertions, and classifies the resulting misbinding counterexamples.
//!
//! The main pieces:
//!
//! * [`term`] / [`deduce`] — symbolic message terms with a Diffie-Hellman
//!   equational theory and the attacker deduction engine.
//! * [`event`] / [`query`] — trace events and the correspondence-assertion
//!   query language.
//! * [`role`] / [`models`] — role programs and the shipped protocol models
//!   (SSP numeric comparison and variants, EAP-NOOB, DPP, signed DH).
//! * [`scenario`] / [`search`] — worlds (role instances, channel topology,
//!   compromise flags) and the bounded breadth-first explorer.
//! * [`enumerate`] — systematic generation of user/device/compromise
//!   configurations and the misbinding variant classifier.
//! * [`replay`] — concrete re-execution of symbolic counterexample traces
//!   with real key agreement and hashing.
//! * [`textfmt`] — the structured text format for models, queries, and
//!   scenarios; [`trace`] — the versioned trace JSON; [`dot`] — sequence
//!   diagram export.

pub mod deduce;
pub mod dot;
pub mod enumerate;
pub mod error;
pub mod event;
pub mod models;
pub mod query;
pub mod replay;
pub mod role;
pub mod scenario;
pub mod search;
pub mod term;
pub mod textfmt;
pub mod trace;

pub use error::Error;
