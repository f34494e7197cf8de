//! Decision procedures for the first-order unary-conjunctive-view logic.
//!
//! The crate is organized as:
//! - [`logic`]: vocabularies, structures, views, formulas, Gaifman graphs;
//! - [`eval`]: view evaluation, the Λ map, class tables, model checking;
//! - [`frontend`]: the `.ucv` theory and `.facts` text formats;
//! - [`viewenum`]: enumeration of non-equivalent views, CQ containment, cores;
//! - [`sat`]: rank-1 normalization, abstraction, bounded model search;
//! - [`pipeline`]: the justification-forest finite-model construction;
//! - [`apps`]: containment, dependency implication, inexpressibility
//!   witnesses, and the two-counter-machine reduction.

pub mod apps;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod logic;
pub mod pipeline;
pub mod sat;
pub mod viewenum;

pub use error::{Error, Result};
