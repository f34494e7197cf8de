//! Applications of the decision procedures: query containment under
//! constraints, dependency implication, inexpressibility witnesses, and the
//! two-counter-machine reduction into the ≠-extended dialect.

pub mod deps;
pub mod twocm;
pub mod witness;
