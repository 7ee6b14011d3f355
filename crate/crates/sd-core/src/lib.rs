//! Structural dichotomy toolkit: finite abstract simplicial complexes,
//! Hom complexes, integral homology, polymorphism-witness search, and the
//! reductions between complex-valued and relational constraint problems.
//!
//! The library is organized bottom-up:
//!
//! - [`complex`]: simplicial complexes (canonical form, products, skeleta,
//!   barycentric subdivision, quotients, simplicial maps);
//! - [`topology`]: boundary matrices, Smith normal form, integral homology,
//!   Euler characteristic, elementary collapses;
//! - [`structures`]: finite relational structures, the idempotent relational
//!   realization of a complex, and the reductions between precolored
//!   complex problems and relational problems;
//! - [`csp`]: a deterministic constraint solver, pp-formula evaluation, and
//!   indicator instances for identity systems;
//! - [`identities`]: identity systems (parsing, built-ins), witness search
//!   and verification, and derived-term constructions;
//! - [`homcomplex`]: the four Hom-complex variants and polymorphism lifting;
//! - [`spheres`]: hypercube sphere complexes, the grid rounding map, and
//!   loop-contraction certificates;
//! - [`classify`]: the two-sided classifier combining the homology
//!   obstruction with definitive witness search;
//! - [`fixtures`]: the canonical small complexes and relational templates
//!   shipped with the toolkit.

pub mod classify;
pub mod complex;
pub mod csp;
pub mod fixtures;
pub mod homcomplex;
pub mod identities;
pub mod spheres;
pub mod structures;
pub mod topology;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed complex data (duplicate labels, unknown vertices, ...).
    #[error("invalid complex: {0}")]
    InvalidComplex(String),
    /// Malformed relational structure or instance.
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    /// Malformed identity system.
    #[error("invalid identity system: {0}")]
    InvalidIdentities(String),
    /// Unparseable textual input (JSON, s-expressions, identity DSL).
    #[error("parse error: {0}")]
    Parse(String),
    /// A computation would exceed a documented size limit.
    #[error("size limit exceeded: {0}")]
    TooLarge(String),
    /// Arguments that are individually valid but mutually inconsistent.
    #[error("incompatible arguments: {0}")]
    Incompatible(String),
    /// Two independent certificates contradict each other.
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
