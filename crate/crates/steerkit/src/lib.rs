//! steerkit: certification tools for quantum steering scenarios.
//!
//! The crate covers three related membership questions at desk scale:
//!
//! * joint measurability of a finite measurement assemblage (is there a
//!   single parent measurement that simulates every setting classically?),
//! * existence of local-hidden-state models for bipartite steering
//!   assemblages, and
//! * genuine multipartite steering of tripartite assemblages, approached
//!   through documented inner and outer relaxations of the bi-separable set.
//!
//! Everything reduces to conic feasibility over Hermitian positive
//! semidefinite blocks; [`sdpcore`] holds the one encoder and solver adapter
//! all the certifiers share, and every verdict is revalidated independently
//! of the solver before it is reported.

pub mod assemblage;
pub mod cli;
pub mod construct;
pub mod error;
pub mod incompat;
pub mod povm;
pub mod qmat;
pub mod sdpcore;
pub mod states;
pub mod steering;

#[doc(hidden)]
pub mod testutil;

pub use error::{Result, SteerkitError};

// The guide's chapters double as documentation of these empty modules, so
// every code block in the book compiles and runs as a doc-test and the book
// cannot drift from the library.
#[doc = include_str!("../book/src/intro.md")]
mod guide_intro {}
#[doc = include_str!("../book/src/measurements.md")]
mod guide_measurements {}
#[doc = include_str!("../book/src/steering.md")]
mod guide_steering {}
#[doc = include_str!("../book/src/multipartite.md")]
mod guide_multipartite {}
#[doc = include_str!("../book/src/constructions.md")]
mod guide_constructions {}
#[doc = include_str!("../book/src/solver.md")]
mod guide_solver {}
#[doc = include_str!("../book/src/cli.md")]
mod guide_cli {}
