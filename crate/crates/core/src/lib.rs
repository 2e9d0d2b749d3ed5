//! Linearization of a neighbourhood of a complex torus embedded with a flat
//! normal bundle: commuting matrix logarithms and factors of automorphy,
//! truncated Taylor–Laurent series, small-divisor scans, the cohomological
//! equations of the deck transformations and a Newton/KAM iteration that
//! conjugates the perturbed deck group to its linear part.
//!
//! The `examples/` directory walks through each layer; `torus-kam` drives
//! whole experiments from a JSON config.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod matcom;
pub mod automorphy;
pub mod series;
pub mod diophantine;
pub mod cohomology;
pub mod kam;
pub mod instance;
pub mod cli;

pub use error::{Error, Result};
pub use lattice::{DomainSpec, Lattice};
pub use linalg::CMatrix;
pub use series::{DeckSystem, LinearDeck, Mono, TaylorLaurentSeries};
pub use diophantine::{DiophantineFit, Target};
pub use kam::{KamParams, KamReport};
