//! Exact computation of open and closed `r`-spin intersection numbers.
//!
//! Two independent routes produce the same numbers: the Gelfand–Dikii
//! hierarchy with its wave function ([`hierarchy`], [`potentials`]) and the
//! topological recursion relations ([`correlators`]). [`verify`] runs both
//! and compares them.

pub mod coeffring;
pub mod correlators;
pub mod error;
pub mod hierarchy;
pub mod potentials;
pub mod psido;
pub mod series;
pub mod verify;

pub use coeffring::{Rational, RingElem};
pub use correlators::{CorrelatorKey, CorrelatorTable, Insertion, Sector};
pub use error::{Error, Result};
pub use hierarchy::{solve_l, GdSolution, SolveOptions};
pub use potentials::{open_potential, OpenPotential};
pub use verify::{run_suite, Bounds, VerifyReport};
