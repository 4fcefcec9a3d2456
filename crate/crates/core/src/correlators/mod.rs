//! Pipeline B: canonical correlator keys, selection rules, the recursion
//! expansions and their memoized evaluation.

mod eval;
mod fit;
mod key;
pub mod relations;
mod table;

pub use eval::{Choice, Evaluator, OpenSource};
pub use fit::{fit_extended_primaries, ExtFit};
pub use key::{CorrelatorKey, Gate, Insertion, Sector};
pub use relations::{Relation, Term};
pub use table::{ext_keys, load_base_table, open_keys, CorrelatorTable, Entry, Provenance, TableRecord};
