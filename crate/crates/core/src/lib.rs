pub mod db;
pub mod error;
pub mod grammar;
pub mod io;
pub mod logic;
pub mod metrics;
pub mod mln;
pub mod pipeline;
pub mod select;
pub mod synth;

pub use db::{ConstId, Database, GroundAtom, Substitution};
pub use error::{Error, Result};
pub use logic::{ConjunctiveFormula, ConnectiveForm, Literal, PredId, Role, Schema, Term, TypeId, Variable};
