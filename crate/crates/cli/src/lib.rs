//! Text front end for `polytree`: the document format, its resolution into
//! library objects, and the commands of the `polytree` binary.

pub mod commands;
pub mod model;
pub mod syntax;

pub use model::{CliError, Env};
pub use syntax::{parse, print, Document};
