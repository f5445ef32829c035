//! Solver-agnostic linear models, LP text export and explicit dualisation.

pub mod dual;
pub mod lp_format;
pub mod model;

pub use dual::{AffineValue, DualError, DualProgram, DualSource, DualVarInfo};
pub use lp_format::{to_lp_string, write_lp};
pub use model::{Direction, LinearModel, Param, Row, RowFamily, RowId, Sense, VarDef, VarId, VarKind};
