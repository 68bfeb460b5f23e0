//! Read-only SQLite execution, execution-accuracy matching and schema
//! introspection.

mod exec;
mod introspect;

pub use exec::{
    ex_match, execute, execute_on, guard, open_read_only, outcomes_match, Cell, ExecError, ExecOptions, ExecOutcome,
    ResultSet, DEFAULT_TIMEOUT_MS,
};
pub use introspect::{introspect, IntrospectError, IntrospectOptions, SAMPLE_VALUES};
