//! Library half of the `pollingkit` command-line tool: scenario loading and
//! the analytic threshold sweep. The binary in `main.rs` wires these to the
//! `analyze`, `sweep`, `simulate` and `compare` subcommands.

pub mod scenario;
pub mod sweep;
