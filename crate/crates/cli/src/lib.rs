//! Command implementations behind the `bhgen` binary, exposed as a library
//! so integration tests can drive them directly.

pub mod commands;
pub mod figures;
pub mod presets;
