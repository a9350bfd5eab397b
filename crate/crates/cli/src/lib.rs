// SPDX-License-Identifier: Apache-2.0

//! Library side of the `herosim` command: experiment runs, sweeps, result
//! tables and test-matrix flattening.

pub mod experiment;
pub mod matrix;
pub mod report;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const ASSERTION: i32 = 4;
}
