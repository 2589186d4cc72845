//! CSV and JSON emitters for trajectories, reports and tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::integrators::Trajectory;
use crate::spectral::Basis;

/// One row per stored time: `t` followed by the `3 (M + 1)` grid values of
/// `m(t)`, node-major (`x0_x, x0_y, x0_z, x1_x, ...`). Floats use Rust's
/// shortest round-trip formatting, so equal trajectories give equal bytes.
pub fn trajectory_csv(traj: &Trajectory, basis: &Basis) -> Result<String> {
    let mut out = String::from("t");
    for j in 0..basis.n_nodes() {
        for c in ["x", "y", "z"] {
            let _ = write!(out, ",x{j}_{c}");
        }
    }
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let field = basis.synthesize(s)?;
        let _ = write!(out, "{t}");
        for v in field.values() {
            let _ = write!(out, ",{},{},{}", v[0], v[1], v[2]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}
