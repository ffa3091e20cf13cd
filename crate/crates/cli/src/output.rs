//! Files written by the harness.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ConfigError;
use crate::run::{bound_rows, RunReport, BOUNDS_HEADER};

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ConfigError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))
}

pub fn prepare_dir(dir: &Path) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).map_err(|e| ConfigError(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write(dir, name, &text)
}

/// `bounds.csv` for one or more runs; `prefix` adds leading columns.
pub fn write_bounds(dir: &Path, runs: &[&RunReport], prefix: Option<(&str, &[f64])>) -> Result<(), ConfigError> {
    let mut out = String::new();
    if let Some((axis, _)) = prefix {
        out.push_str(&format!("{axis},"));
    }
    out.push_str(BOUNDS_HEADER);
    out.push('\n');
    for (i, run) in runs.iter().enumerate() {
        for row in bound_rows(run) {
            if let Some((_, values)) = prefix {
                out.push_str(&format!("{:e},", values[i]));
            }
            out.push_str(&row.csv());
            out.push('\n');
        }
    }
    let name = if prefix.is_some() { "sweep.csv" } else { "bounds.csv" };
    write(dir, name, &out)
}

/// `profile_<name>.csv`, with `tag` inserted for sweeps.
pub fn write_profiles(dir: &Path, run: &RunReport, tag: Option<usize>) -> Result<(), ConfigError> {
    for (name, csv) in &run.profiles {
        let file = match tag {
            Some(i) => format!("profile_{i}_{name}.csv"),
            None => format!("profile_{name}.csv"),
        };
        write(dir, &file, csv)?;
    }
    Ok(())
}
