// SPDX-License-Identifier: MIT OR Apache-2.0

//! TOML run configs: defaults, then the `--config` file, then flags.
//! Unknown keys are rejected and the resolved config is written next to
//! the outputs so it can be fed back through `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{Classify, Failure, Outcome};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Outcome<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).or_usage(format!("reading config {}", path.display()))?;
    toml::from_str(&text).or_usage(format!("config {}", path.display()))
}

pub fn write_resolved<T: Serialize>(out: &Path, command: &str, config: &T) -> Outcome<PathBuf> {
    let text = toml::to_string(config).or_usage("serializing the resolved config")?;
    let path = out.join(format!("{command}.toml"));
    fs::write(&path, text).or_usage(format!("writing {}", path.display()))?;
    Ok(path)
}

/// Creates the output directory.
pub fn out_dir(out: Option<&Path>) -> Outcome<PathBuf> {
    let out = out.ok_or_else(|| Failure::usage("--out is required"))?;
    fs::create_dir_all(out).or_usage(format!("creating {}", out.display()))?;
    Ok(out.to_path_buf())
}

/// Flag value if given, else the config value.
pub fn merge<T>(flag: Option<T>, slot: &mut T) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn required(path: &Option<PathBuf>, what: &str) -> Outcome<PathBuf> {
    path.clone()
        .ok_or_else(|| Failure::usage(format!("no {what} given (flag or config key)")))
}
