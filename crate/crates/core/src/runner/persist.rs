//! Versioned JSON persistence of [`LabeledState`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Labels, PointConfig, RawMatrix};
use crate::losses::LabeledState;

pub const STATE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct StateFileOut<'a> {
    schema_version: u32,
    on_sphere: bool,
    labels: &'a Labels,
    features: &'a RawMatrix,
    proxies: &'a RawMatrix,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFileIn {
    #[allow(dead_code)]
    schema_version: u32,
    on_sphere: bool,
    labels: Labels,
    features: RawMatrix,
    proxies: RawMatrix,
}

/// Pretty JSON with a trailing newline. Floats use the shortest representation
/// that parses back to the same `f64`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn save_state(path: &Path, state: &LabeledState) -> Result<()> {
    write_json(
        path,
        &StateFileOut {
            schema_version: STATE_SCHEMA_VERSION,
            on_sphere: state.on_sphere(),
            labels: state.labels(),
            features: state.features(),
            proxies: state.proxies(),
        },
    )
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

/// Loads a state saved by [`save_state`]. Files written by a newer schema are
/// refused before their body is interpreted.
pub fn load_state(path: &Path) -> Result<LabeledState> {
    let text = fs::read_to_string(path)?;
    let probe: VersionProbe = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    if probe.schema_version != STATE_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { found: probe.schema_version, supported: STATE_SCHEMA_VERSION });
    }
    let file: StateFileIn = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    let context = |e: Error| Error::Parse(format!("{}: {e}", path.display()));
    if file.on_sphere {
        let f = PointConfig::new(file.features).map_err(context)?;
        let p = PointConfig::new(file.proxies).map_err(context)?;
        LabeledState::new(f, file.labels, p).map_err(context)
    } else {
        LabeledState::unnormalized(file.features, file.labels, file.proxies).map_err(context)
    }
}
