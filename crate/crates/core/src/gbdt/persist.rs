//! Model persistence.
//!
//! Models are stored as versioned JSON. Floats are written with a shortest
//! round-trip encoding, so a reloaded model predicts bitwise identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GbdtError, GbdtModel};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: GbdtModel,
}

pub fn save_model(model: &GbdtModel, path: &Path) -> Result<(), GbdtError> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| GbdtError::Persist(format!("serialize: {e}")))?;
    fs::write(path, json).map_err(|e| GbdtError::Persist(format!("write {path:?}: {e}")))
}

pub fn load_model(path: &Path) -> Result<GbdtModel, GbdtError> {
    let text =
        fs::read_to_string(path).map_err(|e| GbdtError::Persist(format!("read {path:?}: {e}")))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| GbdtError::Persist(format!("parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(GbdtError::Persist(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    Ok(file.model)
}
