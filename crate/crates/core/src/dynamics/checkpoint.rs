//! Field-state checkpoints.
//!
//! Layout: `"PFCK" | version: u32 | manifest length: u64 | manifest JSON`
//! followed by one lattice record per field in manifest order. The manifest
//! names the fields and records the time, the constants and a descriptor of
//! the potential the state was evolved under.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{field_names, FieldState, PhysicalConstants};
use crate::error::{Error, Result};
use crate::lattice::io::{read_real, read_real_on, write_real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub fields: Vec<String>,
    pub time: f64,
    pub constants: PhysicalConstants,
    pub potential: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: FieldState,
    pub constants: PhysicalConstants,
    pub potential: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    state: &FieldState,
    constants: &PhysicalConstants,
    potential: &serde_json::Value,
) -> Result<()> {
    let manifest = CheckpointManifest {
        fields: field_names(state.ndim()),
        time: state.time,
        constants: *constants,
        potential: potential.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for f in state.fields() {
        write_real(&mut w, f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let manifest: CheckpointManifest = serde_json::from_slice(&json)?;
    manifest.constants.validate()?;

    let first = read_real(&mut r)?;
    let grid = first.grid().clone();
    let expected = field_names(grid.ndim());
    if manifest.fields != expected {
        return Err(Error::Format(format!(
            "field list {:?} does not match a {}-dimensional state",
            manifest.fields,
            grid.ndim()
        )));
    }
    let mut fields = vec![first];
    for _ in 1..expected.len() {
        fields.push(read_real_on(&mut r, &grid)?);
    }
    Ok(Checkpoint {
        state: FieldState::from_fields(fields, manifest.time)?,
        constants: manifest.constants,
        potential: manifest.potential,
    })
}
