//! Test-vector files: a JSON header next to a raw little-endian `f32`
//! payload with the same stem and a `.bin` extension.
//!
//! ```json
//! { "shape": [64, 8], "dtype": "f32", "byte_order": "little-endian", "seed": 7 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_order: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub shape: Vec<usize>,
    pub seed: u64,
    pub data: Vec<f32>,
}

pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

pub fn write(header_path: &Path, fixture: &Fixture) -> Result<()> {
    let expected: usize = fixture.shape.iter().product();
    if expected != fixture.data.len() {
        return Err(Error::Shape(format!(
            "fixture shape {:?} does not match {} values",
            fixture.shape,
            fixture.data.len()
        )));
    }
    let header = FixtureHeader {
        shape: fixture.shape.clone(),
        dtype: "f32".into(),
        byte_order: "little-endian".into(),
        seed: fixture.seed,
    };
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(header_path, json + "\n").map_err(|e| Error::io(header_path, e))?;
    let bytes: Vec<u8> = fixture.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let bin = payload_path(header_path);
    fs::write(&bin, bytes).map_err(|e| Error::io(bin, e))
}

pub fn read(header_path: &Path) -> Result<Fixture> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: FixtureHeader = serde_json::from_str(&text)?;
    if header.dtype != "f32" || header.byte_order != "little-endian" {
        return Err(Error::Usage(format!(
            "unsupported fixture encoding {} / {}",
            header.dtype, header.byte_order
        )));
    }
    let bin = payload_path(header_path);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected: usize = header.shape.iter().product();
    if bytes.len() != expected * 4 {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, header promises {}",
            bin.display(),
            bytes.len(),
            expected * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Fixture {
        shape: header.shape,
        seed: header.seed,
        data,
    })
}
