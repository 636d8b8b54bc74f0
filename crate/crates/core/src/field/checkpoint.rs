//! Binary field records.
//!
//! Layout (little endian): magic `JFLD`, `u32` version, `u64` face count `m`,
//! `9m` `f64` Jacobian entries (row-major per face), `m` `f64` weights.
//! Values are stored as raw IEEE bits, so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::JacobianField;
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"JFLD";
pub const FIELD_VERSION: u32 = 1;

pub fn write_field(out: &mut impl Write, field: &JacobianField) -> std::io::Result<()> {
    out.write_all(FIELD_MAGIC)?;
    out.write_all(&FIELD_VERSION.to_le_bytes())?;
    out.write_all(&(field.len() as u64).to_le_bytes())?;
    for v in field.to_flat() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn bad(message: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, message.into())
}

pub fn read_field(input: &mut impl Read) -> std::io::Result<JacobianField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(bad("not a field record (bad magic)"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FIELD_VERSION {
        return Err(bad(format!("unsupported field version {version}")));
    }
    let mut count = [0u8; 8];
    input.read_exact(&mut count)?;
    let m = u64::from_le_bytes(count) as usize;
    let mut flat = Vec::with_capacity(10 * m);
    let mut buf = [0u8; 8];
    for _ in 0..10 * m {
        input.read_exact(&mut buf)?;
        flat.push(f64::from_le_bytes(buf));
    }
    JacobianField::from_flat(&flat).map_err(|e| bad(e.to_string()))
}

pub fn save_field(path: impl AsRef<Path>, field: &JacobianField) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + 80 * field.len());
    write_field(&mut bytes, field).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<JacobianField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_field(&mut bytes.as_slice()).map_err(|e| Error::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
