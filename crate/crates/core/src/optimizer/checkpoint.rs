//! Resumable run records.
//!
//! Layout (little endian): magic `JRUN`, `u32` version, 32-byte config hash,
//! `u64` completed iterations, RNG state (32-byte seed, `u64` stream, `u128`
//! word position), an embedded field record, `u64` moment length followed by
//! both moment buffers as `f64`, `u64` history length followed by records of
//! `u64` iteration and four `f64` loss terms.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LossRecord, OptimConfig, RunState};
use crate::error::{Error, Result};
use crate::field::{read_field, write_field};

pub const RUN_MAGIC: &[u8; 4] = b"JRUN";
pub const RUN_VERSION: u32 = 1;

fn bad(message: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, message.into())
}

fn read_array<const N: usize>(input: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(input)?))
}

fn read_f64(input: &mut impl Read) -> std::io::Result<f64> {
    Ok(f64::from_le_bytes(read_array(input)?))
}

pub fn write_run(out: &mut impl Write, config_hash: &[u8; 32], state: &RunState) -> std::io::Result<()> {
    out.write_all(RUN_MAGIC)?;
    out.write_all(&RUN_VERSION.to_le_bytes())?;
    out.write_all(config_hash)?;
    out.write_all(&(state.iteration as u64).to_le_bytes())?;
    out.write_all(&state.rng.get_seed())?;
    out.write_all(&state.rng.get_stream().to_le_bytes())?;
    out.write_all(&state.rng.get_word_pos().to_le_bytes())?;
    write_field(out, &state.field)?;
    out.write_all(&(state.first_moment.len() as u64).to_le_bytes())?;
    for v in state.first_moment.iter().chain(&state.second_moment) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(state.history.len() as u64).to_le_bytes())?;
    for r in &state.history {
        out.write_all(&(r.iteration as u64).to_le_bytes())?;
        for v in [r.guidance, r.landmark, r.opacity, r.total] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the stored config hash and the state.
pub fn read_run(input: &mut impl Read) -> std::io::Result<([u8; 32], RunState)> {
    if &read_array::<4>(input)? != RUN_MAGIC {
        return Err(bad("not a run checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != RUN_VERSION {
        return Err(bad(format!("unsupported run checkpoint version {version}")));
    }
    let hash = read_array::<32>(input)?;
    let iteration = read_u64(input)? as usize;
    let mut rng = ChaCha8Rng::from_seed(read_array::<32>(input)?);
    rng.set_stream(read_u64(input)?);
    rng.set_word_pos(u128::from_le_bytes(read_array(input)?));
    let field = read_field(input)?;
    let n = read_u64(input)? as usize;
    if n != 10 * field.len() {
        return Err(bad(format!("moment length {n} does not match field of {} faces", field.len())));
    }
    let first_moment = (0..n).map(|_| read_f64(input)).collect::<std::io::Result<Vec<_>>>()?;
    let second_moment = (0..n).map(|_| read_f64(input)).collect::<std::io::Result<Vec<_>>>()?;
    let count = read_u64(input)? as usize;
    let mut history = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        history.push(LossRecord {
            iteration: read_u64(input)? as usize,
            guidance: read_f64(input)?,
            landmark: read_f64(input)?,
            opacity: read_f64(input)?,
            total: read_f64(input)?,
        });
    }
    Ok((
        hash,
        RunState {
            field,
            first_moment,
            second_moment,
            iteration,
            history,
            rng,
        },
    ))
}

pub fn save_run(path: impl AsRef<Path>, config: &OptimConfig, state: &RunState) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_run(&mut bytes, &config.hash(), state).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint written under a config with the same numerics.
pub fn load_run(path: impl AsRef<Path>, config: &OptimConfig) -> Result<RunState> {
    let path = path.as_ref();
    let fail = |message: String| Error::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (hash, state) = read_run(&mut bytes.as_slice()).map_err(|e| fail(e.to_string()))?;
    if hash != config.hash() {
        return Err(fail("written under a different configuration".into()));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::JacobianField;
    use rand::RngCore;

    #[test]
    fn round_trip_restores_rng_position() {
        let mut state = RunState::new(JacobianField::identity(3), 17);
        state.rng.next_u64();
        state.rng.next_u32();
        state.first_moment[4] = 0.5;
        state.second_moment[29] = 1e-9;
        state.iteration = 2;
        state.history.push(LossRecord {
            iteration: 0,
            guidance: 1.0,
            landmark: 2.0,
            opacity: 3.0,
            total: 4.0,
        });
        let mut bytes = Vec::new();
        write_run(&mut bytes, &[7u8; 32], &state).unwrap();
        let (hash, mut back) = read_run(&mut bytes.as_slice()).unwrap();
        assert_eq!(hash, [7u8; 32]);
        assert_eq!(back, state);
        assert_eq!(back.rng.next_u64(), state.rng.next_u64());
        assert!(read_run(&mut &bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn config_hash_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jrun");
        let cfg = OptimConfig::default();
        let state = RunState::new(JacobianField::identity(2), 1);
        save_run(&path, &cfg, &state).unwrap();
        assert_eq!(load_run(&path, &cfg).unwrap(), state);
        let other = OptimConfig { seed: 9, ..cfg };
        assert!(matches!(load_run(&path, &other), Err(Error::Checkpoint { .. })));
    }
}
