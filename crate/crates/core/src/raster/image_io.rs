use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;

use super::OpacityMap;
use crate::error::{Error, Result};

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// 16-bit binary PGM, opacity scaled to `[0, 65535]`.
pub fn save_opacity_pgm(map: &OpacityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n65535\n", map.width, map.height).into_bytes();
    for v in &map.values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Raw dump: `u32` width, `u32` height, then `f32` values, little endian.
pub fn write_f32_map(out: &mut impl Write, map: &OpacityMap) -> std::io::Result<()> {
    out.write_all(&(map.width as u32).to_le_bytes())?;
    out.write_all(&(map.height as u32).to_le_bytes())?;
    for v in &map.values {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f32_map(input: &mut impl Read) -> std::io::Result<OpacityMap> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let width = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let height = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        input.read_exact(&mut word)?;
        values.push(f32::from_le_bytes(word) as f64);
    }
    OpacityMap::from_values(width, height, values)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

pub fn save_opacity_f32(map: &OpacityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(8 + 4 * map.values.len());
    write_f32_map(&mut bytes, map).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_dump_round_trips() {
        let map = OpacityMap::from_values(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        let mut bytes = Vec::new();
        write_f32_map(&mut bytes, &map).unwrap();
        assert_eq!(bytes.len(), 8 + 24);
        assert_eq!(read_f32_map(&mut bytes.as_slice()).unwrap(), map);
    }

    #[test]
    fn pgm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.pgm");
        save_opacity_pgm(&OpacityMap::zeros(4, 3), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n65535\n"));
        assert_eq!(bytes.len(), 13 + 24);
    }
}
