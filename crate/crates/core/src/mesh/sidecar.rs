//! Plain-text sidecar files: landmark indices, per-vertex region labels and
//! per-face masks. One value per line; blank lines and `#` comments skipped.

use std::path::Path;

use super::MeshError;

fn read_values<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>, MeshError>
where
    T::Err: std::fmt::Display,
{
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse::<T>().map_err(|e| MeshError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("'{line}': {e}"),
        })?);
    }
    Ok(out)
}

fn write_values<T: std::fmt::Display>(path: &Path, values: &[T]) -> Result<(), MeshError> {
    let mut text = String::with_capacity(values.len() * 4);
    for v in values {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<Vec<usize>, MeshError> {
    read_values(path.as_ref())
}

pub fn save_landmarks(path: impl AsRef<Path>, landmarks: &[usize]) -> Result<(), MeshError> {
    write_values(path.as_ref(), landmarks)
}

pub fn load_region_labels(path: impl AsRef<Path>) -> Result<Vec<i64>, MeshError> {
    read_values(path.as_ref())
}

pub fn save_region_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<(), MeshError> {
    write_values(path.as_ref(), labels)
}

/// Face mask: `1` (optimized) or `0` (frozen) per face.
pub fn load_face_mask(path: impl AsRef<Path>) -> Result<Vec<bool>, MeshError> {
    let path = path.as_ref();
    let raw: Vec<u8> = read_values(path)?;
    raw.into_iter()
        .map(|v| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(MeshError::Attribute(format!(
                "{}: mask value {other} is not 0 or 1",
                path.display()
            ))),
        })
        .collect()
}

pub fn save_face_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<(), MeshError> {
    let values: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
    write_values(path.as_ref(), &values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecars_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lm = dir.path().join("lm.txt");
        save_landmarks(&lm, &[3, 1, 4]).unwrap();
        assert_eq!(load_landmarks(&lm).unwrap(), vec![3, 1, 4]);

        let rg = dir.path().join("rg.txt");
        save_region_labels(&rg, &[0, -1, 7]).unwrap();
        assert_eq!(load_region_labels(&rg).unwrap(), vec![0, -1, 7]);

        let mk = dir.path().join("mask.txt");
        save_face_mask(&mk, &[true, false]).unwrap();
        assert_eq!(load_face_mask(&mk).unwrap(), vec![true, false]);
    }

    #[test]
    fn comments_blank_lines_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.txt");
        std::fs::write(&p, "# landmarks\n5\n\n6 # nose\n").unwrap();
        assert_eq!(load_landmarks(&p).unwrap(), vec![5, 6]);
        std::fs::write(&p, "5\nx\n").unwrap();
        assert!(matches!(
            load_landmarks(&p),
            Err(MeshError::Parse { line: 2, .. })
        ));
        std::fs::write(&p, "0\n2\n").unwrap();
        assert!(load_face_mask(&p).is_err());
    }
}
