use std::fmt::Write as _;
use std::path::Path;

use super::{MeshError, TriMesh, UvLayout, Vec3};

/// Reads a Wavefront OBJ file. Polygons are fan-triangulated from their first
/// corner; normals, groups and materials are ignored.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, &path.display().to_string(), &stem)
}

/// Parses OBJ text. `origin` labels parse errors; `default_name` is used when
/// the file carries no `o` statement.
pub fn parse_obj(text: &str, origin: &str, default_name: &str) -> Result<TriMesh, MeshError> {
    let mut name = default_name.to_string();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut tex: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut uv_corners: Vec<[usize; 3]> = Vec::new();
    let mut faces_with_uv = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| MeshError::Parse {
            path: origin.to_string(),
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords = parse_floats(tokens, 3).map_err(err)?;
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "vt" => {
                let coords = parse_floats(tokens, 2).map_err(err)?;
                tex.push([coords[0], coords[1]]);
            }
            "f" => {
                let mut corners: Vec<(usize, Option<usize>)> = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), vertices.len())
                        .map_err(|m| err(format!("vertex index '{tok}': {m}")))?;
                    let t = match parts.next() {
                        Some(s) if !s.is_empty() => Some(
                            resolve_index(s, tex.len())
                                .map_err(|m| err(format!("texture index '{tok}': {m}")))?,
                        ),
                        _ => None,
                    };
                    corners.push((v, t));
                }
                if corners.len() < 3 {
                    return Err(err(format!("face with {} corners", corners.len())));
                }
                let has_uv = corners[0].1.is_some();
                if corners.iter().any(|c| c.1.is_some() != has_uv) {
                    return Err(err("face mixes corners with and without texture indices".into()));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push([tri[0].0, tri[1].0, tri[2].0]);
                    if has_uv {
                        uv_corners.push([
                            tri[0].1.unwrap(),
                            tri[1].1.unwrap(),
                            tri[2].1.unwrap(),
                        ]);
                        faces_with_uv += 1;
                    }
                }
            }
            "o" => {
                let rest = line[1..].trim();
                if !rest.is_empty() {
                    name = rest.to_string();
                }
            }
            // normals, groups, smoothing, materials, lines: not needed
            _ => {}
        }
    }
    if faces_with_uv != 0 && faces_with_uv != faces.len() {
        return Err(MeshError::Parse {
            path: origin.to_string(),
            line: 0,
            message: format!(
                "{faces_with_uv} of {} faces carry texture indices; UVs must be all or nothing",
                faces.len()
            ),
        });
    }
    let mesh = TriMesh::new(name, vertices, faces)?;
    if faces_with_uv > 0 {
        mesh.with_uvs(UvLayout {
            coords: tex,
            corners: uv_corners,
        })
    } else {
        Ok(mesh)
    }
}

fn parse_floats<'a>(tokens: impl Iterator<Item = &'a str>, want: usize) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = tokens
        .take(want)
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number '{t}': {e}")))
        .collect::<Result<_, _>>()?;
    if values.len() < want {
        return Err(format!("expected {want} coordinates, found {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    Ok(values)
}

/// OBJ indices are 1-based; negative values count back from the latest element.
fn resolve_index(token: &str, count: usize) -> Result<usize, String> {
    let raw: i64 = token.parse().map_err(|e| format!("{e}"))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        return Err("index 0 is not valid".into());
    };
    if idx < 0 || idx as usize >= count {
        return Err(format!("refers to element {} of {count}", idx + 1));
    }
    Ok(idx as usize)
}

/// Serializes a mesh as OBJ text. Coordinates use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "o {}", mesh.name);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    match mesh.uvs() {
        Some(uv) => {
            for t in &uv.coords {
                let _ = writeln!(out, "vt {} {}", t[0], t[1]);
            }
            for (f, c) in mesh.faces().iter().zip(&uv.corners) {
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    c[0] + 1,
                    f[1] + 1,
                    c[1] + 1,
                    f[2] + 1,
                    c[2] + 1
                );
            }
        }
        None => {
            for f in mesh.faces() {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    out
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    std::fs::write(path, write_obj(mesh)).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn minimal_file() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "t", "t").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert!(m.uvs().is_none());
    }

    #[test]
    fn repeated_corner_is_degenerate() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n", "t", "t").unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let err = parse_obj("v 0 0 0\nv 1 zero 0\n", "bad.obj", "bad").unwrap_err();
        match err {
            MeshError::Parse { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "bad.obj");
            }
            other => panic!("unexpected {other}"),
        }
        let err = parse_obj("v 0 0 0\nf 1 2 3\n", "bad.obj", "bad").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            parse_obj("# nothing\n", "e", "e"),
            Err(MeshError::Empty(_))
        ));
    }

    #[test]
    fn quads_fan_from_first_corner() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
        let m = parse_obj(text, "q", "q").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.uvs().unwrap().corners, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn negative_indices_and_normals_are_accepted() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n";
        let m = parse_obj(text, "n", "n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn format_rules_for_uv_and_plain_faces() {
        let plain = primitives::icosphere(1.0, 1);
        let text = write_obj(&plain);
        assert!(text.lines().any(|l| l.starts_with("f ") && !l.contains('/')));
        assert!(!text.contains("vt "));

        let uv = primitives::with_spherical_uvs(plain);
        let text = write_obj(&uv);
        assert!(text.contains("\nvt "));
        assert!(text
            .lines()
            .filter(|l| l.starts_with("f "))
            .all(|l| l.split_whitespace().skip(1).all(|c| c.contains('/'))));
    }

    #[test]
    fn non_manifold_file_lists_edges() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 2 5\n";
        match parse_obj(text, "fin", "fin").unwrap_err() {
            MeshError::NonManifold { edges } => assert_eq!(edges, vec![(0, 1)]),
            other => panic!("unexpected {other}"),
        }
    }
}
