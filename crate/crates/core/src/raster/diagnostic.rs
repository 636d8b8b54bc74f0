//! Hard z-buffered renders for inspection. Not differentiable.

use image::{Rgb, RgbImage};

use super::Camera;
use crate::error::{Error, Result};
use crate::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticMode {
    /// World-space face normal mapped from `[-1, 1]` to `[0, 255]`.
    Normals,
    /// Gray shading by the angle between normal and view direction.
    Flat,
    /// Per-face scalar through a red-blue diverging map centered at 1.
    WeightColormap,
}

impl std::str::FromStr for DiagnosticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normals" => Ok(Self::Normals),
            "flat" => Ok(Self::Flat),
            "weights" | "weight-colormap" => Ok(Self::WeightColormap),
            other => Err(Error::Invalid(format!("unknown render mode '{other}'"))),
        }
    }
}

pub const NEUTRAL_COLOR: [u8; 3] = [247, 247, 247];
const ENLARGE_COLOR: [u8; 3] = [178, 24, 43];
const DIMINISH_COLOR: [u8; 3] = [33, 102, 172];
const BACKGROUND: [u8; 3] = [0, 0, 0];

/// Diverging color for a weight: neutral at 1, saturating to red at
/// `1 + span` and to blue at `1 - span`.
pub fn weight_color(weight: f64, span: f64) -> [u8; 3] {
    let t = ((weight - 1.0) / span).clamp(-1.0, 1.0);
    let end = if t >= 0.0 { ENLARGE_COLOR } else { DIMINISH_COLOR };
    let t = t.abs();
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (NEUTRAL_COLOR[c] as f64 * (1.0 - t) + end[c] as f64 * t).round() as u8;
    }
    out
}

fn normal_color(n: &Vec3) -> [u8; 3] {
    let enc = |v: f64| ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round() as u8;
    [enc(n.x), enc(n.y), enc(n.z)]
}

/// Index of the nearest face per pixel, `None` for background.
pub(crate) fn face_buffer(vertices: &[Vec3], faces: &[[usize; 3]], camera: &Camera) -> Result<Vec<Option<usize>>> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut ids = vec![None; w * h];
    let projected: Vec<Option<[f64; 3]>> = vertices.iter().map(|v| camera.project(v)).collect();
    for (fi, f) in faces.iter().enumerate() {
        let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        let area = edge(&a, &b, &c);
        if area.abs() < 1e-12 {
            continue;
        }
        let lo_x = a[0].min(b[0]).min(c[0]);
        let hi_x = a[0].max(b[0]).max(c[0]);
        let lo_y = a[1].min(b[1]).min(c[1]);
        let hi_y = a[1].max(b[1]).max(c[1]);
        let x0 = (lo_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (lo_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((hi_x - 0.5).floor()).min(w as f64 - 1.0);
        let y1 = ((hi_y - 0.5).floor()).min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let p = [x as f64 + 0.5, y as f64 + 0.5, 0.0];
                let l0 = edge(&b, &c, &p) / area;
                let l1 = edge(&c, &a, &p) / area;
                let l2 = edge(&a, &b, &p) / area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                // perspective-correct depth from interpolated 1/z
                let z = 1.0 / (l0 / a[2] + l1 / b[2] + l2 / c[2]);
                let i = y * w + x;
                if z < depth[i] {
                    depth[i] = z;
                    ids[i] = Some(fi);
                }
            }
        }
    }
    Ok(ids)
}

fn edge(a: &[f64; 3], b: &[f64; 3], p: &[f64; 3]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

pub fn render_diagnostic(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    camera: &Camera,
    mode: DiagnosticMode,
    per_face_scalar: Option<&[f64]>,
) -> Result<RgbImage> {
    let scalar = match (mode, per_face_scalar) {
        (DiagnosticMode::WeightColormap, None) => {
            return Err(Error::Invalid("weight colormap needs a per-face scalar".into()))
        }
        (_, Some(s)) if s.len() != faces.len() => {
            return Err(Error::LengthMismatch {
                what: "per-face scalar",
                expected: faces.len(),
                actual: s.len(),
            })
        }
        (_, s) => s,
    };
    let ids = face_buffer(vertices, faces, camera)?;
    let normals: Vec<Vec3> = faces
        .iter()
        .map(|f| {
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            n.try_normalize(0.0).unwrap_or_else(Vec3::zeros)
        })
        .collect();
    let view = camera.forward();
    let background = match mode {
        DiagnosticMode::WeightColormap => NEUTRAL_COLOR,
        _ => BACKGROUND,
    };
    let mut img = RgbImage::new(camera.width as u32, camera.height as u32);
    for (i, id) in ids.iter().enumerate() {
        let color = match id {
            None => background,
            Some(f) => match mode {
                DiagnosticMode::Normals => normal_color(&normals[*f]),
                DiagnosticMode::Flat => {
                    let g = (255.0 * (0.15 + 0.85 * normals[*f].dot(&view).abs())).round() as u8;
                    [g, g, g]
                }
                DiagnosticMode::WeightColormap => weight_color(scalar.expect("checked above")[*f], 1.0),
            },
        };
        let (x, y) = (i % camera.width, i / camera.width);
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
    Ok(img)
}
