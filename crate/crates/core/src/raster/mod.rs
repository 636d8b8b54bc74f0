//! Soft silhouette rasterization and diagnostic renders.
//!
//! Opacity at pixel `p` is `1 - Π_f (1 - sigmoid(d_f(p) / σ))` over
//! front-facing triangles, where `d_f` is the signed screen-space distance to
//! the triangle boundary (positive inside) in pixels.

mod camera;
mod diagnostic;
mod image_io;

pub use camera::Camera;
pub use diagnostic::{render_diagnostic, weight_color, DiagnosticMode, NEUTRAL_COLOR};
pub use image_io::{read_f32_map, save_opacity_f32, save_opacity_pgm, save_png, write_f32_map};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Candidate pruning radius in units of σ: `sigmoid(-17) < 1e-7`.
pub const PRUNE_SIGMAS: f64 = 17.0;

/// Default rasterizer sharpness in pixels.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Row-major `height x width` coverage image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpacityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl OpacityMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "opacity values",
                expected: width * height,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("opacity values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn same_shape(&self, other: &OpacityMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Signed distance from `p` to a projected triangle and its derivative with
/// respect to the six screen coordinates.
#[cfg(test)]
fn signed_distance(s: &[[f64; 2]; 3], orient: f64, p: [f64; 2]) -> (f64, [[f64; 2]; 3]) {
    let mut line = [0.0; 3];
    let mut seg = [0.0; 3];
    for k in 0..3 {
        let a = s[k];
        let b = s[(k + 1) % 3];
        let e = [b[0] - a[0], b[1] - a[1]];
        let r = [p[0] - a[0], p[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        line[k] = orient * (e[0] * r[1] - e[1] * r[0]) / len2.sqrt();
        let t = ((r[0] * e[0] + r[1] * e[1]) / len2).clamp(0.0, 1.0);
        let (qx, qy) = (r[0] - t * e[0], r[1] - t * e[1]);
        seg[k] = qx * qx + qy * qy;
    }
    let inside = line.iter().all(|&l| l >= 0.0);
    let (k, dist) = if inside {
        let k = argmin(&line);
        (k, line[k])
    } else {
        let k = argmin(&seg);
        (k, -seg[k].sqrt())
    };
    (dist, feature_gradient(s, orient, p, k, inside))
}

/// Derivative of the signed distance when its nearest feature is edge `k`
/// (or one of its endpoints when `p` is outside).
fn feature_gradient(s: &[[f64; 2]; 3], orient: f64, p: [f64; 2], k: usize, inside: bool) -> [[f64; 2]; 3] {
    let a = s[k];
    let b = s[(k + 1) % 3];
    let (ia, ib) = (k, (k + 1) % 3);
    let e = [b[0] - a[0], b[1] - a[1]];
    let r = [p[0] - a[0], p[1] - a[1]];
    let len2 = e[0] * e[0] + e[1] * e[1];
    let t = (r[0] * e[0] + r[1] * e[1]) / len2;
    let mut grad = [[0.0; 2]; 3];
    if inside || (t > 0.0 && t < 1.0) {
        // distance to the supporting line, |cross| / |e|
        let len = len2.sqrt();
        let cross = e[0] * r[1] - e[1] * r[0];
        let c_sign = if inside { orient } else { -cross.signum() };
        let dcross_a = [b[1] - p[1], p[0] - b[0]];
        let dcross_b = [r[1], -r[0]];
        for c in 0..2 {
            let dlen_a = -e[c] / len;
            grad[ia][c] = c_sign * (dcross_a[c] / len - cross * dlen_a / len2);
            grad[ib][c] = c_sign * (dcross_b[c] / len - cross * (-dlen_a) / len2);
        }
    } else {
        // nearest point is an endpoint
        let (v, q) = if t <= 0.0 { (ia, a) } else { (ib, b) };
        let d = [p[0] - q[0], p[1] - q[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n > 0.0 {
            // dist = -|p - q|, so d(dist)/dq = (p - q) / |p - q|
            grad[v] = [d[0] / n, d[1] / n];
        }
    }
    grad
}

fn argmin(v: &[f64; 3]) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if v[i] < v[k] {
            k = i;
        }
    }
    k
}

#[derive(Debug, Clone)]
struct ProjectedFace {
    face: usize,
    screen: [[f64; 2]; 3],
    orient: f64,
    /// Inclusive pixel ranges of the dilated bounding box.
    x_range: (usize, usize),
    y_range: (usize, usize),
    /// Per edge, `(a, b, c)` with `a x + b y + c` the signed distance to the
    /// edge's supporting line, positive inside.
    lines: [[f64; 3]; 3],
    /// Per edge, start point, direction and inverse squared length.
    edges: [([f64; 2], [f64; 2], f64); 3],
}

impl ProjectedFace {
    fn new(face: usize, screen: [[f64; 2]; 3], orient: f64, x_range: (usize, usize), y_range: (usize, usize)) -> Self {
        let mut lines = [[0.0; 3]; 3];
        let mut edges = [([0.0; 2], [0.0; 2], 0.0); 3];
        for k in 0..3 {
            let a = screen[k];
            let b = screen[(k + 1) % 3];
            let e = [b[0] - a[0], b[1] - a[1]];
            let len2 = e[0] * e[0] + e[1] * e[1];
            let s = orient / len2.sqrt();
            // orient * (e x (p - a)) / |e|
            lines[k] = [-e[1] * s, e[0] * s, (e[1] * a[0] - e[0] * a[1]) * s];
            edges[k] = (a, e, 1.0 / len2);
        }
        Self {
            face,
            screen,
            orient,
            x_range,
            y_range,
            lines,
            edges,
        }
    }

    /// Signed distance at `p` with its nearest edge and whether `p` is
    /// inside, or `None` when `p` is farther than `pad` outside one of the
    /// edge lines and so beyond the pruning radius.
    fn feature(&self, p: [f64; 2], pad: f64) -> Option<(f64, usize, bool)> {
        let l = self.lines.map(|[a, b, c]| a * p[0] + b * p[1] + c);
        let k = argmin(&l);
        if l[k] >= 0.0 {
            return Some((l[k], k, true));
        }
        if l[k] < -pad {
            return None;
        }
        let mut seg = [0.0; 3];
        for (q, (a, e, inv)) in seg.iter_mut().zip(&self.edges) {
            let r = [p[0] - a[0], p[1] - a[1]];
            let t = ((r[0] * e[0] + r[1] * e[1]) * inv).clamp(0.0, 1.0);
            let (qx, qy) = (r[0] - t * e[0], r[1] - t * e[1]);
            *q = qx * qx + qy * qy;
        }
        let k = argmin(&seg);
        Some((-seg[k].sqrt(), k, false))
    }

    fn distance(&self, p: [f64; 2], pad: f64) -> Option<f64> {
        self.feature(p, pad).map(|(d, _, _)| d)
    }
}

/// Projected scene prepared once and shared by the forward and backward
/// passes.
struct SoftScene<'a> {
    camera: &'a Camera,
    sigma: f64,
    faces: Vec<ProjectedFace>,
    /// Per image row, indices into `faces` (ascending) whose box spans the row.
    rows: Vec<Vec<usize>>,
}

impl<'a> SoftScene<'a> {
    fn prepare(
        vertices: &[Vec3],
        faces: &[[usize; 3]],
        camera: &'a Camera,
        sigma: f64,
    ) -> Result<Self> {
        camera.validate()?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Invalid(format!("rasterizer sigma must be positive, got {sigma}")));
        }
        let (w, h) = (camera.width, camera.height);
        let pad = PRUNE_SIGMAS * sigma;
        let projected: Vec<Option<[f64; 3]>> = vertices.iter().map(|v| camera.project(v)).collect();
        let mut out = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]])
            else {
                continue;
            };
            let screen = [[a[0], a[1]], [b[0], b[1]], [c[0], c[1]]];
            let area2 = (screen[1][0] - screen[0][0]) * (screen[2][1] - screen[0][1])
                - (screen[1][1] - screen[0][1]) * (screen[2][0] - screen[0][0]);
            // image y points down, so a counterclockwise face seen from the
            // front has negative screen area
            if !(area2 < -1e-12) {
                continue;
            }
            let lo_x = screen.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min) - pad;
            let hi_x = screen.iter().map(|s| s[0]).fold(f64::NEG_INFINITY, f64::max) + pad;
            let lo_y = screen.iter().map(|s| s[1]).fold(f64::INFINITY, f64::min) - pad;
            let hi_y = screen.iter().map(|s| s[1]).fold(f64::NEG_INFINITY, f64::max) + pad;
            // pixel i has its center at i + 0.5
            let Some(x_range) = pixel_span(lo_x, hi_x, w) else { continue };
            let Some(y_range) = pixel_span(lo_y, hi_y, h) else { continue };
            out.push(ProjectedFace::new(fi, screen, -1.0, x_range, y_range));
        }
        let mut rows = vec![Vec::new(); h];
        for (i, f) in out.iter().enumerate() {
            for row in &mut rows[f.y_range.0..=f.y_range.1] {
                row.push(i);
            }
        }
        Ok(Self {
            camera,
            sigma,
            faces: out,
            rows,
        })
    }

    fn render(&self) -> OpacityMap {
        let w = self.camera.width;
        let mut values = vec![0.0; w * self.camera.height];
        let pad = PRUNE_SIGMAS * self.sigma;
        values
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, row)| {
                let mut transmit = vec![1.0; w];
                let py = y as f64 + 0.5;
                for &i in &self.rows[y] {
                    let f = &self.faces[i];
                    for x in f.x_range.0..=f.x_range.1 {
                        if let Some(d) = f.distance([x as f64 + 0.5, py], pad) {
                            transmit[x] *= sigmoid(-d / self.sigma);
                        }
                    }
                }
                for (o, t) in row.iter_mut().zip(transmit) {
                    *o = 1.0 - t;
                }
            });
        OpacityMap {
            width: w,
            height: self.camera.height,
            values,
        }
    }

    fn backward(&self, vertices: &[Vec3], faces: &[[usize; 3]], opacity: &OpacityMap, d_opacity: &[f64]) -> Vec<Vec3> {
        let w = self.camera.width;
        let pad = PRUNE_SIGMAS * self.sigma;
        let per_face: Vec<[[f64; 2]; 3]> = self
            .faces
            .par_iter()
            .map(|f| {
                let mut acc = [[0.0; 2]; 3];
                for y in f.y_range.0..=f.y_range.1 {
                    for x in f.x_range.0..=f.x_range.1 {
                        let pix = y * w + x;
                        let g = d_opacity[pix];
                        if g == 0.0 {
                            continue;
                        }
                        let p = [x as f64 + 0.5, y as f64 + 0.5];
                        let Some((d, k, inside)) = f.feature(p, pad) else {
                            continue;
                        };
                        let dd = feature_gradient(&f.screen, f.orient, p, k, inside);
                        // dO/dd = P · s / σ with P the pixel transmittance
                        let scale = g * (1.0 - opacity.values[pix]) * sigmoid(d / self.sigma) / self.sigma;
                        for k in 0..3 {
                            acc[k][0] += scale * dd[k][0];
                            acc[k][1] += scale * dd[k][1];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut grad = vec![Vec3::zeros(); vertices.len()];
        for (f, acc) in self.faces.iter().zip(per_face) {
            for (k, &v) in faces[f.face].iter().enumerate() {
                let (dx, dy) = self.camera.projection_jacobian(&vertices[v]);
                grad[v] += dx * acc[k][0] + dy * acc[k][1];
            }
        }
        grad
    }
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    if !(first <= last) {
        return None;
    }
    Some((first as usize, last as usize))
}

/// Soft silhouette of the mesh under `camera`.
pub fn render_opacity(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    camera: &Camera,
    sigma: f64,
) -> Result<OpacityMap> {
    Ok(SoftScene::prepare(vertices, faces, camera, sigma)?.render())
}

/// Gradient of a loss with respect to vertex positions, given its gradient
/// `d_opacity` with respect to the opacity map.
pub fn backward_opacity(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    camera: &Camera,
    sigma: f64,
    d_opacity: &[f64],
) -> Result<Vec<Vec3>> {
    let scene = SoftScene::prepare(vertices, faces, camera, sigma)?;
    let opacity = scene.render();
    backward_with(&scene, vertices, faces, &opacity, d_opacity)
}

/// Same as [`backward_opacity`], reusing an opacity map already rendered
/// from the same inputs.
pub fn backward_opacity_from(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    camera: &Camera,
    sigma: f64,
    opacity: &OpacityMap,
    d_opacity: &[f64],
) -> Result<Vec<Vec3>> {
    let scene = SoftScene::prepare(vertices, faces, camera, sigma)?;
    if opacity.width != camera.width || opacity.height != camera.height {
        return Err(Error::Invalid("opacity map does not match camera resolution".into()));
    }
    backward_with(&scene, vertices, faces, opacity, d_opacity)
}

fn backward_with(
    scene: &SoftScene<'_>,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    opacity: &OpacityMap,
    d_opacity: &[f64],
) -> Result<Vec<Vec3>> {
    if d_opacity.len() != opacity.values.len() {
        return Err(Error::LengthMismatch {
            what: "opacity gradient",
            expected: opacity.values.len(),
            actual: d_opacity.len(),
        });
    }
    if d_opacity.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("opacity gradient".into()));
    }
    Ok(scene.backward(vertices, faces, opacity, d_opacity))
}
