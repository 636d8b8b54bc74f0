use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Pinhole camera looking from `position` at `target`. Pixel `(x, y)` has its
/// center at `(x + 0.5, y + 0.5)` with `y` increasing downward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    focal: f64,
}

impl Camera {
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            position: position.into(),
            target: target.into(),
            up: up.into(),
            fov_y,
            width,
            height,
            near: 1e-3,
            far: 1e3,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_clip(mut self, near: f64, far: f64) -> Result<Self> {
        self.near = near;
        self.far = far;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .position
            .iter()
            .chain(&self.target)
            .chain(&self.up)
            .chain([&self.fov_y, &self.near, &self.far])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("camera parameters".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Invalid(format!("field of view {} outside (0, pi)", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("camera resolution must be at least 1x1".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Invalid(format!(
                "clip planes must satisfy 0 < near < far, got {} and {}",
                self.near, self.far
            )));
        }
        let forward = Vec3::from(self.target) - Vec3::from(self.position);
        if forward.norm() == 0.0 {
            return Err(Error::Invalid("camera position equals its target".into()));
        }
        if forward.cross(&Vec3::from(self.up)).norm() <= 1e-12 * forward.norm() {
            return Err(Error::Invalid("camera up vector is parallel to the view direction".into()));
        }
        Ok(())
    }

    fn frame(&self) -> Frame {
        let forward = (Vec3::from(self.target) - Vec3::from(self.position)).normalize();
        let right = forward.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&forward);
        Frame {
            right,
            up,
            forward,
            focal: 0.5 * self.height as f64 / (0.5 * self.fov_y).tan(),
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    /// Unit view direction.
    pub fn forward(&self) -> Vec3 {
        self.frame().forward
    }

    /// Focal length in pixels.
    pub fn focal_length(&self) -> f64 {
        self.frame().focal
    }

    /// Screen position and view depth `(px, py, depth)`, or `None` in front
    /// of the near plane.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 3]> {
        let fr = self.frame();
        let r = p - self.position();
        let z = r.dot(&fr.forward);
        if z < self.near {
            return None;
        }
        Some([
            0.5 * self.width as f64 + fr.focal * r.dot(&fr.right) / z,
            0.5 * self.height as f64 - fr.focal * r.dot(&fr.up) / z,
            z,
        ])
    }

    /// Derivatives of the screen coordinates `(px, py)` with respect to the
    /// world position.
    pub fn projection_jacobian(&self, p: &Vec3) -> (Vec3, Vec3) {
        let fr = self.frame();
        let r = p - self.position();
        let (x, y, z) = (r.dot(&fr.right), r.dot(&fr.up), r.dot(&fr.forward));
        (
            (fr.right / z - fr.forward * (x / (z * z))) * fr.focal,
            -(fr.up / z - fr.forward * (y / (z * z))) * fr.focal,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_projects_to_image_center() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y(), 1.0, 64, 32).unwrap();
        let p = cam.project(&Vec3::zeros()).unwrap();
        assert!((p[0] - 32.0).abs() < 1e-12 && (p[1] - 16.0).abs() < 1e-12);
        assert!((p[2] - 5.0).abs() < 1e-12);
        // +y world is up in the image, +x world is to the right
        let up = cam.project(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(up[1] < 16.0);
        let right = cam.project(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(right[0] > 32.0);
        assert!(cam.project(&Vec3::new(0.0, 0.0, 6.0)).is_none());
    }

    #[test]
    fn half_fov_reaches_the_top_edge() {
        let fov = 60f64.to_radians();
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), Vec3::y(), fov, 100, 100).unwrap();
        let p = cam.project(&Vec3::new(0.0, 2.0 * (fov / 2.0).tan(), 0.0)).unwrap();
        assert!(p[1].abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_differences() {
        let cam = Camera::look_at(
            Vec3::new(1.0, 2.0, 4.0),
            Vec3::new(0.1, -0.2, 0.0),
            Vec3::y(),
            0.8,
            80,
            60,
        )
        .unwrap();
        let p = Vec3::new(0.3, 0.4, -0.5);
        let (dx, dy) = cam.projection_jacobian(&p);
        let h = 1e-6;
        for a in 0..3 {
            let e = Vec3::ith(a, h);
            let plus = cam.project(&(p + e)).unwrap();
            let minus = cam.project(&(p - e)).unwrap();
            assert!(((plus[0] - minus[0]) / (2.0 * h) - dx[a]).abs() < 1e-6);
            assert!(((plus[1] - minus[1]) / (2.0 * h) - dy[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        let z = Vec3::zeros();
        assert!(Camera::look_at(z, z, Vec3::y(), 1.0, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::y(), z, Vec3::y(), 1.0, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::z(), z, Vec3::y(), 3.2, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::z(), z, Vec3::y(), 1.0, 0, 4).is_err());
        let cam = Camera::look_at(Vec3::z(), z, Vec3::y(), 1.0, 4, 4).unwrap();
        assert!(cam.with_clip(2.0, 1.0).is_err());
    }
}
