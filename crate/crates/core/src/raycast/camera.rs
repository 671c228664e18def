use nalgebra::Vector3;

use super::{Ray, RaycastError};

/// Pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub eye: Vector3<f64>,
    pub look_at: Vector3<f64>,
    pub up: Vector3<f64>,
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        eye: Vector3<f64>,
        look_at: Vector3<f64>,
        up: Vector3<f64>,
        vertical_fov: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, RaycastError> {
        let cam = Self {
            eye,
            look_at,
            up,
            vertical_fov,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera on the +z axis looking at the origin, far enough back that a
    /// box of the given extent fits the vertical field of view.
    pub fn framing(extent: Vector3<f64>, width: usize, height: usize) -> Self {
        let fov = 40f64.to_radians();
        let radius = extent.norm() / 2.0;
        let distance = radius / (fov / 2.0).sin() * 1.05;
        Self {
            eye: Vector3::new(0.0, 0.0, distance),
            look_at: Vector3::zeros(),
            up: Vector3::y(),
            vertical_fov: fov,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), RaycastError> {
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !finite(&self.eye) || !finite(&self.look_at) || !finite(&self.up) {
            return Err(RaycastError::Camera("non-finite camera vector".into()));
        }
        let forward = self.look_at - self.eye;
        if forward.norm() == 0.0 {
            return Err(RaycastError::Camera("eye and look_at coincide".into()));
        }
        if forward.cross(&self.up).norm() < 1e-12 * forward.norm() * self.up.norm().max(1e-300) {
            return Err(RaycastError::Camera("up is parallel to the view direction".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(RaycastError::Camera(format!(
                "vertical fov {} must lie in (0, pi)",
                self.vertical_fov
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RaycastError::Camera("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> CameraBasis {
        let forward = (self.look_at - self.eye).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        let tan_half = (self.vertical_fov / 2.0).tan();
        CameraBasis {
            eye: self.eye,
            forward,
            right: right * tan_half * self.width as f64 / self.height as f64,
            up: up * tan_half,
            inv_width: 1.0 / self.width as f64,
            inv_height: 1.0 / self.height as f64,
        }
    }

    /// Ray through the center of pixel `(px, py)`, top-left origin.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        self.basis().ray(px, py)
    }
}

/// Precomputed per-frame camera frame; `right` and `up` are pre-scaled by
/// the image-plane half extents at unit distance.
#[derive(Debug, Clone, Copy)]
pub struct CameraBasis {
    eye: Vector3<f64>,
    forward: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    inv_width: f64,
    inv_height: f64,
}

impl CameraBasis {
    #[inline]
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let sx = 2.0 * (px as f64 + 0.5) * self.inv_width - 1.0;
        let sy = 1.0 - 2.0 * (py as f64 + 0.5) * self.inv_height;
        let dir = self.forward + self.right * sx + self.up * sy;
        Ray {
            origin: self.eye,
            direction: dir.normalize(),
        }
    }
}

pub fn camera_ray(cam: &Camera, px: usize, py: usize) -> Ray {
    cam.ray(px, py)
}
