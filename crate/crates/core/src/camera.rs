//! UAV camera model.
//!
//! World frame is right-handed, Z-up, in meters. Camera frame is +x right,
//! +y down, +z forward along the optical axis. Orientation is built as yaw
//! (compass heading, clockwise about world Z, 0 = facing +Y), then pitch
//! about the camera right axis (positive tilts the optical axis down, 90 =
//! straight down), then roll about the optical axis.

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose<T> {
    pub position: Vec3<T>,
    pub yaw: T,
    pub pitch: T,
    pub roll: T,
}

impl<T: Real> CameraPose<T> {
    pub fn new(position: Vec3<T>, yaw: T, pitch: T, roll: T) -> Self {
        Self {
            position,
            yaw: normalize_degrees(yaw),
            pitch,
            roll,
        }
    }

    pub fn altitude(&self) -> T {
        self.position.z
    }

    pub fn validate(&self) -> Result<()> {
        let ninety = T::lit(90.0);
        if !(self.position.z >= T::zero()) {
            return Err(Error::InvalidPose(format!(
                "altitude {:?} below ground",
                self.position.z
            )));
        }
        if !(self.pitch >= -ninety && self.pitch <= ninety) {
            return Err(Error::InvalidPose(format!(
                "pitch {:?} outside [-90, 90]",
                self.pitch
            )));
        }
        Ok(())
    }

    /// Camera-to-world rotation; columns are the camera axes in world coordinates.
    pub fn rotation(&self) -> Mat3<T> {
        let (o, z) = (T::one(), T::zero());
        // camera axes at yaw = pitch = roll = 0: right = +X, down = -Z, forward = +Y
        let base = Mat3::from_rows([[o, z, z], [z, z, o], [z, -o, z]]);
        let yaw = Mat3::axis_rotation(2, -self.yaw.to_radians());
        let pitch = Mat3::axis_rotation(0, -self.pitch.to_radians());
        let roll = Mat3::axis_rotation(2, self.roll.to_radians());
        yaw.mul_mat(&base).mul_mat(&pitch).mul_mat(&roll)
    }

    pub fn world_to_camera(&self, point: Vec3<T>) -> Vec3<T> {
        self.rotation().transpose().mul_vec(point - self.position)
    }

    pub fn camera_to_world(&self, point: Vec3<T>) -> Vec3<T> {
        self.rotation().mul_vec(point) + self.position
    }

    /// Unit optical axis in world coordinates.
    pub fn forward(&self) -> Vec3<T> {
        let r = self.rotation();
        Vec3::new(r.rows[0][2], r.rows[1][2], r.rows[2][2])
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_degrees<T: Real>(deg: T) -> T {
    let full = T::lit(360.0);
    let r = deg % full;
    let r = if r < T::zero() { r + full } else { r };
    if r >= full {
        T::zero()
    } else {
        r
    }
}

/// Pinhole intrinsics with square pixels and the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub width: u32,
    pub height: u32,
    pub horizontal_fov: T,
}

/// Pixel coordinates plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub u: T,
    pub v: T,
    pub depth: T,
}

pub const DEFAULT_HFOV: f64 = 60.0;

impl<T: Real> Intrinsics<T> {
    pub fn new(width: u32, height: u32, horizontal_fov: T) -> Result<Self> {
        let intr = Self {
            width,
            height,
            horizontal_fov,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("zero image dimension".into()));
        }
        if !(self.horizontal_fov > T::zero() && self.horizontal_fov < T::lit(180.0)) {
            return Err(Error::InvalidIntrinsics(format!(
                "horizontal fov {:?} outside (0, 180)",
                self.horizontal_fov
            )));
        }
        Ok(())
    }

    pub fn focal(&self) -> T {
        T::lit(self.width as f64 * 0.5) / (self.horizontal_fov.to_radians() * T::lit(0.5)).tan()
    }

    pub fn cx(&self) -> T {
        T::lit(self.width as f64 * 0.5)
    }

    pub fn cy(&self) -> T {
        T::lit(self.height as f64 * 0.5)
    }

    /// Same field of view at `factor` times the resolution.
    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            width: self.width * factor,
            height: self.height * factor,
            horizontal_fov: self.horizontal_fov,
        }
    }

    /// Projects a camera-frame point. `None` when the point is not in front of the camera.
    pub fn project(&self, p: Vec3<T>) -> Option<Projection<T>> {
        if !(p.z > T::zero()) {
            return None;
        }
        let f = self.focal();
        Some(Projection {
            u: self.cx() + f * p.x / p.z,
            v: self.cy() + f * p.y / p.z,
            depth: p.z,
        })
    }

    /// Camera-frame direction through pixel coordinate `(u, v)`, scaled so its z component is 1.
    pub fn ray_direction(&self, u: T, v: T) -> Vec3<T> {
        let f = self.focal();
        Vec3::new((u - self.cx()) / f, (v - self.cy()) / f, T::one())
    }
}
