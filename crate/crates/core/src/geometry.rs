//! Spherical conversion, range densification and motion compensation.
//!
//! Convention: `x = r cosθ cosφ`, `y = r cosθ sinφ`, `z = r sinθ`, with
//! elevation `θ = asin(z / r)` and azimuth `φ = atan2(y, x)` in `(−π, π]`.
//! The forward and inverse maps are exact inverses, so a zero range offset
//! reproduces the source point.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::pointcloud::{PointCloud, Pose};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point {index} is at the origin; angles are undefined")]
    OriginPoint { index: usize },
    #[error("invalid densify config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    /// Range in meters.
    pub r: f64,
    /// Elevation in `[−π/2, π/2]`.
    pub theta: f64,
    /// Azimuth in `(−π, π]`.
    pub phi: f64,
}

/// Spherical coordinates of one Cartesian point; `None` at the origin.
pub fn spherical_of(p: [f64; 3]) -> Option<SphericalPoint> {
    let [x, y, z] = p;
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return None;
    }
    let theta = (z / r).clamp(-1.0, 1.0).asin();
    let mut phi = y.atan2(x);
    if phi == -PI {
        phi = PI;
    }
    Some(SphericalPoint { r, theta, phi })
}

pub fn to_spherical(cloud: &PointCloud) -> Result<Vec<SphericalPoint>, GeometryError> {
    (0..cloud.len())
        .map(|i| spherical_of(cloud.point(i)).ok_or(GeometryError::OriginPoint { index: i }))
        .collect()
}

pub fn from_spherical(p: &SphericalPoint) -> [f64; 3] {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    [p.r * ct * cp, p.r * ct * sp, p.r * st]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyConfig {
    pub delta_r_min: f64,
    pub delta_r_max: f64,
    pub copies_per_point: usize,
    pub seed: u64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self { delta_r_min: 0.1, delta_r_max: 0.3, copies_per_point: 1, seed: 0 }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.delta_r_min.is_finite() && self.delta_r_max.is_finite()) {
            return Err(GeometryError::InvalidConfig("range offsets must be finite"));
        }
        if self.delta_r_min < 0.0 || self.delta_r_min > self.delta_r_max {
            return Err(GeometryError::InvalidConfig("require 0 <= delta_r_min <= delta_r_max"));
        }
        if self.copies_per_point == 0 {
            return Err(GeometryError::InvalidConfig("copies_per_point must be positive"));
        }
        Ok(())
    }

    /// Range offset for emitted copy number `counter`.
    ///
    /// Counter-based: each offset reads its own position of the seeded
    /// ChaCha stream, so the result does not depend on evaluation order.
    pub fn offset(&self, counter: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(counter as u128 * 2);
        let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.delta_r_min + unit * (self.delta_r_max - self.delta_r_min)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyStats {
    /// Origin points that produced no copies.
    pub skipped_origin: usize,
    pub emitted: usize,
}

/// Appends `copies_per_point` range-shifted copies of every point.
///
/// Output layout: all source points in order, then copies ordered by
/// `(source index, copy index)`. Origin points are kept but not copied.
pub fn densify(cloud: &PointCloud, cfg: &DensifyConfig) -> Result<(PointCloud, DensifyStats), GeometryError> {
    cfg.validate()?;
    let copies = cfg.copies_per_point;
    let per_point: Vec<Option<Vec<([f64; 3], f64)>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = cloud.point(i);
            let r = spherical_of(p)?.r;
            let out = (0..copies)
                .map(|k| {
                    // Scaling along the ray keeps θ and φ and makes Δr = 0 bit-exact.
                    let scale = (r + cfg.offset((i * copies + k) as u64)) / r;
                    ([p[0] * scale, p[1] * scale, p[2] * scale], cloud.intensity[i])
                })
                .collect();
            Some(out)
        })
        .collect();

    let mut stats = DensifyStats::default();
    let mut out = PointCloud::with_capacity(cloud.len() * (1 + copies));
    out.x.extend_from_slice(&cloud.x);
    out.y.extend_from_slice(&cloud.y);
    out.z.extend_from_slice(&cloud.z);
    out.intensity.extend_from_slice(&cloud.intensity);
    for copies in per_point {
        match copies {
            None => stats.skipped_origin += 1,
            Some(points) => {
                for (p, intensity) in points {
                    out.push(p, intensity);
                    stats.emitted += 1;
                }
            }
        }
    }
    Ok((out, stats))
}

/// Maps a past frame into the current frame: `T_current⁻¹ · T_past`.
pub fn motion_compensate(past: &PointCloud, pose_past: &Pose, pose_current: &Pose) -> PointCloud {
    let rel = pose_current.inverse().compose(pose_past);
    let mut out = PointCloud::with_capacity(past.len());
    for i in 0..past.len() {
        out.push(rel.apply(past.point(i)), past.intensity[i]);
    }
    out.clamped_intensity = past.clamped_intensity;
    out
}
