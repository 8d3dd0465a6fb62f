//! Point cloud, label and pose ingestion.
//!
//! Cloud files are KITTI velodyne `.bin`: consecutive little-endian `f32`
//! quadruples `(x, y, z, intensity)`. Label files are SemanticKITTI `.label`:
//! one little-endian `u32` per point, low 16 bits semantic class, high 16 bits
//! instance id. Pose files hold one row-major 3×4 `[R | t]` per line.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Bytes per point in a cloud file.
pub const POINT_STRIDE: usize = 16;

/// Orthonormality tolerance applied to pose rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("truncated file: {len} bytes is not a multiple of {stride}")]
    TruncatedFile { len: usize, stride: usize },
    #[error("non-finite value at point {index}")]
    NonFiniteValue { index: usize },
    #[error("label count {found} does not match expected {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("malformed pose line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("rotation on line {line} is not orthonormal (residual {residual:.3e})")]
    NonOrthonormalRotation { line: usize, residual: f64 },
    #[error("column lengths differ")]
    ColumnMismatch,
}

/// Structure-of-arrays point cloud.
///
/// Coordinates are held as `f64` so geometry kernels keep full precision;
/// values read from disk are exact `f32` widenings and narrow back losslessly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Number of intensities clamped into `[0, 1]` while reading.
    pub clamped_intensity: usize,
}

impl PointCloud {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            intensity: Vec::with_capacity(n),
            clamped_intensity: 0,
        }
    }

    /// Builds a cloud from columns, validating lengths and finiteness.
    pub fn from_columns(
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        intensity: Vec<f64>,
    ) -> Result<Self, PointCloudError> {
        let n = x.len();
        if y.len() != n || z.len() != n || intensity.len() != n {
            return Err(PointCloudError::ColumnMismatch);
        }
        for i in 0..n {
            if !(x[i].is_finite() && y[i].is_finite() && z[i].is_finite() && intensity[i].is_finite()) {
                return Err(PointCloudError::NonFiniteValue { index: i });
            }
        }
        Ok(Self { x, y, z, intensity, clamped_intensity: 0 })
    }

    /// Builds a cloud from an interleaved `n × 4` buffer `(x, y, z, intensity)`.
    pub fn from_interleaved(data: &[f32]) -> Result<Self, PointCloudError> {
        if data.len() % 4 != 0 {
            return Err(PointCloudError::TruncatedFile { len: data.len(), stride: 4 });
        }
        let n = data.len() / 4;
        let mut cloud = Self::with_capacity(n);
        for (i, p) in data.chunks_exact(4).enumerate() {
            cloud.push_checked(i, p[0], p[1], p[2], p[3])?;
        }
        Ok(cloud)
    }

    /// Interleaved `n × 4` copy, narrowed to `f32`.
    pub fn to_interleaved(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.len() * 4);
        for i in 0..self.len() {
            out.extend_from_slice(&[
                self.x[i] as f32,
                self.y[i] as f32,
                self.z[i] as f32,
                self.intensity[i] as f32,
            ]);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        [self.x[i], self.y[i], self.z[i]]
    }

    pub fn push(&mut self, p: [f64; 3], intensity: f64) {
        self.x.push(p[0]);
        self.y.push(p[1]);
        self.z.push(p[2]);
        self.intensity.push(intensity);
    }

    fn push_checked(
        &mut self,
        index: usize,
        x: f32,
        y: f32,
        z: f32,
        intensity: f32,
    ) -> Result<(), PointCloudError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite() && intensity.is_finite()) {
            return Err(PointCloudError::NonFiniteValue { index });
        }
        let clamped = intensity.clamp(0.0, 1.0);
        if clamped != intensity {
            self.clamped_intensity += 1;
        }
        self.push([x as f64, y as f64, z as f64], clamped as f64);
        Ok(())
    }
}

/// Decodes a KITTI cloud payload.
pub fn parse_cloud(bytes: &[u8]) -> Result<PointCloud, PointCloudError> {
    if bytes.len() % POINT_STRIDE != 0 {
        return Err(PointCloudError::TruncatedFile { len: bytes.len(), stride: POINT_STRIDE });
    }
    let n = bytes.len() / POINT_STRIDE;
    let mut cloud = PointCloud::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(POINT_STRIDE).enumerate() {
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
        cloud.push_checked(i, f(0), f(4), f(8), f(12))?;
    }
    Ok(cloud)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud, PointCloudError> {
    parse_cloud(&fs::read(path)?)
}

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_STRIDE);
    for v in cloud.to_interleaved() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), PointCloudError> {
    fs::write(path, encode_cloud(cloud))?;
    Ok(())
}

/// Per-point semantic class and instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointLabels {
    pub semantic_class: Vec<u16>,
    pub instance_id: Vec<u16>,
}

impl PointLabels {
    pub fn len(&self) -> usize {
        self.semantic_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic_class.is_empty()
    }
}

pub fn parse_labels(bytes: &[u8], expected_count: usize) -> Result<PointLabels, PointCloudError> {
    if bytes.len() % 4 != 0 {
        return Err(PointCloudError::TruncatedFile { len: bytes.len(), stride: 4 });
    }
    let n = bytes.len() / 4;
    if n != expected_count {
        return Err(PointCloudError::CountMismatch { expected: expected_count, found: n });
    }
    let mut labels = PointLabels {
        semantic_class: Vec::with_capacity(n),
        instance_id: Vec::with_capacity(n),
    };
    for w in bytes.chunks_exact(4) {
        let word = u32::from_le_bytes([w[0], w[1], w[2], w[3]]);
        labels.semantic_class.push((word & 0xFFFF) as u16);
        labels.instance_id.push((word >> 16) as u16);
    }
    Ok(labels)
}

pub fn read_labels(path: impl AsRef<Path>, expected_count: usize) -> Result<PointLabels, PointCloudError> {
    parse_labels(&fs::read(path)?, expected_count)
}

pub fn encode_labels(labels: &PointLabels) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * 4);
    for (&c, &i) in labels.semantic_class.iter().zip(&labels.instance_id) {
        let word = (c as u32) | ((i as u32) << 16);
        out.extend_from_slice(&word.to_le_bytes());
    }
    out
}

pub fn write_labels(path: impl AsRef<Path>, labels: &PointLabels) -> Result<(), PointCloudError> {
    fs::write(path, encode_labels(labels))?;
    Ok(())
}

/// Rigid transform `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates `RᵀR = I` and `det R = 1` within [`ROTATION_TOLERANCE`].
    /// Returns the largest residual on failure.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, f64> {
        let residual = rotation_residual(&rotation);
        if residual > ROTATION_TOLERANCE {
            return Err(residual);
        }
        Ok(Self { rotation, translation })
    }

    /// Pose from a row-major 3×4 `[R | t]`.
    pub fn from_row_major(v: &[f64; 12]) -> Result<Self, f64> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vector3::new(v[3], v[7], v[11]))
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [q[0], q[1], q[2]]
    }

    /// Re-expresses a sensor-frame pose in the LiDAR frame, given the
    /// LiDAR-to-sensor extrinsic `calib`: `calib⁻¹ · self · calib`.
    pub fn in_lidar_frame(&self, calib: &Pose) -> Self {
        calib.inverse().compose(self).compose(calib)
    }
}

fn rotation_residual(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ortho.max((r.determinant() - 1.0).abs())
}

/// Parses a pose file body: one row-major 3×4 matrix per non-empty line.
pub fn parse_poses(text: &str) -> Result<Vec<Pose>, PointCloudError> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = parse_twelve(line).map_err(|reason| PointCloudError::MalformedLine { line: line_no, reason })?;
        let pose = Pose::from_row_major(&values)
            .map_err(|residual| PointCloudError::NonOrthonormalRotation { line: line_no, residual })?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>, PointCloudError> {
    parse_poses(&fs::read_to_string(path)?)
}

/// Reads the `Tr:` LiDAR-to-camera extrinsic from a KITTI `calib.txt` body.
pub fn parse_calibration(text: &str) -> Result<Pose, PointCloudError> {
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix("Tr:") {
            let values = parse_twelve(rest)
                .map_err(|reason| PointCloudError::MalformedLine { line: lineno + 1, reason })?;
            return Pose::from_row_major(&values)
                .map_err(|residual| PointCloudError::NonOrthonormalRotation { line: lineno + 1, residual });
        }
    }
    Err(PointCloudError::MalformedLine { line: 0, reason: "no `Tr:` entry".into() })
}

fn parse_twelve(line: &str) -> Result<[f64; 12], String> {
    let mut values = [0.0; 12];
    let mut count = 0;
    for tok in line.split_whitespace() {
        if count == 12 {
            return Err("more than 12 values".into());
        }
        let v: f64 = tok.parse().map_err(|_| format!("not a number: {tok:?}"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value: {tok:?}"));
        }
        values[count] = v;
        count += 1;
    }
    if count != 12 {
        return Err(format!("expected 12 values, found {count}"));
    }
    Ok(values)
}
