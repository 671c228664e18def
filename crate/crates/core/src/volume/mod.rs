//! Scalar voxel grids: metadata, normalized access, trilinear sampling.

mod io;
mod phantom;

pub use io::{load_volume, save_volume};
pub use phantom::{
    generate_phantom, phantom_material_tf, PhantomShells, MATERIAL_PEAK_WIDTH, MIN_PHANTOM_DIM,
};

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata line {line}: {message}")]
    Meta { line: usize, message: String },
    #[error("metadata is missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("unknown value type `{0}` (expected u8 or u16le)")]
    UnknownValueType(String),
    #[error("raw data has {actual} bytes, expected {expected} for the declared dims and type")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid volume geometry: {0}")]
    Geometry(String),
}

/// On-disk voxel storage type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    U8,
    U16Le,
}

impl ValueType {
    pub fn bytes_per_voxel(self) -> usize {
        match self {
            ValueType::U8 => 1,
            ValueType::U16Le => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::U8 => "u8",
            ValueType::U16Le => "u16le",
        }
    }
}

impl std::str::FromStr for ValueType {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "u8" => Ok(ValueType::U8),
            "u16le" => Ok(ValueType::U16Le),
            other => Err(VolumeError::UnknownValueType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub value_type: ValueType,
}

impl VolumeMeta {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], value_type: ValueType) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Geometry(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            value_type,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// World-space size of the bounding box (dims times spacing).
    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        )
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Axis-aligned box centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Bounds {
    pub fn centered(extent: Vector3<f64>) -> Self {
        Self {
            min: -extent / 2.0,
            max: extent / 2.0,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Immutable 3D scalar grid. Voxels are stored x-fastest, then y, then z,
/// and the grid occupies a world-space box centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    meta: VolumeMeta,
    data: VoxelData,
}

impl Volume {
    pub fn new(meta: VolumeMeta, data: VoxelData) -> Result<Self, VolumeError> {
        let expected = meta.voxel_count();
        let type_matches = matches!(
            (&data, meta.value_type),
            (VoxelData::U8(_), ValueType::U8) | (VoxelData::U16(_), ValueType::U16Le)
        );
        if !type_matches {
            return Err(VolumeError::Geometry(
                "voxel storage does not match the declared value type".into(),
            ));
        }
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch {
                expected: expected * meta.value_type.bytes_per_voxel(),
                actual: data.len() * meta.value_type.bytes_per_voxel(),
            });
        }
        Ok(Self { meta, data })
    }

    /// Builds a volume from normalized values, quantized to the requested
    /// storage type with round-to-nearest.
    pub fn from_normalized(meta: VolumeMeta, values: &[f64]) -> Result<Self, VolumeError> {
        let data = match meta.value_type {
            ValueType::U8 => VoxelData::U8(
                values
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect(),
            ),
            ValueType::U16Le => VoxelData::U16(
                values
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect(),
            ),
        };
        Self::new(meta, data)
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn dims(&self) -> [usize; 3] {
        self.meta.dims
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::centered(self.meta.extent())
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.meta.dims;
        x + nx * (y + ny * z)
    }

    /// Normalized value of the voxel at flat index `i`.
    #[inline]
    pub fn value_at_index(&self, i: usize) -> f64 {
        match &self.data {
            VoxelData::U8(v) => v[i] as f64 / 255.0,
            VoxelData::U16(v) => v[i] as f64 / 65535.0,
        }
    }

    /// Normalized value of voxel `(x, y, z)`; panics when out of range.
    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.value_at_index(self.index(x, y, z))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.meta.voxel_count()).map(move |i| self.value_at_index(i))
    }

    /// World-space center of voxel `(x, y, z)`.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let half = self.meta.extent() / 2.0;
        let s = &self.meta.spacing;
        Vector3::new(
            (x as f64 + 0.5) * s[0] - half.x,
            (y as f64 + 0.5) * s[1] - half.y,
            (z as f64 + 0.5) * s[2] - half.z,
        )
    }

    /// Trilinear interpolation of normalized values at a world-space point.
    ///
    /// Points outside the bounding box sample as 0. Inside the box but beyond
    /// the outermost voxel centers the edge voxels are extended.
    pub fn sample_trilinear(&self, p: &Vector3<f64>) -> f64 {
        if !self.bounds().contains(p) {
            return 0.0;
        }
        self.sample_index(self.world_to_index(p))
    }

    /// Continuous voxel-index coordinates of a world point; voxel centers
    /// land on integers.
    #[inline]
    pub fn world_to_index(&self, p: &Vector3<f64>) -> [f64; 3] {
        let half = self.meta.extent() / 2.0;
        let s = &self.meta.spacing;
        [
            (p.x + half.x) / s[0] - 0.5,
            (p.y + half.y) / s[1] - 0.5,
            (p.z + half.z) / s[2] - 0.5,
        ]
    }

    /// Trilinear interpolation at continuous index coordinates, clamped to
    /// the grid. No bounds test.
    #[inline]
    pub fn sample_index(&self, f: [f64; 3]) -> f64 {
        match &self.data {
            VoxelData::U8(v) => trilerp(v, self.meta.dims, f) * (1.0 / 255.0),
            VoxelData::U16(v) => trilerp(v, self.meta.dims, f) * (1.0 / 65535.0),
        }
    }

    /// Voxel-value histogram over 256 equal-width bins of `[0, 1]`.
    pub fn histogram(&self) -> Histogram {
        Histogram::from_values(self.values())
    }
}

#[inline]
fn trilerp<T: Copy + Into<f64>>(data: &[T], dims: [usize; 3], f: [f64; 3]) -> f64 {
    let mut base = [0usize; 3];
    let mut step = [0usize; 3];
    let mut frac = [0.0f64; 3];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let c = f[axis].clamp(0.0, (n - 1) as f64);
        let i0 = (c as usize).min(n - 1);
        base[axis] = i0;
        step[axis] = if i0 + 1 < n { strides[axis] } else { 0 };
        frac[axis] = c - i0 as f64;
    }
    let i = base[0] + strides[1] * base[1] + strides[2] * base[2];
    let (sx, sy, sz) = (step[0], step[1], step[2]);
    let at = |k: usize| -> f64 { data[k].into() };
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let [fx, fy, fz] = frac;
    let c00 = lerp(at(i), at(i + sx), fx);
    let c10 = lerp(at(i + sy), at(i + sy + sx), fx);
    let c01 = lerp(at(i + sz), at(i + sz + sx), fx);
    let c11 = lerp(at(i + sz + sy), at(i + sz + sy + sx), fx);
    lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
}

pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Histogram {
    pub bins: Vec<u64>,
}

impl Histogram {
    /// Bin index of a normalized value; 1.0 lands in the last bin.
    #[inline]
    pub fn bin_of(x: f64) -> usize {
        ((x.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut bins = vec![0u64; HISTOGRAM_BINS];
        for v in values {
            bins[Self::bin_of(v)] += 1;
        }
        Self { bins }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn nonzero_bins(&self) -> usize {
        self.bins.iter().filter(|&&c| c > 0).count()
    }
}
