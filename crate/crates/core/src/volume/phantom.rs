//! Synthetic three-material test volume.

use super::{ValueType, Volume, VolumeError, VolumeMeta};
use crate::transfer::{Peak, TransferFunction, BLUE, GREEN, RED};

pub const MIN_PHANTOM_DIM: usize = 16;

/// Nominal material values and their nested box boundaries.
///
/// Boundaries are fractions of the half-extent, measured with the Chebyshev
/// (max-axis) distance from the grid center, so each material is an
/// axis-aligned box shell.
#[derive(Debug, Clone, Copy)]
pub struct PhantomShells;

impl PhantomShells {
    pub const CORE: f64 = 0.85;
    pub const MIDDLE: f64 = 0.55;
    pub const OUTER: f64 = 0.25;
    pub const BACKGROUND: f64 = 0.0;

    pub const CORE_LIMIT: f64 = 0.45;
    pub const MIDDLE_LIMIT: f64 = 0.70;
    pub const OUTER_LIMIT: f64 = 0.90;

    /// Material value at normalized box coordinates in `[-1, 1]^3`.
    pub fn value_at(u: [f64; 3]) -> f64 {
        let d = u.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if d < Self::CORE_LIMIT {
            Self::CORE
        } else if d < Self::MIDDLE_LIMIT {
            Self::MIDDLE
        } else if d < Self::OUTER_LIMIT {
            Self::OUTER
        } else {
            Self::BACKGROUND
        }
    }
}

/// Generates the deterministic phantom with unit spacing, stored as u16.
pub fn generate_phantom(dims: [usize; 3]) -> Result<Volume, VolumeError> {
    if dims.iter().any(|&d| d < MIN_PHANTOM_DIM) {
        return Err(VolumeError::Geometry(format!(
            "phantom dims must be at least {MIN_PHANTOM_DIM} per axis, got {dims:?}"
        )));
    }
    let meta = VolumeMeta::new(dims, [1.0; 3], ValueType::U16Le)?;
    let [nx, ny, nz] = dims;
    let norm = |i: usize, n: usize| (i as f64 + 0.5 - n as f64 / 2.0) / (n as f64 / 2.0);
    let mut values = Vec::with_capacity(meta.voxel_count());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                values.push(PhantomShells::value_at([norm(x, nx), norm(y, ny), norm(z, nz)]));
            }
        }
    }
    Volume::from_normalized(meta, &values)
}

/// Width of the peaks in [`phantom_material_tf`].
pub const MATERIAL_PEAK_WIDTH: f64 = 0.08;

/// One default-height peak per phantom material: outer shell blue ("skin"),
/// middle shell green ("skeleton"), core red ("teeth").
pub fn phantom_material_tf() -> TransferFunction {
    let peaks = [
        (PhantomShells::OUTER, BLUE),
        (PhantomShells::MIDDLE, GREEN),
        (PhantomShells::CORE, RED),
    ]
    .map(|(c, color)| {
        let mut p = Peak::with_defaults(color);
        p.set_center(c);
        p.set_width(MATERIAL_PEAK_WIDTH);
        p
    });
    TransferFunction::from_parts(peaks.to_vec(), Some(0)).expect("valid by construction")
}
