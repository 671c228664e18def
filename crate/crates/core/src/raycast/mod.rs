//! CPU volume ray casting.
//!
//! Every pixel gets a pinhole ray. The ray is moved into volume-local space,
//! clipped against the volume box and the optional clip plane, and then
//! marched front to back at uniform steps. Each sample goes through the
//! transfer-function lookup table, gets opacity-corrected for the step
//! length, and is accumulated with the over operator until the ray leaves
//! the volume or its opacity crosses the early-termination threshold.

mod camera;
mod frame;

pub use camera::{camera_ray, Camera, CameraBasis};
pub use frame::{quantize, quantize_rgba, FrameBuffer};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::transfer::{LookupTable, Rgba, TransferFunction, LUT_SIZE};
use crate::volume::{Bounds, Histogram, Volume, VolumeMeta};

pub const TILE_SIZE: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum RaycastError {
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid render settings: {0}")]
    Settings(String),
    #[error("invalid volume transform: {0}")]
    Transform(String),
    #[error("invalid clip plane: {0}")]
    ClipPlane(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Rigid placement of the volume in the world: `world = R * local + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for VolumeTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl VolumeTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Largest entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn validate(&self) -> Result<(), RaycastError> {
        let err = self.orthonormality_error();
        let det = self.rotation.determinant();
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(err <= 1e-6) || !((det - 1.0).abs() <= 1e-6) {
            return Err(RaycastError::Transform(format!(
                "rotation is not a proper rotation (|RᵀR - I| = {err:e}, det = {det})"
            )));
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(RaycastError::Transform("non-finite translation".into()));
        }
        Ok(())
    }

    /// Gram-Schmidt on the columns, keeping the first column's direction.
    pub fn orthonormalize(&mut self) {
        let x = self.rotation.column(0).normalize();
        let y = self.rotation.column(1);
        let y = (y - x * x.dot(&y)).normalize();
        let z = x.cross(&y);
        self.rotation = Matrix3::from_columns(&[x, y, z]);
    }

    pub fn to_local_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn to_world_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_local_ray(&self, ray: &Ray) -> Ray {
        let rt = self.rotation.transpose();
        Ray {
            origin: rt * (ray.origin - self.translation),
            direction: rt * ray.direction,
        }
    }
}

/// Half-space cut in volume-local coordinates. Points with
/// `normal · p >= offset` are kept, so the normal points into the kept side.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClipPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub enabled: bool,
}

impl Default for ClipPlane {
    fn default() -> Self {
        Self::disabled()
    }
}

impl ClipPlane {
    pub fn disabled() -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
            enabled: false,
        }
    }

    /// Enabled plane; `normal` is normalized here.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, RaycastError> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite()) || !offset.is_finite() {
            return Err(RaycastError::ClipPlane("normal must be finite and nonzero".into()));
        }
        let n = normal / len;
        Ok(Self {
            normal: [n.x, n.y, n.z],
            offset,
            enabled: true,
        })
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }

    pub fn validate(&self) -> Result<(), RaycastError> {
        if (self.normal().norm() - 1.0).abs() > 1e-6 || !self.offset.is_finite() {
            return Err(RaycastError::ClipPlane(format!(
                "normal {:?} must be unit length and offset finite",
                self.normal
            )));
        }
        Ok(())
    }

    pub fn keeps(&self, p: &Vector3<f64>) -> bool {
        !self.enabled || self.normal().dot(p) >= self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub step_size: f64,
    /// Stop marching once accumulated alpha reaches this; 1.0 disables it.
    pub early_termination_alpha: f64,
    /// Step length at which lookup-table opacities are taken literally.
    pub reference_step: f64,
    pub background: Rgba,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            early_termination_alpha: 0.99,
            reference_step: 1.0,
            background: Rgba::new(0.0, 0.0, 0.0, 1.0),
        }
    }
}

impl RenderSettings {
    /// Defaults scaled to the volume: half-voxel steps, one-voxel reference.
    pub fn for_volume(meta: &VolumeMeta) -> Self {
        let s = meta.min_spacing();
        Self {
            step_size: 0.5 * s,
            reference_step: s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RaycastError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(RaycastError::Settings(format!("step_size {} must be > 0", self.step_size)));
        }
        if !(self.reference_step > 0.0 && self.reference_step.is_finite()) {
            return Err(RaycastError::Settings(format!(
                "reference_step {} must be > 0",
                self.reference_step
            )));
        }
        if !(self.early_termination_alpha > 0.0 && self.early_termination_alpha <= 1.0) {
            return Err(RaycastError::Settings(format!(
                "early_termination_alpha {} must lie in (0, 1]",
                self.early_termination_alpha
            )));
        }
        let bg = self.background;
        if ![bg.r, bg.g, bg.b, bg.a].iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(RaycastError::Settings("background channels must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Slab test of a ray against an axis-aligned box plus an optional plane,
/// all in the same coordinate space. The interval starts at `t >= 0`.
pub fn clip_interval_local(ray: &Ray, bounds: &Bounds, plane: &ClipPlane) -> Option<(f64, f64)> {
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        let (lo, hi) = (bounds.min[axis], bounds.max[axis]);
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((lo - o) * inv, (hi - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
    }
    if plane.enabled {
        let n = plane.normal();
        let denom = n.dot(&ray.direction);
        let dist = n.dot(&ray.origin) - plane.offset;
        if denom == 0.0 {
            if dist < 0.0 {
                return None;
            }
        } else {
            let t = -dist / denom;
            if denom > 0.0 {
                t_near = t_near.max(t);
            } else {
                t_far = t_far.min(t);
            }
        }
    }
    (t_near < t_far).then_some((t_near, t_far))
}

/// Interval of a world-space ray inside the transformed, clipped volume box.
pub fn clip_interval(
    ray: &Ray,
    bounds: &Bounds,
    transform: &VolumeTransform,
    plane: &ClipPlane,
) -> Option<(f64, f64)> {
    clip_interval_local(&transform.to_local_ray(ray), bounds, plane)
}

/// Rescales an opacity defined per `reference_step` to a sample spacing of
/// `step`: `1 - (1 - alpha)^(step / reference_step)`.
#[inline]
pub fn opacity_correct(alpha: f64, step: f64, reference_step: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - alpha).powf(step / reference_step)
}

/// Premultiplied color and opacity accumulated along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accumulation {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl Accumulation {
    /// Straight-alpha result of compositing over `background`.
    pub fn over(&self, background: Rgba) -> Rgba {
        let keep = 1.0 - self.a;
        let bga = background.a;
        let a = self.a + keep * bga;
        if a <= 0.0 {
            return Rgba::TRANSPARENT;
        }
        Rgba::new(
            (self.r + keep * background.r * bga) / a,
            (self.g + keep * background.g * bga) / a,
            (self.b + keep * background.b * bga) / a,
            a,
        )
    }
}

/// Lookup table with opacities already corrected to the sampling step and
/// colors premultiplied.
#[derive(Debug, Clone)]
pub struct ShadingTable {
    entries: [[f64; 4]; LUT_SIZE],
}

impl ShadingTable {
    pub fn new(lut: &LookupTable, settings: &RenderSettings) -> Self {
        let mut entries = [[0.0; 4]; LUT_SIZE];
        for (dst, src) in entries.iter_mut().zip(lut.entries()) {
            let a = opacity_correct(src.a, settings.step_size, settings.reference_step);
            *dst = [src.r * a, src.g * a, src.b * a, a];
        }
        Self { entries }
    }

    #[inline]
    fn get(&self, value: f64) -> &[f64; 4] {
        &self.entries[Histogram::bin_of(value)]
    }
}

/// Marches `ray` (volume-local) over `interval`, calling `observe` with the
/// running accumulation after every sample.
pub fn march(
    ray: &Ray,
    interval: (f64, f64),
    volume: &Volume,
    table: &ShadingTable,
    settings: &RenderSettings,
    mut observe: impl FnMut(&Accumulation),
) -> Accumulation {
    let (t_near, t_far) = interval;
    let step = settings.step_size;
    let spacing = volume.meta().spacing;
    let origin = volume.world_to_index(&ray.origin);
    let dir = [
        ray.direction.x / spacing[0],
        ray.direction.y / spacing[1],
        ray.direction.z / spacing[2],
    ];
    let mut acc = Accumulation::default();
    let mut k = 0u64;
    loop {
        let t = t_near + (k as f64 + 0.5) * step;
        if t >= t_far {
            break;
        }
        let f = [origin[0] + dir[0] * t, origin[1] + dir[1] * t, origin[2] + dir[2] * t];
        let s = table.get(volume.sample_index(f));
        if s[3] > 0.0 {
            let keep = 1.0 - acc.a;
            acc.r += keep * s[0];
            acc.g += keep * s[1];
            acc.b += keep * s[2];
            acc.a += keep * s[3];
        }
        observe(&acc);
        if acc.a >= settings.early_termination_alpha {
            break;
        }
        k += 1;
    }
    acc
}

/// Front-to-back composite of one volume-local ray, over the background.
pub fn composite_ray(
    ray: &Ray,
    interval: (f64, f64),
    volume: &Volume,
    lut: &LookupTable,
    settings: &RenderSettings,
) -> Rgba {
    let table = ShadingTable::new(lut, settings);
    march(ray, interval, volume, &table, settings, |_| {}).over(settings.background)
}

struct Tile {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn tiles(width: usize, height: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for y0 in (0..height).step_by(TILE_SIZE) {
        for x0 in (0..width).step_by(TILE_SIZE) {
            out.push(Tile {
                x0,
                y0,
                w: TILE_SIZE.min(width - x0),
                h: TILE_SIZE.min(height - y0),
            });
        }
    }
    out
}

/// Renders one frame. Pixels are independent, so the result does not depend
/// on how tiles are scheduled across threads.
pub fn render_frame(
    volume: &Volume,
    tf: &TransferFunction,
    camera: &Camera,
    transform: &VolumeTransform,
    plane: &ClipPlane,
    settings: &RenderSettings,
) -> Result<FrameBuffer, RaycastError> {
    camera.validate()?;
    settings.validate()?;
    transform.validate()?;
    if plane.enabled {
        plane.validate()?;
    }

    let lut = tf.build_lut();
    let background = quantize_rgba(Accumulation::default().over(settings.background));
    if lut.is_transparent() {
        return Ok(FrameBuffer::filled(camera.width, camera.height, background));
    }
    let table = ShadingTable::new(&lut, settings);
    let basis = camera.basis();
    let bounds = volume.bounds();

    let shade = |x: usize, y: usize| -> [u8; 4] {
        let ray = transform.to_local_ray(&basis.ray(x, y));
        match clip_interval_local(&ray, &bounds, plane) {
            Some(interval) => {
                let acc = march(&ray, interval, volume, &table, settings, |_| {});
                quantize_rgba(acc.over(settings.background))
            }
            None => background,
        }
    };

    let rendered: Vec<(Tile, Vec<[u8; 4]>)> = tiles(camera.width, camera.height)
        .into_par_iter()
        .map(|tile| {
            let mut px = Vec::with_capacity(tile.w * tile.h);
            for y in tile.y0..tile.y0 + tile.h {
                for x in tile.x0..tile.x0 + tile.w {
                    px.push(shade(x, y));
                }
            }
            (tile, px)
        })
        .collect();

    let mut frame = FrameBuffer::new(camera.width, camera.height);
    for (tile, px) in rendered {
        for (i, p) in px.into_iter().enumerate() {
            frame.set_pixel(tile.x0 + i % tile.w, tile.y0 + i / tile.w, p);
        }
    }
    Ok(frame)
}

/// [`render_frame`] on a specific thread pool.
pub fn render_frame_in(
    pool: &rayon::ThreadPool,
    volume: &Volume,
    tf: &TransferFunction,
    camera: &Camera,
    transform: &VolumeTransform,
    plane: &ClipPlane,
    settings: &RenderSettings,
) -> Result<FrameBuffer, RaycastError> {
    pool.install(|| render_frame(volume, tf, camera, transform, plane, settings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{Peak, GREEN};
    use crate::volume::{generate_phantom, ValueType, VolumeMeta};

    fn unit_box() -> Bounds {
        Bounds::centered(Vector3::new(1.0, 1.0, 1.0))
    }

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray {
        Ray {
            origin: Vector3::from(o),
            direction: Vector3::from(d).normalize(),
        }
    }

    #[test]
    fn axis_aligned_chord() {
        let r = ray([0.1, 0.2, 5.0], [0.0, 0.0, -1.0]);
        let (t0, t1) = clip_interval_local(&r, &unit_box(), &ClipPlane::disabled()).unwrap();
        assert!((t0 - 4.5).abs() < 1e-12);
        assert!((t1 - t0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn misses_and_inside_start() {
        let miss = ray([2.0, 0.0, 5.0], [0.0, 0.0, -1.0]);
        assert_eq!(clip_interval_local(&miss, &unit_box(), &ClipPlane::disabled()), None);
        let behind = ray([0.0, 0.0, 5.0], [0.0, 0.0, 1.0]);
        assert_eq!(clip_interval_local(&behind, &unit_box(), &ClipPlane::disabled()), None);
        let inside = ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let (t0, t1) = clip_interval_local(&inside, &unit_box(), &ClipPlane::disabled()).unwrap();
        assert_eq!(t0, 0.0);
        assert!((t1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn plane_culling_everything() {
        let r = ray([0.0, 0.0, 5.0], [0.0, 0.0, -1.0]);
        let plane = ClipPlane::new(Vector3::x(), 2.0).unwrap();
        assert_eq!(clip_interval_local(&r, &unit_box(), &plane), None);
        // Parallel plane with the origin on the removed side.
        let parallel = ClipPlane::new(Vector3::x(), 0.5).unwrap();
        assert_eq!(clip_interval_local(&r, &unit_box(), &parallel), None);
    }

    #[test]
    fn plane_through_center_halves_interval() {
        let r = ray([0.0, 0.0, 5.0], [0.0, 0.0, -1.0]);
        let plane = ClipPlane::new(Vector3::new(0.0, 0.0, -1.0), 0.0).unwrap();
        let (t0, t1) = clip_interval_local(&r, &unit_box(), &plane).unwrap();
        // Oracle: dense membership test along the ray.
        let n = 100_000;
        let inside: Vec<f64> = (0..n)
            .map(|i| 4.0 + 2.0 * (i as f64 + 0.5) / n as f64)
            .filter(|&t| {
                let p = r.at(t);
                unit_box().contains(&p) && plane.keeps(&p)
            })
            .collect();
        let lo = inside.first().unwrap();
        let hi = inside.last().unwrap();
        assert!((t0 - lo).abs() < 1e-4 && (t1 - hi).abs() < 1e-4);
        assert!((t1 - t0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn transformed_box() {
        // Volume moved 2 units along +x: the on-axis ray at x = 2 hits it.
        let mut xf = VolumeTransform::identity();
        xf.translation = Vector3::new(2.0, 0.0, 0.0);
        let r = ray([2.0, 0.0, 5.0], [0.0, 0.0, -1.0]);
        let (t0, t1) = clip_interval(&r, &unit_box(), &xf, &ClipPlane::disabled()).unwrap();
        assert!((t0 - 4.5).abs() < 1e-12 && (t1 - 5.5).abs() < 1e-12);
    }

    #[test]
    fn opacity_correction_values() {
        assert_eq!(opacity_correct(0.5, 1.0, 1.0), 0.5);
        assert!((opacity_correct(0.5, 0.5, 1.0) - 0.29289322).abs() < 1e-8);
        assert_eq!(opacity_correct(0.0, 0.3, 1.0), 0.0);
        assert_eq!(opacity_correct(0.0, 3.0, 0.1), 0.0);
        assert_eq!(opacity_correct(1.0, 0.1, 1.0), 1.0);
    }

    fn constant_volume(value: f64, n: usize) -> Volume {
        let meta = VolumeMeta::new([n; 3], [1.0; 3], ValueType::U8).unwrap();
        Volume::from_normalized(meta, &vec![value; n * n * n]).unwrap()
    }

    fn flat_lut(alpha: f64) -> LookupTable {
        // h = alpha, very wide peak centered on the voxel value.
        let tf = TransferFunction::from_parts(vec![Peak::new(1.0, 0.5, alpha, GREEN).unwrap()], None).unwrap();
        tf.build_lut()
    }

    #[test]
    fn transparent_interval_gives_background() {
        let v = constant_volume(0.0, 8);
        let lut = flat_lut(0.5);
        let settings = RenderSettings {
            background: Rgba::new(0.2, 0.4, 0.6, 1.0),
            ..RenderSettings::default()
        };
        let r = ray([0.0, 0.0, 10.0], [0.0, 0.0, -1.0]);
        let out = composite_ray(&r, (6.0, 14.0), &v, &lut, &settings);
        assert_eq!(out, settings.background);
    }

    #[test]
    fn homogeneous_half_steps_reach_three_quarters() {
        let v = constant_volume(1.0, 8);
        let lut = flat_lut(0.5);
        assert!((lut.lookup(1.0).a - 0.5).abs() < 1e-3);
        let alpha_ref = lut.lookup(1.0).a;
        let settings = RenderSettings {
            step_size: 0.5,
            reference_step: 1.0,
            early_termination_alpha: 1.0,
            ..RenderSettings::default()
        };
        let table = ShadingTable::new(&lut, &settings);
        let r = ray([0.0, 0.0, 10.0], [0.0, 0.0, -1.0]);
        let mut samples = 0;
        let acc = march(&r, (8.0, 10.0), &v, &table, &settings, |_| samples += 1);
        assert_eq!(samples, 4);
        let expected = 1.0 - (1.0 - alpha_ref).powf(2.0);
        assert!((acc.a - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_half_alpha_slab() {
        // LUT built by hand so the reference opacity is exactly 0.5.
        let v = constant_volume(1.0, 8);
        let mut lut_tf = TransferFunction::new();
        lut_tf.add_peak(GREEN).unwrap();
        let p = lut_tf.selected_peak_mut().unwrap();
        p.set_center(LookupTable::bin_center(255));
        p.set_height(0.5);
        let lut = lut_tf.build_lut();
        assert_eq!(lut.lookup(1.0).a, 0.5);
        let settings = RenderSettings {
            early_termination_alpha: 1.0,
            ..RenderSettings::default()
        };
        let table = ShadingTable::new(&lut, &settings);
        let r = ray([0.0, 0.0, 10.0], [0.0, 0.0, -1.0]);
        let acc = march(&r, (7.0, 9.0), &v, &table, &settings, |_| {});
        let per_step: f64 = 0.29289322;
        assert!((acc.a - (1.0 - (1.0 - per_step).powi(4))).abs() < 1e-8);
        assert!((acc.a - 0.75).abs() < 1e-12);
    }

    #[test]
    fn alpha_is_monotone_along_ray() {
        let v = generate_phantom([24, 24, 24]).unwrap();
        let mut tf = TransferFunction::new();
        tf.add_peak(GREEN).unwrap();
        let settings = RenderSettings::for_volume(v.meta());
        let table = ShadingTable::new(&tf.build_lut(), &settings);
        let r = ray([0.3, -0.2, 40.0], [0.01, 0.02, -1.0]);
        let interval = clip_interval_local(&r, &v.bounds(), &ClipPlane::disabled()).unwrap();
        let mut last = 0.0;
        march(&r, interval, &v, &table, &settings, |acc| {
            assert!(acc.a >= last);
            last = acc.a;
        });
    }

    #[test]
    fn empty_tf_renders_background() {
        let v = generate_phantom([16, 16, 16]).unwrap();
        let cam = Camera::framing(v.meta().extent(), 12, 9);
        let settings = RenderSettings {
            background: Rgba::new(0.1, 0.2, 0.3, 1.0),
            ..RenderSettings::for_volume(v.meta())
        };
        let frame = render_frame(
            &v,
            &TransferFunction::new(),
            &cam,
            &VolumeTransform::identity(),
            &ClipPlane::disabled(),
            &settings,
        )
        .unwrap();
        assert!(frame.pixels().iter().all(|p| *p == [26, 51, 77, 255]));
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut xf = VolumeTransform::identity();
        xf.rotation[(0, 1)] = 1e-3;
        xf.rotation[(2, 2)] = 1.01;
        assert!(xf.validate().is_err());
        xf.orthonormalize();
        assert!(xf.orthonormality_error() < 1e-12);
        assert!((xf.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn settings_validation() {
        let mut s = RenderSettings::default();
        assert!(s.validate().is_ok());
        s.step_size = 0.0;
        assert!(s.validate().is_err());
        s = RenderSettings {
            early_termination_alpha: 0.0,
            ..RenderSettings::default()
        };
        assert!(s.validate().is_err());
    }
}
