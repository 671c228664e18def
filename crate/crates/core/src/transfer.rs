//! Peak-based 1D transfer functions.
//!
//! A transfer function is an ordered list of colored sine windows ("peaks").
//! At a voxel value `x` every enabled peak contributes its color with the
//! window value as opacity, and the contributions are alpha-blended in list
//! order with the over operator.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::Histogram;

pub const MAX_PEAKS: usize = 8;
pub const MAX_WIDTH: f64 = 0.5;
/// Smallest width the interactive editors will clamp to.
pub const MIN_EDIT_WIDTH: f64 = 1e-3;
pub const LUT_SIZE: usize = 256;

pub const DEFAULT_CENTER: f64 = 0.5;
pub const DEFAULT_WIDTH: f64 = 0.1;
pub const DEFAULT_HEIGHT: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum TfError {
    #[error("transfer function already holds the maximum of {MAX_PEAKS} peaks")]
    Capacity,
    #[error("no peak is selected")]
    NoSelection,
    #[error("transfer function has no peaks")]
    Empty,
    #[error("peak {index}: {field} = {value} is out of range ({range})")]
    Invariant {
        index: usize,
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("selected index {selected} is out of range for {len} peaks")]
    BadSelection { selected: usize, len: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct ColorRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl ColorRgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn is_valid(&self) -> bool {
        [self.r, self.g, self.b].iter().all(|c| (0.0..=1.0).contains(c))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

impl From<[f64; 3]> for ColorRgb {
    fn from([r, g, b]: [f64; 3]) -> Self {
        Self { r, g, b }
    }
}

impl From<ColorRgb> for [f64; 3] {
    fn from(c: ColorRgb) -> Self {
        c.to_array()
    }
}

pub const GREEN: ColorRgb = ColorRgb::new(0.0, 1.0, 0.0);
pub const RED: ColorRgb = ColorRgb::new(1.0, 0.0, 0.0);
pub const BLUE: ColorRgb = ColorRgb::new(0.0, 0.0, 1.0);
pub const YELLOW: ColorRgb = ColorRgb::new(1.0, 1.0, 0.0);
pub const CYAN: ColorRgb = ColorRgb::new(0.0, 1.0, 1.0);
pub const MAGENTA: ColorRgb = ColorRgb::new(1.0, 0.0, 1.0);
pub const WHITE: ColorRgb = ColorRgb::new(1.0, 1.0, 1.0);
pub const ORANGE: ColorRgb = ColorRgb::new(1.0, 0.5, 0.0);

/// Predefined peak colors in cycle order.
pub const PALETTE: [ColorRgb; 8] = [GREEN, RED, BLUE, YELLOW, CYAN, MAGENTA, WHITE, ORANGE];

/// Straight (non-premultiplied) color with opacity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rgba {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba {
        r: 0.0,
        g: 0.0,
        b: 0.0,
        a: 0.0,
    };

    pub const fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        Self { r, g, b, a }
    }
}

/// Window shape of a peak over its support, `u` in `[0, 1]` from `c - w` to
/// `c + w`. Peaks use the half-period sine.
#[inline]
fn sine_window(u: f64) -> f64 {
    (std::f64::consts::PI * u).sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    center: f64,
    width: f64,
    height: f64,
    color: ColorRgb,
    enabled: bool,
}

impl Peak {
    pub fn new(center: f64, width: f64, height: f64, color: ColorRgb) -> Result<Self, TfError> {
        let peak = Self {
            center,
            width,
            height,
            color,
            enabled: true,
        };
        peak.validate(0)?;
        Ok(peak)
    }

    pub fn with_defaults(color: ColorRgb) -> Self {
        Self {
            center: DEFAULT_CENTER,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            color,
            enabled: true,
        }
    }

    fn validate(&self, index: usize) -> Result<(), TfError> {
        let bad = |field, value, range| {
            Err(TfError::Invariant {
                index,
                field,
                value,
                range,
            })
        };
        if !(0.0..=1.0).contains(&self.center) {
            return bad("center", self.center, "0 <= c <= 1");
        }
        if !(self.width > 0.0 && self.width <= MAX_WIDTH) {
            return bad("width", self.width, "0 < w <= 0.5");
        }
        if !(0.0..=1.0).contains(&self.height) {
            return bad("height", self.height, "0 <= h <= 1");
        }
        for (field, v) in [("color.r", self.color.r), ("color.g", self.color.g), ("color.b", self.color.b)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, v, "0 <= channel <= 1");
            }
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        self.center
    }
    pub fn width(&self) -> f64 {
        self.width
    }
    pub fn height(&self) -> f64 {
        self.height
    }
    pub fn color(&self) -> ColorRgb {
        self.color
    }
    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn set_center(&mut self, c: f64) {
        self.center = c.clamp(0.0, 1.0);
    }
    pub fn set_width(&mut self, w: f64) {
        self.width = w.clamp(MIN_EDIT_WIDTH, MAX_WIDTH);
    }
    pub fn set_height(&mut self, h: f64) {
        self.height = h.clamp(0.0, 1.0);
    }
    pub fn set_color(&mut self, color: ColorRgb) {
        self.color = ColorRgb::new(
            color.r.clamp(0.0, 1.0),
            color.g.clamp(0.0, 1.0),
            color.b.clamp(0.0, 1.0),
        );
    }
    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    /// Window value at `x`: `h * sin(pi / (2w) * (x - c + w))` on
    /// `[c - w, c + w]`, zero elsewhere. Ignores the enabled flag.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let (c, w) = (self.center, self.width);
        if x < c - w || x > c + w {
            return 0.0;
        }
        let arg = FRAC_PI_2 / w * (x - c + w);
        self.height * arg.sin()
    }

    /// Same window through the generic shape function, used by alternative
    /// evaluators that want the normalized support coordinate.
    pub fn value_by_support(&self, x: f64) -> f64 {
        let u = (x - self.center + self.width) / (2.0 * self.width);
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        self.height * sine_window(u)
    }

    /// Largest absolute slope of the window: `h * pi / (2w)`.
    pub fn max_slope(&self) -> f64 {
        self.height * FRAC_PI_2 / self.width
    }
}

/// Free-function form of [`Peak::value`].
pub fn peak_value(p: &Peak, x: f64) -> f64 {
    p.value(x)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferFunction {
    peaks: Vec<Peak>,
    selected: Option<usize>,
}

impl TransferFunction {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a function from parts, checking every invariant.
    pub fn from_parts(peaks: Vec<Peak>, selected: Option<usize>) -> Result<Self, TfError> {
        let tf = Self { peaks, selected };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<(), TfError> {
        if self.peaks.len() > MAX_PEAKS {
            return Err(TfError::Capacity);
        }
        for (i, p) in self.peaks.iter().enumerate() {
            p.validate(i)?;
        }
        if let Some(s) = self.selected {
            if s >= self.peaks.len() {
                return Err(TfError::BadSelection {
                    selected: s,
                    len: self.peaks.len(),
                });
            }
        }
        Ok(())
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn selected(&self) -> Option<usize> {
        self.selected
    }

    pub fn selected_peak(&self) -> Option<&Peak> {
        self.selected.map(|i| &self.peaks[i])
    }

    pub fn selected_peak_mut(&mut self) -> Option<&mut Peak> {
        self.selected.map(move |i| &mut self.peaks[i])
    }

    /// Alpha-blends the enabled peaks at `x` with the over operator, later
    /// peaks over earlier ones. Returns straight alpha.
    pub fn evaluate(&self, x: f64) -> Rgba {
        let (mut r, mut g, mut b, mut a) = (0.0, 0.0, 0.0, 0.0);
        for p in self.peaks.iter().filter(|p| p.enabled) {
            let alpha = p.value(x);
            if alpha <= 0.0 {
                continue;
            }
            let keep = 1.0 - alpha;
            r = alpha * p.color.r + keep * r;
            g = alpha * p.color.g + keep * g;
            b = alpha * p.color.b + keep * b;
            a = alpha + keep * a;
        }
        if a > 0.0 {
            Rgba::new(
                (r / a).min(1.0),
                (g / a).min(1.0),
                (b / a).min(1.0),
                a.min(1.0),
            )
        } else {
            Rgba::TRANSPARENT
        }
    }

    /// Appends a default peak in `color` and selects it.
    pub fn add_peak(&mut self, color: ColorRgb) -> Result<usize, TfError> {
        if self.peaks.len() >= MAX_PEAKS {
            return Err(TfError::Capacity);
        }
        let mut peak = Peak::with_defaults(color);
        peak.set_color(color);
        self.peaks.push(peak);
        let idx = self.peaks.len() - 1;
        self.selected = Some(idx);
        Ok(idx)
    }

    /// Removes the selected peak; the previous one (if any) becomes selected.
    pub fn delete_selected(&mut self) -> Result<Peak, TfError> {
        let s = self.selected.ok_or(TfError::NoSelection)?;
        let removed = self.peaks.remove(s);
        self.selected = if self.peaks.is_empty() {
            None
        } else {
            Some(s.saturating_sub(1))
        };
        Ok(removed)
    }

    pub fn toggle_selected_enabled(&mut self) -> Result<bool, TfError> {
        let p = self.selected_peak_mut().ok_or(TfError::NoSelection)?;
        p.enabled = !p.enabled;
        Ok(p.enabled)
    }

    /// Advances the selection cyclically; selects the first peak when none is.
    pub fn select_next(&mut self) -> Result<usize, TfError> {
        if self.peaks.is_empty() {
            return Err(TfError::Empty);
        }
        let next = match self.selected {
            Some(s) => (s + 1) % self.peaks.len(),
            None => 0,
        };
        self.selected = Some(next);
        Ok(next)
    }

    /// Moves the selected peak to the palette entry after its current color,
    /// or to the first entry when its color is not in the palette.
    pub fn cycle_selected_color(&mut self, palette: &[ColorRgb]) -> Result<ColorRgb, TfError> {
        let p = self.selected_peak_mut().ok_or(TfError::NoSelection)?;
        if palette.is_empty() {
            return Ok(p.color);
        }
        let next = match palette.iter().position(|c| *c == p.color) {
            Some(i) => palette[(i + 1) % palette.len()],
            None => palette[0],
        };
        p.set_color(next);
        Ok(p.color)
    }

    /// Samples the function at the 256 bin centers `(k + 0.5) / 256`.
    pub fn build_lut(&self) -> LookupTable {
        let entries = (0..LUT_SIZE)
            .map(|k| self.evaluate(LookupTable::bin_center(k)))
            .collect::<Vec<_>>()
            .try_into()
            .expect("LUT has exactly LUT_SIZE entries");
        LookupTable { entries }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&TfFile::from(self)).expect("tf serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TfError> {
        let file: TfFile = serde_json::from_str(text).map_err(|e| TfError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.try_into()
    }
}

pub fn tf_evaluate(t: &TransferFunction, x: f64) -> Rgba {
    t.evaluate(x)
}

pub fn build_lut(t: &TransferFunction) -> LookupTable {
    t.build_lut()
}

pub fn serialize_tf(t: &TransferFunction) -> String {
    t.to_json()
}

pub fn deserialize_tf(text: &str) -> Result<TransferFunction, TfError> {
    TransferFunction::from_json(text)
}

/// JSON schema of the transfer-function file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakFile {
    pub center: f64,
    pub width: f64,
    pub height: f64,
    pub color: [f64; 3],
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfFile {
    pub peaks: Vec<PeakFile>,
    pub selected: Option<usize>,
}

impl From<&TransferFunction> for TfFile {
    fn from(t: &TransferFunction) -> Self {
        Self {
            peaks: t
                .peaks
                .iter()
                .map(|p| PeakFile {
                    center: p.center,
                    width: p.width,
                    height: p.height,
                    color: p.color.to_array(),
                    enabled: p.enabled,
                })
                .collect(),
            selected: t.selected,
        }
    }
}

impl TryFrom<TfFile> for TransferFunction {
    type Error = TfError;

    fn try_from(file: TfFile) -> Result<Self, TfError> {
        let peaks = file
            .peaks
            .into_iter()
            .map(|p| Peak {
                center: p.center,
                width: p.width,
                height: p.height,
                color: p.color.into(),
                enabled: p.enabled,
            })
            .collect();
        Self::from_parts(peaks, file.selected)
    }
}

impl Serialize for TransferFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TfFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransferFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = TfFile::deserialize(d)?;
        file.try_into().map_err(serde::de::Error::custom)
    }
}

/// 256-entry straight-alpha table of transfer-function outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    entries: [Rgba; LUT_SIZE],
}

impl LookupTable {
    pub fn bin_center(k: usize) -> f64 {
        (k as f64 + 0.5) / LUT_SIZE as f64
    }

    pub fn entries(&self) -> &[Rgba; LUT_SIZE] {
        &self.entries
    }

    /// Entry of the bin containing `x` (same binning as [`Histogram`]).
    #[inline]
    pub fn lookup(&self, x: f64) -> Rgba {
        self.entries[Histogram::bin_of(x)]
    }

    pub fn is_transparent(&self) -> bool {
        self.entries.iter().all(|e| e.a == 0.0)
    }
}
