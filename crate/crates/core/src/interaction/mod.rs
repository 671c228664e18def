//! Two-handed controller interaction.
//!
//! The main controller manipulates: while its big button is held it drags
//! the volume (or, in edit context, the selected peak), while its trigger is
//! pulled it rotates the volume. The Nav-Pad selects and switches: its
//! buttons add, delete, disable, select and recolor peaks, and a long press
//! of SELECT_NEXT flips between navigation and edit context.

mod sample;

pub use sample::{Buttons, ControllerSample, Device};

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raycast::{ClipPlane, VolumeTransform};
use crate::transfer::{ColorRgb, TfError, TransferFunction, PALETTE, WHITE};

#[derive(Debug, Error, PartialEq)]
pub enum InteractionError {
    #[error("expected a {expected:?} sample, got {got:?}")]
    WrongDevice { expected: Device, got: Device },
    #[error("no peak is selected")]
    NoSelection,
}

/// Which peak parameters the main controller edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    #[default]
    CenterHeight,
    Width,
}

/// What the big button drags: the volume or the selected peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    #[default]
    Navigate,
    Edit,
}

/// Input sensitivities. Positions are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gains {
    /// Scene units per meter.
    pub translation: f64,
    /// Radians per meter.
    pub rotation: f64,
    /// Center change per meter.
    pub center: f64,
    /// Height change per meter.
    pub height: f64,
    /// Width change per meter.
    pub width: f64,
    /// Position changes shorter than this (meters) are ignored.
    pub dead_zone: f64,
    /// Trigger value above which rotation is active.
    pub trigger_threshold: f64,
    /// Hold time of SELECT_NEXT that toggles the context.
    pub long_press_us: u64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            translation: 1.0,
            rotation: 2.0,
            center: 1.0,
            height: 2.0,
            width: 0.5,
            dead_zone: 1e-3,
            trigger_threshold: 0.5,
            long_press_us: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StatusEvent {
    PeakAdded { index: usize },
    PeakRemoved { index: usize },
    PeakSelected { index: Option<usize> },
    PeakEnabled { index: usize, enabled: bool },
    PeakColor { index: usize, color: ColorRgb },
    PeakEdited { index: usize },
    ModeChanged { mode: EditMode },
    ContextChanged { context: Context },
    BulbColor { color: ColorRgb },
    TransformChanged,
    ClipPlaneChanged,
    Rejected { action: String, reason: String },
}

/// Reference pose that controller deltas are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Anchor {
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub transform: VolumeTransform,
    pub tf: TransferFunction,
    pub plane: ClipPlane,
    pub edit_mode: EditMode,
    pub context: Context,
    pub gains: Gains,
    bulb: ColorRgb,
    last_main: Option<ControllerSample>,
    last_nav: Option<ControllerSample>,
    anchor: Option<Anchor>,
    select_next_down_since: Option<u64>,
    long_press_fired: bool,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new(TransferFunction::new(), Gains::default())
    }
}

/// Rotation angle of `q` about its local z axis (swing-twist twist part).
fn twist_about_z(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    let angle = 2.0 * q.k.atan2(q.w);
    // wrap into (-pi, pi]
    if angle > std::f64::consts::PI {
        angle - std::f64::consts::TAU
    } else if angle <= -std::f64::consts::PI {
        angle + std::f64::consts::TAU
    } else {
        angle
    }
}

impl SessionState {
    pub fn new(tf: TransferFunction, gains: Gains) -> Self {
        let mut s = Self {
            transform: VolumeTransform::identity(),
            tf,
            plane: ClipPlane::disabled(),
            edit_mode: EditMode::CenterHeight,
            context: Context::Navigate,
            gains,
            bulb: WHITE,
            last_main: None,
            last_nav: None,
            anchor: None,
            select_next_down_since: None,
            long_press_fired: false,
        };
        s.bulb = s.bulb_color();
        s
    }

    pub fn last_sample(&self, device: Device) -> Option<&ControllerSample> {
        match device {
            Device::MainController => self.last_main.as_ref(),
            Device::NavPad => self.last_nav.as_ref(),
        }
    }

    /// Color of the selected peak, white when nothing is selected.
    pub fn bulb_color(&self) -> ColorRgb {
        self.tf.selected_peak().map(|p| p.color()).unwrap_or(WHITE)
    }

    /// Bulb color as last published through a [`StatusEvent::BulbColor`].
    pub fn published_bulb(&self) -> ColorRgb {
        self.bulb
    }

    /// Replaces the transfer function wholesale (e.g. from a file or UI).
    pub fn set_tf(&mut self, tf: TransferFunction) -> Vec<StatusEvent> {
        self.tf = tf;
        let mut events = vec![StatusEvent::PeakSelected {
            index: self.tf.selected(),
        }];
        self.sync_bulb(&mut events);
        events
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        self.transform.validate().map_err(|e| e.to_string())?;
        self.tf.validate().map_err(|e| e.to_string())?;
        if self.plane.enabled {
            self.plane.validate().map_err(|e| e.to_string())?;
        }
        if self.bulb != self.bulb_color() {
            return Err("published bulb color is stale".into());
        }
        for s in [self.last_main, self.last_nav].iter().flatten() {
            s.validate()?;
        }
        Ok(())
    }

    fn sync_bulb(&mut self, events: &mut Vec<StatusEvent>) {
        let color = self.bulb_color();
        if color != self.bulb {
            self.bulb = color;
            events.push(StatusEvent::BulbColor { color });
        }
    }

    /// Applies one sample from either device. Failures become
    /// [`StatusEvent::Rejected`] entries; the state is never left invalid.
    pub fn process(&mut self, sample: &ControllerSample) -> Vec<StatusEvent> {
        if let Err(reason) = sample.validate() {
            return vec![StatusEvent::Rejected {
                action: "sample".into(),
                reason,
            }];
        }
        let result = match sample.device {
            Device::NavPad => Ok(self.handle_navpad(sample)),
            Device::MainController => {
                let chord = Buttons::MODE_CH | Buttons::MODE_W;
                if sample.buttons.contains(chord) {
                    self.step_clip(sample)
                } else if self.context == Context::Edit && sample.buttons.contains(Buttons::BIG) {
                    self.step_edit(sample)
                } else if self.context == Context::Edit {
                    let mut masked = *sample;
                    masked.buttons.remove(Buttons::BIG);
                    let r = self.step_navigation(&masked);
                    if let Some(last) = self.last_main.as_mut() {
                        last.buttons = sample.buttons;
                    }
                    r
                } else {
                    self.step_navigation(sample)
                }
            }
        };
        match result {
            Ok(events) => events,
            Err(e) => {
                // the sample still becomes the new reference
                self.last_main = Some(*sample);
                self.anchor = Some(Anchor {
                    position: sample.position(),
                    orientation: sample.rotation(),
                });
                vec![StatusEvent::Rejected {
                    action: "edit".into(),
                    reason: e.to_string(),
                }]
            }
        }
    }

    fn expect_main(sample: &ControllerSample) -> Result<(), InteractionError> {
        if sample.device != Device::MainController {
            return Err(InteractionError::WrongDevice {
                expected: Device::MainController,
                got: sample.device,
            });
        }
        Ok(())
    }

    /// Mode-button edges shared by every main-controller step.
    fn main_prelude(&mut self, sample: &ControllerSample, events: &mut Vec<StatusEvent>) {
        let previous = self.last_main.map(|s| s.buttons).unwrap_or_default();
        let pressed = sample.buttons.pressed_since(previous);
        let mut mode = self.edit_mode;
        if pressed.contains(Buttons::MODE_CH) {
            mode = EditMode::CenterHeight;
        }
        if pressed.contains(Buttons::MODE_W) {
            mode = EditMode::Width;
        }
        if mode != self.edit_mode {
            self.edit_mode = mode;
            events.push(StatusEvent::ModeChanged { mode });
        }
    }

    /// Position delta against the anchor, with the dead zone applied. The
    /// anchor position only moves when a delta is consumed.
    fn consume_position_delta(&mut self, sample: &ControllerSample) -> Vector3<f64> {
        let pos = sample.position();
        match self.anchor.as_mut() {
            Some(anchor) => {
                let d = pos - anchor.position;
                if d.norm() < self.gains.dead_zone {
                    Vector3::zeros()
                } else {
                    anchor.position = pos;
                    d
                }
            }
            None => Vector3::zeros(),
        }
    }

    fn reset_anchor(&mut self, sample: &ControllerSample) {
        self.anchor = Some(Anchor {
            position: sample.position(),
            orientation: sample.rotation(),
        });
    }

    /// Volume navigation: big button translates, trigger rotates.
    pub fn step_navigation(&mut self, sample: &ControllerSample) -> Result<Vec<StatusEvent>, InteractionError> {
        Self::expect_main(sample)?;
        let mut events = Vec::new();
        self.main_prelude(sample, &mut events);

        let translate = sample.buttons.contains(Buttons::BIG);
        let rotate = sample.trigger > self.gains.trigger_threshold;
        if self.anchor.is_none() || !(translate || rotate) {
            self.reset_anchor(sample);
            self.last_main = Some(*sample);
            return Ok(events);
        }

        let d = self.consume_position_delta(sample);
        let anchor = self.anchor.as_mut().expect("anchor set above");
        let q = sample.rotation();
        let roll = twist_about_z(&(anchor.orientation.inverse() * q));
        anchor.orientation = q;

        let mut changed = false;
        if translate && d != Vector3::zeros() {
            self.transform.translation += d * self.gains.translation;
            changed = true;
        }
        if rotate && (d.x != 0.0 || d.y != 0.0 || roll != 0.0) {
            let g = self.gains.rotation;
            let delta = Rotation3::from_axis_angle(&Vector3::y_axis(), g * d.x)
                * Rotation3::from_axis_angle(&Vector3::x_axis(), g * d.y)
                * Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
            self.transform.rotation = delta.matrix() * self.transform.rotation;
            self.transform.orthonormalize();
            changed = true;
        }
        if changed {
            events.push(StatusEvent::TransformChanged);
        }
        self.last_main = Some(*sample);
        Ok(events)
    }

    /// Peak editing in the x/y plane: center and height, or width alone.
    pub fn step_edit(&mut self, sample: &ControllerSample) -> Result<Vec<StatusEvent>, InteractionError> {
        Self::expect_main(sample)?;
        let mut events = Vec::new();
        self.main_prelude(sample, &mut events);

        let Some(index) = self.tf.selected() else {
            return Err(InteractionError::NoSelection);
        };
        if self.anchor.is_none() || !sample.buttons.contains(Buttons::BIG) {
            self.reset_anchor(sample);
            self.last_main = Some(*sample);
            return Ok(events);
        }
        let d = self.consume_position_delta(sample);
        if let Some(a) = self.anchor.as_mut() {
            a.orientation = sample.rotation();
        }
        let g = self.gains;
        let peak = self.tf.selected_peak_mut().expect("selection checked above");
        let before = *peak;
        match self.edit_mode {
            EditMode::CenterHeight => {
                peak.set_center(peak.center() + g.center * d.x);
                peak.set_height(peak.height() + g.height * d.y);
            }
            EditMode::Width => peak.set_width(peak.width() + g.width * d.x),
        }
        if *peak != before {
            events.push(StatusEvent::PeakEdited { index });
        }
        self.last_main = Some(*sample);
        Ok(events)
    }

    /// Clip plane follows the controller pose: it passes through the
    /// controller position and faces along the controller's -z axis.
    pub fn step_clip(&mut self, sample: &ControllerSample) -> Result<Vec<StatusEvent>, InteractionError> {
        Self::expect_main(sample)?;
        let mut events = Vec::new();
        self.main_prelude(sample, &mut events);
        let world_point = sample.position() * self.gains.translation;
        let world_normal = sample.rotation() * -Vector3::z();
        let local_point = self.transform.to_local_point(&world_point);
        let local_normal = self.transform.rotation.transpose() * world_normal;
        if let Ok(plane) = ClipPlane::new(local_normal, 0.0) {
            let plane = ClipPlane {
                offset: plane.normal().dot(&local_point),
                ..plane
            };
            if plane != self.plane {
                self.plane = plane;
                events.push(StatusEvent::ClipPlaneChanged);
            }
        }
        self.reset_anchor(sample);
        self.last_main = Some(*sample);
        Ok(events)
    }

    /// Nav-Pad buttons act once per press edge. Capacity and selection
    /// problems are reported as [`StatusEvent::Rejected`].
    pub fn handle_navpad(&mut self, sample: &ControllerSample) -> Vec<StatusEvent> {
        let mut events = Vec::new();
        if sample.device != Device::NavPad {
            events.push(StatusEvent::Rejected {
                action: "navpad".into(),
                reason: InteractionError::WrongDevice {
                    expected: Device::NavPad,
                    got: sample.device,
                }
                .to_string(),
            });
            return events;
        }
        let previous = self.last_nav.map(|s| s.buttons).unwrap_or_default();
        let pressed = sample.buttons.pressed_since(previous);

        let reject = |events: &mut Vec<StatusEvent>, action: &str, e: TfError| {
            events.push(StatusEvent::Rejected {
                action: action.into(),
                reason: e.to_string(),
            })
        };

        if pressed.contains(Buttons::ADD) {
            let color = PALETTE[self.tf.len() % PALETTE.len()];
            match self.tf.add_peak(color) {
                Ok(index) => {
                    events.push(StatusEvent::PeakAdded { index });
                    events.push(StatusEvent::PeakSelected { index: Some(index) });
                }
                Err(e) => reject(&mut events, "add", e),
            }
        }
        if pressed.contains(Buttons::DELETE) {
            let index = self.tf.selected();
            match self.tf.delete_selected() {
                Ok(_) => {
                    events.push(StatusEvent::PeakRemoved {
                        index: index.expect("delete succeeded with a selection"),
                    });
                    events.push(StatusEvent::PeakSelected {
                        index: self.tf.selected(),
                    });
                }
                Err(e) => reject(&mut events, "delete", e),
            }
        }
        if pressed.contains(Buttons::TOGGLE_ENABLE) {
            match self.tf.toggle_selected_enabled() {
                Ok(enabled) => events.push(StatusEvent::PeakEnabled {
                    index: self.tf.selected().expect("toggle needs a selection"),
                    enabled,
                }),
                Err(e) => reject(&mut events, "toggle_enable", e),
            }
        }
        if pressed.contains(Buttons::SELECT_NEXT) {
            match self.tf.select_next() {
                Ok(index) => events.push(StatusEvent::PeakSelected { index: Some(index) }),
                Err(e) => reject(&mut events, "select_next", e),
            }
        }
        if pressed.contains(Buttons::CYCLE_COLOR) {
            match self.tf.cycle_selected_color(&PALETTE) {
                Ok(color) => events.push(StatusEvent::PeakColor {
                    index: self.tf.selected().expect("cycle needs a selection"),
                    color,
                }),
                Err(e) => reject(&mut events, "cycle_color", e),
            }
        }

        // Long press of SELECT_NEXT flips the context once per press.
        if sample.buttons.contains(Buttons::SELECT_NEXT) {
            let since = *self.select_next_down_since.get_or_insert(sample.timestamp_us);
            if pressed.contains(Buttons::SELECT_NEXT) {
                self.select_next_down_since = Some(sample.timestamp_us);
                self.long_press_fired = false;
            } else if !self.long_press_fired
                && sample.timestamp_us.saturating_sub(since) >= self.gains.long_press_us
            {
                self.long_press_fired = true;
                self.context = match self.context {
                    Context::Navigate => Context::Edit,
                    Context::Edit => Context::Navigate,
                };
                events.push(StatusEvent::ContextChanged {
                    context: self.context,
                });
            }
        } else {
            self.select_next_down_since = None;
            self.long_press_fired = false;
        }

        self.sync_bulb(&mut events);
        self.last_nav = Some(*sample);
        events
    }
}
