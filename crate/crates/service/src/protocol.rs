//! Messages exchanged with clients.
//!
//! The `/stream` WebSocket carries JSON text messages tagged by `type`
//! (`state`, `event`, `frame`) and binary PNG frames. Every binary message
//! is preceded by a `frame` text message describing it.

use std::sync::Arc;

use peakvol_core::interaction::{Context, EditMode, SessionState, StatusEvent};
use peakvol_core::raycast::{ClipPlane, VolumeTransform};
use peakvol_core::transfer::{ColorRgb, TfError, TfFile, TransferFunction};
use serde::Serialize;

use crate::service::Frame;

/// Immutable copy of the session state handed to readers and the renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub version: u64,
    pub tf: TransferFunction,
    /// Canonical file text of `tf`.
    pub tf_json: String,
    pub transform: VolumeTransform,
    pub plane: ClipPlane,
    pub edit_mode: EditMode,
    pub context: Context,
    pub bulb: ColorRgb,
}

impl Snapshot {
    pub fn capture(version: u64, s: &SessionState) -> Self {
        Self {
            version,
            tf: s.tf.clone(),
            tf_json: s.tf.to_json(),
            transform: s.transform,
            plane: s.plane,
            edit_mode: s.edit_mode,
            context: s.context,
            bulb: s.published_bulb(),
        }
    }

    /// True if rendering or clients would see no difference.
    pub fn same_state(&self, s: &SessionState) -> bool {
        self.tf == s.tf
            && self.transform == s.transform
            && self.plane == s.plane
            && self.edit_mode == s.edit_mode
            && self.context == s.context
            && self.bulb == s.published_bulb()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformMessage {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&VolumeTransform> for TransformMessage {
    fn from(t: &VolumeTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message<'a> {
    State {
        version: u64,
        tf: TfFile,
        bulb: ColorRgb,
        edit_mode: EditMode,
        context: Context,
        clip: ClipPlane,
        transform: TransformMessage,
    },
    Event {
        version: u64,
        event: &'a StatusEvent,
    },
    Frame {
        seq: u64,
        state_version: u64,
        bytes: usize,
    },
}

impl<'a> Message<'a> {
    pub fn state(s: &Snapshot) -> Self {
        Message::State {
            version: s.version,
            tf: TfFile::from(&s.tf),
            bulb: s.bulb,
            edit_mode: s.edit_mode,
            context: s.context,
            clip: s.plane,
            transform: TransformMessage::from(&s.transform),
        }
    }

    pub fn frame(f: &Frame) -> Self {
        Message::Frame {
            seq: f.seq,
            state_version: f.state_version,
            bytes: f.png.len(),
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Broadcast from the session and render threads to stream clients.
#[derive(Debug, Clone)]
pub enum Outbound {
    State(Arc<Snapshot>),
    Event { version: u64, event: StatusEvent },
    Frame(Arc<Frame>),
}

/// Structured error body returned by the HTTP endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<usize>,
}

impl ErrorBody {
    pub fn new(error: &str, message: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            message: message.into(),
            line: None,
            column: None,
            field: None,
            index: None,
        }
    }
}

impl From<&TfError> for ErrorBody {
    fn from(e: &TfError) -> Self {
        let mut body = ErrorBody::new(
            match e {
                TfError::Parse { .. } => "parse",
                TfError::Capacity => "capacity",
                TfError::Invariant { .. } => "invariant",
                TfError::BadSelection { .. } => "selection",
                TfError::NoSelection | TfError::Empty => "selection",
            },
            e.to_string(),
        );
        match e {
            TfError::Parse { line, column, .. } => {
                body.line = Some(*line);
                body.column = Some(*column);
            }
            TfError::Invariant { index, field, .. } => {
                body.index = Some(*index);
                body.field = Some(field.to_string());
            }
            _ => {}
        }
        body
    }
}
