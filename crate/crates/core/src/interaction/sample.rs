use bitflags::bitflags;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Device {
    MainController,
    NavPad,
}

bitflags! {
    /// Digital buttons of both devices, laid out as on the wire.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Buttons: u16 {
        const BIG = 1 << 0;
        const MODE_CH = 1 << 1;
        const MODE_W = 1 << 2;
        const ADD = 1 << 8;
        const DELETE = 1 << 9;
        const TOGGLE_ENABLE = 1 << 10;
        const SELECT_NEXT = 1 << 11;
        const CYCLE_COLOR = 1 << 12;
    }
}

impl Buttons {
    /// Buttons that went down between `previous` and `self`.
    pub fn pressed_since(self, previous: Buttons) -> Buttons {
        self - previous
    }

    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        let mut out = Buttons::empty();
        for name in names {
            out |= Buttons::from_name(name).ok_or_else(|| format!("unknown button `{name}`"))?;
        }
        Ok(out)
    }

    pub fn names(self) -> Vec<&'static str> {
        self.iter_names().map(|(n, _)| n).collect()
    }
}

impl Serialize for Buttons {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Buttons {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        Buttons::from_names(names.iter().map(String::as_str)).map_err(serde::de::Error::custom)
    }
}

/// One timestamped reading of a controller: pose, buttons, analog trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSample {
    pub device: Device,
    pub timestamp_us: u64,
    /// Meters.
    pub position: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
    pub buttons: Buttons,
    pub trigger: f64,
}

impl ControllerSample {
    /// Sample at rest: origin, identity orientation, nothing pressed.
    pub fn idle(device: Device, timestamp_us: u64) -> Self {
        Self {
            device,
            timestamp_us,
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
            buttons: Buttons::empty(),
            trigger: 0.0,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.orientation;
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.position.iter().chain(&self.orientation).all(|v| v.is_finite()) {
            return Err("non-finite pose component".into());
        }
        let norm = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(format!("orientation norm {norm} is not 1"));
        }
        if !(0.0..=1.0).contains(&self.trigger) {
            return Err(format!("trigger {} outside [0, 1]", self.trigger));
        }
        Ok(())
    }
}
